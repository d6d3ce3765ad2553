//! Binary PPM (`P6`) with 8-bit samples.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Round to the nearest representable 8-bit level.
pub fn quantize(p: f64) -> f64 {
    to_byte(p) as f64 / 255.0
}

fn to_byte(p: f64) -> u8 {
    (p * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Encode a `(1, 3, h, w)` image in `[0, 1]`.
pub fn save_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::shape(format!("save_ppm: expected a 1x3xHxW image, got {s}")));
    }
    let mut out = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    out.reserve(3 * s.plane());
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                out.push(to_byte(image.at(0, c, y, x)));
            }
        }
    }
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Ppm { offset: self.pos, message: message.into() }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Ppm { offset: start, message: format!("{what} out of range") })
    }
}

/// Decode a `P6` stream into a `(1, 3, h, w)` tensor with `p = v / maxval`.
pub fn load_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut hdr = Header { bytes, pos: 0 };
    if !bytes.starts_with(b"P6") {
        return Err(hdr.err("missing P6 magic"));
    }
    hdr.pos = 2;
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(hdr.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(hdr.err(format!("unsupported maxval {maxval}")));
    }
    match bytes.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(hdr.err("expected a single whitespace byte after maxval")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| hdr.err("image dimensions overflow"))?;
    let payload = &bytes[hdr.pos..];
    if payload.len() < need {
        return Err(Error::Ppm {
            offset: bytes.len(),
            message: format!("truncated payload: {} of {need} bytes", payload.len()),
        });
    }
    let scale = maxval as f64;
    let mut img = Tensor::zeros(Shape::new(1, 3, height, width));
    for (i, px) in payload[..need].chunks_exact(3).enumerate() {
        let (y, x) = (i / width, i % width);
        for (c, &v) in px.iter().enumerate() {
            if v as usize > maxval {
                return Err(Error::Ppm { offset: hdr.pos + 3 * i + c, message: format!("sample {v} exceeds maxval") });
            }
            let idx = img.index(0, c, y, x);
            img.data_mut()[idx] = v as f64 / scale;
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_pixel_bytes() {
        let img = Tensor::full(Shape::new(1, 3, 1, 1), 1.0);
        let bytes = save_ppm(&img).unwrap();
        let mut want = b"P6\n1 1\n255\n".to_vec();
        want.extend_from_slice(&[0xFF, 0xFF, 0xFF]);
        assert_eq!(bytes, want);
    }

    #[test]
    fn interleaves_rows_top_to_bottom() {
        let img = Tensor::from_fn(Shape::new(1, 3, 2, 2), |_, c, y, x| ((y * 2 + x) * 3 + c) as f64 / 255.0);
        let bytes = save_ppm(&img).unwrap();
        let header = b"P6\n2 2\n255\n".len();
        assert_eq!(&bytes[header..], &(0u8..12).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn header_with_comments_and_small_maxval() {
        let mut bytes = b"P6 # made by hand\n2 # width\n1\n15\n".to_vec();
        bytes.extend_from_slice(&[15, 0, 5, 0, 15, 0]);
        let img = load_ppm(&bytes).unwrap();
        assert_eq!(img.shape(), Shape::new(1, 3, 1, 2));
        assert_eq!(img.at(0, 0, 0, 0), 1.0);
        assert_eq!(img.at(0, 2, 0, 0), 5.0 / 15.0);
        assert_eq!(img.at(0, 1, 0, 1), 1.0);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        match load_ppm(b"P5\n1 1\n255\n\0") {
            Err(Error::Ppm { offset: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        match load_ppm(b"P6\n1 x\n255\n") {
            Err(Error::Ppm { offset, message }) => {
                assert_eq!(offset, 5);
                assert!(message.contains("height"));
            }
            other => panic!("{other:?}"),
        }
        match load_ppm(b"P6\n2 2\n255\n\x01\x02") {
            Err(Error::Ppm { offset, message }) => {
                assert_eq!(offset, 13);
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
        assert!(load_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn quantization_error_is_half_a_step() {
        let img = Tensor::from_fn(Shape::new(1, 3, 4, 5), |_, c, y, x| ((c * 20 + y * 5 + x) as f64 * 0.0173).fract());
        let back = load_ppm(&save_ppm(&img).unwrap()).unwrap();
        assert!(img.max_abs_diff(&back) <= 1.0 / 510.0 + 1e-15);
    }

    #[test]
    fn quantized_values_round_trip_exactly() {
        let img = Tensor::from_fn(Shape::new(1, 3, 3, 3), |_, c, y, x| quantize((c + y + x) as f64 / 7.0));
        let back = load_ppm(&save_ppm(&img).unwrap()).unwrap();
        assert_eq!(img, back);
    }
}
