//! Flat binary checkpoint: the magic `JDFD1`, then one record per named
//! buffer: `u32` name length, UTF-8 name, `u32` rank, `u32` dims, and the
//! values as little-endian `f64`. All integers are little-endian. The first
//! record, `meta.architecture`, holds `[height, width, latent_dim]`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::params::{Architecture, JdfdParams};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"JDFD1";
const ARCH_RECORD: &str = "meta.architecture";

fn put_record(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn save_checkpoint(params: &JdfdParams) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    let a = params.arch;
    put_record(&mut out, ARCH_RECORD, &[3], &[a.height as f64, a.width as f64, a.latent_dim as f64]);
    for (info, data) in params.slots() {
        put_record(&mut out, &info.name, &info.dims, data);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated {what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

struct Record {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn parse_records(bytes: &[u8]) -> Result<Vec<(String, Record)>> {
    if !bytes.starts_with(CHECKPOINT_MAGIC) {
        return Err(Error::Checkpoint("missing JDFD1 magic".into()));
    }
    let mut cur = Cursor { bytes, pos: CHECKPOINT_MAGIC.len() };
    let mut records = Vec::new();
    while !cur.done() {
        let len = cur.u32("name length")?;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| Error::Checkpoint(format!("name before byte {} is not UTF-8", cur.pos)))?
            .to_string();
        let rank = cur.u32("rank")?;
        let dims = (0..rank).map(|_| cur.u32("dims")).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let raw = cur.take(count * 8, "values")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        records.push((name, Record { dims, data }));
    }
    Ok(records)
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<JdfdParams> {
    let records = parse_records(bytes)?;
    let mut by_name: HashMap<String, Record> = HashMap::with_capacity(records.len());
    for (name, rec) in records {
        if by_name.insert(name.clone(), rec).is_some() {
            return Err(Error::Checkpoint(format!("duplicate record `{name}`")));
        }
    }
    let arch = by_name
        .remove(ARCH_RECORD)
        .ok_or_else(|| Error::Checkpoint(format!("missing `{ARCH_RECORD}` record")))?;
    if arch.data.len() != 3 {
        return Err(Error::Checkpoint(format!("`{ARCH_RECORD}` must hold 3 values")));
    }
    let arch = Architecture::new(arch.data[0] as usize, arch.data[1] as usize, arch.data[2] as usize)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let with_decoder = by_name.contains_key("decoder.fc.weight");
    let mut params = JdfdParams::zeros(arch, with_decoder);
    for (info, dst) in params.slots_mut() {
        let rec = by_name
            .remove(&info.name)
            .ok_or_else(|| Error::Checkpoint(format!("missing record `{}`", info.name)))?;
        if rec.dims != info.dims {
            return Err(Error::Checkpoint(format!(
                "record `{}` has dims {:?}, expected {:?}",
                info.name, rec.dims, info.dims
            )));
        }
        dst.copy_from_slice(&rec.data);
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected record `{extra}`")));
    }
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &JdfdParams) -> Result<()> {
    std::fs::write(path, save_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<JdfdParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn params(decoder: bool) -> JdfdParams {
        JdfdParams::init(Architecture::new(32, 16, 5).unwrap(), decoder, &mut Rng::new(8))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for decoder in [true, false] {
            let p = params(decoder);
            let bytes = save_checkpoint(&p);
            let q = load_checkpoint(&bytes).unwrap();
            assert_eq!(p, q);
            assert_eq!(save_checkpoint(&q), bytes);
        }
    }

    #[test]
    fn layout_of_first_record() {
        let bytes = save_checkpoint(&params(true));
        assert_eq!(&bytes[..5], b"JDFD1");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), ARCH_RECORD.len() as u32);
        let name_end = 9 + ARCH_RECORD.len();
        assert_eq!(&bytes[9..name_end], ARCH_RECORD.as_bytes());
        assert_eq!(u32::from_le_bytes(bytes[name_end..name_end + 4].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[name_end + 4..name_end + 8].try_into().unwrap()), 3);
        let v = f64::from_le_bytes(bytes[name_end + 8..name_end + 16].try_into().unwrap());
        assert_eq!(v, 32.0);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = save_checkpoint(&params(true));
        assert!(load_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(load_checkpoint(b"JDFD2").is_err());
        let mut extra = bytes.clone();
        put_record(&mut extra, "bogus", &[1], &[0.0]);
        assert!(load_checkpoint(&extra).is_err());
    }
}
