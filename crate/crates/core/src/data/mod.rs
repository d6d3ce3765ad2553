//! Synthetic forgery datasets, PPM image I/O, manifests, and batch assembly.

mod batches;
mod manifest;
mod ppm;
mod synth;

use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use batches::{assemble_batches, BatchStream};
pub use manifest::{
    generate_dataset, load_split, make_dataset, read_manifest, write_manifest, Counts, DatasetManifest, FamilyData,
    ManifestEntry, Split,
};
pub use ppm::{load_ppm, quantize, save_ppm};
pub use synth::{generate_fake, generate_real, manipulate, real_from_texture};

/// Authenticity label; the discriminant is the class index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Option<Label> {
        match i {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }
}

/// One RGB image in `[0, 1]`. Unlabeled samples only feed reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `(1, 3, h, w)`.
    pub image: Tensor,
    pub label: Option<Label>,
    pub family: String,
    pub id: u64,
}

impl Sample {
    pub fn unlabeled(&self) -> Sample {
        Sample { label: None, ..self.clone() }
    }
}

/// Parameters of one procedural forgery family.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub name: String,
    /// Width, in pixels, of the alpha ramp inside the pasted ellipse.
    pub blend_softness: f64,
    /// Ellipse semi-axes as a fraction of half the image size.
    pub region_scale: f64,
    /// Magnitude of the chroma offset applied inside the region.
    pub color_shift: f64,
    /// Gaussian blur sigma applied to the pasted content.
    pub smooth_sigma: f64,
    /// Seeds from which this family's pristine textures are drawn.
    pub texture_seeds: Range<u64>,
}

impl FamilySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("family `{}`: {what}", self.name)));
        if self.name.is_empty() || self.name.contains(['\t', '\n', '/']) {
            return bad("name must be non-empty without tabs, newlines or slashes");
        }
        if !(self.blend_softness > 0.0) {
            return bad("blend_softness must be positive");
        }
        if !(self.region_scale > 0.0 && self.region_scale < 1.0) {
            return bad("region_scale must lie in (0, 1)");
        }
        if !(self.color_shift >= 0.0 && self.smooth_sigma >= 0.0) {
            return bad("color_shift and smooth_sigma must be non-negative");
        }
        if self.texture_seeds.is_empty() {
            return bad("texture seed range is empty");
        }
        Ok(())
    }

    /// Three built-in families of increasing subtlety: `U` (obvious seams and
    /// color), `F` (intermediate), `C` (soft blend, faint color change).
    pub fn defaults() -> Vec<FamilySpec> {
        const SPAN: u64 = 1 << 40;
        vec![
            FamilySpec {
                name: "U".into(),
                blend_softness: 2.0,
                region_scale: 0.6,
                color_shift: 0.15,
                smooth_sigma: 1.2,
                texture_seeds: 0..SPAN,
            },
            FamilySpec {
                name: "F".into(),
                blend_softness: 4.0,
                region_scale: 0.5,
                color_shift: 0.08,
                smooth_sigma: 0.9,
                texture_seeds: SPAN..2 * SPAN,
            },
            FamilySpec {
                name: "C".into(),
                blend_softness: 7.0,
                region_scale: 0.45,
                color_shift: 0.04,
                smooth_sigma: 0.6,
                texture_seeds: 2 * SPAN..3 * SPAN,
            },
        ]
    }

    pub fn by_name(name: &str) -> Option<FamilySpec> {
        FamilySpec::defaults().into_iter().find(|f| f.name == name)
    }
}
