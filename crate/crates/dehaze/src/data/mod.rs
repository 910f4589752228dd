//! Synthetic hazy/clean dataset, image I/O, and training augmentations.
//!
//! The dataset is a procedural desk-scale stand-in for full-resolution haze
//! benchmarks: seeded clean scenes are blended with seeded transmission
//! fields through the atmospheric scattering model, so ground-truth
//! transmission is known exactly and every sample also carries the classical
//! DCP estimate used as the network's fourth input channel.

pub mod augment;
pub mod manifest;
pub mod ppm;
pub mod synth;

pub use augment::{augment, mosaic4, mosaic4_at, AugmentSpec, CutoutSpec};
pub use manifest::{load_dataset, parse_manifest, save_dataset, LoadedDataset, Manifest, SampleMeta, MANIFEST_NAME};
pub use ppm::{
    decode_pgm, decode_ppm, encode_pgm, encode_ppm, load_gray, load_image, save_gray, save_image,
};
pub use synth::{
    make_dataset, random_atmospheric_light, random_clean_scene, random_transmission_field,
    synthesize_haze, DEFAULT_BETA_RANGE, T_MIN,
};

use crate::dcp::AtmosphericLight;
use crate::error::{Error, Result};
use crate::image::{GrayMap, ImageRgb};

/// One paired training sample.
///
/// All four maps share extents. At synthesis time `hazy` is exactly the
/// atmospheric blend of `clean`, `t_true`, and `a`; after quantizing through
/// disk or after cutout the residual grows accordingly.
#[derive(Clone, Debug)]
pub struct HazePair {
    pub hazy: ImageRgb,
    pub clean: ImageRgb,
    /// Transmission used at synthesis (ground truth).
    pub t_true: GrayMap,
    /// Classical DCP estimate of the transmission, cached per sample.
    pub t_dcp: GrayMap,
    /// Airlight used at synthesis. A mosaic composite keeps its first
    /// source's value; its blend invariant holds per quadrant against each
    /// source's own light.
    pub a: AtmosphericLight,
}

impl HazePair {
    pub fn height(&self) -> usize {
        self.hazy.height()
    }

    pub fn width(&self) -> usize {
        self.hazy.width()
    }

    /// Extent agreement across all four maps.
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        let extents = [
            (self.clean.height(), self.clean.width(), "clean"),
            (self.t_true.height(), self.t_true.width(), "t_true"),
            (self.t_dcp.height(), self.t_dcp.width(), "t_dcp"),
        ];
        for (eh, ew, name) in extents {
            if (eh, ew) != (h, w) {
                return Err(Error::Dim {
                    axis: "height",
                    expected: h,
                    got: eh,
                    context: format!("HazePair {name} extent {eh}x{ew} vs hazy {h}x{w}"),
                });
            }
        }
        Ok(())
    }

    /// Largest absolute deviation of `hazy` from the atmospheric blend
    /// `clean·t_true + a·(1−t_true)`.
    pub fn blend_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for y in 0..self.height() {
            for x in 0..self.width() {
                let j = self.clean.get(y, x);
                let i = self.hazy.get(y, x);
                let t = self.t_true.get(y, x);
                for c in 0..3 {
                    let blend = j[c] * t + self.a.rgb[c] * (1.0 - t);
                    worst = worst.max((i[c] - blend).abs());
                }
            }
        }
        worst
    }
}
