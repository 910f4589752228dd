//! Dataset directory layout and its manifest.
//!
//! A dataset lives at `<root>/{train,val}/<index>_{hazy,clean,t}.ppm` with a
//! `manifest.json` at the root recording the generation seed, the shared
//! extent, per-sample airlights, and the DCP parameters. Transmission maps
//! are stored as channel-replicated PPM so the whole directory uses one
//! pixel format.
//!
//! Cached DCP estimates are not stored: `load_dataset` recomputes `t_dcp`
//! from the decoded hazy images with the manifest's DCP parameters, so the
//! loaded dataset is a pure function of the directory bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ppm::{load_image, save_image};
use super::HazePair;
use crate::dcp::{refined_transmission, AtmosphericLight, DcpParams};
use crate::error::{Error, Result};
use crate::image::{GrayMap, ImageRgb};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    /// Airlight used at synthesis, recorded for blend audits.
    pub a: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// (height, width) shared by every image in the dataset.
    pub extent: [usize; 2],
    /// Parameters for recomputing `t_dcp` at load time.
    pub dcp: DcpParams,
    pub train: Vec<SampleMeta>,
    pub val: Vec<SampleMeta>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.extent;
        if h == 0 || w == 0 {
            return Err(Error::Manifest(format!("extent must be ≥ 1, got {h}x{w}")));
        }
        self.dcp.validate().map_err(|e| Error::Manifest(format!("dcp params: {e}")))?;
        for (split, metas) in [("train", &self.train), ("val", &self.val)] {
            for (i, meta) in metas.iter().enumerate() {
                if meta.index != i {
                    return Err(Error::Manifest(format!(
                        "{split} sample {i} has index {}, expected contiguous indices",
                        meta.index
                    )));
                }
                if meta.a.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                    return Err(Error::Manifest(format!(
                        "{split} sample {i} airlight {:?} outside [0,1]",
                        meta.a
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parse and validate manifest bytes.
pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    let manifest: Manifest =
        serde_json::from_slice(bytes).map_err(|e| Error::Manifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

fn gray_to_rgb(map: &GrayMap) -> ImageRgb {
    ImageRgb::from_fn(map.height(), map.width(), |y, x| {
        let v = map.get(y, x);
        [v, v, v]
    })
    .expect("extents ≥ 1")
}

fn rgb_to_gray(img: &ImageRgb) -> GrayMap {
    let mut map = GrayMap::new(img.height(), img.width()).expect("extents ≥ 1");
    for y in 0..img.height() {
        for x in 0..img.width() {
            let px = img.get(y, x);
            map.set(y, x, (px[0] + px[1] + px[2]) / 3.0);
        }
    }
    map
}

/// Write both splits and the manifest under `root`, creating directories as
/// needed. All pairs must share one extent and at least one pair is
/// required (the manifest records a single extent).
pub fn save_dataset(
    root: impl AsRef<Path>,
    train: &[HazePair],
    val: &[HazePair],
    seed: u64,
    params: &DcpParams,
) -> Result<()> {
    let root = root.as_ref();
    params.validate()?;
    let first = train
        .iter()
        .chain(val)
        .next()
        .ok_or_else(|| Error::Param("dataset must contain at least one sample".into()))?;
    let (h, w) = (first.height(), first.width());
    for pair in train.iter().chain(val) {
        pair.validate()?;
        if (pair.height(), pair.width()) != (h, w) {
            return Err(Error::Dim {
                axis: "height",
                expected: h,
                got: pair.height(),
                context: "save_dataset requires one shared extent".into(),
            });
        }
    }

    let metas = |pairs: &[HazePair]| -> Vec<SampleMeta> {
        pairs.iter().enumerate().map(|(i, p)| SampleMeta { index: i, a: p.a.rgb }).collect()
    };
    let manifest = Manifest {
        seed,
        extent: [h, w],
        dcp: *params,
        train: metas(train),
        val: metas(val),
    };
    manifest.validate()?;

    for (split, pairs) in [("train", train), ("val", val)] {
        let dir = root.join(split);
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for (i, pair) in pairs.iter().enumerate() {
            save_image(&pair.hazy, dir.join(format!("{i}_hazy.ppm")))?;
            save_image(&pair.clean, dir.join(format!("{i}_clean.ppm")))?;
            save_image(&gray_to_rgb(&pair.t_true), dir.join(format!("{i}_t.ppm")))?;
        }
    }
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    let mpath = root.join(MANIFEST_NAME);
    fs::write(&mpath, bytes).map_err(|e| Error::io(mpath.display().to_string(), e))
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub train: Vec<HazePair>,
    pub val: Vec<HazePair>,
    pub manifest: Manifest,
}

/// Read a dataset directory back into memory, recomputing each sample's
/// `t_dcp` from the decoded hazy image.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<LoadedDataset> {
    let root = root.as_ref();
    let mpath = root.join(MANIFEST_NAME);
    let bytes = fs::read(&mpath).map_err(|e| Error::io(mpath.display().to_string(), e))?;
    let manifest = parse_manifest(&bytes)?;
    let [h, w] = manifest.extent;

    let load_split = |split: &str, metas: &[SampleMeta]| -> Result<Vec<HazePair>> {
        let dir = root.join(split);
        metas
            .iter()
            .map(|meta| {
                let hazy = load_image(dir.join(format!("{}_hazy.ppm", meta.index)))?;
                let clean = load_image(dir.join(format!("{}_clean.ppm", meta.index)))?;
                let t_rgb = load_image(dir.join(format!("{}_t.ppm", meta.index)))?;
                for (img, name) in [(&hazy, "hazy"), (&clean, "clean"), (&t_rgb, "t")] {
                    if (img.height(), img.width()) != (h, w) {
                        return Err(Error::Manifest(format!(
                            "{split}/{}_{name}.ppm is {}x{}, manifest says {h}x{w}",
                            meta.index,
                            img.height(),
                            img.width()
                        )));
                    }
                }
                let t_true = rgb_to_gray(&t_rgb);
                let (t_dcp, _) = refined_transmission(&hazy, &manifest.dcp)?;
                Ok(HazePair { hazy, clean, t_true, t_dcp, a: AtmosphericLight { rgb: meta.a } })
            })
            .collect()
    };

    Ok(LoadedDataset {
        train: load_split("train", &manifest.train)?,
        val: load_split("val", &manifest.val)?,
        manifest,
    })
}
