//! Training augmentations: random crop, horizontal flip, cutout, mosaic.
//!
//! Geometric transforms (crop, flip, mosaic windows) apply identically to
//! all four maps of a [`HazePair`], so the pairing survives augmentation.
//! Cutout is input corruption: it zeroes rectangles in the network's input
//! channels (`hazy` and `t_dcp`) and leaves the target `clean` and the
//! ground-truth `t_true` intact.
//!
//! Mosaic assembles one sample from four sources, one per quadrant, each
//! keeping its own synthesis airlight — the composite's haze is deliberately
//! non-homogeneous.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::HazePair;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoutSpec {
    /// Number of rectangles to zero.
    pub count: usize,
    /// Upper bound on each rectangle's area as a fraction of the image.
    pub max_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    /// Random-crop target extent (height, width), or `None` to skip.
    pub crop: Option<(usize, usize)>,
    pub hflip_prob: f64,
    pub cutout: Option<CutoutSpec>,
    /// Probability that the batch assembler replaces a sample with a
    /// four-source mosaic; consumed by the training loop, not [`augment`].
    pub mosaic_prob: f64,
    pub seed: u64,
}

impl Default for AugmentSpec {
    /// Everything off: `augment` under the default spec is the identity.
    fn default() -> Self {
        AugmentSpec { crop: None, hflip_prob: 0.0, cutout: None, mosaic_prob: 0.0, seed: 0 }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some((h, w)) = self.crop {
            if h == 0 || w == 0 {
                return Err(Error::Param(format!("crop target must be ≥ 1, got {h}x{w}")));
            }
        }
        for (name, p) in [("hflip_prob", self.hflip_prob), ("mosaic_prob", self.mosaic_prob)] {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::Param(format!("{name} must be in [0,1], got {p}")));
            }
        }
        if let Some(c) = self.cutout {
            if c.count == 0 {
                return Err(Error::Param("cutout count must be ≥ 1".into()));
            }
            if !(c.max_fraction > 0.0 && c.max_fraction <= 0.25) {
                return Err(Error::Param(format!(
                    "cutout max_fraction must be in (0, 0.25], got {}",
                    c.max_fraction
                )));
            }
        }
        Ok(())
    }
}

fn crop_pair(pair: &HazePair, y0: usize, x0: usize, h: usize, w: usize) -> Result<HazePair> {
    Ok(HazePair {
        hazy: pair.hazy.crop(y0, x0, h, w)?,
        clean: pair.clean.crop(y0, x0, h, w)?,
        t_true: pair.t_true.crop(y0, x0, h, w)?,
        t_dcp: pair.t_dcp.crop(y0, x0, h, w)?,
        a: pair.a,
    })
}

fn hflip_pair(pair: &HazePair) -> HazePair {
    HazePair {
        hazy: pair.hazy.hflip(),
        clean: pair.clean.hflip(),
        t_true: pair.t_true.hflip(),
        t_dcp: pair.t_dcp.hflip(),
        a: pair.a,
    }
}

/// Apply crop → hflip → cutout to one pair, drawing every random choice from
/// `rng`. Returns a new pair; the input is untouched.
pub fn augment(pair: &HazePair, spec: &AugmentSpec, rng: &mut ChaCha8Rng) -> Result<HazePair> {
    spec.validate()?;
    pair.validate()?;
    let mut out = pair.clone();

    if let Some((ch, cw)) = spec.crop {
        let (h, w) = (out.height(), out.width());
        if ch > h || cw > w {
            return Err(Error::Param(format!("crop target {ch}x{cw} exceeds source {h}x{w}")));
        }
        let y0 = rng.gen_range(0..=h - ch);
        let x0 = rng.gen_range(0..=w - cw);
        out = crop_pair(&out, y0, x0, ch, cw)?;
    }

    if rng.gen_range(0.0..1.0) < spec.hflip_prob {
        out = hflip_pair(&out);
    }

    if let Some(cut) = spec.cutout {
        let (h, w) = (out.height(), out.width());
        // area cap per rectangle; at least one pixel so cutout always bites
        let max_area = ((cut.max_fraction * (h * w) as f64).floor() as usize).max(1);
        for _ in 0..cut.count {
            let rh = rng.gen_range(1..=max_area.min(h));
            let rw = rng.gen_range(1..=(max_area / rh).clamp(1, w));
            let y0 = rng.gen_range(0..=h - rh);
            let x0 = rng.gen_range(0..=w - rw);
            for y in y0..y0 + rh {
                for x in x0..x0 + rw {
                    out.hazy.set(y, x, [0.0, 0.0, 0.0]);
                    out.t_dcp.set(y, x, 0.0);
                }
            }
        }
    }

    Ok(out)
}

/// Quadrant boundaries of a `(h, w)` target split at `center`.
fn quadrants(h: usize, w: usize, center: (usize, usize)) -> [(usize, usize, usize, usize); 4] {
    let (cy, cx) = center;
    [
        (0, 0, cy, cx),         // top-left: rows [0,cy), cols [0,cx)
        (0, cx, cy, w - cx),    // top-right
        (cy, 0, h - cy, cx),    // bottom-left
        (cy, cx, h - cy, w - cx), // bottom-right
    ]
}

/// Mosaic with an explicit center split; `rng` draws each quadrant's source
/// window. Quadrant `q` is filled from `pairs[q]` with one window applied
/// across all four maps.
pub fn mosaic4_at(
    pairs: &[HazePair; 4],
    target: (usize, usize),
    center: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<HazePair> {
    let (th, tw) = target;
    if th < 2 || tw < 2 {
        return Err(Error::Param(format!("mosaic target must be ≥ 2x2, got {th}x{tw}")));
    }
    let (cy, cx) = center;
    if !(1..th).contains(&cy) || !(1..tw).contains(&cx) {
        return Err(Error::Param(format!(
            "mosaic center ({cy},{cx}) must leave four non-empty {th}x{tw} quadrants"
        )));
    }
    for pair in pairs {
        pair.validate()?;
        if pair.height() < th || pair.width() < tw {
            return Err(Error::Param(format!(
                "mosaic source {}x{} smaller than target {th}x{tw}",
                pair.height(),
                pair.width()
            )));
        }
    }

    let mut out = crop_pair(&pairs[0], 0, 0, th, tw)?; // allocate at target extent
    for (q, &(qy, qx, qh, qw)) in quadrants(th, tw, center).iter().enumerate() {
        let src = &pairs[q];
        let sy = rng.gen_range(0..=src.height() - qh);
        let sx = rng.gen_range(0..=src.width() - qw);
        for y in 0..qh {
            for x in 0..qw {
                out.hazy.set(qy + y, qx + x, src.hazy.get(sy + y, sx + x));
                out.clean.set(qy + y, qx + x, src.clean.get(sy + y, sx + x));
                out.t_true.set(qy + y, qx + x, src.t_true.get(sy + y, sx + x));
                out.t_dcp.set(qy + y, qx + x, src.t_dcp.get(sy + y, sx + x));
            }
        }
    }
    Ok(out)
}

/// Mosaic with a uniformly drawn center split.
pub fn mosaic4(
    pairs: &[HazePair; 4],
    target: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<HazePair> {
    let (th, tw) = target;
    if th < 2 || tw < 2 {
        return Err(Error::Param(format!("mosaic target must be ≥ 2x2, got {th}x{tw}")));
    }
    let center = (rng.gen_range(1..th), rng.gen_range(1..tw));
    mosaic4_at(pairs, target, center, rng)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::data::synth::{
        random_atmospheric_light, random_clean_scene, random_transmission_field, synthesize_haze,
    };
    use crate::dcp::AtmosphericLight;
    use crate::image::{GrayMap, ImageRgb};

    /// Test pair with strictly positive hazy pixels (t capped below 1).
    fn sample_pair(h: usize, w: usize, seed: u64) -> HazePair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = random_clean_scene(h, w, &mut rng).unwrap();
        let mut t_true = random_transmission_field(h, w, (0.8, 2.0), seed ^ 0x51ed).unwrap();
        for v in t_true.data_mut() {
            *v = v.min(0.9);
        }
        let a = random_atmospheric_light(&mut rng);
        let hazy = synthesize_haze(&clean, &t_true, &a).unwrap();
        let t_dcp = random_transmission_field(h, w, (0.5, 1.5), seed ^ 0xdc9).unwrap();
        HazePair { hazy, clean, t_true, t_dcp, a }
    }

    fn pairs_equal(a: &HazePair, b: &HazePair) -> bool {
        a.hazy == b.hazy && a.clean == b.clean && a.t_true == b.t_true && a.t_dcp == b.t_dcp && a.a == b.a
    }

    #[test]
    fn double_hflip_is_identity() {
        let pair = sample_pair(14, 11, 1);
        let spec = AugmentSpec { hflip_prob: 1.0, ..AugmentSpec::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let once = augment(&pair, &spec, &mut rng).unwrap();
        assert!(!pairs_equal(&pair, &once));
        let twice = augment(&once, &spec, &mut rng).unwrap();
        assert!(pairs_equal(&pair, &twice));
    }

    #[test]
    fn full_extent_crop_is_identity() {
        let pair = sample_pair(12, 9, 2);
        let spec = AugmentSpec { crop: Some((12, 9)), ..AugmentSpec::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = augment(&pair, &spec, &mut rng).unwrap();
        assert!(pairs_equal(&pair, &out));
    }

    #[test]
    fn oversized_crop_is_a_parameter_error() {
        let pair = sample_pair(8, 8, 3);
        let spec = AugmentSpec { crop: Some((9, 8)), ..AugmentSpec::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(augment(&pair, &spec, &mut rng), Err(Error::Param(_))));
    }

    #[test]
    fn crop_applies_one_window_to_all_maps() {
        let pair = sample_pair(16, 16, 4);
        let spec = AugmentSpec { crop: Some((8, 6)), ..AugmentSpec::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = augment(&pair, &spec, &mut rng).unwrap();
        assert_eq!((out.height(), out.width()), (8, 6));
        out.validate().unwrap();
        // window is consistent across maps iff the blend invariant survives
        assert!(out.blend_residual() <= 1e-12);
    }

    #[test]
    fn cutout_zeroes_one_rectangle_in_inputs_only() {
        let pair = sample_pair(24, 24, 5);
        let frac = 0.1;
        let spec = AugmentSpec {
            cutout: Some(CutoutSpec { count: 1, max_fraction: frac }),
            ..AugmentSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let out = augment(&pair, &spec, &mut rng).unwrap();

        assert_eq!(out.clean, pair.clean, "target must be untouched");
        assert_eq!(out.t_true, pair.t_true, "ground-truth transmission must be untouched");

        // bounding box of changed hazy pixels
        let (mut y_lo, mut y_hi, mut x_lo, mut x_hi) = (usize::MAX, 0, usize::MAX, 0);
        for y in 0..24 {
            for x in 0..24 {
                if out.hazy.get(y, x) != pair.hazy.get(y, x) {
                    y_lo = y_lo.min(y);
                    y_hi = y_hi.max(y);
                    x_lo = x_lo.min(x);
                    x_hi = x_hi.max(x);
                }
            }
        }
        assert!(y_lo != usize::MAX, "cutout must change something");
        let (rh, rw) = (y_hi - y_lo + 1, x_hi - x_lo + 1);
        assert!(rh * rw <= (frac * 24.0 * 24.0) as usize, "area {} too large", rh * rw);
        for y in 0..24 {
            for x in 0..24 {
                let inside = (y_lo..=y_hi).contains(&y) && (x_lo..=x_hi).contains(&x);
                if inside {
                    assert_eq!(out.hazy.get(y, x), [0.0; 3]);
                    assert_eq!(out.t_dcp.get(y, x), 0.0);
                } else {
                    assert_eq!(out.hazy.get(y, x), pair.hazy.get(y, x));
                    assert_eq!(out.t_dcp.get(y, x), pair.t_dcp.get(y, x));
                }
            }
        }
    }

    #[test]
    fn geometric_transforms_commute_with_haze_synthesis() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let clean = random_clean_scene(20, 18, &mut rng).unwrap();
        let t = random_transmission_field(20, 18, (0.7, 1.8), 66).unwrap();
        let a = random_atmospheric_light(&mut rng);
        let hazy = synthesize_haze(&clean, &t, &a).unwrap();

        let lhs_flip = synthesize_haze(&clean.hflip(), &t.hflip(), &a).unwrap();
        let max_flip = lhs_flip
            .data()
            .iter()
            .zip(hazy.hflip().data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        assert!(max_flip <= 1e-6);

        let (y0, x0, ch, cw) = (3, 5, 10, 9);
        let lhs_crop =
            synthesize_haze(&clean.crop(y0, x0, ch, cw).unwrap(), &t.crop(y0, x0, ch, cw).unwrap(), &a)
                .unwrap();
        let max_crop = lhs_crop
            .data()
            .iter()
            .zip(hazy.crop(y0, x0, ch, cw).unwrap().data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        assert!(max_crop <= 1e-6);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            AugmentSpec { hflip_prob: 1.1, ..AugmentSpec::default() },
            AugmentSpec { mosaic_prob: -0.2, ..AugmentSpec::default() },
            AugmentSpec { crop: Some((0, 4)), ..AugmentSpec::default() },
            AugmentSpec {
                cutout: Some(CutoutSpec { count: 0, max_fraction: 0.1 }),
                ..AugmentSpec::default()
            },
            AugmentSpec {
                cutout: Some(CutoutSpec { count: 1, max_fraction: 0.3 }),
                ..AugmentSpec::default()
            },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?} should be invalid");
        }
    }

    #[test]
    fn mosaic_center_split_with_constant_sources_gives_uniform_quadrants() {
        let mk = |v: f64| {
            let clean = ImageRgb::from_fn(16, 16, |_, _| [v, v / 2.0, v / 3.0]).unwrap();
            let t_true = GrayMap::filled(16, 16, 0.5).unwrap();
            let a = AtmosphericLight { rgb: [0.8, 0.8, 0.8] };
            let hazy = synthesize_haze(&clean, &t_true, &a).unwrap();
            let t_dcp = GrayMap::filled(16, 16, 0.4).unwrap();
            HazePair { hazy, clean, t_true, t_dcp, a }
        };
        let pairs = [mk(0.2), mk(0.4), mk(0.6), mk(0.8)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = mosaic4_at(&pairs, (16, 16), (8, 8), &mut rng).unwrap();
        assert_eq!((out.height(), out.width()), (16, 16));
        for (q, &(qy, qx, qh, qw)) in quadrants(16, 16, (8, 8)).iter().enumerate() {
            let want = pairs[q].clean.get(0, 0);
            for y in qy..qy + qh {
                for x in qx..qx + qw {
                    assert_eq!(out.clean.get(y, x), want, "quadrant {q}");
                }
            }
        }
    }

    #[test]
    fn mosaic_preserves_per_quadrant_blend_invariant() {
        let pairs = [sample_pair(20, 20, 10), sample_pair(20, 20, 11), sample_pair(20, 20, 12), sample_pair(20, 20, 13)];
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let center = (7, 12);
        let out = mosaic4_at(&pairs, (16, 16), center, &mut rng).unwrap();
        out.validate().unwrap();
        for (q, &(qy, qx, qh, qw)) in quadrants(16, 16, center).iter().enumerate() {
            let a = pairs[q].a.rgb;
            for y in qy..qy + qh {
                for x in qx..qx + qw {
                    let j = out.clean.get(y, x);
                    let i = out.hazy.get(y, x);
                    let t = out.t_true.get(y, x);
                    for c in 0..3 {
                        let blend = j[c] * t + a[c] * (1.0 - t);
                        assert!(
                            (i[c] - blend).abs() <= 1e-6,
                            "quadrant {q} at ({y},{x}) channel {c}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn mosaic_rejects_small_sources_and_degenerate_centers() {
        let pairs = [sample_pair(8, 8, 1), sample_pair(8, 8, 2), sample_pair(8, 8, 3), sample_pair(8, 8, 4)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(mosaic4(&pairs, (10, 8), &mut rng), Err(Error::Param(_))));
        assert!(matches!(mosaic4_at(&pairs, (8, 8), (0, 4), &mut rng), Err(Error::Param(_))));
        assert!(matches!(mosaic4_at(&pairs, (8, 8), (4, 8), &mut rng), Err(Error::Param(_))));
    }

    #[test]
    fn mosaic_is_deterministic_per_rng_state() {
        let pairs = [sample_pair(16, 16, 5), sample_pair(16, 16, 6), sample_pair(16, 16, 7), sample_pair(16, 16, 8)];
        let mut r1 = ChaCha8Rng::seed_from_u64(44);
        let mut r2 = ChaCha8Rng::seed_from_u64(44);
        let a = mosaic4(&pairs, (12, 12), &mut r1).unwrap();
        let b = mosaic4(&pairs, (12, 12), &mut r2).unwrap();
        assert!(pairs_equal(&a, &b));
    }
}
