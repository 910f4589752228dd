//! Procedural haze synthesis: transmission fields, clean scenes, and the
//! atmospheric scattering blend `I = J·t + A·(1−t)`.
//!
//! Everything here is a pure function of its seed, so datasets regenerate
//! bit-identically and per-sample work could be farmed out with derived
//! seeds. Clean scenes are built from flat-colored shapes that each carry
//! one near-zero channel, which keeps the dark-channel prior well-posed on
//! most patches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HazePair;
use crate::dcp::{refined_transmission, AtmosphericLight, DcpParams};
use crate::error::{Error, Result};
use crate::image::{GrayMap, ImageRgb};

/// Lower clamp on synthetic transmission, comfortably above zero so the
/// haze model stays invertible.
pub const T_MIN: f64 = 0.05;

/// Extinction-coefficient range used by dataset generation: β near the low
/// end leaves thin haze, the high end drives t down toward [`T_MIN`].
pub const DEFAULT_BETA_RANGE: (f64, f64) = (0.6, 2.2);

/// Smoothstep-interpolated value noise on a lattice of `cell`-sized cells,
/// in [0,1], row-major.
fn value_noise(height: usize, width: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cell = cell.max(1);
    let gh = height.div_ceil(cell) + 1;
    let gw = width.div_ceil(cell) + 1;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.gen_range(0.0..1.0)).collect();
    let smooth = |f: f64| f * f * (3.0 - 2.0 * f);
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        let gy = y / cell;
        let fy = smooth((y % cell) as f64 / cell as f64);
        for x in 0..width {
            let gx = x / cell;
            let fx = smooth((x % cell) as f64 / cell as f64);
            let v00 = lattice[gy * gw + gx];
            let v01 = lattice[gy * gw + gx + 1];
            let v10 = lattice[(gy + 1) * gw + gx];
            let v11 = lattice[(gy + 1) * gw + gx + 1];
            let top = v00 + (v01 - v00) * fx;
            let bot = v10 + (v11 - v10) * fx;
            out[y * width + x] = top + (bot - top) * fy;
        }
    }
    out
}

/// Smooth seeded transmission field: pseudo-depth from value noise with
/// correlation length ≈ min(extent)/4, mapped through `t = exp(−β·d)` with β
/// drawn from `beta_range`, clamped to [[`T_MIN`], 1].
pub fn random_transmission_field(
    height: usize,
    width: usize,
    beta_range: (f64, f64),
    seed: u64,
) -> Result<GrayMap> {
    let (lo, hi) = beta_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
        return Err(Error::Param(format!("beta range must satisfy 0 ≤ lo ≤ hi, got ({lo}, {hi})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let cell = (height.min(width) / 4).max(1);
    let mut depth = value_noise(height, width, cell, &mut rng);
    let (min, max) = depth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max - min > 1e-12 {
        for d in &mut depth {
            *d = (*d - min) / (max - min);
        }
    } else {
        depth.fill(0.0);
    }
    let t = depth.into_iter().map(|d| (-beta * d).exp().clamp(T_MIN, 1.0)).collect();
    GrayMap::from_vec(height, width, t)
}

/// Atmospheric scattering blend `I = J·t + A·(1−t)`, clamped to [0,1].
pub fn synthesize_haze(clean: &ImageRgb, t: &GrayMap, a: &AtmosphericLight) -> Result<ImageRgb> {
    if clean.height() != t.height() || clean.width() != t.width() {
        return Err(Error::Dim {
            axis: "height",
            expected: clean.height(),
            got: t.height(),
            context: format!(
                "synthesize_haze transmission extent {}x{} vs image {}x{}",
                t.height(),
                t.width(),
                clean.height(),
                clean.width()
            ),
        });
    }
    ImageRgb::from_fn(clean.height(), clean.width(), |y, x| {
        let j = clean.get(y, x);
        let tv = t.get(y, x);
        [
            (j[0] * tv + a.rgb[0] * (1.0 - tv)).clamp(0.0, 1.0),
            (j[1] * tv + a.rgb[1] * (1.0 - tv)).clamp(0.0, 1.0),
            (j[2] * tv + a.rgb[2] * (1.0 - tv)).clamp(0.0, 1.0),
        ]
    })
}

/// A color with one channel forced near zero, so shapes painted with it
/// deposit dark-channel evidence wherever they land.
fn dark_biased_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut c = [
        rng.gen_range(0.1..0.95),
        rng.gen_range(0.1..0.95),
        rng.gen_range(0.1..0.95),
    ];
    c[rng.gen_range(0..3usize)] = rng.gen_range(0.0..0.1);
    c
}

/// Seeded clean scene: a color gradient base layered with flat rectangles
/// and disks plus low-amplitude smooth noise. Every paint color carries a
/// near-zero channel (see [`dark_biased_color`]).
pub fn random_clean_scene(height: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<ImageRgb> {
    let c0 = dark_biased_color(rng);
    let c1 = dark_biased_color(rng);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = (angle.sin(), angle.cos());
    let mut img = ImageRgb::from_fn(height, width, |y, x| {
        let py = y as f64 / height.max(1) as f64 - 0.5;
        let px = x as f64 / width.max(1) as f64 - 0.5;
        // projection onto the gradient direction, mapped to [0,1]
        let s = ((py * dy + px * dx) / std::f64::consts::SQRT_2 + 0.5).clamp(0.0, 1.0);
        [
            c0[0] + (c1[0] - c0[0]) * s,
            c0[1] + (c1[1] - c0[1]) * s,
            c0[2] + (c1[2] - c0[2]) * s,
        ]
    })?;

    let n_rect = rng.gen_range(3..=7);
    for _ in 0..n_rect {
        let color = dark_biased_color(rng);
        let rh = rng.gen_range((height / 8).max(1)..=(height / 2).max(1));
        let rw = rng.gen_range((width / 8).max(1)..=(width / 2).max(1));
        let y0 = rng.gen_range(0..=height.saturating_sub(rh));
        let x0 = rng.gen_range(0..=width.saturating_sub(rw));
        for y in y0..(y0 + rh).min(height) {
            for x in x0..(x0 + rw).min(width) {
                img.set(y, x, color);
            }
        }
    }

    let n_disk = rng.gen_range(2..=5);
    for _ in 0..n_disk {
        let color = dark_biased_color(rng);
        let r = rng.gen_range((height.min(width) / 10).max(1)..=(height.min(width) / 3).max(1));
        let cy = rng.gen_range(0..height) as isize;
        let cx = rng.gen_range(0..width) as isize;
        let r2 = (r * r) as isize;
        for y in 0..height as isize {
            for x in 0..width as isize {
                if (y - cy).pow(2) + (x - cx).pow(2) <= r2 {
                    img.set(y as usize, x as usize, color);
                }
            }
        }
    }

    let noise = value_noise(height, width, (height.min(width) / 16).max(1), rng);
    for y in 0..height {
        for x in 0..width {
            let n = (noise[y * width + x] - 0.5) * 0.08;
            let px = img.get(y, x);
            img.set(y, x, [px[0] + n, px[1] + n, px[2] + n]);
        }
    }
    img.clamp01();
    Ok(img)
}

/// Near-achromatic airlight with all channels in [0.7, 1].
pub fn random_atmospheric_light(rng: &mut ChaCha8Rng) -> AtmosphericLight {
    let base: f64 = rng.gen_range(0.75..0.95);
    let mut rgb = [0.0; 3];
    for c in &mut rgb {
        *c = (base + rng.gen_range(-0.03..0.03)).clamp(0.7, 1.0);
    }
    AtmosphericLight { rgb }
}

fn make_pair(height: usize, width: usize, sample_seed: u64, params: &DcpParams) -> Result<HazePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let clean = random_clean_scene(height, width, &mut rng)?;
    let t_seed = rng.gen::<u64>();
    let a = random_atmospheric_light(&mut rng);
    let t_true = random_transmission_field(height, width, DEFAULT_BETA_RANGE, t_seed)?;
    let hazy = synthesize_haze(&clean, &t_true, &a)?;
    let (t_dcp, _) = refined_transmission(&hazy, params)?;
    Ok(HazePair { hazy, clean, t_true, t_dcp, a })
}

/// Generate `n_train` + `n_val` paired samples at the given extent — a pure
/// function of its arguments. Each sample gets an independent generator
/// seeded from the master stream, and carries a cached DCP transmission
/// estimate computed with `params`.
pub fn make_dataset(
    n_train: usize,
    n_val: usize,
    extent: (usize, usize),
    seed: u64,
    params: &DcpParams,
) -> Result<(Vec<HazePair>, Vec<HazePair>)> {
    let (height, width) = extent;
    if height == 0 || width == 0 {
        return Err(Error::Param(format!("dataset extent must be ≥ 1, got {height}x{width}")));
    }
    params.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut split = |n: usize| -> Result<Vec<HazePair>> {
        (0..n).map(|_| make_pair(height, width, master.gen::<u64>(), params)).collect()
    };
    let train = split(n_train)?;
    let val = split(n_val)?;
    Ok((train, val))
}
