//! Dark Channel Prior pipeline: transmission estimation, guided-filter
//! refinement, and classical radiance recovery.
//!
//! The refined transmission map is both a standalone dehazing baseline and
//! the fourth input channel of the network path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayMap, ImageRgb};

/// Global airlight color. Components are floored well above zero because the
/// image is divided by them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtmosphericLight {
    pub rgb: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcpParams {
    /// Dark-channel window size (odd).
    pub patch: usize,
    /// Haze retention factor in t = 1 − ω·dark(I/A).
    pub omega: f64,
    /// Lower clamp on transmission during recovery.
    pub t_floor: f64,
    /// Fraction of brightest dark-channel pixels considered for A.
    pub bright_fraction: f64,
    /// Guided-filter box radius.
    pub guided_radius: usize,
    /// Guided-filter regularizer.
    pub guided_eps: f64,
}

impl Default for DcpParams {
    fn default() -> Self {
        DcpParams {
            patch: 15,
            omega: 0.95,
            t_floor: 0.1,
            bright_fraction: 0.001,
            guided_radius: 40,
            guided_eps: 1e-3,
        }
    }
}

impl DcpParams {
    /// Defaults scaled down for small synthetic images.
    pub fn toy() -> Self {
        DcpParams { guided_radius: 8, ..DcpParams::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.patch.is_multiple_of(2) {
            return Err(Error::Param(format!("patch must be odd ≥ 1, got {}", self.patch)));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Param(format!("omega must be in (0,1], got {}", self.omega)));
        }
        if !(self.t_floor >= 0.0 && self.t_floor < 1.0) {
            return Err(Error::Param(format!("t_floor must be in [0,1), got {}", self.t_floor)));
        }
        if !(self.bright_fraction > 0.0 && self.bright_fraction <= 1.0) {
            return Err(Error::Param(format!(
                "bright_fraction must be in (0,1], got {}",
                self.bright_fraction
            )));
        }
        if self.guided_radius == 0 {
            return Err(Error::Param("guided_radius must be ≥ 1".into()));
        }
        if self.guided_eps.is_nan() || self.guided_eps <= 0.0 {
            return Err(Error::Param(format!("guided_eps must be > 0, got {}", self.guided_eps)));
        }
        Ok(())
    }
}

/// Sliding minimum over a square window with edge replication. Replicated
/// samples copy edge values, so clamping the window to the image is exact.
fn window_min(map: &GrayMap, patch: usize) -> GrayMap {
    let r = (patch - 1) / 2;
    let (h, w) = (map.height(), map.width());
    // row pass
    let mut rows = GrayMap::new(h, w).expect("same extents");
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let mut best = f64::INFINITY;
            for xx in lo..=hi {
                best = best.min(map.get(y, xx));
            }
            rows.set(y, x, best);
        }
    }
    // column pass
    let mut out = GrayMap::new(h, w).expect("same extents");
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let mut best = f64::INFINITY;
            for yy in lo..=hi {
                best = best.min(rows.get(yy, x));
            }
            out.set(y, x, best);
        }
    }
    out
}

/// Per pixel: min over the patch neighborhood of the per-pixel channel min.
pub fn dark_channel(img: &ImageRgb, patch: usize) -> Result<GrayMap> {
    if patch == 0 || patch.is_multiple_of(2) {
        return Err(Error::Param(format!("patch must be odd ≥ 1, got {patch}")));
    }
    Ok(window_min(&img.channel_min(), patch))
}

/// Among the ⌈bright_fraction·H·W⌉ pixels with the highest dark-channel
/// value, the RGB of the one with the highest channel sum, floored at 0.05.
pub fn atmospheric_light(
    img: &ImageRgb,
    dark: &GrayMap,
    bright_fraction: f64,
) -> Result<AtmosphericLight> {
    if img.height() != dark.height() || img.width() != dark.width() {
        return Err(Error::Dim {
            axis: "height",
            expected: img.height(),
            got: dark.height(),
            context: "atmospheric_light dark map extent".into(),
        });
    }
    if !(bright_fraction > 0.0 && bright_fraction <= 1.0) {
        return Err(Error::Param(format!(
            "bright_fraction must be in (0,1], got {bright_fraction}"
        )));
    }
    let total = img.height() * img.width();
    let k = ((bright_fraction * total as f64).ceil() as usize).clamp(1, total);
    let mut order: Vec<usize> = (0..total).collect();
    // deterministic: dark value descending, pixel index ascending on ties
    order.sort_unstable_by(|&a, &b| {
        dark.data()[b]
            .partial_cmp(&dark.data()[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut best_sum = f64::NEG_INFINITY;
    let mut best = [0.0f64; 3];
    for &idx in &order[..k] {
        let (y, x) = (idx / img.width(), idx % img.width());
        let px = img.get(y, x);
        let sum = px[0] + px[1] + px[2];
        if sum > best_sum {
            best_sum = sum;
            best = px;
        }
    }
    Ok(AtmosphericLight { rgb: best.map(|v| v.clamp(0.05, 1.0)) })
}

/// t = 1 − ω · dark_channel(I normalized by A), clamped to [0,1].
pub fn estimate_transmission(
    img: &ImageRgb,
    a: &AtmosphericLight,
    params: &DcpParams,
) -> Result<GrayMap> {
    params.validate()?;
    if a.rgb.iter().any(|&c| c < 0.05) {
        return Err(Error::Param(format!(
            "atmospheric light components must be ≥ 0.05, got {:?}",
            a.rgb
        )));
    }
    let (h, w) = (img.height(), img.width());
    let mut norm_min = GrayMap::new(h, w)?;
    for y in 0..h {
        for x in 0..w {
            let px = img.get(y, x);
            let m = (px[0] / a.rgb[0]).min(px[1] / a.rgb[1]).min(px[2] / a.rgb[2]);
            norm_min.set(y, x, m);
        }
    }
    let dark = window_min(&norm_min, params.patch);
    let mut t = GrayMap::new(h, w)?;
    for (o, &d) in t.data_mut().iter_mut().zip(dark.data()) {
        *o = (1.0 - params.omega * d).clamp(0.0, 1.0);
    }
    Ok(t)
}

/// Box mean with edge replication, exact via an f64 integral image.
fn box_mean_f64(data: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let (hp, wp) = (h + 2 * r, w + 2 * r);
    // padded copy (replicate), then summed-area table with a zero border
    let mut integral = vec![0.0f64; (hp + 1) * (wp + 1)];
    for y in 0..hp {
        let src_y = (y.max(r) - r).min(h - 1);
        let mut row_sum = 0.0f64;
        for x in 0..wp {
            let src_x = (x.max(r) - r).min(w - 1);
            row_sum += data[src_y * w + src_x];
            integral[(y + 1) * (wp + 1) + (x + 1)] = integral[y * (wp + 1) + (x + 1)] + row_sum;
        }
    }
    let win = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut out = vec![0.0f64; h * w];
    let at = |y: usize, x: usize| integral[y * (wp + 1) + x];
    for y in 0..h {
        for x in 0..w {
            // window in padded coordinates: rows y..y+2r+1, cols x..x+2r+1
            let (y0, y1) = (y, y + 2 * r + 1);
            let (x0, x1) = (x, x + 2 * r + 1);
            let s = at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
            out[y * w + x] = s / win;
        }
    }
    out
}

/// Edge-preserving refinement: q = mean(a)·guide + mean(b) with
/// a = cov(guide,src)/(var(guide)+eps), b = mean(src) − a·mean(guide),
/// all means box filters of the given radius with edge replication.
pub fn guided_filter(guide: &GrayMap, src: &GrayMap, radius: usize, eps: f64) -> Result<GrayMap> {
    if guide.height() != src.height() || guide.width() != src.width() {
        return Err(Error::Dim {
            axis: "height",
            expected: guide.height(),
            got: src.height(),
            context: "guided_filter guide vs src extent".into(),
        });
    }
    let (h, w) = (guide.height(), guide.width());
    if radius == 0 || radius > h.min(w) {
        return Err(Error::Param(format!(
            "guided_filter radius {radius} invalid for a {h}x{w} image"
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Param(format!("guided_eps must be > 0, got {eps}")));
    }
    let i64v: &[f64] = guide.data();
    let p64: &[f64] = src.data();
    let ii: Vec<f64> = i64v.iter().map(|v| v * v).collect();
    let ip: Vec<f64> = i64v.iter().zip(p64).map(|(a, b)| a * b).collect();

    let mean_i = box_mean_f64(i64v, h, w, radius);
    let mean_p = box_mean_f64(p64, h, w, radius);
    let corr_ii = box_mean_f64(&ii, h, w, radius);
    let corr_ip = box_mean_f64(&ip, h, w, radius);

    let mut a = vec![0.0f64; h * w];
    let mut b = vec![0.0f64; h * w];
    for i in 0..h * w {
        let var = corr_ii[i] - mean_i[i] * mean_i[i];
        let cov = corr_ip[i] - mean_i[i] * mean_p[i];
        a[i] = cov / (var + eps);
        b[i] = mean_p[i] - a[i] * mean_i[i];
    }
    let mean_a = box_mean_f64(&a, h, w, radius);
    let mean_b = box_mean_f64(&b, h, w, radius);
    let mut out = GrayMap::new(h, w)?;
    for i in 0..h * w {
        out.data_mut()[i] = mean_a[i] * i64v[i] + mean_b[i];
    }
    Ok(out)
}

/// J = (I − A)/max(t, t_floor) + A, clamped to [0,1].
pub fn recover_radiance(
    img: &ImageRgb,
    t: &GrayMap,
    a: &AtmosphericLight,
    t_floor: f64,
) -> Result<ImageRgb> {
    if img.height() != t.height() || img.width() != t.width() {
        return Err(Error::Dim {
            axis: "height",
            expected: img.height(),
            got: t.height(),
            context: "recover_radiance transmission extent".into(),
        });
    }
    let mut out = ImageRgb::new(img.height(), img.width())?;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let px = img.get(y, x);
            let tv = t.get(y, x).max(t_floor);
            let mut rec = [0.0f64; 3];
            for c in 0..3 {
                rec[c] = ((px[c] - a.rgb[c]) / tv + a.rgb[c]).clamp(0.0, 1.0);
            }
            out.set(y, x, rec);
        }
    }
    Ok(out)
}

/// Estimation half of the pipeline: refined transmission map plus the
/// airlight it was computed against.
pub fn refined_transmission(img: &ImageRgb, params: &DcpParams) -> Result<(GrayMap, AtmosphericLight)> {
    params.validate()?;
    let dark = dark_channel(img, params.patch)?;
    let a = atmospheric_light(img, &dark, params.bright_fraction)?;
    let t_est = estimate_transmission(img, &a, params)?;
    let guide = img.luma();
    let mut t_ref = guided_filter(&guide, &t_est, params.guided_radius, params.guided_eps)?;
    t_ref.clamp01();
    Ok((t_ref, a))
}

/// Full classical pipeline; returns the dehazed image and the refined map.
pub fn dcp_dehaze(img: &ImageRgb, params: &DcpParams) -> Result<(ImageRgb, GrayMap)> {
    let (t_ref, a) = refined_transmission(img, params)?;
    let dehazed = recover_radiance(img, &t_ref, &a, params.t_floor)?;
    Ok((dehazed, t_ref))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageRgb {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageRgb::from_fn(h, w, |_, _| {
            [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]
        })
        .unwrap()
    }

    /// Brute-force dark channel: double min over channels and patch.
    fn dark_oracle(img: &ImageRgb, patch: usize) -> GrayMap {
        let r = (patch - 1) as isize / 2;
        let (h, w) = (img.height() as isize, img.width() as isize);
        let mut out = GrayMap::new(img.height(), img.width()).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut best = f64::INFINITY;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let yy = (y + dy).clamp(0, h - 1) as usize;
                        let xx = (x + dx).clamp(0, w - 1) as usize;
                        let px = img.get(yy, xx);
                        best = best.min(px[0]).min(px[1]).min(px[2]);
                    }
                }
                out.set(y as usize, x as usize, best);
            }
        }
        out
    }

    #[test]
    fn dark_channel_constant_and_black() {
        let img = ImageRgb::from_fn(5, 5, |_, _| [0.5, 0.7, 0.9]).unwrap();
        let d = dark_channel(&img, 3).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.5));
        let black = ImageRgb::new(4, 4).unwrap();
        assert!(dark_channel(&black, 15).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dark_channel_matches_bruteforce_oracle() {
        for (seed, patch) in [(1u64, 3usize), (2, 5), (3, 1), (4, 15)] {
            let img = random_image(9, 9, seed);
            let d = dark_channel(&img, patch).unwrap();
            let oracle = dark_oracle(&img, patch);
            assert_eq!(d.data(), oracle.data(), "patch {patch}");
        }
    }

    #[test]
    fn dark_channel_patch1_is_channel_min() {
        let img = random_image(6, 7, 9);
        assert_eq!(dark_channel(&img, 1).unwrap().data(), img.channel_min().data());
    }

    #[test]
    fn dark_channel_monotone_under_brightening() {
        let img = random_image(8, 8, 11);
        let before = dark_channel(&img, 3).unwrap();
        let mut brighter = img.clone();
        let px = brighter.get(4, 4);
        brighter.set(4, 4, px.map(|v| (v + 0.2).min(1.0)));
        let after = dark_channel(&brighter, 3).unwrap();
        for (a, b) in after.data().iter().zip(before.data()) {
            assert!(a >= b);
        }
    }

    #[test]
    fn dark_channel_rejects_even_patch() {
        let img = random_image(4, 4, 5);
        assert!(dark_channel(&img, 2).is_err());
    }

    #[test]
    fn atmospheric_light_uniform_image() {
        let img = ImageRgb::from_fn(6, 6, |_, _| [0.3, 0.6, 0.9]).unwrap();
        let dark = dark_channel(&img, 3).unwrap();
        let a = atmospheric_light(&img, &dark, 0.1).unwrap();
        assert_eq!(a.rgb, [0.3, 0.6, 0.9]);
    }

    #[test]
    fn atmospheric_light_finds_white_region() {
        let mut img = ImageRgb::new(12, 12).unwrap();
        for y in 4..7 {
            for x in 4..7 {
                img.set(y, x, [1.0, 1.0, 1.0]);
            }
        }
        let dark = dark_channel(&img, 3).unwrap();
        let a = atmospheric_light(&img, &dark, 0.01).unwrap();
        assert_eq!(a.rgb, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn atmospheric_light_floors_components() {
        let img = ImageRgb::new(4, 4).unwrap(); // all black
        let dark = dark_channel(&img, 3).unwrap();
        let a = atmospheric_light(&img, &dark, 0.5).unwrap();
        assert_eq!(a.rgb, [0.05, 0.05, 0.05]);
    }

    #[test]
    fn atmospheric_light_single_candidate() {
        let mut img = ImageRgb::new(10, 10).unwrap();
        img.set(3, 7, [0.8, 0.7, 0.6]);
        let dark = GrayMap::from_vec(10, 10, {
            let mut v = vec![0.0; 100];
            v[3 * 10 + 7] = 1.0;
            v
        })
        .unwrap();
        // fraction small enough that exactly one pixel is considered
        let a = atmospheric_light(&img, &dark, 0.0001).unwrap();
        assert_eq!(a.rgb, [0.8, 0.7, 0.6]);
    }

    #[test]
    fn transmission_analytic_cases() {
        let p = DcpParams { patch: 3, ..DcpParams::default() };
        let a = AtmosphericLight { rgb: [0.8, 0.8, 0.8] };
        let img = ImageRgb::from_fn(5, 5, |_, _| [0.8, 0.8, 0.8]).unwrap();
        let t = estimate_transmission(&img, &a, &p).unwrap();
        for &v in t.data() {
            assert!((v - 0.05).abs() < 1e-6, "expected 1-omega, got {v}");
        }
        let black = ImageRgb::new(5, 5).unwrap();
        let t = estimate_transmission(&black, &a, &p).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn transmission_matches_compositional_oracle() {
        let img = random_image(9, 9, 21);
        let p = DcpParams { patch: 3, ..DcpParams::default() };
        let a = AtmosphericLight { rgb: [0.9, 0.85, 0.8] };
        let t = estimate_transmission(&img, &a, &p).unwrap();
        // oracle: normalize channels, brute-force dark channel, apply formula
        let norm = ImageRgb::from_fn(9, 9, |y, x| {
            let px = img.get(y, x);
            [px[0] / 0.9, px[1] / 0.85, px[2] / 0.8]
        })
        .unwrap();
        let dark = dark_oracle(&norm, 3);
        for (tv, &d) in t.data().iter().zip(dark.data()) {
            let want = (1.0 - 0.95 * d).clamp(0.0, 1.0);
            assert!((tv - want).abs() < 1e-6);
        }
    }

    /// Naive windowed-mean guided filter, the independent oracle.
    fn guided_oracle(guide: &GrayMap, src: &GrayMap, r: usize, eps: f64) -> Vec<f64> {
        let (h, w) = (guide.height() as isize, guide.width() as isize);
        let ri = r as isize;
        let boxm = |data: &dyn Fn(usize, usize) -> f64, y: isize, x: isize| {
            let mut sum = 0.0;
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    let yy = (y + dy).clamp(0, h - 1) as usize;
                    let xx = (x + dx).clamp(0, w - 1) as usize;
                    sum += data(yy, xx);
                }
            }
            sum / ((2 * r + 1) * (2 * r + 1)) as f64
        };
        let gi = |y: usize, x: usize| guide.get(y, x);
        let pi = |y: usize, x: usize| src.get(y, x);
        let gii = |y: usize, x: usize| gi(y, x) * gi(y, x);
        let gip = |y: usize, x: usize| gi(y, x) * pi(y, x);
        let mut a = vec![0.0f64; (h * w) as usize];
        let mut b = vec![0.0f64; (h * w) as usize];
        for y in 0..h {
            for x in 0..w {
                let mi = boxm(&gi, y, x);
                let mp = boxm(&pi, y, x);
                let var = boxm(&gii, y, x) - mi * mi;
                let cov = boxm(&gip, y, x) - mi * mp;
                let av = cov / (var + eps);
                a[(y * w + x) as usize] = av;
                b[(y * w + x) as usize] = mp - av * mi;
            }
        }
        let af = |y: usize, x: usize| a[y * w as usize + x];
        let bf = |y: usize, x: usize| b[y * w as usize + x];
        let mut q = vec![0.0f64; (h * w) as usize];
        for y in 0..h {
            for x in 0..w {
                q[(y * w + x) as usize] =
                    boxm(&af, y, x) * gi(y as usize, x as usize) + boxm(&bf, y, x);
            }
        }
        q
    }

    #[test]
    fn guided_filter_preserves_constant_src() {
        let guide = random_image(10, 8, 31).luma();
        let src = GrayMap::filled(10, 8, 0.42).unwrap();
        let q = guided_filter(&guide, &src, 3, 1e-3).unwrap();
        for &v in q.data() {
            assert!((v - 0.42).abs() < 1e-6);
        }
    }

    #[test]
    fn guided_filter_constant_guide_double_boxes_src() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let src = GrayMap::from_vec(8, 9, (0..72).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let guide = GrayMap::filled(8, 9, 0.5).unwrap();
        let q = guided_filter(&guide, &src, 2, 1e-3).unwrap();
        // var=0 → a=0, b=mean(src) → q = box(box(src))
        let p64: Vec<f64> = src.data().to_vec();
        let once = box_mean_f64(&p64, 8, 9, 2);
        let twice = box_mean_f64(&once, 8, 9, 2);
        for (qv, want) in q.data().iter().zip(&twice) {
            assert!((*qv - want).abs() < 1e-6);
        }
    }

    #[test]
    fn guided_filter_identity_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        // high-variance guide == src
        let src =
            GrayMap::from_vec(12, 12, (0..144).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let q = guided_filter(&src, &src, 2, 1e-8).unwrap();
        for (a, b) in q.data().iter().zip(src.data()) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn guided_filter_matches_windowed_oracle() {
        let guide = random_image(12, 10, 61).luma();
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let src =
            GrayMap::from_vec(12, 10, (0..120).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let q = guided_filter(&guide, &src, 2, 1e-3).unwrap();
        let oracle = guided_oracle(&guide, &src, 2, 1e-3);
        for (a, b) in q.data().iter().zip(&oracle) {
            assert!((*a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn guided_filter_linear_in_src() {
        let guide = random_image(10, 10, 71).luma();
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let mk = |rng: &mut ChaCha8Rng| {
            GrayMap::from_vec(10, 10, (0..100).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
        };
        let s1 = mk(&mut rng);
        let s2 = mk(&mut rng);
        let (alpha, beta) = (0.7f64, -0.3f64);
        let mut combo = GrayMap::new(10, 10).unwrap();
        for i in 0..100 {
            combo.data_mut()[i] = alpha * s1.data()[i] + beta * s2.data()[i];
        }
        let q1 = guided_filter(&guide, &s1, 2, 1e-3).unwrap();
        let q2 = guided_filter(&guide, &s2, 2, 1e-3).unwrap();
        let qc = guided_filter(&guide, &combo, 2, 1e-3).unwrap();
        for i in 0..100 {
            let want = alpha * q1.data()[i] + beta * q2.data()[i];
            assert!((qc.data()[i] - want).abs() < 1e-5);
        }
    }

    #[test]
    fn guided_filter_rejects_oversize_radius() {
        let g = GrayMap::filled(6, 6, 0.5).unwrap();
        assert!(guided_filter(&g, &g, 7, 1e-3).is_err());
    }

    #[test]
    fn recover_analytic_cases() {
        let img = random_image(6, 6, 81);
        let a = AtmosphericLight { rgb: [0.9, 0.9, 0.9] };
        let t1 = GrayMap::filled(6, 6, 1.0).unwrap();
        let j = recover_radiance(&img, &t1, &a, 0.1).unwrap();
        for (x, y) in j.data().iter().zip(img.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        let ai = ImageRgb::from_fn(6, 6, |_, _| [0.9, 0.9, 0.9]).unwrap();
        let t = GrayMap::filled(6, 6, 0.4).unwrap();
        let j = recover_radiance(&ai, &t, &a, 0.1).unwrap();
        for px in j.data().chunks_exact(3) {
            assert!((px[0] - 0.9).abs() < 1e-6);
        }
    }

    #[test]
    fn recover_inverts_scattering_model() {
        // I = J·t + A(1−t) on a domain where nothing clamps
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let a = AtmosphericLight { rgb: [0.85, 0.9, 0.95] };
        for _ in 0..20 {
            let j = ImageRgb::from_fn(7, 7, |_, _| {
                [
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.1..0.9),
                ]
            })
            .unwrap();
            let t = GrayMap::from_vec(
                7,
                7,
                (0..49).map(|_| rng.gen_range(0.15..1.0)).collect(),
            )
            .unwrap();
            let hazy = ImageRgb::from_fn(7, 7, |y, x| {
                let px = j.get(y, x);
                let tv = t.get(y, x);
                [
                    px[0] * tv + a.rgb[0] * (1.0 - tv),
                    px[1] * tv + a.rgb[1] * (1.0 - tv),
                    px[2] * tv + a.rgb[2] * (1.0 - tv),
                ]
            })
            .unwrap();
            let rec = recover_radiance(&hazy, &t, &a, 0.1).unwrap();
            for (r, w) in rec.data().iter().zip(j.data()) {
                assert!((r - w).abs() < 1e-6, "{r} vs {w}");
            }
        }
    }

    #[test]
    fn dcp_dehaze_postconditions() {
        let img = random_image(24, 24, 101);
        let (dehazed, t) = dcp_dehaze(&img, &DcpParams { patch: 5, guided_radius: 4, ..DcpParams::default() }).unwrap();
        assert!(dehazed.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn haze_free_scene_yields_high_transmission() {
        // high contrast, dark pixels scattered everywhere
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let img = ImageRgb::from_fn(32, 32, |_, _| {
            if rng.gen_bool(0.3) {
                [rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1)]
            } else {
                [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]
            }
        })
        .unwrap();
        let (_, t) = dcp_dehaze(&img, &DcpParams { patch: 5, guided_radius: 4, ..DcpParams::default() }).unwrap();
        assert!(t.mean() > 0.8, "mean t = {}", t.mean());
    }
}
