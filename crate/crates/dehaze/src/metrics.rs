//! Image quality metrics (PSNR, SSIM) and training objectives.

use crate::error::{Error, Result};
use crate::image::ImageRgb;
use crate::tensor::Tensor;

/// Weights of the generator objective: total = λ_adv·adv + λ_rec·rec.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_adv: f32,
    pub lambda_rec: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_adv: 1.0, lambda_rec: 100.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_adv < 0.0 || self.lambda_rec < 0.0 {
            return Err(Error::Param("loss weights must be ≥ 0".into()));
        }
        if self.lambda_adv == 0.0 && self.lambda_rec == 0.0 {
            return Err(Error::Param("loss weights must not both be zero".into()));
        }
        Ok(())
    }
}

/// Per-image metric lists for one evaluated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub config: String,
    pub dataset: String,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl MetricsRecord {
    pub fn new(config: impl Into<String>, dataset: impl Into<String>) -> Self {
        MetricsRecord {
            config: config.into(),
            dataset: dataset.into(),
            psnr: Vec::new(),
            ssim: Vec::new(),
        }
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(&self.psnr)
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(&self.ssim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.psnr.is_empty() || self.psnr.len() != self.ssim.len() {
            return Err(Error::Param(format!(
                "metrics record needs matching non-empty lists, got {} psnr / {} ssim",
                self.psnr.len(),
                self.ssim.len()
            )));
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Peak signal-to-noise ratio on [0,1] data, capped at 100 dB.
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Dim {
            axis: "height",
            expected: a.height(),
            got: b.height(),
            context: "psnr image extents".into(),
        });
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    if mse < 1e-10 {
        Ok(100.0)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01; // (k1·L)², L = 1
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0f64; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    g.iter_mut().for_each(|v| *v /= sum);
    g
}

/// Separable Gaussian-weighted local sums at valid window positions.
fn gauss_filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0f64; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for k in 0..SSIM_WINDOW {
                acc += g[k] * plane[y * w + x + k];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0f64; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for k in 0..SSIM_WINDOW {
                acc += g[k] * rows[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn channel_plane(img: &ImageRgb, c: usize) -> Vec<f64> {
    img.data().iter().skip(c).step_by(3).copied().collect()
}

/// Structural similarity: 11×11 Gaussian window (σ=1.5), k₁=0.01, k₂=0.03,
/// L=1; averaged over valid window positions, then over the three channels.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Dim {
            axis: "height",
            expected: a.height(),
            got: b.height(),
            context: "ssim image extents".into(),
        });
    }
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Param(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let mut channel_means = [0.0f64; 3];
    for (c, cm) in channel_means.iter_mut().enumerate() {
        let pa = channel_plane(a, c);
        let pb = channel_plane(b, c);
        let paa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let pbb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let pab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = gauss_filter_valid(&pa, h, w, &g);
        let mu_b = gauss_filter_valid(&pb, h, w, &g);
        let e_aa = gauss_filter_valid(&paa, h, w, &g);
        let e_bb = gauss_filter_valid(&pbb, h, w, &g);
        let e_ab = gauss_filter_valid(&pab, h, w, &g);
        let mut acc = 0.0f64;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cab = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cab + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            acc += num / den;
        }
        *cm = acc / mu_a.len() as f64;
    }
    Ok((channel_means[0] + channel_means[1] + channel_means[2]) / 3.0)
}

/// Mean absolute error.
pub fn reconstruction_loss(pred: &Tensor, target: &Tensor) -> Result<f32> {
    Ok(l1_loss_and_grad(pred, target)?.0)
}

/// L1 loss plus its gradient w.r.t. `pred` (sign(pred−target)/N).
pub fn l1_loss_and_grad(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Dim {
            axis: "channels",
            expected: target.shape().len(),
            got: pred.shape().len(),
            context: "reconstruction_loss shapes".into(),
        });
    }
    let n = pred.data().len() as f64;
    let mut grad = vec![0.0f32; pred.data().len()];
    let mut acc = 0.0f64;
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let d = p - t;
        acc += d.abs() as f64;
        grad[i] = if d > 0.0 {
            (1.0 / n) as f32
        } else if d < 0.0 {
            (-1.0 / n) as f32
        } else {
            0.0
        };
    }
    let g = Tensor::from_vec(pred.shape(), grad)?;
    Ok(((acc / n) as f32, g))
}

/// Least-squares GAN losses:
/// loss_D = ½·mean[(d_real−1)²] + ½·mean[d_fake²],
/// loss_G_adv = ½·mean[(d_fake−1)²].
pub fn adversarial_losses(d_real: &[f32], d_fake: &[f32]) -> Result<(f32, f32)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Param("adversarial_losses needs non-empty score batches".into()));
    }
    if d_real.iter().chain(d_fake).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("discriminator scores".into()));
    }
    let mr = d_real.iter().map(|&v| ((v - 1.0) * (v - 1.0)) as f64).sum::<f64>()
        / d_real.len() as f64;
    let mf = d_fake.iter().map(|&v| (v * v) as f64).sum::<f64>() / d_fake.len() as f64;
    let mg = d_fake.iter().map(|&v| ((v - 1.0) * (v - 1.0)) as f64).sum::<f64>()
        / d_fake.len() as f64;
    Ok(((0.5 * mr + 0.5 * mf) as f32, (0.5 * mg) as f32))
}

/// ∂loss_D/∂d_real and ∂loss_D/∂d_fake.
pub fn lsgan_d_grads(d_real: &[f32], d_fake: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let mr = d_real.len() as f32;
    let mf = d_fake.len() as f32;
    (
        d_real.iter().map(|&v| (v - 1.0) / mr).collect(),
        d_fake.iter().map(|&v| v / mf).collect(),
    )
}

/// ∂loss_G_adv/∂d_fake.
pub fn lsgan_g_grad(d_fake: &[f32]) -> Vec<f32> {
    let m = d_fake.len() as f32;
    d_fake.iter().map(|&v| (v - 1.0) / m).collect()
}

pub fn generator_total_loss(adv: f32, rec: f32, w: &LossWeights) -> f32 {
    w.lambda_adv * adv + w.lambda_rec * rec
}
