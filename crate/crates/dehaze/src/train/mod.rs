//! Training harness: plans, the adversarial loop, evaluation, and the
//! ablation driver.
//!
//! The loop alternates one generator step and one discriminator step per
//! iteration (least-squares GAN objective).  Losses are computed outside the
//! graph from the forward outputs; their closed-form gradients are chained
//! back through [`Graph::backward`].  For the generator the adversarial
//! gradient arrives as the discriminator's input gradient, sliced down to the
//! candidate's three colour channels before being mixed with the weighted L1
//! gradient.
//!
//! Determinism contract: a plan seeds three independent streams — parameter
//! initialisation, batch sampling, and augmentation draws — all ChaCha8, so a
//! re-run of the same plan on the same dataset reproduces every trace value
//! and checkpoint byte exactly.  The reported wall time is the only
//! non-deterministic output.

pub mod checkpoint;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{augment, mosaic4, AugmentSpec, HazePair};
use crate::error::{Error, Result};
use crate::image::ImageRgb;
use crate::metrics::{
    adversarial_losses, l1_loss_and_grad, lsgan_d_grads, lsgan_g_grad, psnr, ssim, LossWeights,
    MetricsRecord,
};
use crate::net::{
    build_discriminator, build_generator, discriminator_channels, preset, preset_name, CoreKind,
    NetworkConfig,
};
use crate::tensor::{adam_step_own, Graph, Shape, Tensor};
use checkpoint::save_checkpoint;

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;
pub const DEFAULT_LR: f32 = 1e-4;

/// Everything a training run needs besides the data itself.
#[derive(Clone, Debug)]
pub struct TrainPlan {
    pub config: NetworkConfig,
    pub weights: LossWeights,
    pub aug: AugmentSpec,
    pub lr_g: f32,
    pub lr_d: f32,
    pub batch: usize,
    pub iterations: usize,
    /// Evaluate on the validation split and checkpoint every this many
    /// iterations; 0 means only the final checkpoint is written.
    pub eval_every: usize,
    pub seed: u64,
    /// Checkpoint path; also receives the initial and periodic snapshots.
    pub out: PathBuf,
}

impl TrainPlan {
    pub fn new(config: NetworkConfig, out: impl Into<PathBuf>) -> Self {
        TrainPlan {
            config,
            weights: LossWeights::default(),
            aug: AugmentSpec::default(),
            lr_g: DEFAULT_LR,
            lr_d: DEFAULT_LR,
            batch: 1,
            iterations: 100,
            eval_every: 0,
            seed: 0,
            out: out.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.weights.validate()?;
        self.aug.validate()?;
        if self.batch == 0 {
            return Err(Error::Param("batch size must be ≥ 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Param("iterations must be ≥ 1".into()));
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !lr.is_finite() || lr <= 0.0 {
                return Err(Error::Param(format!("{name} must be finite and > 0, got {lr}")));
            }
        }
        Ok(())
    }
}

/// One periodic validation measurement.
#[derive(Clone, Debug)]
pub struct EvalPoint {
    pub iteration: usize,
    pub model: MetricsRecord,
    pub baseline: MetricsRecord,
}

/// Outcome of a completed run.  All fields except `wall_seconds` are
/// bit-reproducible for a fixed plan and dataset.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub config: NetworkConfig,
    pub iterations: usize,
    pub batch: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub rec_trace: Vec<f32>,
    /// Empty for segmentation-core runs (no discriminator).
    pub adv_trace: Vec<f32>,
    /// Empty for segmentation-core runs.
    pub d_trace: Vec<f32>,
    pub evals: Vec<EvalPoint>,
    pub checkpoint: PathBuf,
    pub wall_seconds: f64,
}

/// Train per `plan`; returns the report.  See [`train_inner`] for the loop.
pub fn train(plan: &TrainPlan, train_pairs: &[HazePair], val_pairs: &[HazePair]) -> Result<TrainReport> {
    train_inner(plan, train_pairs, val_pairs).map(|(report, _, _)| report)
}

fn non_finite(what: &str, iteration: usize) -> Error {
    Error::NonFinite(format!(
        "{what} at iteration {iteration}; aborting with the last saved checkpoint intact"
    ))
}

fn shared_extent(pairs: &[HazePair], split: &str) -> Result<(usize, usize)> {
    let (h, w) = (pairs[0].height(), pairs[0].width());
    for pair in pairs {
        pair.validate()?;
        if pair.height() != h || pair.width() != w {
            return Err(Error::Dim {
                axis: "height",
                expected: h,
                got: pair.height(),
                context: format!("{split} split extents must agree"),
            });
        }
    }
    Ok((h, w))
}

pub(crate) fn train_inner(
    plan: &TrainPlan,
    train_pairs: &[HazePair],
    val_pairs: &[HazePair],
) -> Result<(TrainReport, Graph, Option<Graph>)> {
    let started = Instant::now();
    plan.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Param("training split is empty".into()));
    }
    let (dh, dw) = shared_extent(train_pairs, "train")?;
    let (th, tw) = plan.aug.crop.unwrap_or((dh, dw));
    if th > dh || tw > dw {
        return Err(Error::Param(format!(
            "crop target {th}x{tw} exceeds the dataset extent {dh}x{dw}"
        )));
    }

    let generative = plan.config.core == CoreKind::Generative;
    let mut seed_rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let g_seed: u64 = seed_rng.gen();
    let d_seed: u64 = seed_rng.gen();
    let data_seed: u64 = seed_rng.gen();
    let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(plan.aug.seed);

    let mut g = build_generator(&plan.config, th, tw, ChaCha8Rng::seed_from_u64(g_seed))?;
    let mut d = if generative {
        Some(build_discriminator(&plan.config, th, tw, ChaCha8Rng::seed_from_u64(d_seed))?)
    } else {
        None
    };
    // A second generator at the validation extent; weights are copied across
    // before each measurement (the graphs share parameter names and shapes).
    let mut evaluator = if val_pairs.is_empty() {
        None
    } else {
        let (vh, vw) = shared_extent(val_pairs, "val")?;
        Some(build_generator(&plan.config, vh, vw, ChaCha8Rng::seed_from_u64(g_seed))?)
    };

    save_checkpoint(&plan.out, &plan.config, &g, d.as_ref())?;

    let d_ch = discriminator_channels(&plan.config);
    let mut rec_trace = Vec::with_capacity(plan.iterations);
    let mut adv_trace = Vec::new();
    let mut d_trace = Vec::new();
    let mut evals = Vec::new();

    for iteration in 0..plan.iterations {
        let batch = sample_batch(plan, train_pairs, (th, tw), &mut data_rng, &mut aug_rng)?;
        let (x, target) = batch_tensors(&batch, plan.config.input_channels)?;

        let tape_g = g.forward(&x)?;
        let out = g.output_value(&tape_g);
        if !out.all_finite() {
            return Err(non_finite("generator output is non-finite", iteration));
        }
        let (rec, rec_grad) = l1_loss_and_grad(&out, &target)?;

        if let Some(d) = d.as_mut() {
            let t_cond = if d_ch == 4 { Some(x.slice_channels(3, 1)?) } else { None };
            let fake_in = match &t_cond {
                Some(t) => Tensor::concat_channels(&out, t)?,
                None => out.clone(),
            };
            let real_in = match &t_cond {
                Some(t) => Tensor::concat_channels(&target, t)?,
                None => target.clone(),
            };
            let tape_fake = d.forward(&fake_in)?;
            let tape_real = d.forward(&real_in)?;
            let score_fake = d.output_value(&tape_fake).data().to_vec();
            let score_real = d.output_value(&tape_real).data().to_vec();
            let (loss_d, loss_adv) = adversarial_losses(&score_real, &score_fake)?;

            // Generator update: adversarial gradient = ∂loss_G_adv/∂candidate,
            // obtained as the discriminator's input gradient restricted to the
            // three colour channels.
            d.zero_grads();
            let gin = d.backward(&tape_fake, &lsgan_g_grad(&score_fake))?;
            let n = x.shape().n;
            let gin = Tensor::from_vec(Shape::new(n, d_ch, th, tw), gin)?;
            let adv_grad = gin.slice_channels(0, 3)?;
            let gout: Vec<f32> = adv_grad
                .data()
                .iter()
                .zip(rec_grad.data())
                .map(|(&a, &r)| plan.weights.lambda_adv * a + plan.weights.lambda_rec * r)
                .collect();
            g.zero_grads();
            g.backward(&tape_g, &gout)?;
            step_params(&mut g, plan.lr_g)?;

            // Discriminator update.  The generator's adversarial backward pass
            // above left gradients on the discriminator parameters, so they
            // are cleared again before the discriminator's own accumulation.
            d.zero_grads();
            let (grad_real, grad_fake) = lsgan_d_grads(&score_real, &score_fake);
            d.backward(&tape_real, &grad_real)?;
            d.backward(&tape_fake, &grad_fake)?;
            step_params(d, plan.lr_d)?;

            adv_trace.push(loss_adv);
            d_trace.push(loss_d);
        } else {
            let gout: Vec<f32> =
                rec_grad.data().iter().map(|&r| plan.weights.lambda_rec * r).collect();
            g.zero_grads();
            g.backward(&tape_g, &gout)?;
            step_params(&mut g, plan.lr_g)?;
        }

        if !rec.is_finite() {
            return Err(non_finite("reconstruction loss is non-finite", iteration));
        }
        rec_trace.push(rec);
        if !g.params_finite() || d.as_ref().is_some_and(|d| !d.params_finite()) {
            return Err(non_finite("parameters went non-finite after the update", iteration));
        }

        if plan.eval_every > 0 && (iteration + 1) % plan.eval_every == 0 {
            if let Some(ev) = evaluator.as_mut() {
                sync_params(&g, ev)?;
                let (model, baseline) = evaluate(ev, &plan.config, val_pairs, "val")?;
                evals.push(EvalPoint { iteration: iteration + 1, model, baseline });
            }
            save_checkpoint(&plan.out, &plan.config, &g, d.as_ref())?;
        }
    }

    save_checkpoint(&plan.out, &plan.config, &g, d.as_ref())?;
    let report = TrainReport {
        config: plan.config.clone(),
        iterations: plan.iterations,
        batch: plan.batch,
        seed: plan.seed,
        eval_every: plan.eval_every,
        rec_trace,
        adv_trace,
        d_trace,
        evals,
        checkpoint: plan.out.clone(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((report, g, d))
}

fn step_params(graph: &mut Graph, lr: f32) -> Result<()> {
    for param in graph.params_mut() {
        adam_step_own(param, lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
    }
    Ok(())
}

/// Draw one batch: base sample from the data stream, optional mosaic
/// replacement, then the per-sample augmentations.  Mosaic source indices come
/// from the data stream; every stochastic transform draws from the
/// augmentation stream.
fn sample_batch(
    plan: &TrainPlan,
    pairs: &[HazePair],
    target: (usize, usize),
    data_rng: &mut ChaCha8Rng,
    aug_rng: &mut ChaCha8Rng,
) -> Result<Vec<HazePair>> {
    let mut batch = Vec::with_capacity(plan.batch);
    for _ in 0..plan.batch {
        let idx = data_rng.gen_range(0..pairs.len());
        let use_mosaic =
            plan.aug.mosaic_prob > 0.0 && aug_rng.gen_range(0.0..1.0) < plan.aug.mosaic_prob;
        let base = if use_mosaic {
            let sources = [
                pairs[idx].clone(),
                pairs[data_rng.gen_range(0..pairs.len())].clone(),
                pairs[data_rng.gen_range(0..pairs.len())].clone(),
                pairs[data_rng.gen_range(0..pairs.len())].clone(),
            ];
            mosaic4(&sources, target, aug_rng)?
        } else {
            pairs[idx].clone()
        };
        batch.push(augment(&base, &plan.aug, aug_rng)?);
    }
    Ok(batch)
}

/// Stack pairs into the network input (hazy RGB, plus the DCP transmission
/// map as channel 3 for 4-channel configurations) and the clean target.
fn batch_tensors(batch: &[HazePair], input_channels: usize) -> Result<(Tensor, Tensor)> {
    if batch.is_empty() {
        return Err(Error::Param("batch must hold at least one pair".into()));
    }
    let n = batch.len();
    let (h, w) = (batch[0].height(), batch[0].width());
    let xs = Shape::new(n, input_channels, h, w);
    let ys = Shape::new(n, 3, h, w);
    let mut x = vec![0.0f32; xs.len()];
    let mut y = vec![0.0f32; ys.len()];
    for (i, pair) in batch.iter().enumerate() {
        if pair.height() != h || pair.width() != w {
            return Err(Error::Dim {
                axis: "height",
                expected: h,
                got: pair.height(),
                context: "batch extents must agree".into(),
            });
        }
        for yy in 0..h {
            for xx in 0..w {
                let hazy = pair.hazy.get(yy, xx);
                let clean = pair.clean.get(yy, xx);
                for c in 0..3 {
                    x[xs.at(i, c, yy, xx)] = hazy[c] as f32;
                    y[ys.at(i, c, yy, xx)] = clean[c] as f32;
                }
                if input_channels == 4 {
                    x[xs.at(i, 3, yy, xx)] = pair.t_dcp.get(yy, xx) as f32;
                }
            }
        }
    }
    Ok((Tensor::from_vec(xs, x)?, Tensor::from_vec(ys, y)?))
}

/// Copy parameter values from `src` into `dst` (same architecture, possibly a
/// different spatial extent).
fn sync_params(src: &Graph, dst: &mut Graph) -> Result<()> {
    if src.params().len() != dst.params().len() {
        return Err(Error::Config(format!(
            "parameter count mismatch: {} vs {}",
            src.params().len(),
            dst.params().len()
        )));
    }
    for (s, d) in src.params().iter().zip(dst.params_mut().iter_mut()) {
        if s.name != d.name || s.value.shape() != d.value.shape() {
            return Err(Error::Config(format!(
                "parameter layout mismatch: `{}` vs `{}`",
                s.name, d.name
            )));
        }
        d.value.data_mut().copy_from_slice(s.value.data());
    }
    Ok(())
}

/// Run the generator over every pair and collect PSNR/SSIM, together with the
/// hazy-input baseline measured on the same pairs.
pub fn evaluate(
    generator: &Graph,
    cfg: &NetworkConfig,
    pairs: &[HazePair],
    dataset: &str,
) -> Result<(MetricsRecord, MetricsRecord)> {
    if pairs.is_empty() {
        return Err(Error::Param("evaluation needs at least one pair".into()));
    }
    let name = preset_name(cfg).unwrap_or("custom");
    let mut model = MetricsRecord::new(name, dataset);
    let mut baseline = MetricsRecord::new("hazy-input", dataset);
    for pair in pairs {
        let (x, _) = batch_tensors(std::slice::from_ref(pair), cfg.input_channels)?;
        let tape = generator.forward(&x)?;
        let out = generator.output_value(&tape);
        if !out.all_finite() {
            return Err(Error::NonFinite("generator output during evaluation".into()));
        }
        let mut img = ImageRgb::from_tensor(&out)?;
        img.clamp01();
        model.psnr.push(psnr(&img, &pair.clean)?);
        model.ssim.push(ssim(&img, &pair.clean)?);
        baseline.psnr.push(psnr(&pair.hazy, &pair.clean)?);
        baseline.ssim.push(ssim(&pair.hazy, &pair.clean)?);
    }
    model.validate()?;
    baseline.validate()?;
    Ok((model, baseline))
}

/// One ablation result: the preset name with its validation means.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub dataset: String,
    pub seed: u64,
    pub iterations: usize,
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
    pub rows: Vec<AblationRow>,
}

/// File-name slug for a preset ("SPP G-U-Net 4-C (ReLU)" → "spp-g-u-net-4-c-relu").
pub fn preset_slug(name: &str) -> String {
    name.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

/// Train every named preset under the same plan, data, and seed, then score
/// each on the validation split.
///
/// `base.config` contributes only the scale knobs (`base_width`, `depth`,
/// `spp_kernels`) and is otherwise ignored: each row's architecture comes from
/// its preset name.  Checkpoints land in `out_dir/<slug>.ckpt`.
pub fn run_ablation(
    names: &[&str],
    base: &TrainPlan,
    train_pairs: &[HazePair],
    val_pairs: &[HazePair],
    out_dir: &Path,
) -> Result<AblationReport> {
    base.validate()?;
    if names.is_empty() {
        return Err(Error::Param("ablation needs at least one preset name".into()));
    }
    if val_pairs.is_empty() {
        return Err(Error::Param("ablation needs a validation split".into()));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let (vh, vw) = shared_extent(val_pairs, "val")?;

    let mut rows = Vec::with_capacity(names.len());
    let mut baseline: Option<(f64, f64)> = None;
    for &name in names {
        let mut cfg = preset(name)
            .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        cfg.base_width = base.config.base_width;
        cfg.depth = base.config.depth;
        cfg.spp_kernels = base.config.spp_kernels.clone();
        let plan = TrainPlan {
            config: cfg,
            out: out_dir.join(format!("{}.ckpt", preset_slug(name))),
            ..base.clone()
        };
        let (_, g, _) = train_inner(&plan, train_pairs, val_pairs)?;
        let mut ev = build_generator(&plan.config, vh, vw, ChaCha8Rng::seed_from_u64(0))?;
        sync_params(&g, &mut ev)?;
        let (model, base_record) = evaluate(&ev, &plan.config, val_pairs, "val")?;
        baseline.get_or_insert((base_record.mean_psnr(), base_record.mean_ssim()));
        rows.push(AblationRow {
            name: name.to_string(),
            psnr: model.mean_psnr(),
            ssim: model.mean_ssim(),
        });
    }
    let (baseline_psnr, baseline_ssim) = baseline.expect("at least one preset ran");
    Ok(AblationReport {
        dataset: "val".into(),
        seed: base.seed,
        iterations: base.iterations,
        baseline_psnr,
        baseline_ssim,
        rows,
    })
}
