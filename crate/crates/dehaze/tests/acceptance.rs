//! Release gate for the whole toolkit: eight independent criteria, each one
//! test. Every test prints exactly one `ACCEPT <n> <name>: PASS|FAIL — ...`
//! line (visible with `--nocapture`) and pins its numeric tolerances as
//! named constants right next to the assertions they guard.
//!
//! The criteria:
//!
//! 1. every layer and composite block passes finite-difference gradient
//!    checks, in under a minute;
//! 2. haze synthesis followed by radiance recovery is the identity;
//! 3. the classical DCP pipeline estimates transmission within a useful
//!    error band, and its two kernels match brute-force oracles;
//! 4. PSNR/SSIM agree with analytic values and an independent SSIM oracle;
//! 5. all twelve studied configurations build and run forward at 64×64,
//!    and the six named presets survive a config round-trip;
//! 6. short training runs actually learn (loss halves; the full model beats
//!    the hazy-input baseline), in under ten minutes;
//! 7. everything seeded is bitwise reproducible;
//! 8. the augmentation pipeline honors its per-map contracts.
//!
//! The shared dataset fixture and the training seeds/learning rates here are
//! frozen from a calibration run; the bounds they must clear are inequalities
//! with deliberate margin, so small platform-to-platform float drift in the
//! training trajectory does not move a verdict.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dehaze::data::{
    augment, make_dataset, mosaic4, save_dataset, AugmentSpec, CutoutSpec, HazePair, T_MIN,
};
use dehaze::data::{random_atmospheric_light, random_clean_scene, random_transmission_field, synthesize_haze, DEFAULT_BETA_RANGE};
use dehaze::dcp::{dark_channel, guided_filter, recover_radiance, DcpParams};
use dehaze::image::{GrayMap, ImageRgb};
use dehaze::metrics::{psnr, ssim};
use dehaze::net::{
    build_discriminator, build_generator, composite_checks, config_to_string, parse_config,
    preset, preset_name, CoreKind, ALL_PRESETS, TABLE1_PRESETS,
};
use dehaze::tensor::{run_full_suite, Shape, Tensor};
use dehaze::train::report::render_ablation_report;
use dehaze::train::{run_ablation, train, TrainPlan};

// ---------------------------------------------------------------------------
// Shared fixture: one seeded synthetic dataset used by criteria 3, 6, 7, 8.

const DATA_SEED: u64 = 2718;
const DATA_TRAIN: usize = 32;
const DATA_VAL: usize = 6;
const DATA_EXTENT: (usize, usize) = (48, 48);

static DATASET: OnceLock<(Vec<HazePair>, Vec<HazePair>)> = OnceLock::new();

fn dataset() -> &'static (Vec<HazePair>, Vec<HazePair>) {
    DATASET.get_or_init(|| {
        make_dataset(DATA_TRAIN, DATA_VAL, DATA_EXTENT, DATA_SEED, &DcpParams::toy())
            .expect("shared dataset synthesis")
    })
}

/// Fresh per-test scratch directory under the system temp dir.
fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dehaze-accept-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

/// Print the single per-criterion verdict line, then panic on failure so the
/// harness records the test as failed.
fn verdict(label: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("ACCEPT {label}: PASS — {detail}"),
        Err(detail) => {
            println!("ACCEPT {label}: FAIL — {detail}");
            panic!("acceptance criterion {label} failed: {detail}");
        }
    }
}

/// Early-return an `Err(String)` when a condition does not hold. Matching on
/// the bool (rather than negating) keeps NaN-poisoned comparisons on the
/// failure path.
macro_rules! expect {
    ($cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($msg)+)),
        }
    };
}

// ---------------------------------------------------------------------------
// 1. Gradient suite.

const GRAD_TOL_NONLINEAR: f64 = 1e-3;
const GRAD_TOL_LINEAR: f64 = 1e-6;
const GRAD_SEED: u64 = 901;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(60);

#[test]
fn criterion_1_gradient_suite() {
    verdict("1 gradients", check_gradients());
}

fn check_gradients() -> Result<String, String> {
    let start = Instant::now();
    let extra = composite_checks().map_err(|e| format!("building composite checks: {e}"))?;
    let report = run_full_suite(extra, GRAD_SEED).map_err(|e| format!("gradient suite: {e}"))?;
    let elapsed = start.elapsed();

    expect!(!report.checks.is_empty(), "suite ran no checks");
    let mut worst = 0.0f64;
    for c in &report.checks {
        expect!(
            c.tol == GRAD_TOL_NONLINEAR || c.tol == GRAD_TOL_LINEAR,
            "check {} uses tolerance {:.1e}, expected {GRAD_TOL_NONLINEAR:.0e} or {GRAD_TOL_LINEAR:.0e}",
            c.name,
            c.tol
        );
        expect!(
            c.passed() && c.max_rel < c.tol,
            "check {} failed: max_rel {:.3e} vs tol {:.0e} ({})",
            c.name,
            c.max_rel,
            c.tol,
            c.worst_coord
        );
        worst = worst.max(c.max_rel);
    }
    for required in
        ["spp_block_16", "csp_block_16", "sam_block_16", "cam_block_16", "generator_16", "discriminator_16"]
    {
        expect!(
            report.checks.iter().any(|c| c.name == required),
            "composite check {required} missing from the suite"
        );
    }
    expect!(
        elapsed <= GRAD_TIME_LIMIT,
        "suite took {:.1}s, budget {}s",
        elapsed.as_secs_f64(),
        GRAD_TIME_LIMIT.as_secs()
    );
    Ok(format!(
        "{} checks, worst max_rel {worst:.2e}, {:.1}s",
        report.checks.len(),
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 2. Synthesis/recovery identity.

const IDENTITY_TOL: f64 = 1e-6;
const IDENTITY_SCENES: u64 = 100;
const IDENTITY_EXTENT: (usize, usize) = (24, 24);

#[test]
fn criterion_2_synthesis_recovery_identity() {
    verdict("2 identity", check_identity());
}

fn check_identity() -> Result<String, String> {
    let (h, w) = IDENTITY_EXTENT;
    let mut worst = 0.0f64;
    for seed in 0..IDENTITY_SCENES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = random_clean_scene(h, w, &mut rng).map_err(|e| e.to_string())?;
        let t = random_transmission_field(h, w, DEFAULT_BETA_RANGE, seed ^ 0x7a11)
            .map_err(|e| e.to_string())?;
        let a = random_atmospheric_light(&mut rng);
        let hazy = synthesize_haze(&clean, &t, &a).map_err(|e| e.to_string())?;
        // The field generator already clamps t to [T_MIN, 1] and the blend of
        // in-gamut values stays in gamut, so every pixel satisfies the
        // identity's precondition (t ≥ t_floor, no clamp engaged).
        let recovered = recover_radiance(&hazy, &t, &a, T_MIN).map_err(|e| e.to_string())?;
        for (r, c) in recovered.data().iter().zip(clean.data()) {
            worst = worst.max((r - c).abs());
        }
        expect!(
            worst <= IDENTITY_TOL,
            "scene {seed}: |recover∘synthesize − id| = {worst:.3e} exceeds {IDENTITY_TOL:.0e}"
        );
    }
    Ok(format!("{IDENTITY_SCENES} scenes, worst deviation {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 3. DCP estimation quality and kernel oracles.

const DCP_MAE_LIMIT: f64 = 0.15;
const GUIDED_TOL: f64 = 1e-5;
const ORACLE_PATCHES: [usize; 3] = [1, 3, 15];
const ORACLE_RADIUS: usize = 8;
const ORACLE_EPS: f64 = 1e-3;

#[test]
fn criterion_3_dcp_estimation() {
    verdict("3 dcp", check_dcp());
}

/// Brute-force dark channel: per pixel, minimum over channels and over the
/// patch neighborhood clamped to the image.
fn oracle_dark_channel(img: &ImageRgb, patch: usize) -> GrayMap {
    let (h, w) = (img.height(), img.width());
    let r = patch / 2;
    let mut out = GrayMap::new(h, w).expect("oracle extent");
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    let px = img.get(yy, xx);
                    best = best.min(px[0]).min(px[1]).min(px[2]);
                }
            }
            out.set(y, x, best);
        }
    }
    out
}

/// Brute-force box mean with replicate padding and a constant (2r+1)² count,
/// evaluated window by window.
fn oracle_box_mean(map: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let ir = r as isize;
    let mut out = vec![0.0f64; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -ir..=ir {
                for dx in -ir..=ir {
                    let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                    let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                    acc += map[yy * w + xx];
                }
            }
            out[(y * w as isize + x) as usize] = acc / ((2 * r + 1) * (2 * r + 1)) as f64;
        }
    }
    out
}

/// Brute-force guided filter assembled from `oracle_box_mean` pieces.
fn oracle_guided_filter(guide: &GrayMap, src: &GrayMap, r: usize, eps: f64) -> GrayMap {
    let (h, w) = (guide.height(), guide.width());
    let gd = guide.data();
    let sd = src.data();
    let gg: Vec<f64> = gd.iter().map(|v| v * v).collect();
    let gs: Vec<f64> = gd.iter().zip(sd).map(|(a, b)| a * b).collect();
    let mean_g = oracle_box_mean(gd, h, w, r);
    let mean_s = oracle_box_mean(sd, h, w, r);
    let corr_gg = oracle_box_mean(&gg, h, w, r);
    let corr_gs = oracle_box_mean(&gs, h, w, r);
    let mut a = vec![0.0f64; h * w];
    let mut b = vec![0.0f64; h * w];
    for i in 0..h * w {
        let var = corr_gg[i] - mean_g[i] * mean_g[i];
        let cov = corr_gs[i] - mean_g[i] * mean_s[i];
        a[i] = cov / (var + eps);
        b[i] = mean_s[i] - a[i] * mean_g[i];
    }
    let mean_a = oracle_box_mean(&a, h, w, r);
    let mean_b = oracle_box_mean(&b, h, w, r);
    let mut out = GrayMap::new(h, w).expect("oracle extent");
    for i in 0..h * w {
        out.data_mut()[i] = mean_a[i] * gd[i] + mean_b[i];
    }
    out
}

fn check_dcp() -> Result<String, String> {
    let (_, val) = dataset();

    // Estimation quality on the validation split.
    let mut mae_sum = 0.0f64;
    for pair in val {
        let n = pair.t_true.data().len() as f64;
        let mae: f64 = pair
            .t_true
            .data()
            .iter()
            .zip(pair.t_dcp.data())
            .map(|(t, e)| (t - e).abs())
            .sum::<f64>()
            / n;
        mae_sum += mae;
    }
    let mean_mae = mae_sum / val.len() as f64;
    expect!(
        mean_mae <= DCP_MAE_LIMIT,
        "val-split mean |t_dcp − t_true| = {mean_mae:.4} exceeds {DCP_MAE_LIMIT}"
    );

    // Dark channel must equal the brute-force oracle exactly (min is
    // order-independent in floating point).
    for (i, pair) in val.iter().take(3).enumerate() {
        for patch in ORACLE_PATCHES {
            let fast = dark_channel(&pair.hazy, patch).map_err(|e| e.to_string())?;
            let slow = oracle_dark_channel(&pair.hazy, patch);
            expect!(
                fast.data() == slow.data(),
                "dark_channel(val[{i}], patch {patch}) deviates from the brute-force oracle"
            );
        }
    }

    // Guided filter within GUIDED_TOL of the window-by-window oracle.
    let mut worst_guided = 0.0f64;
    for (i, pair) in val.iter().take(3).enumerate() {
        let guide = pair.hazy.luma();
        let coarse = dark_channel(&pair.hazy, ORACLE_PATCHES[2]).map_err(|e| e.to_string())?;
        let fast = guided_filter(&guide, &coarse, ORACLE_RADIUS, ORACLE_EPS)
            .map_err(|e| e.to_string())?;
        let slow = oracle_guided_filter(&guide, &coarse, ORACLE_RADIUS, ORACLE_EPS);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            worst_guided = worst_guided.max((a - b).abs());
        }
        expect!(
            worst_guided <= GUIDED_TOL,
            "guided_filter(val[{i}]) deviates from the oracle by {worst_guided:.3e} (tol {GUIDED_TOL:.0e})"
        );
    }

    Ok(format!(
        "val MAE {mean_mae:.4} ≤ {DCP_MAE_LIMIT}, dark channel exact, guided filter within {worst_guided:.2e}"
    ))
}

// ---------------------------------------------------------------------------
// 4. Metric oracles.

const PSNR_ANALYTIC_TOL: f64 = 1e-9;
const SSIM_ORACLE_TOL: f64 = 1e-6;
const SSIM_PAIRS: u64 = 10;
const SSIM_EXTENT: (usize, usize) = (32, 32);
// Mirror of the library's published SSIM configuration.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[test]
fn criterion_4_metric_oracles() {
    verdict("4 metrics", check_metrics());
}

/// Independent SSIM: one non-separable 2-D Gaussian window, direct weighted
/// moments per valid position, per-channel means averaged at the end.
fn oracle_ssim(a: &ImageRgb, b: &ImageRgb) -> f64 {
    let (h, w) = (a.height(), a.width());
    let mut kernel = [[0.0f64; SSIM_WINDOW]; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut norm = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - mid, j as f64 - mid);
            *v = (-(dy * dy + dx * dx) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            norm += *v;
        }
    }
    for row in &mut kernel {
        for v in row.iter_mut() {
            *v /= norm;
        }
    }

    let mut total = 0.0f64;
    for c in 0..3 {
        let mut acc = 0.0f64;
        let mut windows = 0usize;
        for y0 in 0..=(h - SSIM_WINDOW) {
            for x0 in 0..=(w - SSIM_WINDOW) {
                let (mut ma, mut mb) = (0.0f64, 0.0f64);
                let (mut saa, mut sbb, mut sab) = (0.0f64, 0.0f64, 0.0f64);
                for (dy, krow) in kernel.iter().enumerate() {
                    for (dx, &wgt) in krow.iter().enumerate() {
                        let pa = a.get(y0 + dy, x0 + dx)[c];
                        let pb = b.get(y0 + dy, x0 + dx)[c];
                        ma += wgt * pa;
                        mb += wgt * pb;
                        saa += wgt * pa * pa;
                        sbb += wgt * pb * pb;
                        sab += wgt * pa * pb;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cab = sab - ma * mb;
                let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cab + SSIM_C2);
                let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
                acc += num / den;
                windows += 1;
            }
        }
        total += acc / windows as f64;
    }
    total / 3.0
}

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImageRgb {
    ImageRgb::from_fn(h, w, |_, _| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
        .expect("image extent")
}

fn check_metrics() -> Result<String, String> {
    // Analytic PSNR cases: constant-difference images have closed-form MSE.
    let (h, w) = SSIM_EXTENT;
    let zero = ImageRgb::new(h, w).map_err(|e| e.to_string())?;
    let mut one = ImageRgb::new(h, w).map_err(|e| e.to_string())?;
    one.data_mut().fill(1.0);
    let mut tenth = ImageRgb::new(h, w).map_err(|e| e.to_string())?;
    tenth.data_mut().fill(0.1);
    let cases = [
        ("0 dB (MSE 1)", psnr(&zero, &one).map_err(|e| e.to_string())?, 0.0),
        ("20 dB (MSE 0.01)", psnr(&zero, &tenth).map_err(|e| e.to_string())?, 20.0),
        ("100 dB cap", psnr(&one, &one).map_err(|e| e.to_string())?, 100.0),
    ];
    for (label, got, want) in cases {
        expect!(
            (got - want).abs() <= PSNR_ANALYTIC_TOL,
            "psnr {label}: got {got:.12}, want {want} ± {PSNR_ANALYTIC_TOL:.0e}"
        );
    }

    // Self-similarity is exactly 1.
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let img = random_image(h, w, &mut rng);
    let self_sim = ssim(&img, &img).map_err(|e| e.to_string())?;
    expect!(self_sim == 1.0, "ssim(a,a) = {self_sim:.17} ≠ 1.0 exactly");

    // Agreement with the independent windowed oracle on random pairs.
    let mut worst = 0.0f64;
    for seed in 0..SSIM_PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let a = random_image(h, w, &mut rng);
        let b = random_image(h, w, &mut rng);
        let fast = ssim(&a, &b).map_err(|e| e.to_string())?;
        let slow = oracle_ssim(&a, &b);
        worst = worst.max((fast - slow).abs());
        expect!(
            worst <= SSIM_ORACLE_TOL,
            "ssim pair {seed}: |{fast:.9} − {slow:.9}| = {worst:.3e} exceeds {SSIM_ORACLE_TOL:.0e}"
        );
    }

    Ok(format!(
        "psnr analytic exact, ssim(a,a)=1, oracle agreement within {worst:.2e} on {SSIM_PAIRS} pairs"
    ))
}

// ---------------------------------------------------------------------------
// 5. Configuration coverage.

const COVERAGE_EXTENT: usize = 64;

#[test]
fn criterion_5_configuration_coverage() {
    verdict("5 configs", check_configs());
}

fn check_configs() -> Result<String, String> {
    expect!(ALL_PRESETS.len() == 12, "expected 12 studied configurations, found {}", ALL_PRESETS.len());

    for (i, name) in ALL_PRESETS.iter().enumerate() {
        let cfg = preset(name).ok_or_else(|| format!("preset {name:?} does not resolve"))?;
        let g = build_generator(&cfg, COVERAGE_EXTENT, COVERAGE_EXTENT, ChaCha8Rng::seed_from_u64(50 + i as u64))
            .map_err(|e| format!("{name}: generator build failed: {e}"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(150 + i as u64);
        let x = Tensor::uniform(
            Shape::new(1, cfg.input_channels, COVERAGE_EXTENT, COVERAGE_EXTENT),
            0.0,
            1.0,
            &mut rng,
        );
        let tape = g.forward(&x).map_err(|e| format!("{name}: generator forward failed: {e}"))?;
        let y = g.output_value(&tape);
        expect!(
            y.shape() == Shape::new(1, 3, COVERAGE_EXTENT, COVERAGE_EXTENT),
            "{name}: generator output shape {:?}, want (1, 3, {COVERAGE_EXTENT}, {COVERAGE_EXTENT})",
            y.shape()
        );
        expect!(y.all_finite(), "{name}: generator output contains non-finite values");

        if cfg.core == CoreKind::Generative {
            let d = build_discriminator(&cfg, COVERAGE_EXTENT, COVERAGE_EXTENT, ChaCha8Rng::seed_from_u64(250 + i as u64))
                .map_err(|e| format!("{name}: discriminator build failed: {e}"))?;
            let dx = Tensor::uniform(
                Shape::new(1, dehaze::net::discriminator_channels(&cfg), COVERAGE_EXTENT, COVERAGE_EXTENT),
                0.0,
                1.0,
                &mut rng,
            );
            let dt = d.forward(&dx).map_err(|e| format!("{name}: discriminator forward failed: {e}"))?;
            let dy = d.output_value(&dt);
            expect!(
                dy.shape() == Shape::new(1, 1, 1, 1),
                "{name}: discriminator output shape {:?}, want (1, 1, 1, 1)",
                dy.shape()
            );
            expect!(dy.all_finite(), "{name}: discriminator output contains non-finite values");
        }
    }

    // The six named rows must survive name → config → text → config → name.
    expect!(TABLE1_PRESETS.len() == 6, "expected 6 named presets, found {}", TABLE1_PRESETS.len());
    for name in TABLE1_PRESETS {
        let cfg = preset(name).ok_or_else(|| format!("preset {name:?} does not resolve"))?;
        let text = config_to_string(&cfg);
        let parsed = parse_config(&text).map_err(|e| format!("{name}: reparse failed: {e}"))?;
        expect!(parsed == cfg, "{name}: config text round-trip changed the configuration");
        expect!(
            preset_name(&parsed) == Some(name),
            "{name}: round-tripped config resolves to {:?}",
            preset_name(&parsed)
        );
        let by_key = parse_config(&format!("preset = {name}"))
            .map_err(|e| format!("{name}: preset-key parse failed: {e}"))?;
        expect!(by_key == cfg, "{name}: `preset = <name>` does not reproduce the preset");
    }

    Ok(format!(
        "12 configurations forward at {COVERAGE_EXTENT}×{COVERAGE_EXTENT}, 6 preset names round-trip"
    ))
}

// ---------------------------------------------------------------------------
// 6. Toy training regression. Seeds and learning rates are frozen from the
// calibration run; the bounds have margin (calibrated seg ratio ≈ 0.37 vs
// the 0.5 limit, calibrated gain ≈ +4 dB vs the 1 dB limit).

const SEG_SEED: u64 = 123;
const SEG_LR: f32 = 3e-4;
const SEG_ITERATIONS: usize = 200;
const SEG_FINAL_OVER_INITIAL: f64 = 0.5;
const EDN_SEED: u64 = 77;
const EDN_ITERATIONS: usize = 1000;
const EDN_CROP: (usize, usize) = (32, 32);
const EDN_MIN_GAIN_DB: f64 = 1.0;
const TRAIN_TIME_LIMIT: Duration = Duration::from_secs(600);

#[test]
fn criterion_6_toy_training_regression() {
    verdict("6 training", check_training());
}

fn check_training() -> Result<String, String> {
    let (train_pairs, val_pairs) = dataset();
    let dir = scratch("c6");
    let start = Instant::now();

    // Segmentation core: the reconstruction loss must at least halve.
    let seg_cfg = preset("S-U-Net").expect("named preset").toy();
    let mut seg_plan = TrainPlan::new(seg_cfg, dir.join("seg.ckpt"));
    seg_plan.iterations = SEG_ITERATIONS;
    seg_plan.lr_g = SEG_LR;
    seg_plan.seed = SEG_SEED;
    let seg = train(&seg_plan, train_pairs, val_pairs).map_err(|e| format!("segmentation run: {e}"))?;
    let first = *seg.rec_trace.first().ok_or("segmentation run produced no trace")? as f64;
    let last = *seg.rec_trace.last().ok_or("segmentation run produced no trace")? as f64;
    let ratio = last / first;
    expect!(
        ratio <= SEG_FINAL_OVER_INITIAL,
        "segmentation loss ratio {ratio:.3} (first {first:.4} → last {last:.4}) exceeds {SEG_FINAL_OVER_INITIAL}"
    );

    // Full adversarial model: beat the hazy-input PSNR baseline on val.
    let edn_cfg = preset("EDN-GTM").expect("named preset").toy();
    let mut edn_plan = TrainPlan::new(edn_cfg, dir.join("edn.ckpt"));
    edn_plan.iterations = EDN_ITERATIONS;
    edn_plan.eval_every = EDN_ITERATIONS; // single evaluation, at the end
    edn_plan.seed = EDN_SEED;
    edn_plan.aug.crop = Some(EDN_CROP);
    let edn = train(&edn_plan, train_pairs, val_pairs).map_err(|e| format!("EDN-GTM run: {e}"))?;
    let final_eval = edn.evals.last().ok_or("EDN-GTM run recorded no evaluation")?;
    expect!(
        final_eval.iteration == EDN_ITERATIONS,
        "final evaluation landed at iteration {} instead of {EDN_ITERATIONS}",
        final_eval.iteration
    );
    let model_psnr = final_eval.model.mean_psnr();
    let base_psnr = final_eval.baseline.mean_psnr();
    let gain = model_psnr - base_psnr;
    expect!(
        gain >= EDN_MIN_GAIN_DB,
        "EDN-GTM gain {gain:.2} dB (model {model_psnr:.2} vs hazy {base_psnr:.2}) below {EDN_MIN_GAIN_DB} dB"
    );

    let elapsed = start.elapsed();
    expect!(
        elapsed <= TRAIN_TIME_LIMIT,
        "training regression took {:.0}s, budget {}s",
        elapsed.as_secs_f64(),
        TRAIN_TIME_LIMIT.as_secs()
    );
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "seg ratio {ratio:.3} ≤ {SEG_FINAL_OVER_INITIAL}, EDN-GTM +{gain:.2} dB over {base_psnr:.2} dB baseline, {:.0}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 7. Determinism.

const DET_DATA_SEED: u64 = 99;
const DET_TRAIN_SEED: u64 = 31;
const DET_TRAIN_ITERATIONS: usize = 25;
const DET_ABLATION_ITERATIONS: usize = 2;

#[test]
fn criterion_7_determinism() {
    verdict("7 determinism", check_determinism());
}

/// Byte-compare two directory trees (same relative paths, same contents).
fn assert_trees_equal(a: &PathBuf, b: &PathBuf) -> Result<(), String> {
    fn walk(root: &PathBuf, prefix: &PathBuf, out: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(root.join(prefix)).expect("walk scratch tree") {
            let entry = entry.expect("dir entry");
            let rel = prefix.join(entry.file_name());
            if entry.path().is_dir() {
                walk(root, &rel, out);
            } else {
                out.push(rel);
            }
        }
    }
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    walk(a, &PathBuf::new(), &mut la);
    walk(b, &PathBuf::new(), &mut lb);
    la.sort();
    lb.sort();
    if la != lb {
        return Err(format!("directory listings differ: {} vs {} files", la.len(), lb.len()));
    }
    for rel in la {
        let ba = std::fs::read(a.join(&rel)).map_err(|e| e.to_string())?;
        let bb = std::fs::read(b.join(&rel)).map_err(|e| e.to_string())?;
        if ba != bb {
            return Err(format!("file {} differs between runs", rel.display()));
        }
    }
    Ok(())
}

fn check_determinism() -> Result<String, String> {
    let dir = scratch("c7");

    // Datasets: two synth+save passes must produce identical trees.
    let params = DcpParams::toy();
    for run in ["data-a", "data-b"] {
        let (train_split, val_split) =
            make_dataset(4, 2, (32, 32), DET_DATA_SEED, &params).map_err(|e| e.to_string())?;
        save_dataset(dir.join(run), &train_split, &val_split, DET_DATA_SEED, &params)
            .map_err(|e| e.to_string())?;
    }
    assert_trees_equal(&dir.join("data-a"), &dir.join("data-b"))
        .map_err(|e| format!("dataset runs diverge: {e}"))?;

    // Training: traces and checkpoint bytes, with every augmentation active.
    let (train_pairs, val_pairs) = dataset();
    let mut reports = Vec::new();
    let mut ckpt_bytes = Vec::new();
    for run in ["train-a", "train-b"] {
        let cfg = preset("EDN-GTM").expect("named preset").toy();
        let mut plan = TrainPlan::new(cfg, dir.join(run).join("model.ckpt"));
        plan.iterations = DET_TRAIN_ITERATIONS;
        plan.seed = DET_TRAIN_SEED;
        plan.aug.crop = Some((16, 16));
        plan.aug.hflip_prob = 0.5;
        plan.aug.cutout = Some(CutoutSpec { count: 1, max_fraction: 0.1 });
        plan.aug.mosaic_prob = 0.5;
        plan.aug.seed = DET_TRAIN_SEED ^ 0xa06;
        std::fs::create_dir_all(dir.join(run)).map_err(|e| e.to_string())?;
        let report = train(&plan, train_pairs, val_pairs).map_err(|e| format!("{run}: {e}"))?;
        ckpt_bytes.push(std::fs::read(&plan.out).map_err(|e| e.to_string())?);
        reports.push(report);
    }
    expect!(
        reports[0].rec_trace == reports[1].rec_trace
            && reports[0].adv_trace == reports[1].adv_trace
            && reports[0].d_trace == reports[1].d_trace,
        "loss traces differ between identical seeded runs"
    );
    expect!(ckpt_bytes[0] == ckpt_bytes[1], "checkpoint bytes differ between identical seeded runs");

    // Ablation: rendered reports must match byte for byte.
    let mut rendered = Vec::new();
    for run in ["ablate-a", "ablate-b"] {
        let cfg = preset("EDN-GTM").expect("named preset").toy();
        let mut base = TrainPlan::new(cfg, dir.join(run).join("unused.ckpt"));
        base.iterations = DET_ABLATION_ITERATIONS;
        base.seed = DET_TRAIN_SEED;
        base.aug.crop = Some((24, 24));
        let report = run_ablation(&TABLE1_PRESETS, &base, train_pairs, val_pairs, &dir.join(run))
            .map_err(|e| format!("{run}: {e}"))?;
        rendered.push(render_ablation_report(&report));
    }
    expect!(rendered[0] == rendered[1], "ablation reports differ between identical seeded runs");
    expect!(
        rendered[0].lines().filter(|l| l.starts_with("row ")).count() == TABLE1_PRESETS.len(),
        "ablation report does not cover all named presets"
    );

    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!(
        "dataset trees, {DET_TRAIN_ITERATIONS}-iteration traces/checkpoints, and {}-row ablation reports reproduce bitwise",
        TABLE1_PRESETS.len()
    ))
}

// ---------------------------------------------------------------------------
// 8. Augmentation contracts.

const CONTRACT_SAMPLES: usize = 20;
const MOSAIC_BLEND_TOL: f64 = 1e-9;

#[test]
fn criterion_8_augmentation_contracts() {
    verdict("8 augmentation", check_augmentation());
}

fn pairs_equal(a: &HazePair, b: &HazePair) -> bool {
    a.hazy.data() == b.hazy.data()
        && a.clean.data() == b.clean.data()
        && a.t_true.data() == b.t_true.data()
        && a.t_dcp.data() == b.t_dcp.data()
}

fn check_augmentation() -> Result<String, String> {
    let (train_pairs, _) = dataset();
    expect!(train_pairs.len() >= CONTRACT_SAMPLES, "fixture smaller than {CONTRACT_SAMPLES} samples");

    // Double horizontal flip is the identity.
    let flip_spec = AugmentSpec { hflip_prob: 1.0, ..AugmentSpec::default() };
    for (i, pair) in train_pairs.iter().take(CONTRACT_SAMPLES).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + i as u64);
        let once = augment(pair, &flip_spec, &mut rng).map_err(|e| e.to_string())?;
        let twice = augment(&once, &flip_spec, &mut rng).map_err(|e| e.to_string())?;
        expect!(pairs_equal(&twice, pair), "sample {i}: double hflip is not the identity");
        expect!(!pairs_equal(&once, pair) || is_mirror_symmetric(pair), "sample {i}: single hflip is a no-op");
    }

    // Cropping at the full extent is the identity.
    let full_crop = AugmentSpec { crop: Some(DATA_EXTENT), ..AugmentSpec::default() };
    for (i, pair) in train_pairs.iter().take(CONTRACT_SAMPLES).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8100 + i as u64);
        let out = augment(pair, &full_crop, &mut rng).map_err(|e| e.to_string())?;
        expect!(pairs_equal(&out, pair), "sample {i}: full-extent crop is not the identity");
    }

    // Cutout zeroes rectangles in the network inputs (hazy, t_dcp) and never
    // touches the targets (clean, t_true).
    let cutout_spec = AugmentSpec {
        cutout: Some(CutoutSpec { count: 3, max_fraction: 0.2 }),
        ..AugmentSpec::default()
    };
    let mut cut_pixels = 0usize;
    for (i, pair) in train_pairs.iter().take(CONTRACT_SAMPLES).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8200 + i as u64);
        let out = augment(pair, &cutout_spec, &mut rng).map_err(|e| e.to_string())?;
        expect!(out.clean.data() == pair.clean.data(), "sample {i}: cutout modified clean");
        expect!(out.t_true.data() == pair.t_true.data(), "sample {i}: cutout modified t_true");
        for y in 0..pair.height() {
            for x in 0..pair.width() {
                let same_hazy = out.hazy.get(y, x) == pair.hazy.get(y, x);
                let same_t = out.t_dcp.get(y, x) == pair.t_dcp.get(y, x);
                if same_hazy && same_t {
                    continue;
                }
                // A changed pixel must be fully blanked in both input maps.
                expect!(
                    out.hazy.get(y, x) == [0.0; 3] && out.t_dcp.get(y, x) == 0.0,
                    "sample {i}: cutout left a partially modified pixel at ({y},{x})"
                );
                cut_pixels += 1;
            }
        }
    }
    expect!(cut_pixels > 0, "cutout never removed a pixel across {CONTRACT_SAMPLES} seeded samples");

    // Mosaic: each quadrant comes from its own source pair, so the
    // atmospheric blend must hold per quadrant with that source's own light,
    // and the composite inherits its first source's light.
    let mut checked_quadrants = 0usize;
    for i in 0..CONTRACT_SAMPLES {
        let mut rng = ChaCha8Rng::seed_from_u64(8300 + i as u64);
        let srcs: [HazePair; 4] = std::array::from_fn(|q| train_pairs[(i + q * 7) % train_pairs.len()].clone());
        let target = (32, 32);
        let out = mosaic4(&srcs, target, &mut rng).map_err(|e| e.to_string())?;
        expect!(out.a.rgb == srcs[0].a.rgb, "sample {i}: mosaic did not keep its first source's light");
        // Recover the center split: it is the unique partition where each
        // quadrant satisfies its own source's blend. Scan for it instead of
        // fixing one, since mosaic4 draws the split internally.
        let center = find_mosaic_center(&out, &srcs).ok_or_else(|| {
            format!("sample {i}: no center split satisfies the per-quadrant blend invariant")
        })?;
        for (q, (qy, qx, qh, qw)) in quadrant_rects(target, center).into_iter().enumerate() {
            let a_q = srcs[q].a.rgb;
            for y in qy..qy + qh {
                for x in qx..qx + qw {
                    let j = out.clean.get(y, x);
                    let iv = out.hazy.get(y, x);
                    let t = out.t_true.get(y, x);
                    for c in 0..3 {
                        let blend = j[c] * t + a_q[c] * (1.0 - t);
                        expect!(
                            (iv[c] - blend).abs() <= MOSAIC_BLEND_TOL,
                            "sample {i}: quadrant {q} violates its source blend at ({y},{x}) by {:.3e}",
                            (iv[c] - blend).abs()
                        );
                    }
                }
            }
            checked_quadrants += 1;
        }
    }

    Ok(format!(
        "hflip²=id, full crop=id, cutout blanked {cut_pixels} input pixels only, {checked_quadrants} mosaic quadrants satisfy their source blends"
    ))
}

fn is_mirror_symmetric(pair: &HazePair) -> bool {
    pairs_equal(
        pair,
        &HazePair {
            hazy: pair.hazy.hflip(),
            clean: pair.clean.hflip(),
            t_true: pair.t_true.hflip(),
            t_dcp: pair.t_dcp.hflip(),
            a: pair.a,
        },
    )
}

fn quadrant_rects((th, tw): (usize, usize), (cy, cx): (usize, usize)) -> [(usize, usize, usize, usize); 4] {
    [(0, 0, cy, cx), (0, cx, cy, tw - cx), (cy, 0, th - cy, cx), (cy, cx, th - cy, tw - cx)]
}

/// Locate the mosaic center by testing every split against the blend
/// invariant of each quadrant's source light.
fn find_mosaic_center(out: &HazePair, srcs: &[HazePair; 4]) -> Option<(usize, usize)> {
    let (th, tw) = (out.height(), out.width());
    let fits = |center: (usize, usize)| -> bool {
        quadrant_rects((th, tw), center).into_iter().enumerate().all(|(q, (qy, qx, qh, qw))| {
            let a_q = srcs[q].a.rgb;
            (qy..qy + qh).all(|y| {
                (qx..qx + qw).all(|x| {
                    let j = out.clean.get(y, x);
                    let iv = out.hazy.get(y, x);
                    let t = out.t_true.get(y, x);
                    (0..3).all(|c| {
                        let blend = j[c] * t + a_q[c] * (1.0 - t);
                        (iv[c] - blend).abs() <= MOSAIC_BLEND_TOL
                    })
                })
            })
        })
    };
    (1..th).flat_map(|cy| (1..tw).map(move |cx| (cy, cx))).find(|&c| fits(c))
}
