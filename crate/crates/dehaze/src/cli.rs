//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error (bad flags / unknown subcommand),
//! 2 data error (unreadable or malformed inputs, bad parameters), 3 numerical
//! failure (non-finite values, failed gradient checks).  Failures print a
//! single machine-greppable line to stderr: `error[<code>]: <message>`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{load_dataset, make_dataset, save_dataset, AugmentSpec, CutoutSpec, HazePair};
use crate::dcp::{dcp_dehaze, DcpParams};
use crate::error::{Error, Result};
use crate::net::{
    build_generator, composite_checks, parse_config, preset, NetworkConfig, TABLE1_PRESETS,
};
use crate::tensor::run_full_suite;
use crate::train::checkpoint::load_checkpoint;
use crate::train::report::{
    render_ablation_report, render_metrics_report, render_train_report,
};
use crate::train::{evaluate, run_ablation, train, TrainPlan};

#[derive(Parser, Debug)]
#[command(
    name = "dehaze",
    version,
    about = "Single-image dehazing: dark-channel transmission maps feeding a guided U-Net",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dehaze one image with the classical dark-channel-prior pipeline.
    DehazeDcp(DehazeDcpArgs),
    /// Generate a synthetic hazy/clean dataset with a manifest.
    Synth(SynthArgs),
    /// Train a generator (optionally adversarially) on a dataset directory.
    Train(TrainArgs),
    /// Score a trained checkpoint on a dataset split (PSNR/SSIM).
    Eval(EvalArgs),
    /// Train and score every ablation preset under one plan.
    Ablate(AblateArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

/// Dark-channel-prior knobs shared by `dehaze-dcp` and `synth`.
#[derive(Args, Debug)]
struct DcpFlags {
    /// Use the small-scale parameter set (guided radius 8) as the base.
    #[arg(long)]
    toy_dcp: bool,
    /// Dark-channel window size (odd).
    #[arg(long)]
    patch: Option<usize>,
    /// Haze retention factor ω in t = 1 − ω·dark(I/A).
    #[arg(long)]
    omega: Option<f64>,
    /// Lower clamp applied to the transmission during recovery.
    #[arg(long)]
    t_floor: Option<f64>,
    /// Fraction of brightest dark-channel pixels used for the airlight.
    #[arg(long)]
    bright_fraction: Option<f64>,
    /// Guided-filter window radius.
    #[arg(long)]
    guided_radius: Option<usize>,
    /// Guided-filter regularisation ε.
    #[arg(long)]
    guided_eps: Option<f64>,
}

impl DcpFlags {
    fn resolve(&self) -> Result<DcpParams> {
        let mut p = if self.toy_dcp { DcpParams::toy() } else { DcpParams::default() };
        if let Some(v) = self.patch {
            p.patch = v;
        }
        if let Some(v) = self.omega {
            p.omega = v;
        }
        if let Some(v) = self.t_floor {
            p.t_floor = v;
        }
        if let Some(v) = self.bright_fraction {
            p.bright_fraction = v;
        }
        if let Some(v) = self.guided_radius {
            p.guided_radius = v;
        }
        if let Some(v) = self.guided_eps {
            p.guided_eps = v;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
struct DehazeDcpArgs {
    /// Hazy input image (binary PPM, maxval 255).
    #[arg(long)]
    input: PathBuf,
    /// Where to write the dehazed image (binary PPM).
    #[arg(long)]
    output: PathBuf,
    /// Also write the refined transmission map (binary PGM).
    #[arg(long)]
    t_out: Option<PathBuf>,
    #[command(flatten)]
    dcp: DcpFlags,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output dataset directory (creates train/ and val/ plus manifest.json).
    #[arg(long)]
    out: PathBuf,
    /// Number of training pairs.
    #[arg(long, default_value_t = 20)]
    train: usize,
    /// Number of validation pairs.
    #[arg(long, default_value_t = 4)]
    val: usize,
    /// Sample height in pixels.
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Sample width in pixels.
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Master seed; fixes every scene, depth field, and airlight.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    dcp: DcpFlags,
}

/// Network-architecture knobs shared by `train` and `ablate`.
#[derive(Args, Debug)]
struct NetFlags {
    /// Shrink width/depth/pyramid for fast CPU runs.
    #[arg(long)]
    toy: bool,
    /// Channel count of the first encoder stage.
    #[arg(long)]
    base_width: Option<usize>,
    /// Number of down/up-sampling stages.
    #[arg(long)]
    depth: Option<usize>,
    /// SPP pyramid window sizes, comma separated (e.g. "5,9,13").
    #[arg(long, value_delimiter = ',')]
    spp_kernels: Option<Vec<usize>>,
}

impl NetFlags {
    fn apply(&self, mut cfg: NetworkConfig) -> NetworkConfig {
        if self.toy {
            cfg = cfg.toy();
        }
        if let Some(v) = self.base_width {
            cfg.base_width = v;
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = &self.spp_kernels {
            cfg.spp_kernels = v.clone();
        }
        cfg
    }
}

/// Optimisation and augmentation knobs shared by `train` and `ablate`.
#[derive(Args, Debug)]
struct LoopFlags {
    /// Number of optimisation iterations (one G and one D step each).
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// Pairs per batch.
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Seed for initialisation and batch sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator learning rate.
    #[arg(long, default_value_t = 1e-4)]
    lr_g: f32,
    /// Discriminator learning rate.
    #[arg(long, default_value_t = 1e-4)]
    lr_d: f32,
    /// Weight of the adversarial term in the generator loss.
    #[arg(long, default_value_t = 1.0)]
    lambda_adv: f32,
    /// Weight of the L1 reconstruction term in the generator loss.
    #[arg(long, default_value_t = 100.0)]
    lambda_rec: f32,
    /// Evaluate and checkpoint every N iterations (0 = final only).
    #[arg(long, default_value_t = 0)]
    eval_every: usize,
    /// Random-crop extent, e.g. "48x48".
    #[arg(long, value_parser = parse_extent)]
    crop: Option<(usize, usize)>,
    /// Probability of a horizontal flip per sample.
    #[arg(long, default_value_t = 0.0)]
    hflip_prob: f64,
    /// Number of cutout rectangles per sample (enables cutout).
    #[arg(long)]
    cutout_count: Option<usize>,
    /// Maximum cutout rectangle area as a fraction of the sample.
    #[arg(long, default_value_t = 0.1)]
    cutout_max_fraction: f64,
    /// Probability of replacing a sample with a four-source mosaic.
    #[arg(long, default_value_t = 0.0)]
    mosaic_prob: f64,
    /// Seed for augmentation draws (independent of --seed).
    #[arg(long, default_value_t = 0)]
    aug_seed: u64,
}

impl LoopFlags {
    fn plan(&self, config: NetworkConfig, out: PathBuf) -> TrainPlan {
        let mut plan = TrainPlan::new(config, out);
        plan.iterations = self.iterations;
        plan.batch = self.batch;
        plan.seed = self.seed;
        plan.lr_g = self.lr_g;
        plan.lr_d = self.lr_d;
        plan.weights.lambda_adv = self.lambda_adv;
        plan.weights.lambda_rec = self.lambda_rec;
        plan.eval_every = self.eval_every;
        plan.aug = AugmentSpec {
            crop: self.crop,
            hflip_prob: self.hflip_prob,
            cutout: self.cutout_count.map(|count| CutoutSpec {
                count,
                max_fraction: self.cutout_max_fraction,
            }),
            mosaic_prob: self.mosaic_prob,
            seed: self.aug_seed,
        };
        plan
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory produced by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Architecture preset name (see `ablate --help` for the list).
    #[arg(long, default_value = "EDN-GTM", conflicts_with = "config")]
    preset: String,
    /// Read the architecture from a `key = value` config file instead.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    net: NetFlags,
    /// Checkpoint output path.
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
    #[command(flatten)]
    run: LoopFlags,
    /// Also write the training report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint produced by `train` or `ablate`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory produced by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Which split to score.
    #[arg(long, default_value = "val", value_parser = ["train", "val"])]
    split: String,
    /// Also write the metrics report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Dataset directory produced by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Directory for the per-preset checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated preset names; defaults to the six-row study:
    /// "S-U-Net", "G-U-Net", "G-U-Net 4-C", "SPP G-U-Net 4-C (ReLU)",
    /// "SPP G-U-Net 4-C (Swish)", "EDN-GTM".
    #[arg(long)]
    presets: Option<String>,
    #[command(flatten)]
    net: NetFlags,
    #[command(flatten)]
    run: LoopFlags,
    /// Also write the ablation report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Seed for the probe inputs and directions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check the individual layers only, skipping block and network composites.
    #[arg(long)]
    layers_only: bool,
}

fn parse_extent(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| format!("expected HxW (e.g. 48x48), got {s:?}"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    Ok((h, w))
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.code());
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DehazeDcp(a) => cmd_dehaze_dcp(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn write_report(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

fn cmd_dehaze_dcp(a: DehazeDcpArgs) -> Result<()> {
    let params = a.dcp.resolve()?;
    let img = crate::data::ppm::load_image(&a.input)?;
    let (dehazed, t) = dcp_dehaze(&img, &params)?;
    crate::data::ppm::save_image(&dehazed, &a.output)?;
    if let Some(t_out) = &a.t_out {
        crate::data::ppm::save_gray(&t, t_out)?;
    }
    println!(
        "dehazed {} ({}x{}) -> {}",
        a.input.display(),
        img.height(),
        img.width(),
        a.output.display()
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let params = a.dcp.resolve()?;
    let (train_pairs, val_pairs) =
        make_dataset(a.train, a.val, (a.height, a.width), a.seed, &params)?;
    save_dataset(&a.out, &train_pairs, &val_pairs, a.seed, &params)?;
    println!(
        "wrote {} train + {} val pairs ({}x{}, seed {}) to {}",
        train_pairs.len(),
        val_pairs.len(),
        a.height,
        a.width,
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn load_splits(data: &PathBuf) -> Result<(Vec<HazePair>, Vec<HazePair>)> {
    let ds = load_dataset(data)?;
    Ok((ds.train, ds.val))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            parse_config(&text)?
        }
        None => preset(&a.preset)
            .ok_or_else(|| Error::Config(format!("unknown preset `{}`", a.preset)))?,
    };
    let cfg = a.net.apply(cfg);
    let (train_pairs, val_pairs) = load_splits(&a.data)?;
    let plan = a.run.plan(cfg, a.out);
    let report = train(&plan, &train_pairs, &val_pairs)?;
    let text = render_train_report(&report);
    print!("{text}");
    write_report(&a.report, &text)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let (train_pairs, val_pairs) = load_splits(&a.data)?;
    let pairs = if a.split == "train" { &train_pairs } else { &val_pairs };
    if pairs.is_empty() {
        return Err(Error::Param(format!("split `{}` is empty", a.split)));
    }
    let (h, w) = (pairs[0].height(), pairs[0].width());
    let mut generator =
        build_generator(&ckpt.config, h, w, ChaCha8Rng::seed_from_u64(0))?;
    ckpt.restore_into(&mut generator)?;
    let (model, baseline) = evaluate(&generator, &ckpt.config, pairs, &a.split)?;
    let text = render_metrics_report(&model, &baseline);
    print!("{text}");
    write_report(&a.report, &text)
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let names: Vec<String> = match &a.presets {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => TABLE1_PRESETS.iter().map(|s| s.to_string()).collect(),
    };
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let base_cfg = a.net.apply(NetworkConfig::default());
    let (train_pairs, val_pairs) = load_splits(&a.data)?;
    let base = a.run.plan(base_cfg, a.out.join("base.ckpt"));
    let report = run_ablation(&name_refs, &base, &train_pairs, &val_pairs, &a.out)?;
    let text = render_ablation_report(&report);
    print!("{text}");
    write_report(&a.report, &text)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let extra = if a.layers_only { Vec::new() } else { composite_checks()? };
    let report = run_full_suite(extra, a.seed)?;
    println!("{report}");
    let n = report.checks.len();
    let report = report.into_result()?;
    let worst = report
        .checks
        .iter()
        .map(|c| c.max_rel)
        .fold(0.0f64, f64::max);
    println!("gradcheck: {n} checks passed (worst max_rel {worst:.3e})");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["dehaze", "no-such-command"]), 1);
        assert_eq!(run(["dehaze", "train", "--no-such-flag"]), 1);
        assert_eq!(run(["dehaze"]), 1);
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(["dehaze", "--help"]), 0);
        assert_eq!(run(["dehaze", "--version"]), 0);
        assert_eq!(run(["dehaze", "train", "--help"]), 0);
    }

    #[test]
    fn extent_parser_accepts_hxw() {
        assert_eq!(parse_extent("48x48").unwrap(), (48, 48));
        assert_eq!(parse_extent("8 x 16").unwrap(), (8, 16));
        assert!(parse_extent("48").is_err());
        assert!(parse_extent("axb").is_err());
    }

    #[test]
    fn missing_input_is_a_data_error() {
        assert_eq!(
            run(["dehaze", "dehaze-dcp", "--input", "/no/such.ppm", "--output", "/tmp/out.ppm"]),
            2
        );
    }
}
