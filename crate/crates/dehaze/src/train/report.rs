//! Line-oriented text reports for training, ablation, and evaluation runs.
//!
//! Every report opens with a `schema <name>` line naming its format.  All
//! floating-point fields print with six fixed decimals and fields appear in a
//! fixed order, so two runs of the same seeded plan produce byte-identical
//! report bodies.  Lines starting with `#` carry environment-dependent values
//! (wall time, output paths) and are excluded from reproducibility
//! comparisons; [`reproducible_lines`] strips them.
//!
//! `train-v1`
//! ```text
//! schema train-v1
//! preset <name|custom>
//! config <canonical config string>
//! iterations <n>
//! batch <n>
//! seed <n>
//! eval_every <n>
//! trace <i> rec <v> adv <v|-> d <v|->      (one per iteration)
//! eval <iter> model <psnr> <ssim>           (one pair per measurement)
//! eval <iter> baseline <psnr> <ssim>
//! # checkpoint <path>
//! # wall_seconds <v>
//! ```
//!
//! `ablate-v1`
//! ```text
//! schema ablate-v1
//! dataset <tag>
//! seed <n>
//! iterations <n>
//! baseline <psnr> <ssim>
//! row <psnr> <ssim> <preset name>           (name last: it contains spaces)
//! ```
//!
//! `metrics-v1`
//! ```text
//! schema metrics-v1
//! record model
//! config <name>
//! dataset <tag>
//! count <n>
//! image <i> <psnr> <ssim>                   (one per image)
//! mean <psnr> <ssim>
//! record baseline
//! ...same fields...
//! ```

use std::fmt::Write as _;

use crate::metrics::MetricsRecord;
use crate::net::{config_to_string, preset_name};

use super::{AblationReport, TrainReport};

pub const TRAIN_SCHEMA: &str = "train-v1";
pub const ABLATE_SCHEMA: &str = "ablate-v1";
pub const METRICS_SCHEMA: &str = "metrics-v1";

/// The lines of a report that must be byte-identical across repeated runs of
/// the same seeded plan (i.e. everything except `#` comment lines).
pub fn reproducible_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|line| !line.starts_with('#'))
}

pub fn render_train_report(r: &TrainReport) -> String {
    let mut s = String::new();
    writeln!(s, "schema {TRAIN_SCHEMA}").unwrap();
    writeln!(s, "preset {}", preset_name(&r.config).unwrap_or("custom")).unwrap();
    let canonical = config_to_string(&r.config);
    let flat_config: Vec<&str> = canonical.lines().collect();
    writeln!(s, "config {}", flat_config.join("; ")).unwrap();
    writeln!(s, "iterations {}", r.iterations).unwrap();
    writeln!(s, "batch {}", r.batch).unwrap();
    writeln!(s, "seed {}", r.seed).unwrap();
    writeln!(s, "eval_every {}", r.eval_every).unwrap();
    for (i, rec) in r.rec_trace.iter().enumerate() {
        match (r.adv_trace.get(i), r.d_trace.get(i)) {
            (Some(adv), Some(d)) => {
                writeln!(s, "trace {i} rec {rec:.6} adv {adv:.6} d {d:.6}").unwrap()
            }
            _ => writeln!(s, "trace {i} rec {rec:.6} adv - d -").unwrap(),
        }
    }
    for ev in &r.evals {
        writeln!(
            s,
            "eval {} model {:.6} {:.6}",
            ev.iteration,
            ev.model.mean_psnr(),
            ev.model.mean_ssim()
        )
        .unwrap();
        writeln!(
            s,
            "eval {} baseline {:.6} {:.6}",
            ev.iteration,
            ev.baseline.mean_psnr(),
            ev.baseline.mean_ssim()
        )
        .unwrap();
    }
    writeln!(s, "# checkpoint {}", r.checkpoint.display()).unwrap();
    writeln!(s, "# wall_seconds {:.3}", r.wall_seconds).unwrap();
    s
}

pub fn render_ablation_report(r: &AblationReport) -> String {
    let mut s = String::new();
    writeln!(s, "schema {ABLATE_SCHEMA}").unwrap();
    writeln!(s, "dataset {}", r.dataset).unwrap();
    writeln!(s, "seed {}", r.seed).unwrap();
    writeln!(s, "iterations {}", r.iterations).unwrap();
    writeln!(s, "baseline {:.6} {:.6}", r.baseline_psnr, r.baseline_ssim).unwrap();
    for row in &r.rows {
        writeln!(s, "row {:.6} {:.6} {}", row.psnr, row.ssim, row.name).unwrap();
    }
    s
}

fn render_record(s: &mut String, label: &str, record: &MetricsRecord) {
    writeln!(s, "record {label}").unwrap();
    writeln!(s, "config {}", record.config).unwrap();
    writeln!(s, "dataset {}", record.dataset).unwrap();
    writeln!(s, "count {}", record.psnr.len()).unwrap();
    for (i, (p, ss)) in record.psnr.iter().zip(&record.ssim).enumerate() {
        writeln!(s, "image {i} {p:.6} {ss:.6}").unwrap();
    }
    writeln!(s, "mean {:.6} {:.6}", record.mean_psnr(), record.mean_ssim()).unwrap();
}

pub fn render_metrics_report(model: &MetricsRecord, baseline: &MetricsRecord) -> String {
    let mut s = String::new();
    writeln!(s, "schema {METRICS_SCHEMA}").unwrap();
    render_record(&mut s, "model", model);
    render_record(&mut s, "baseline", baseline);
    s
}
