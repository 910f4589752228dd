//! Finite-difference verification of the backward pass.
//!
//! The analytic gradient comes from `Graph::backward` in f32. The reference
//! comes from central differences around perturbed f32 values, with the
//! forward pass re-run in f64 (`Graph::eval_frozen::<f64>`) so the comparison
//! is not drowned by single-precision forward noise. Dividing by the actually
//! realized f64 difference of the two perturbed values cancels the rounding
//! of the nominal step.
//!
//! The f64 re-run freezes every discrete gate — ReLU/LeakyReLU sign
//! decisions, pooling argmaxes, the max branch of spatial statistics — to the
//! choices recorded on the f32 tape that the backward pass linearized. Where
//! a pre-activation sits within f32 rounding of zero (or a pool has a
//! near-tie), the unfrozen f64 forward can take the other branch and the
//! finite difference would measure a different linear piece than the one the
//! analytic gradient belongs to. Gate placement itself is covered by the
//! forward oracle tests, not by gradcheck.
//!
//! Central differences are meaningless where the perturbation interval
//! straddles an activation kink or a pooling argmax switch. Each coordinate
//! is therefore probed one-sided in both directions (against the shared
//! unperturbed objective): for a piecewise-linear graph the central-
//! difference error from any kink inside the interval is at most half the
//! disagreement of the two one-sided quotients, so coordinates whose
//! one-sided quotients disagree by more than 2·tol are counted inconclusive
//! instead of compared. A check fails if inconclusive coordinates outnumber
//! conclusive ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, GraphBuilder, Tape};
use super::{ActivationKind, Shape, Tensor};
use crate::error::{Error, Result};

/// Relative error with an absolute floor: differences below `atol` count as
/// zero, otherwise |a-b| / max(|a|,|b|).
pub fn max_rel_error(analytic: f64, fd: f64, atol: f64) -> f64 {
    let diff = (analytic - fd).abs();
    if diff <= atol {
        0.0
    } else {
        diff / analytic.abs().max(fd.abs())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOpts {
    /// Nominal central-difference step.
    pub step: f64,
    /// Maximum relative error accepted.
    pub tol: f64,
    /// Absolute difference below which a coordinate counts as matching.
    pub atol: f64,
    /// Coordinates sampled per parameter tensor (and for the input).
    pub samples_per_tensor: usize,
    /// Also check gradients w.r.t. the graph input (covers layers with no
    /// parameters of their own).
    pub check_input: bool,
}

impl GradcheckOpts {
    /// Tolerances for smooth or piecewise-linear nonlinear graphs.
    pub fn nonlinear() -> Self {
        GradcheckOpts { step: 1e-3, tol: 1e-3, atol: 1e-6, samples_per_tensor: 20, check_input: true }
    }

    /// Tolerances for purely linear graphs, where central differences are
    /// exact up to roundoff.
    pub fn linear() -> Self {
        GradcheckOpts { step: 1e-3, tol: 1e-6, atol: 1e-9, samples_per_tensor: 20, check_input: true }
    }
}

impl Default for GradcheckOpts {
    fn default() -> Self {
        GradcheckOpts::nonlinear()
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub max_rel: f64,
    pub worst_coord: String,
    pub coords_checked: usize,
    /// Coordinates skipped because the two-scale difference quotients
    /// disagreed (the FD interval straddles a kink).
    pub inconclusive: usize,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel < self.tol
            && self.coords_checked > 0
            && self.inconclusive <= self.coords_checked
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: max_rel={:.3e} tol={:.0e} coords={} worst={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_rel,
            self.tol,
            self.coords_checked,
            self.worst_coord,
        )?;
        if self.inconclusive > 0 {
            write!(f, " kink_skips={}", self.inconclusive)?;
        }
        Ok(())
    }
}

/// A graph plus the input it should be checked on.
pub struct GraphCheck {
    pub name: String,
    pub graph: Graph,
    pub input: Tensor,
    pub opts: GradcheckOpts,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed())
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    pub fn into_result(self) -> Result<SuiteReport> {
        if self.all_passed() {
            Ok(self)
        } else {
            let names: Vec<String> = self
                .failures()
                .iter()
                .map(|c| format!("{} (max_rel {:.3e})", c.name, c.max_rel))
                .collect();
            Err(Error::GradcheckFailed(names.join(", ")))
        }
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(
            f,
            "{}/{} gradient checks passed",
            self.checks.iter().filter(|c| c.passed()).count(),
            self.checks.len()
        )
    }
}

fn objective_f64(graph: &Graph, x64: &[f64], n: usize, u: &[f32], tape: &Tape) -> Result<f64> {
    let y = graph.eval_frozen::<f64>(x64, n, tape)?;
    debug_assert_eq!(y.len(), u.len());
    Ok(y.iter().zip(u).map(|(&yv, &uv)| yv * uv as f64).sum())
}

fn sample_coords(len: usize, want: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= want {
        (0..len).collect()
    } else {
        (0..want).map(|_| rng.gen_range(0..len)).collect()
    }
}

/// Central plus both one-sided difference quotients, all with realized
/// denominators.
struct Quotients {
    central: f64,
    plus_side: f64,
    minus_side: f64,
}

impl Quotients {
    fn from_evals(l0: f64, lp: f64, lm: f64, step_plus: f64, step_minus: f64) -> Option<Self> {
        if step_plus <= 0.0 || step_minus <= 0.0 {
            return None;
        }
        Some(Quotients {
            central: (lp - lm) / (step_plus + step_minus),
            plus_side: (lp - l0) / step_plus,
            minus_side: (l0 - lm) / step_minus,
        })
    }

    /// One-sided quotients must agree for the central quotient to be a
    /// trustworthy reference at the requested tolerance.
    fn conclusive(&self, opts: &GradcheckOpts) -> bool {
        max_rel_error(self.plus_side, self.minus_side, opts.atol) <= 2.0 * opts.tol
    }
}

/// Difference quotients for one parameter coordinate around its stored f32
/// value; `None` when the step vanishes after rounding to f32.
#[allow(clippy::too_many_arguments)]
fn param_fd(
    graph: &mut Graph,
    pid: usize,
    idx: usize,
    theta: f32,
    l0: f64,
    step: f64,
    x64: &[f64],
    n: usize,
    u: &[f32],
    tape: &Tape,
) -> Result<Option<Quotients>> {
    let plus = (theta as f64 + step) as f32;
    let minus = (theta as f64 - step) as f32;
    graph.params_mut()[pid].value.data_mut()[idx] = plus;
    let lp = objective_f64(graph, x64, n, u, tape)?;
    graph.params_mut()[pid].value.data_mut()[idx] = minus;
    let lm = objective_f64(graph, x64, n, u, tape)?;
    graph.params_mut()[pid].value.data_mut()[idx] = theta;
    Ok(Quotients::from_evals(
        l0,
        lp,
        lm,
        plus as f64 - theta as f64,
        theta as f64 - minus as f64,
    ))
}

#[allow(clippy::too_many_arguments)]
fn input_fd(
    graph: &Graph,
    xp: &mut [f64],
    idx: usize,
    x0: f64,
    l0: f64,
    step: f64,
    n: usize,
    u: &[f32],
    tape: &Tape,
) -> Result<Option<Quotients>> {
    xp[idx] = x0 + step;
    let lp = objective_f64(graph, xp, n, u, tape)?;
    xp[idx] = x0 - step;
    let lm = objective_f64(graph, xp, n, u, tape)?;
    xp[idx] = x0;
    Ok(Quotients::from_evals(l0, lp, lm, step, step))
}

/// Compares analytic gradients against central finite differences on sampled
/// coordinates of every parameter tensor and (optionally) the input.
pub fn gradcheck_graph(
    name: &str,
    graph: &mut Graph,
    input: &Tensor,
    opts: &GradcheckOpts,
    rng: &mut ChaCha8Rng,
) -> Result<CheckResult> {
    let n = input.shape().n;
    let tape = graph.forward(input)?;
    let out = graph.output_value(&tape);
    let u: Vec<f32> = (0..out.data().len())
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.25..1.0f32)
        })
        .collect();

    graph.zero_grads();
    let input_grad = graph.backward(&tape, &u)?;
    let param_grads: Vec<Vec<f32>> = graph
        .params()
        .iter()
        .map(|p| p.value.grad().expect("backward populated grads").to_vec())
        .collect();

    let x64: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let l0 = objective_f64(graph, &x64, n, &u, &tape)?;
    let mut max_rel = 0.0f64;
    let mut worst = String::from("-");
    let mut coords_checked = 0usize;
    let mut inconclusive = 0usize;

    // parameter coordinates: perturb the stored f32 value, divide by the
    // actually realized f64 difference
    for (pid, grads) in param_grads.iter().enumerate() {
        let len = graph.params()[pid].value.data().len();
        for idx in sample_coords(len, opts.samples_per_tensor, rng) {
            let theta = graph.params()[pid].value.data()[idx];
            let Some(q) = param_fd(graph, pid, idx, theta, l0, opts.step, &x64, n, &u, &tape)? else {
                continue;
            };
            if !q.conclusive(opts) {
                inconclusive += 1;
                continue;
            }
            let analytic = grads[idx] as f64;
            let rel = max_rel_error(analytic, q.central, opts.atol);
            coords_checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = format!("{}[{}]", graph.params()[pid].name, idx);
            }
        }
    }

    if opts.check_input {
        let mut xp = x64.clone();
        for idx in sample_coords(xp.len(), opts.samples_per_tensor, rng) {
            let x0 = xp[idx];
            let Some(q) = input_fd(graph, &mut xp, idx, x0, l0, opts.step, n, &u, &tape)? else {
                continue;
            };
            if !q.conclusive(opts) {
                inconclusive += 1;
                continue;
            }
            let analytic = input_grad[idx] as f64;
            let rel = max_rel_error(analytic, q.central, opts.atol);
            coords_checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = format!("input[{idx}]");
            }
        }
    }

    Ok(CheckResult {
        name: name.to_string(),
        max_rel,
        worst_coord: worst,
        coords_checked,
        inconclusive,
        tol: opts.tol,
    })
}

/// Random values bounded away from zero (and so from ReLU/max kinks) by a
/// margin much larger than the FD step.
fn sample_input(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..shape.len())
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.2..1.2f32)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("sample_input size")
}

fn feat(shape: Shape) -> (usize, usize, usize) {
    (shape.c, shape.h, shape.w)
}

fn check(
    name: &str,
    seed: u64,
    opts: GradcheckOpts,
    input_shape: Shape,
    build: impl FnOnce(&mut GraphBuilder, super::graph::NodeId) -> Result<super::graph::NodeId>,
) -> Result<GraphCheck> {
    let mut b = GraphBuilder::new(ChaCha8Rng::seed_from_u64(seed));
    let (c, h, w) = feat(input_shape);
    let x = b.input(c, h, w)?;
    let out = build(&mut b, x)?;
    Ok(GraphCheck {
        name: name.to_string(),
        graph: b.finish(out)?,
        input: sample_input(input_shape, seed ^ 0x5eed),
        opts,
    })
}

/// One check per layer type, on random (1,2,6,6) tensors. Linear layers run
/// at the tight linear tolerance; kinked and smooth nonlinearities at 1e-3.
pub fn builtin_layer_checks() -> Result<Vec<GraphCheck>> {
    let s = Shape { n: 1, c: 2, h: 6, w: 6 };
    let lin = GradcheckOpts::linear;
    let non = GradcheckOpts::nonlinear;
    let mut checks = vec![
        check("conv3x3", 11, lin(), s, |b, x| b.conv2d(x, 3, 3, 1, 1, "c"))?,
        check("conv1x1", 12, lin(), s, |b, x| b.conv2d(x, 4, 1, 1, 0, "c"))?,
        check("conv3x3_stride2", 13, lin(), s, |b, x| b.conv2d(x, 3, 3, 2, 1, "c"))?,
        check("dense", 14, lin(), Shape { n: 1, c: 8, h: 1, w: 1 }, |b, x| b.dense(x, 5, "d"))?,
        check("upsample2x", 15, lin(), s, |b, x| Ok(b.upsample2x(x)))?,
        check("slice_concat", 16, lin(), s, |b, x| {
            let a = b.slice(x, 0, 1)?;
            let c = b.slice(x, 1, 1)?;
            b.concat(c, a)
        })?,
        check("global_avg_pool", 17, lin(), s, |b, x| Ok(b.global_avg_pool(x)))?,
        check("add_fanout", 18, lin(), s, |b, x| b.add(x, x))?,
        check("activate_identity", 19, lin(), s, |b, x| b.activate(x, ActivationKind::Identity))?,
        check("mul_halves", 20, non(), s, |b, x| {
            let a = b.slice(x, 0, 1)?;
            let c = b.slice(x, 1, 1)?;
            b.mul(a, c)
        })?,
        check("mul_spatial_gate", 21, non(), s, |b, x| {
            let gate = b.slice(x, 1, 1)?;
            b.mul(x, gate)
        })?,
        check("mul_channel_gate", 22, non(), s, |b, x| {
            let gate = b.global_avg_pool(x);
            b.mul(x, gate)
        })?,
        check("activate_relu", 23, non(), s, |b, x| b.activate(x, ActivationKind::Relu))?,
        check("activate_leaky_relu", 24, non(), s, |b, x| {
            b.activate(x, ActivationKind::LeakyRelu { slope: 0.2 })
        })?,
        check("activate_swish", 25, non(), s, |b, x| b.activate(x, ActivationKind::Swish))?,
        check("activate_mish", 26, non(), s, |b, x| b.activate(x, ActivationKind::Mish))?,
        check("activate_sigmoid", 27, non(), s, |b, x| b.activate(x, ActivationKind::Sigmoid))?,
        check("maxpool2x2", 28, non(), s, |b, x| b.maxpool(x, 2, 2, 0))?,
        check("maxpool3x3_s1_p1", 29, non(), s, |b, x| b.maxpool(x, 3, 1, 1))?,
        check("global_max_pool", 30, non(), s, |b, x| Ok(b.global_max_pool(x)))?,
        check("spatial_stats", 31, non(), s, |b, x| Ok(b.spatial_stats(x)))?,
    ];
    // a U-Net cell in miniature: conv, activation, pool, upsample, skip concat
    checks.push(check("composite_unet_cell", 32, non(), s, |b, x| {
        let c1 = b.conv2d(x, 4, 3, 1, 1, "enc")?;
        let a1 = b.activate(c1, ActivationKind::Swish)?;
        let p = b.maxpool(a1, 2, 2, 0)?;
        let up = b.upsample2x(p);
        let cat = b.concat(up, a1)?;
        let c2 = b.conv2d(cat, 2, 3, 1, 1, "dec")?;
        b.activate(c2, ActivationKind::Sigmoid)
    })?);
    Ok(checks)
}

/// Runs the built-in layer checks plus any caller-supplied composite checks
/// (blocks, whole networks). Deterministic for a fixed `seed`.
pub fn run_full_suite(extra: Vec<GraphCheck>, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let mut all = builtin_layer_checks()?;
    all.extend(extra);
    for mut chk in all {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ chk.name.len() as u64);
        let res = gradcheck_graph(&chk.name, &mut chk.graph, &chk.input, &chk.opts, &mut rng)?;
        report.checks.push(res);
    }
    Ok(report)
}
