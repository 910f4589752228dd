//! Static computation graph with reverse-mode differentiation.
//!
//! A graph is built once for a concrete spatial extent, then run for any
//! batch size. Shapes are validated at build time so forward and backward
//! can assume consistent buffers. Node order is topological by construction
//! (every op references already-existing nodes), so forward walks the node
//! list and backward walks it in reverse.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, Broadcast, Real};
use super::{ActivationKind, Parameter, Shape, Tensor};
use crate::error::{Error, Result};

/// Per-sample feature shape; the batch dimension stays flexible until forward.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FeatShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatShape {
    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn with_batch(&self, n: usize) -> Shape {
        Shape { n, c: self.c, h: self.h, w: self.w }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Conv2d { input: NodeId, weight: ParamId, bias: ParamId, stride: usize, pad: usize },
    Dense { input: NodeId, weight: ParamId, bias: ParamId },
    Activate { input: NodeId, kind: ActivationKind },
    MaxPool { input: NodeId, k: usize, stride: usize, pad: usize },
    Upsample2x { input: NodeId },
    Concat { a: NodeId, b: NodeId },
    Slice { input: NodeId, start: usize, len: usize },
    GlobalAvgPool { input: NodeId },
    GlobalMaxPool { input: NodeId },
    SpatialStats { input: NodeId },
    Mul { a: NodeId, b: NodeId, broadcast: Broadcast },
    Add { a: NodeId, b: NodeId },
}

/// Forward pass record: every node's value for one batch.
pub struct Tape {
    pub(crate) n: usize,
    values: Vec<Vec<f32>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.n
    }

    pub fn value(&self, id: NodeId) -> &[f32] {
        &self.values[id.0]
    }
}

/// Builds a graph; layer helpers create He-uniform initialized parameters
/// from the builder's seeded stream, so identical build sequences produce
/// identical weights.
pub struct GraphBuilder {
    nodes: Vec<Op>,
    shapes: Vec<FeatShape>,
    params: Vec<Parameter>,
    rng: ChaCha8Rng,
}

impl GraphBuilder {
    pub fn new(rng: ChaCha8Rng) -> Self {
        GraphBuilder { nodes: Vec::new(), shapes: Vec::new(), params: Vec::new(), rng }
    }

    fn push(&mut self, op: Op, shape: FeatShape) -> NodeId {
        self.nodes.push(op);
        self.shapes.push(shape);
        NodeId(self.nodes.len() - 1)
    }

    fn shape_of(&self, id: NodeId) -> FeatShape {
        self.shapes[id.0]
    }

    /// He-uniform tensor: U(-limit, limit) with limit = sqrt(6 / fan_in).
    fn he_uniform(&mut self, shape: Shape, fan_in: usize) -> Tensor {
        let limit = (6.0 / fan_in as f64).sqrt() as f32;
        let data: Vec<f32> =
            (0..shape.len()).map(|_| self.rng.gen_range(-limit..limit)).collect();
        Tensor::from_vec(shape, data).expect("init size matches shape")
    }

    fn add_param(&mut self, name: String, value: Tensor) -> ParamId {
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    /// The single graph input; must be created first.
    pub fn input(&mut self, c: usize, h: usize, w: usize) -> Result<NodeId> {
        if !self.nodes.is_empty() {
            return Err(Error::Param("graph input must be the first node".into()));
        }
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Param("graph input extents must be nonzero".into()));
        }
        Ok(self.push(Op::Input, FeatShape { c, h, w }))
    }

    /// Creates dense parameters without applying them (for weight sharing).
    pub fn dense_params(&mut self, name: &str, in_c: usize, out_c: usize) -> (ParamId, ParamId) {
        let w = self.he_uniform(Shape { n: out_c, c: in_c, h: 1, w: 1 }, in_c);
        let weight = self.add_param(format!("{name}.weight"), w);
        let bias = self.add_param(
            format!("{name}.bias"),
            Tensor::zeros(Shape { n: out_c, c: 1, h: 1, w: 1 }),
        );
        (weight, bias)
    }

    pub fn dense_apply(&mut self, x: NodeId, weight: ParamId, bias: ParamId) -> Result<NodeId> {
        let s = self.shape_of(x);
        if s.h != 1 || s.w != 1 {
            return Err(Error::Dim {
                axis: "height",
                expected: 1,
                got: s.h,
                context: "dense expects a (n,c,1,1) input".into(),
            });
        }
        let ws = self.params[weight.0].value.shape();
        if ws.c != s.c {
            return Err(Error::Dim {
                axis: "channels",
                expected: ws.c,
                got: s.c,
                context: "dense input vs weight".into(),
            });
        }
        Ok(self.push(Op::Dense { input: x, weight, bias }, FeatShape { c: ws.n, h: 1, w: 1 }))
    }

    pub fn dense(&mut self, x: NodeId, out_c: usize, name: &str) -> Result<NodeId> {
        let in_c = self.shape_of(x).c;
        let (w, b) = self.dense_params(name, in_c, out_c);
        self.dense_apply(x, w, b)
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        name: &str,
    ) -> Result<NodeId> {
        let s = self.shape_of(x);
        let wshape = Shape { n: out_c, c: s.c, h: k, w: k };
        let dims = kernels::conv_dims(s.with_batch(1), wshape, stride, pad)?;
        let w = self.he_uniform(wshape, s.c * k * k);
        let weight = self.add_param(format!("{name}.weight"), w);
        let bias = self.add_param(
            format!("{name}.bias"),
            Tensor::zeros(Shape { n: out_c, c: 1, h: 1, w: 1 }),
        );
        Ok(self.push(
            Op::Conv2d { input: x, weight, bias, stride, pad },
            FeatShape { c: out_c, h: dims.h_out, w: dims.w_out },
        ))
    }

    pub fn activate(&mut self, x: NodeId, kind: ActivationKind) -> Result<NodeId> {
        kind.validate()?;
        let s = self.shape_of(x);
        Ok(self.push(Op::Activate { input: x, kind }, s))
    }

    pub fn maxpool(&mut self, x: NodeId, k: usize, stride: usize, pad: usize) -> Result<NodeId> {
        let s = self.shape_of(x);
        let dims = kernels::pool_dims(s.with_batch(1), k, stride, pad)?;
        if k == stride && pad == 0 && (!s.h.is_multiple_of(k) || !s.w.is_multiple_of(k)) {
            return Err(Error::Dim {
                axis: "height",
                expected: s.h / k * k,
                got: s.h,
                context: format!("maxpool {k}x{k} needs extents divisible by {k}"),
            });
        }
        Ok(self.push(
            Op::MaxPool { input: x, k, stride, pad },
            FeatShape { c: s.c, h: dims.h_out, w: dims.w_out },
        ))
    }

    pub fn upsample2x(&mut self, x: NodeId) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::Upsample2x { input: x }, FeatShape { c: s.c, h: 2 * s.h, w: 2 * s.w })
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa.h != sb.h {
            return Err(Error::Dim {
                axis: "height",
                expected: sa.h,
                got: sb.h,
                context: "concat_channels".into(),
            });
        }
        if sa.w != sb.w {
            return Err(Error::Dim {
                axis: "width",
                expected: sa.w,
                got: sb.w,
                context: "concat_channels".into(),
            });
        }
        Ok(self.push(Op::Concat { a, b }, FeatShape { c: sa.c + sb.c, h: sa.h, w: sa.w }))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let s = self.shape_of(x);
        if len == 0 || start + len > s.c {
            return Err(Error::Dim {
                axis: "channels",
                expected: s.c,
                got: start + len,
                context: "slice_channels range".into(),
            });
        }
        Ok(self.push(Op::Slice { input: x, start, len }, FeatShape { c: len, h: s.h, w: s.w }))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::GlobalAvgPool { input: x }, FeatShape { c: s.c, h: 1, w: 1 })
    }

    pub fn global_max_pool(&mut self, x: NodeId) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::GlobalMaxPool { input: x }, FeatShape { c: s.c, h: 1, w: 1 })
    }

    /// Per-pixel channel mean and max, stacked as two channels.
    pub fn spatial_stats(&mut self, x: NodeId) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::SpatialStats { input: x }, FeatShape { c: 2, h: s.h, w: s.w })
    }

    /// Elementwise product; `b` may broadcast as a spatial (n,1,h,w) or
    /// channel (n,c,1,1) gate over `a`.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        let broadcast = if sb == sa {
            Broadcast::Full
        } else if sb.c == 1 && sb.h == sa.h && sb.w == sa.w {
            Broadcast::Spatial
        } else if sb.c == sa.c && sb.h == 1 && sb.w == 1 {
            Broadcast::Channel
        } else {
            return Err(Error::Dim {
                axis: "channels",
                expected: sa.c,
                got: sb.c,
                context: format!(
                    "mul gate ({},{},{}) does not broadcast over ({},{},{})",
                    sb.c, sb.h, sb.w, sa.c, sa.h, sa.w
                ),
            });
        };
        Ok(self.push(Op::Mul { a, b, broadcast }, sa))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa != sb {
            return Err(Error::Dim {
                axis: "channels",
                expected: sa.c,
                got: sb.c,
                context: format!(
                    "add operands ({},{},{}) vs ({},{},{})",
                    sa.c, sa.h, sa.w, sb.c, sb.h, sb.w
                ),
            });
        }
        Ok(self.push(Op::Add { a, b }, sa))
    }

    pub fn shape(&self, id: NodeId) -> FeatShape {
        self.shape_of(id)
    }

    pub fn finish(self, output: NodeId) -> Result<Graph> {
        if self.nodes.is_empty() || !matches!(self.nodes[0], Op::Input) {
            return Err(Error::Param("graph has no input node".into()));
        }
        if output.0 >= self.nodes.len() {
            return Err(Error::Param("graph output refers to a missing node".into()));
        }
        Ok(Graph {
            nodes: self.nodes,
            shapes: self.shapes,
            params: self.params,
            output,
        })
    }
}

pub struct Graph {
    nodes: Vec<Op>,
    shapes: Vec<FeatShape>,
    params: Vec<Parameter>,
    output: NodeId,
}

impl Graph {
    pub fn input_shape(&self) -> FeatShape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> FeatShape {
        self.shapes[self.output.0]
    }

    pub fn output_id(&self) -> NodeId {
        self.output
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.shape().len()).sum()
    }

    fn check_input<R: Real>(&self, x: &[R], n: usize) -> Result<()> {
        let need = n * self.shapes[0].numel();
        if n == 0 || x.len() != need {
            return Err(Error::Dim {
                axis: "batch",
                expected: need,
                got: x.len(),
                context: format!("graph input for batch {n}, feature shape {:?}", self.shapes[0]),
            });
        }
        Ok(())
    }

    /// Generic forward over all nodes. `get_param` supplies parameter data in
    /// the working precision; the f32 path borrows parameters directly.
    /// Shared forward walk. With `frozen`, every discrete branch decision
    /// (ReLU sign, pooling argmax, max-map channel) is pinned to the given
    /// f32 tape so the result is the smooth local function the analytic
    /// backward differentiates; see the gradcheck module.
    fn run_nodes<'p, R: Real + 'p>(
        &self,
        x: &[R],
        n: usize,
        get_param: &dyn Fn(usize) -> &'p [R],
        frozen: Option<&Tape>,
    ) -> Vec<Vec<R>>
    {
        let mut values: Vec<Vec<R>> = Vec::with_capacity(self.nodes.len());
        for (i, op) in self.nodes.iter().enumerate() {
            let v = match *op {
                Op::Input => x.to_vec(),
                Op::Conv2d { input, weight, bias, stride, pad } => {
                    let s = self.shapes[input.0];
                    let ws = self.params[weight.0].value.shape();
                    let dims = kernels::conv_dims(s.with_batch(n), ws, stride, pad)
                        .expect("validated at build");
                    kernels::conv2d_fwd(&values[input.0], &dims, get_param(weight.0), get_param(bias.0))
                }
                Op::Dense { input, weight, bias } => {
                    let s = self.shapes[input.0];
                    let out = self.params[weight.0].value.shape().n;
                    kernels::dense_fwd(&values[input.0], n, s.c, get_param(weight.0), get_param(bias.0), out)
                }
                Op::Activate { input, kind } => match (frozen, kind) {
                    (Some(t), ActivationKind::Relu) => {
                        kernels::activate_frozen_linear(&values[input.0], t.value(input), 0.0)
                    }
                    (Some(t), ActivationKind::LeakyRelu { slope }) => {
                        kernels::activate_frozen_linear(&values[input.0], t.value(input), slope)
                    }
                    _ => kernels::activate_fwd(&values[input.0], kind),
                },
                Op::MaxPool { input, k, stride, pad } => {
                    let s = self.shapes[input.0];
                    let dims = kernels::pool_dims(s.with_batch(n), k, stride, pad)
                        .expect("validated at build");
                    match frozen {
                        Some(t) => kernels::maxpool_gather(&values[input.0], t.value(input), &dims),
                        None => kernels::maxpool_fwd(&values[input.0], &dims),
                    }
                }
                Op::Upsample2x { input } => {
                    let s = self.shapes[input.0];
                    kernels::upsample2x_fwd(&values[input.0], n, s.c, s.h, s.w)
                }
                Op::Concat { a, b } => {
                    let (sa, sb) = (self.shapes[a.0], self.shapes[b.0]);
                    kernels::concat_channels_fwd(&values[a.0], &values[b.0], n, sa.c, sb.c, sa.h, sa.w)
                }
                Op::Slice { input, start, len } => {
                    let s = self.shapes[input.0];
                    kernels::slice_channels_fwd(&values[input.0], n, s.c, s.h, s.w, start, len)
                }
                Op::GlobalAvgPool { input } => {
                    let s = self.shapes[input.0];
                    kernels::global_avg_pool_fwd(&values[input.0], n, s.c, s.h, s.w)
                }
                Op::GlobalMaxPool { input } => {
                    let s = self.shapes[input.0];
                    match frozen {
                        Some(t) => kernels::global_max_pool_gather(
                            &values[input.0],
                            t.value(input),
                            n,
                            s.c,
                            s.h,
                            s.w,
                        ),
                        None => kernels::global_max_pool_fwd(&values[input.0], n, s.c, s.h, s.w),
                    }
                }
                Op::SpatialStats { input } => {
                    let s = self.shapes[input.0];
                    match frozen {
                        Some(t) => kernels::spatial_stats_gather(
                            &values[input.0],
                            t.value(input),
                            n,
                            s.c,
                            s.h,
                            s.w,
                        ),
                        None => kernels::spatial_stats_fwd(&values[input.0], n, s.c, s.h, s.w),
                    }
                }
                Op::Mul { a, b, broadcast } => {
                    let sa = self.shapes[a.0];
                    kernels::mul_fwd(&values[a.0], &values[b.0], n, sa.c, sa.h, sa.w, broadcast)
                }
                Op::Add { a, b } => kernels::add_fwd(&values[a.0], &values[b.0]),
            };
            debug_assert_eq!(v.len(), n * self.shapes[i].numel(), "node {i} size");
            values.push(v);
        }
        values
    }

    /// Forward pass, recording every node value for backward.
    pub fn forward(&self, x: &Tensor) -> Result<Tape> {
        let s = self.shapes[0];
        if x.shape().c != s.c || x.shape().h != s.h || x.shape().w != s.w {
            return Err(Error::Dim {
                axis: "channels",
                expected: s.c,
                got: x.shape().c,
                context: format!(
                    "graph expects ({},{},{}) features, got input {}",
                    s.c, s.h, s.w, x.shape()
                ),
            });
        }
        let n = x.shape().n;
        self.check_input(x.data(), n)?;
        let values = self.run_nodes(x.data(), n, &|i| self.params[i].value.data(), None);
        Ok(Tape { n, values })
    }

    /// Output of a recorded forward pass as a tensor.
    pub fn output_value(&self, tape: &Tape) -> Tensor {
        let s = self.output_shape();
        Tensor::from_vec(s.with_batch(tape.n), tape.values[self.output.0].clone())
            .expect("tape sizes are consistent")
    }

    /// Forward in arbitrary precision without keeping a tape (used by the
    /// finite-difference checker); parameters are converted per call.
    pub fn eval<R: Real>(&self, x: &[R], n: usize) -> Result<Vec<R>> {
        self.eval_inner(x, n, None)
    }

    /// Like `eval`, but with every discrete branch (ReLU sign, pooling
    /// argmax) pinned to the decisions recorded on the given tape.
    pub fn eval_frozen<R: Real>(&self, x: &[R], n: usize, tape: &Tape) -> Result<Vec<R>> {
        if tape.batch() != n {
            return Err(Error::Dim {
                axis: "batch",
                expected: tape.batch(),
                got: n,
                context: "eval_frozen tape batch".into(),
            });
        }
        self.eval_inner(x, n, Some(tape))
    }

    fn eval_inner<R: Real>(&self, x: &[R], n: usize, frozen: Option<&Tape>) -> Result<Vec<R>> {
        self.check_input(x, n)?;
        let params_r: Vec<Vec<R>> = self
            .params
            .iter()
            .map(|p| p.value.data().iter().map(|&v| R::from_f32(v)).collect())
            .collect();
        let mut values = self.run_nodes(x, n, &|i| &params_r[i][..], frozen);
        Ok(values.swap_remove(self.output.0))
    }

    /// Reverse pass. Accumulates parameter gradients in-place and returns the
    /// gradient w.r.t. the graph input.
    pub fn backward(&mut self, tape: &Tape, gout: &[f32]) -> Result<Vec<f32>> {
        let n = tape.n;
        let out_len = n * self.output_shape().numel();
        if gout.len() != out_len {
            return Err(Error::Dim {
                axis: "batch",
                expected: out_len,
                got: gout.len(),
                context: "output gradient".into(),
            });
        }
        let mut grads: Vec<Vec<f32>> = self
            .shapes
            .iter()
            .map(|s| vec![0.0f32; n * s.numel()])
            .collect();
        for (gv, &g) in grads[self.output.0].iter_mut().zip(gout) {
            *gv += g;
        }

        for i in (0..self.nodes.len()).rev() {
            let g = std::mem::take(&mut grads[i]);
            match self.nodes[i] {
                Op::Input => {
                    grads[i] = g; // restore; returned below
                }
                Op::Conv2d { input, weight, bias, stride, pad } => {
                    let s = self.shapes[input.0];
                    let ws = self.params[weight.0].value.shape();
                    let dims = kernels::conv_dims(s.with_batch(n), ws, stride, pad)
                        .expect("validated at build");
                    let (gx, gw, gb) = kernels::conv2d_bwd(
                        tape.value(input),
                        &dims,
                        self.params[weight.0].value.data(),
                        &g,
                    );
                    accumulate(&mut grads[input.0], &gx);
                    accumulate_param(&mut self.params[weight.0], &gw);
                    accumulate_param(&mut self.params[bias.0], &gb);
                }
                Op::Dense { input, weight, bias } => {
                    let s = self.shapes[input.0];
                    let out = self.params[weight.0].value.shape().n;
                    let (gx, gw, gb) = kernels::dense_bwd(
                        tape.value(input),
                        n,
                        s.c,
                        self.params[weight.0].value.data(),
                        out,
                        &g,
                    );
                    accumulate(&mut grads[input.0], &gx);
                    accumulate_param(&mut self.params[weight.0], &gw);
                    accumulate_param(&mut self.params[bias.0], &gb);
                }
                Op::Activate { input, kind } => {
                    let gx = kernels::activate_bwd(tape.value(input), kind, &g);
                    accumulate(&mut grads[input.0], &gx);
                }
                Op::MaxPool { input, k, stride, pad } => {
                    let s = self.shapes[input.0];
                    let dims = kernels::pool_dims(s.with_batch(n), k, stride, pad)
                        .expect("validated at build");
                    let gx = kernels::maxpool_bwd(tape.value(input), &dims, &g);
                    accumulate(&mut grads[input.0], &gx);
                }
                Op::Upsample2x { input } => {
                    let s = self.shapes[input.0];
                    let gx = kernels::upsample2x_bwd(&g, n, s.c, s.h, s.w);
                    accumulate(&mut grads[input.0], &gx);
                }
                Op::Concat { a, b } => {
                    let (sa, sb) = (self.shapes[a.0], self.shapes[b.0]);
                    let (ga, gb) = kernels::concat_channels_bwd(&g, n, sa.c, sb.c, sa.h, sa.w);
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Slice { input, start, len } => {
                    let s = self.shapes[input.0];
                    let gx = kernels::slice_channels_bwd(&g, n, s.c, s.h, s.w, start, len);
                    accumulate(&mut grads[input.0], &gx);
                }
                Op::GlobalAvgPool { input } => {
                    let s = self.shapes[input.0];
                    let gx = kernels::global_avg_pool_bwd(&g, n, s.c, s.h, s.w);
                    accumulate(&mut grads[input.0], &gx);
                }
                Op::GlobalMaxPool { input } => {
                    let s = self.shapes[input.0];
                    let gx = kernels::global_max_pool_bwd(tape.value(input), &g, n, s.c, s.h, s.w);
                    accumulate(&mut grads[input.0], &gx);
                }
                Op::SpatialStats { input } => {
                    let s = self.shapes[input.0];
                    let gx = kernels::spatial_stats_bwd(tape.value(input), &g, n, s.c, s.h, s.w);
                    accumulate(&mut grads[input.0], &gx);
                }
                Op::Mul { a, b, broadcast } => {
                    let sa = self.shapes[a.0];
                    let (ga, gb) = kernels::mul_bwd(
                        tape.value(a),
                        tape.value(b),
                        n,
                        sa.c,
                        sa.h,
                        sa.w,
                        broadcast,
                        &g,
                    );
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
            }
        }
        Ok(grads.swap_remove(0))
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.value.zero_grad();
        }
    }

    /// True if every parameter value is finite.
    pub fn params_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }
}

fn accumulate(dst: &mut [f32], src: &[f32]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn accumulate_param(p: &mut Parameter, grad: &[f32]) {
    accumulate(p.value.grad_mut(), grad);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn input_must_come_first() {
        let mut b = GraphBuilder::new(rng());
        let x = b.input(1, 2, 2).unwrap();
        assert!(b.input(1, 2, 2).is_err());
        let _ = x;
    }

    #[test]
    fn conv_shape_and_identity_kernel() {
        let mut b = GraphBuilder::new(rng());
        let x = b.input(1, 3, 3).unwrap();
        let y = b.conv2d(x, 1, 3, 1, 1, "c0").unwrap();
        assert_eq!(b.shape(y), FeatShape { c: 1, h: 3, w: 3 });
        let mut g = b.finish(y).unwrap();
        // overwrite with an identity kernel: center tap 1, bias 0
        let w = g.params_mut()[0].value.data_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        w[4] = 1.0;
        let input = Tensor::from_vec(
            Shape { n: 1, c: 1, h: 3, w: 3 },
            (1..=9).map(|v| v as f32).collect(),
        )
        .unwrap();
        let tape = g.forward(&input).unwrap();
        assert_eq!(g.output_value(&tape).data(), input.data());
    }

    #[test]
    fn fanout_accumulates_input_gradient() {
        // y = x + x, so dL/dx = 2 * gout
        let mut b = GraphBuilder::new(rng());
        let x = b.input(1, 1, 2).unwrap();
        let y = b.add(x, x).unwrap();
        let mut g = b.finish(y).unwrap();
        let input = Tensor::from_vec(Shape { n: 1, c: 1, h: 1, w: 2 }, vec![3.0, -1.0]).unwrap();
        let tape = g.forward(&input).unwrap();
        let gx = g.backward(&tape, &[1.0, 0.5]).unwrap();
        assert_eq!(gx, vec![2.0, 1.0]);
    }

    #[test]
    fn eval_matches_forward_in_f32() {
        let mut b = GraphBuilder::new(rng());
        let x = b.input(2, 4, 4).unwrap();
        let c = b.conv2d(x, 3, 3, 1, 1, "c0").unwrap();
        let a = b.activate(c, ActivationKind::Swish).unwrap();
        let p = b.maxpool(a, 2, 2, 0).unwrap();
        let g = b.finish(p).unwrap();
        let mut r = rng();
        let input = Tensor::uniform(Shape { n: 2, c: 2, h: 4, w: 4 }, -1.0, 1.0, &mut r);
        let tape = g.forward(&input).unwrap();
        let direct = g.eval::<f32>(input.data(), 2).unwrap();
        assert_eq!(g.output_value(&tape).data(), &direct[..]);
    }

    #[test]
    fn batch_flexibility() {
        let mut b = GraphBuilder::new(rng());
        let x = b.input(1, 2, 2).unwrap();
        let y = b.global_avg_pool(x);
        let g = b.finish(y).unwrap();
        for n in [1usize, 3, 5] {
            let input = Tensor::filled(Shape { n, c: 1, h: 2, w: 2 }, 0.25);
            let tape = g.forward(&input).unwrap();
            let out = g.output_value(&tape);
            assert_eq!(out.shape().n, n);
            assert!(out.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
        }
    }

    #[test]
    fn mismatched_input_is_rejected() {
        let mut b = GraphBuilder::new(rng());
        let x = b.input(3, 4, 4).unwrap();
        let g = b.finish(x).unwrap();
        let bad = Tensor::zeros(Shape { n: 1, c: 2, h: 4, w: 4 });
        assert!(g.forward(&bad).is_err());
    }

    #[test]
    fn odd_extent_pool_rejected() {
        let mut b = GraphBuilder::new(rng());
        let x = b.input(1, 5, 4).unwrap();
        assert!(b.maxpool(x, 2, 2, 0).is_err());
    }
}
