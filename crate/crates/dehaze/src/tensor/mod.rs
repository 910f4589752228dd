//! Minimal NCHW tensor engine with reverse-mode differentiation.
//!
//! Storage is single precision; reductions and the finite-difference
//! verification path accumulate in double precision. Layout is row-major
//! with width fastest: index = ((n*C + c)*H + y)*W + x.

mod graph;
mod gradcheck;
mod kernels;
mod optim;
pub mod ops;

pub use gradcheck::{
    builtin_layer_checks, gradcheck_graph, max_rel_error, run_full_suite, CheckResult,
    GradcheckOpts, GraphCheck, SuiteReport,
};
pub use graph::{FeatShape, Graph, GraphBuilder, NodeId, ParamId, Tape};
pub use kernels::Real;
pub use optim::{adam_step, adam_step_own};

use crate::error::{Error, Result};

/// Extents of a rank-4 tensor: batch, channels, height, width.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of (n, c, y, x).
    #[inline(always)]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 array with an optional gradient buffer of the same shape.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
            grad: None,
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
            grad: None,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Dim {
                axis: "len",
                expected: shape.len(),
                got: data.len(),
                context: format!("tensor data for shape {shape}"),
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    /// Uniform random values in [lo, hi), deterministic per rng state.
    pub fn uniform<R: rand::Rng>(shape: Shape, lo: f32, hi: f32, rng: &mut R) -> Self {
        let data = (0..shape.len()).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, zero-allocated on first use.
    pub fn grad_mut(&mut self) -> &mut [f32] {
        let len = self.shape.len();
        self.grad.get_or_insert_with(|| vec![0.0; len])
    }

    /// Split borrow: mutable value data alongside the (read-only) gradient.
    pub fn data_and_grad_mut(&mut self) -> (&mut [f32], &[f32]) {
        let len = self.shape.len();
        let grad = self.grad.get_or_insert_with(|| vec![0.0; len]);
        (&mut self.data, grad)
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean of all elements, accumulated in f64.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.data.iter().map(|&v| v as f64).sum();
        sum / self.data.len() as f64
    }

    /// Concatenate along the channel axis (no autograd; plain data op).
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape, b.shape);
        if sa.n != sb.n {
            return Err(Error::Dim {
                axis: "batch",
                expected: sa.n,
                got: sb.n,
                context: "concat_channels".into(),
            });
        }
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
        let out_shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
        let mut out = vec![0.0f32; out_shape.len()];
        let plane = sa.h * sa.w;
        for n in 0..sa.n {
            let dst = &mut out[n * out_shape.c * plane..(n + 1) * out_shape.c * plane];
            dst[..sa.c * plane].copy_from_slice(&a.data[n * sa.c * plane..(n + 1) * sa.c * plane]);
            dst[sa.c * plane..].copy_from_slice(&b.data[n * sb.c * plane..(n + 1) * sb.c * plane]);
        }
        Tensor::from_vec(out_shape, out)
    }

    /// Copy out a channel range (no autograd; plain data op).
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        if start + len > self.shape.c {
            return Err(Error::Dim {
                axis: "channels",
                expected: self.shape.c,
                got: start + len,
                context: "slice_channels range".into(),
            });
        }
        let s = self.shape;
        let out_shape = Shape::new(s.n, len, s.h, s.w);
        let plane = s.h * s.w;
        let mut out = vec![0.0f32; out_shape.len()];
        for n in 0..s.n {
            let src = &self.data[(n * s.c + start) * plane..(n * s.c + start + len) * plane];
            out[n * len * plane..(n + 1) * len * plane].copy_from_slice(src);
        }
        Tensor::from_vec(out_shape, out)
    }
}

/// Trainable tensor with Adam moment buffers.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let len = value.shape().len();
        Parameter {
            name: name.into(),
            value,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }
}

/// Elementwise nonlinearity selector.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum ActivationKind {
    Relu,
    LeakyRelu { slope: f32 },
    Swish,
    Mish,
    Sigmoid,
    Identity,
}

impl ActivationKind {
    pub fn validate(&self) -> Result<()> {
        if let ActivationKind::LeakyRelu { slope } = self {
            if !(*slope > 0.0 && *slope < 1.0) {
                return Err(Error::Param(format!(
                    "leaky_relu slope must be in (0,1), got {slope}"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActivationKind::Relu => write!(f, "relu"),
            ActivationKind::LeakyRelu { .. } => write!(f, "leaky_relu"),
            ActivationKind::Swish => write!(f, "swish"),
            ActivationKind::Mish => write!(f, "mish"),
            ActivationKind::Sigmoid => write!(f, "sigmoid"),
            ActivationKind::Identity => write!(f, "identity"),
        }
    }
}
