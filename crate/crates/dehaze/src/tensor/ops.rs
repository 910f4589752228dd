//! Tensor-level forward operations.
//!
//! These wrap the raw kernels with shape validation for callers that want a
//! single op without assembling a [`Graph`](super::Graph) (the DCP pipeline,
//! metrics, tests). Training and backpropagation go through the graph, which
//! reuses the same kernels.

use super::kernels::{self, Real};
use super::{ActivationKind, Shape, Tensor};
use crate::error::{Error, Result};

/// 2-D convolution, zero padding. Weight layout (outC, inC, kH, kW), bias one
/// value per output channel.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &[f32],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let dims = kernels::conv_dims(input.shape(), weight.shape(), stride, padding)?;
    if bias.len() != dims.c_out {
        return Err(Error::Dim {
            axis: "channels",
            expected: dims.c_out,
            got: bias.len(),
            context: "conv2d bias length".into(),
        });
    }
    let out = kernels::conv2d_fwd(input.data(), &dims, weight.data(), bias);
    Tensor::from_vec(Shape::new(dims.n, dims.c_out, dims.h_out, dims.w_out), out)
}

/// Max pooling. `k = stride` with divisible extents is the downsampling mode;
/// `stride = 1` with `pad = (k-1)/2` is the SPP mode.
pub fn maxpool2d(input: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let dims = kernels::pool_dims(input.shape(), k, stride, pad)?;
    if k == stride && pad == 0 && (dims.h % k != 0 || dims.w % k != 0) {
        return Err(Error::Dim {
            axis: "height",
            expected: dims.h / k * k,
            got: dims.h,
            context: format!("maxpool {k}x{k} needs extents divisible by {k}"),
        });
    }
    let out = kernels::maxpool_fwd(input.data(), &dims);
    Tensor::from_vec(Shape::new(dims.n, dims.c, dims.h_out, dims.w_out), out)
}

pub fn upsample_nearest2x(input: &Tensor) -> Tensor {
    let s = input.shape();
    let out = kernels::upsample2x_fwd(input.data(), s.n, s.c, s.h, s.w);
    Tensor::from_vec(Shape::new(s.n, s.c, 2 * s.h, 2 * s.w), out).expect("upsample size")
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Tensor::concat_channels(a, b)
}

pub fn slice_channels(input: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    input.slice_channels(start, len)
}

pub fn activate(input: &Tensor, kind: ActivationKind) -> Result<Tensor> {
    kind.validate()?;
    let out = kernels::activate_fwd(input.data(), kind);
    Tensor::from_vec(input.shape(), out)
}

/// Exact derivative of an activation at pre-activation `x`.
pub fn activation_derivative(x: f32, kind: ActivationKind) -> f32 {
    kernels::activate_deriv(x, kind)
}

/// Affine map on (n,c,1,1) tensors. Weight layout (out, c), bias length out.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &[f32]) -> Result<Tensor> {
    let s = input.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::Dim {
            axis: "height",
            expected: 1,
            got: s.h,
            context: "dense expects a (n,c,1,1) input".into(),
        });
    }
    let ws = weight.shape();
    if ws.c != s.c {
        return Err(Error::Dim {
            axis: "channels",
            expected: ws.c,
            got: s.c,
            context: "dense input vs weight".into(),
        });
    }
    if bias.len() != ws.n {
        return Err(Error::Dim {
            axis: "channels",
            expected: ws.n,
            got: bias.len(),
            context: "dense bias length".into(),
        });
    }
    let out = kernels::dense_fwd(input.data(), s.n, s.c, weight.data(), bias, ws.n);
    Tensor::from_vec(Shape::new(s.n, ws.n, 1, 1), out)
}

pub fn global_avg_pool(input: &Tensor) -> Tensor {
    let s = input.shape();
    let out = kernels::global_avg_pool_fwd(input.data(), s.n, s.c, s.h, s.w);
    Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), out).expect("gap size")
}

pub fn global_max_pool(input: &Tensor) -> Tensor {
    let s = input.shape();
    let out = kernels::global_max_pool_fwd(input.data(), s.n, s.c, s.h, s.w);
    Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), out).expect("gmp size")
}

/// Forward evaluation of one activation in arbitrary precision (used by the
/// finite-difference tests).
pub fn activate_scalar<R: Real>(x: R, kind: ActivationKind) -> R {
    kernels::activate_one(x, kind)
}
