//! Raw compute kernels on flat buffers.
//!
//! Forward kernels are generic over [`Real`] so the gradient checker can
//! rerun the exact same code in f64. Backward kernels are f32-only (the
//! training path). Reductions accumulate in f64 regardless of storage width.

use super::{ActivationKind, Shape};
use crate::error::{Error, Result};

/// Floating-point scalar the forward kernels are generic over.
pub trait Real:
    Copy
    + PartialOrd
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln_1p(self) -> Self;
    fn tanh(self) -> Self;
    fn maxv(self, o: Self) -> Self;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline(always)]
    fn from_f32(v: f32) -> Self {
        v
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn exp(self) -> Self {
        f32::exp(self)
    }
    #[inline(always)]
    fn ln_1p(self) -> Self {
        f32::ln_1p(self)
    }
    #[inline(always)]
    fn tanh(self) -> Self {
        f32::tanh(self)
    }
    #[inline(always)]
    fn maxv(self, o: Self) -> Self {
        f32::max(self, o)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline(always)]
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline(always)]
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline(always)]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline(always)]
    fn maxv(self, o: Self) -> Self {
        f64::max(self, o)
    }
}

/// Numerically stable logistic function.
#[inline(always)]
pub fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::ZERO {
        R::ONE / (R::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::ONE + e)
    }
}

/// softplus(x) = ln(1 + e^x), overflow-free.
#[inline(always)]
fn softplus<R: Real>(x: R) -> R {
    x.maxv(R::ZERO) + (-(x.maxv(-x))).exp().ln_1p()
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Validated geometry shared by the conv forward and backward kernels.
#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

pub fn conv_dims(input: Shape, weight: Shape, stride: usize, pad: usize) -> Result<ConvDims> {
    if stride < 1 {
        return Err(Error::Param("conv2d stride must be >= 1".into()));
    }
    if input.c != weight.c {
        return Err(Error::Dim {
            axis: "channels",
            expected: weight.c,
            got: input.c,
            context: "conv2d input channels vs weight in-channels".into(),
        });
    }
    if input.h + 2 * pad < weight.h {
        return Err(Error::Dim {
            axis: "height",
            expected: weight.h,
            got: input.h + 2 * pad,
            context: "conv2d kernel exceeds padded input".into(),
        });
    }
    if input.w + 2 * pad < weight.w {
        return Err(Error::Dim {
            axis: "width",
            expected: weight.w,
            got: input.w + 2 * pad,
            context: "conv2d kernel exceeds padded input".into(),
        });
    }
    Ok(ConvDims {
        n: input.n,
        c_in: input.c,
        h: input.h,
        w: input.w,
        c_out: weight.n,
        kh: weight.h,
        kw: weight.w,
        stride,
        pad,
        h_out: (input.h + 2 * pad - weight.h) / stride + 1,
        w_out: (input.w + 2 * pad - weight.w) / stride + 1,
    })
}

/// Zero-pad each spatial plane by `pad` on all sides.
fn pad_planes<R: Real>(x: &[R], planes: usize, h: usize, w: usize, pad: usize) -> Vec<R> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![R::ZERO; planes * hp * wp];
    for p in 0..planes {
        for y in 0..h {
            let src = &x[(p * h + y) * w..(p * h + y) * w + w];
            let dst = &mut out[(p * hp + y + pad) * wp + pad..];
            dst[..w].copy_from_slice(src);
        }
    }
    out
}

pub fn conv2d_fwd<R: Real>(x: &[R], d: &ConvDims, weight: &[R], bias: &[R]) -> Vec<R> {
    let (hp, wp) = (d.h + 2 * d.pad, d.w + 2 * d.pad);
    let padded;
    let xp: &[R] = if d.pad == 0 {
        x
    } else {
        padded = pad_planes(x, d.n * d.c_in, d.h, d.w, d.pad);
        &padded
    };

    let out_plane = d.h_out * d.w_out;
    let mut out = vec![R::ZERO; d.n * d.c_out * out_plane];
    for n in 0..d.n {
        for oc in 0..d.c_out {
            let o = &mut out[(n * d.c_out + oc) * out_plane..][..out_plane];
            o.iter_mut().for_each(|v| *v = bias[oc]);
            for ic in 0..d.c_in {
                let xplane = &xp[(n * d.c_in + ic) * hp * wp..][..hp * wp];
                for kh in 0..d.kh {
                    for kw in 0..d.kw {
                        let wv = weight[((oc * d.c_in + ic) * d.kh + kh) * d.kw + kw];
                        for oh in 0..d.h_out {
                            let irow = &xplane[(oh * d.stride + kh) * wp + kw..];
                            let orow = &mut o[oh * d.w_out..][..d.w_out];
                            if d.stride == 1 {
                                // contiguous inner loop, vectorizes
                                for (ov, &iv) in orow.iter_mut().zip(&irow[..d.w_out]) {
                                    *ov = *ov + wv * iv;
                                }
                            } else {
                                for (ow, ov) in orow.iter_mut().enumerate() {
                                    *ov = *ov + wv * irow[ow * d.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients w.r.t. input, weight, and bias.
pub fn conv2d_bwd(
    x: &[f32],
    d: &ConvDims,
    weight: &[f32],
    gout: &[f32],
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let (hp, wp) = (d.h + 2 * d.pad, d.w + 2 * d.pad);
    let padded;
    let xp: &[f32] = if d.pad == 0 {
        x
    } else {
        padded = pad_planes(x, d.n * d.c_in, d.h, d.w, d.pad);
        &padded
    };
    let out_plane = d.h_out * d.w_out;

    // bias: plain sums over the output planes
    let mut gb = vec![0.0f32; d.c_out];
    for oc in 0..d.c_out {
        let mut acc = 0.0f64;
        for n in 0..d.n {
            let o = &gout[(n * d.c_out + oc) * out_plane..][..out_plane];
            acc += o.iter().map(|&v| v as f64).sum::<f64>();
        }
        gb[oc] = acc as f32;
    }

    // weight: row dot products accumulated across rows in f64
    let mut gw = vec![0.0f32; d.c_out * d.c_in * d.kh * d.kw];
    for oc in 0..d.c_out {
        for ic in 0..d.c_in {
            for kh in 0..d.kh {
                for kw in 0..d.kw {
                    let mut acc = 0.0f64;
                    for n in 0..d.n {
                        let g = &gout[(n * d.c_out + oc) * out_plane..][..out_plane];
                        let xplane = &xp[(n * d.c_in + ic) * hp * wp..][..hp * wp];
                        for oh in 0..d.h_out {
                            let grow = &g[oh * d.w_out..][..d.w_out];
                            let irow = &xplane[(oh * d.stride + kh) * wp + kw..];
                            if d.stride == 1 {
                                for (&gv, &iv) in grow.iter().zip(&irow[..d.w_out]) {
                                    acc += gv as f64 * iv as f64;
                                }
                            } else {
                                for (ow, &gv) in grow.iter().enumerate() {
                                    acc += gv as f64 * irow[ow * d.stride] as f64;
                                }
                            }
                        }
                    }
                    gw[((oc * d.c_in + ic) * d.kh + kh) * d.kw + kw] = acc as f32;
                }
            }
        }
    }

    // input: scatter into an f64 padded buffer (many overlapping
    // contributions; single-precision accumulation here fails the tight
    // linear-graph gradient checks), then crop and cast the interior
    let mut gxp = vec![0.0f64; d.n * d.c_in * hp * wp];
    for n in 0..d.n {
        for oc in 0..d.c_out {
            let g = &gout[(n * d.c_out + oc) * out_plane..][..out_plane];
            for ic in 0..d.c_in {
                let gplane = &mut gxp[(n * d.c_in + ic) * hp * wp..][..hp * wp];
                for kh in 0..d.kh {
                    for kw in 0..d.kw {
                        let wv = weight[((oc * d.c_in + ic) * d.kh + kh) * d.kw + kw] as f64;
                        for oh in 0..d.h_out {
                            let grow = &g[oh * d.w_out..][..d.w_out];
                            let xrow = &mut gplane[(oh * d.stride + kh) * wp + kw..];
                            if d.stride == 1 {
                                for (xv, &gv) in xrow[..d.w_out].iter_mut().zip(grow) {
                                    *xv += wv * gv as f64;
                                }
                            } else {
                                for (ow, &gv) in grow.iter().enumerate() {
                                    xrow[ow * d.stride] += wv * gv as f64;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut gx = vec![0.0f32; d.n * d.c_in * d.h * d.w];
    for p in 0..d.n * d.c_in {
        for y in 0..d.h {
            let src = &gxp[(p * hp + y + d.pad) * wp + d.pad..];
            let dst = &mut gx[(p * d.h + y) * d.w..(p * d.h + y) * d.w + d.w];
            for (o, &v) in dst.iter_mut().zip(&src[..d.w]) {
                *o = v as f32;
            }
        }
    }
    (gx, gw, gb)
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct PoolDims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

pub fn pool_dims(input: Shape, k: usize, stride: usize, pad: usize) -> Result<PoolDims> {
    if k < 1 || stride < 1 {
        return Err(Error::Param("maxpool window and stride must be >= 1".into()));
    }
    if pad >= k {
        return Err(Error::Param(format!(
            "maxpool pad {pad} must be smaller than window {k}"
        )));
    }
    if input.h + 2 * pad < k {
        return Err(Error::Dim {
            axis: "height",
            expected: k,
            got: input.h + 2 * pad,
            context: "maxpool window exceeds padded input".into(),
        });
    }
    if input.w + 2 * pad < k {
        return Err(Error::Dim {
            axis: "width",
            expected: k,
            got: input.w + 2 * pad,
            context: "maxpool window exceeds padded input".into(),
        });
    }
    Ok(PoolDims {
        n: input.n,
        c: input.c,
        h: input.h,
        w: input.w,
        k,
        stride,
        pad,
        h_out: (input.h + 2 * pad - k) / stride + 1,
        w_out: (input.w + 2 * pad - k) / stride + 1,
    })
}

/// Max over each window; cells outside the input act as -inf and never win.
/// Ties resolve to the first cell in row-major window order.
pub fn maxpool_fwd<R: Real>(x: &[R], d: &PoolDims) -> Vec<R> {
    let plane = d.h * d.w;
    let out_plane = d.h_out * d.w_out;
    let mut out = vec![R::ZERO; d.n * d.c * out_plane];
    for p in 0..d.n * d.c {
        let xplane = &x[p * plane..][..plane];
        let o = &mut out[p * out_plane..][..out_plane];
        for oh in 0..d.h_out {
            for ow in 0..d.w_out {
                let y0 = oh * d.stride;
                let x0 = ow * d.stride;
                let mut best: Option<R> = None;
                for ky in 0..d.k {
                    let iy = (y0 + ky).wrapping_sub(d.pad);
                    if iy >= d.h {
                        continue;
                    }
                    for kx in 0..d.k {
                        let ix = (x0 + kx).wrapping_sub(d.pad);
                        if ix >= d.w {
                            continue;
                        }
                        let v = xplane[iy * d.w + ix];
                        best = match best {
                            None => Some(v),
                            Some(b) => Some(if v > b { v } else { b }),
                        };
                    }
                }
                o[oh * d.w_out + ow] = best.unwrap_or(R::ZERO);
            }
        }
    }
    out
}

/// Routes each output gradient to its window argmax (first occurrence on ties).
/// Winning input position (plane-relative) per pooled output: the first
/// occurrence of the window maximum, matching `maxpool_fwd`'s tie rule. The
/// backward routing and the gate-frozen evaluation must agree on this.
pub fn maxpool_argmax(x: &[f32], d: &PoolDims) -> Vec<usize> {
    let plane = d.h * d.w;
    let out_plane = d.h_out * d.w_out;
    let mut arg = vec![usize::MAX; d.n * d.c * out_plane];
    for p in 0..d.n * d.c {
        let xplane = &x[p * plane..][..plane];
        let a = &mut arg[p * out_plane..][..out_plane];
        for oh in 0..d.h_out {
            for ow in 0..d.w_out {
                let y0 = oh * d.stride;
                let x0 = ow * d.stride;
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for ky in 0..d.k {
                    let iy = (y0 + ky).wrapping_sub(d.pad);
                    if iy >= d.h {
                        continue;
                    }
                    for kx in 0..d.k {
                        let ix = (x0 + kx).wrapping_sub(d.pad);
                        if ix >= d.w {
                            continue;
                        }
                        let v = xplane[iy * d.w + ix];
                        if best_idx == usize::MAX || v > best {
                            best = v;
                            best_idx = iy * d.w + ix;
                        }
                    }
                }
                a[oh * d.w_out + ow] = best_idx;
            }
        }
    }
    arg
}

pub fn maxpool_bwd(x: &[f32], d: &PoolDims, gout: &[f32]) -> Vec<f32> {
    let plane = d.h * d.w;
    let out_plane = d.h_out * d.w_out;
    let arg = maxpool_argmax(x, d);
    let mut gx = vec![0.0f32; d.n * d.c * plane];
    for p in 0..d.n * d.c {
        let g = &gout[p * out_plane..][..out_plane];
        let a = &arg[p * out_plane..][..out_plane];
        let gplane = &mut gx[p * plane..][..plane];
        for (&idx, &gv) in a.iter().zip(g) {
            if idx != usize::MAX {
                gplane[idx] += gv;
            }
        }
    }
    gx
}

/// Max pooling with the window winners pinned to the reference values:
/// gathers from `x` at the positions `ref32` selects.
pub fn maxpool_gather<R: Real>(x: &[R], ref32: &[f32], d: &PoolDims) -> Vec<R> {
    let plane = d.h * d.w;
    let out_plane = d.h_out * d.w_out;
    let arg = maxpool_argmax(ref32, d);
    let mut out = vec![R::ZERO; d.n * d.c * out_plane];
    for p in 0..d.n * d.c {
        let xplane = &x[p * plane..][..plane];
        let a = &arg[p * out_plane..][..out_plane];
        let o = &mut out[p * out_plane..][..out_plane];
        for (ov, &idx) in o.iter_mut().zip(a) {
            if idx != usize::MAX {
                *ov = xplane[idx];
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling
// ---------------------------------------------------------------------------

pub fn upsample2x_fwd<R: Real>(x: &[R], n: usize, c: usize, h: usize, w: usize) -> Vec<R> {
    let mut out = vec![R::ZERO; n * c * 4 * h * w];
    let (h2, w2) = (2 * h, 2 * w);
    for p in 0..n * c {
        let xplane = &x[p * h * w..][..h * w];
        let o = &mut out[p * h2 * w2..][..h2 * w2];
        for y in 0..h {
            for x_ in 0..w {
                let v = xplane[y * w + x_];
                let base = 2 * y * w2 + 2 * x_;
                o[base] = v;
                o[base + 1] = v;
                o[base + w2] = v;
                o[base + w2 + 1] = v;
            }
        }
    }
    out
}

pub fn upsample2x_bwd(gout: &[f32], n: usize, c: usize, h: usize, w: usize) -> Vec<f32> {
    let mut gx = vec![0.0f32; n * c * h * w];
    let (h2, w2) = (2 * h, 2 * w);
    for p in 0..n * c {
        let g = &gout[p * h2 * w2..][..h2 * w2];
        let gplane = &mut gx[p * h * w..][..h * w];
        for y in 0..h {
            for x_ in 0..w {
                let base = 2 * y * w2 + 2 * x_;
                gplane[y * w + x_] = (g[base] as f64
                    + g[base + 1] as f64
                    + g[base + w2] as f64
                    + g[base + w2 + 1] as f64) as f32;
            }
        }
    }
    gx
}

// ---------------------------------------------------------------------------
// Channel concat / slice
// ---------------------------------------------------------------------------

pub fn concat_channels_fwd<R: Real>(
    a: &[R],
    b: &[R],
    n: usize,
    ca: usize,
    cb: usize,
    h: usize,
    w: usize,
) -> Vec<R> {
    let plane = h * w;
    let mut out = vec![R::ZERO; n * (ca + cb) * plane];
    for i in 0..n {
        let dst = &mut out[i * (ca + cb) * plane..][..(ca + cb) * plane];
        dst[..ca * plane].copy_from_slice(&a[i * ca * plane..][..ca * plane]);
        dst[ca * plane..].copy_from_slice(&b[i * cb * plane..][..cb * plane]);
    }
    out
}

pub fn concat_channels_bwd(
    gout: &[f32],
    n: usize,
    ca: usize,
    cb: usize,
    h: usize,
    w: usize,
) -> (Vec<f32>, Vec<f32>) {
    let plane = h * w;
    let mut ga = vec![0.0f32; n * ca * plane];
    let mut gb = vec![0.0f32; n * cb * plane];
    for i in 0..n {
        let src = &gout[i * (ca + cb) * plane..][..(ca + cb) * plane];
        ga[i * ca * plane..][..ca * plane].copy_from_slice(&src[..ca * plane]);
        gb[i * cb * plane..][..cb * plane].copy_from_slice(&src[ca * plane..]);
    }
    (ga, gb)
}

pub fn slice_channels_fwd<R: Real>(
    x: &[R],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    start: usize,
    len: usize,
) -> Vec<R> {
    let plane = h * w;
    let mut out = vec![R::ZERO; n * len * plane];
    for i in 0..n {
        let src = &x[(i * c + start) * plane..][..len * plane];
        out[i * len * plane..][..len * plane].copy_from_slice(src);
    }
    out
}

pub fn slice_channels_bwd(
    gout: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    start: usize,
    len: usize,
) -> Vec<f32> {
    let plane = h * w;
    let mut gx = vec![0.0f32; n * c * plane];
    for i in 0..n {
        let dst = &mut gx[(i * c + start) * plane..][..len * plane];
        dst.copy_from_slice(&gout[i * len * plane..][..len * plane]);
    }
    gx
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

#[inline(always)]
pub fn activate_one<R: Real>(x: R, kind: ActivationKind) -> R {
    match kind {
        ActivationKind::Relu => x.maxv(R::ZERO),
        ActivationKind::LeakyRelu { slope } => {
            if x >= R::ZERO {
                x
            } else {
                R::from_f32(slope) * x
            }
        }
        ActivationKind::Swish => x * sigmoid(x),
        ActivationKind::Mish => x * softplus(x).tanh(),
        ActivationKind::Sigmoid => sigmoid(x),
        ActivationKind::Identity => x,
    }
}

/// Exact derivative of each activation at pre-activation value `x`.
#[inline(always)]
pub fn activate_deriv(x: f32, kind: ActivationKind) -> f32 {
    match kind {
        ActivationKind::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::LeakyRelu { slope } => {
            if x > 0.0 {
                1.0
            } else {
                slope
            }
        }
        ActivationKind::Swish => {
            let s = sigmoid(x);
            s * (1.0 + x * (1.0 - s))
        }
        ActivationKind::Mish => {
            let t = softplus(x).tanh();
            t + x * (1.0 - t * t) * sigmoid(x)
        }
        ActivationKind::Sigmoid => {
            let s = sigmoid(x);
            s * (1.0 - s)
        }
        ActivationKind::Identity => 1.0,
    }
}

pub fn activate_fwd<R: Real>(x: &[R], kind: ActivationKind) -> Vec<R> {
    x.iter().map(|&v| activate_one(v, kind)).collect()
}

pub fn activate_bwd(x: &[f32], kind: ActivationKind, gout: &[f32]) -> Vec<f32> {
    x.iter()
        .zip(gout)
        .map(|(&v, &g)| g * activate_deriv(v, kind))
        .collect()
}

// ---------------------------------------------------------------------------
// Dense (1x1 spatial affine map)
// ---------------------------------------------------------------------------

pub fn dense_fwd<R: Real>(x: &[R], n: usize, c: usize, weight: &[R], bias: &[R], out: usize) -> Vec<R> {
    let mut y = vec![R::ZERO; n * out];
    for i in 0..n {
        for o in 0..out {
            let mut acc = bias[o].to_f64();
            for j in 0..c {
                acc += (weight[o * c + j] * x[i * c + j]).to_f64();
            }
            y[i * out + o] = R::from_f64(acc);
        }
    }
    y
}

pub fn dense_bwd(
    x: &[f32],
    n: usize,
    c: usize,
    weight: &[f32],
    out: usize,
    gout: &[f32],
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0f32; n * c];
    let mut gw = vec![0.0f32; out * c];
    let mut gb = vec![0.0f32; out];
    for o in 0..out {
        let mut acc = 0.0f64;
        for i in 0..n {
            acc += gout[i * out + o] as f64;
        }
        gb[o] = acc as f32;
    }
    for o in 0..out {
        for j in 0..c {
            let mut acc = 0.0f64;
            for i in 0..n {
                acc += (gout[i * out + o] * x[i * c + j]) as f64;
            }
            gw[o * c + j] = acc as f32;
        }
    }
    for i in 0..n {
        for j in 0..c {
            let mut acc = 0.0f64;
            for o in 0..out {
                acc += (gout[i * out + o] * weight[o * c + j]) as f64;
            }
            gx[i * c + j] = acc as f32;
        }
    }
    (gx, gw, gb)
}

// ---------------------------------------------------------------------------
// Global pools and per-pixel channel statistics
// ---------------------------------------------------------------------------

pub fn global_avg_pool_fwd<R: Real>(x: &[R], n: usize, c: usize, h: usize, w: usize) -> Vec<R> {
    let plane = h * w;
    let mut out = vec![R::ZERO; n * c];
    for p in 0..n * c {
        let sum: f64 = x[p * plane..][..plane].iter().map(|v| v.to_f64()).sum();
        out[p] = R::from_f64(sum / plane as f64);
    }
    out
}

pub fn global_avg_pool_bwd(gout: &[f32], n: usize, c: usize, h: usize, w: usize) -> Vec<f32> {
    let plane = h * w;
    let mut gx = vec![0.0f32; n * c * plane];
    for p in 0..n * c {
        let g = gout[p] / plane as f32;
        gx[p * plane..][..plane].iter_mut().for_each(|v| *v = g);
    }
    gx
}

pub fn global_max_pool_fwd<R: Real>(x: &[R], n: usize, c: usize, h: usize, w: usize) -> Vec<R> {
    let plane = h * w;
    let mut out = vec![R::ZERO; n * c];
    for p in 0..n * c {
        let s = &x[p * plane..][..plane];
        let mut best = s[0];
        for &v in &s[1..] {
            if v > best {
                best = v;
            }
        }
        out[p] = best;
    }
    out
}

/// First-occurrence argmax per plane, shared by backward and frozen eval.
pub fn global_max_argmax(x: &[f32], n: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    let plane = h * w;
    let mut arg = vec![0usize; n * c];
    for p in 0..n * c {
        let s = &x[p * plane..][..plane];
        let mut best = s[0];
        let mut idx = 0;
        for (i, &v) in s.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                idx = i;
            }
        }
        arg[p] = idx;
    }
    arg
}

pub fn global_max_pool_bwd(x: &[f32], gout: &[f32], n: usize, c: usize, h: usize, w: usize) -> Vec<f32> {
    let plane = h * w;
    let arg = global_max_argmax(x, n, c, h, w);
    let mut gx = vec![0.0f32; n * c * plane];
    for p in 0..n * c {
        gx[p * plane + arg[p]] = gout[p];
    }
    gx
}

pub fn global_max_pool_gather<R: Real>(
    x: &[R],
    ref32: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<R> {
    let plane = h * w;
    let arg = global_max_argmax(ref32, n, c, h, w);
    (0..n * c).map(|p| x[p * plane + arg[p]]).collect()
}

/// Per-pixel channel mean and channel max: (n,c,h,w) -> (n,2,h,w).
pub fn spatial_stats_fwd<R: Real>(x: &[R], n: usize, c: usize, h: usize, w: usize) -> Vec<R> {
    let plane = h * w;
    let mut out = vec![R::ZERO; n * 2 * plane];
    for i in 0..n {
        for px in 0..plane {
            let mut sum = 0.0f64;
            let mut best = x[(i * c) * plane + px];
            for ch in 0..c {
                let v = x[(i * c + ch) * plane + px];
                sum += v.to_f64();
                if v > best {
                    best = v;
                }
            }
            out[(i * 2) * plane + px] = R::from_f64(sum / c as f64);
            out[(i * 2 + 1) * plane + px] = best;
        }
    }
    out
}

/// Winning channel per pixel for the max map, shared by backward and frozen
/// eval.
pub fn spatial_stats_argmax(x: &[f32], n: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    let plane = h * w;
    let mut arg = vec![0usize; n * plane];
    for i in 0..n {
        for px in 0..plane {
            let mut best = x[(i * c) * plane + px];
            let mut best_ch = 0;
            for ch in 1..c {
                let v = x[(i * c + ch) * plane + px];
                if v > best {
                    best = v;
                    best_ch = ch;
                }
            }
            arg[i * plane + px] = best_ch;
        }
    }
    arg
}

pub fn spatial_stats_bwd(x: &[f32], gout: &[f32], n: usize, c: usize, h: usize, w: usize) -> Vec<f32> {
    let plane = h * w;
    let arg = spatial_stats_argmax(x, n, c, h, w);
    let mut gx = vec![0.0f32; n * c * plane];
    for i in 0..n {
        for px in 0..plane {
            let gmean = gout[(i * 2) * plane + px] / c as f32;
            for ch in 0..c {
                gx[(i * c + ch) * plane + px] += gmean;
            }
            let gmax = gout[(i * 2 + 1) * plane + px];
            gx[(i * c + arg[i * plane + px]) * plane + px] += gmax;
        }
    }
    gx
}

/// `spatial_stats_fwd` with the max-map channel selection pinned to the
/// reference values.
pub fn spatial_stats_gather<R: Real>(
    x: &[R],
    ref32: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<R> {
    let plane = h * w;
    let arg = spatial_stats_argmax(ref32, n, c, h, w);
    let mut out = vec![R::ZERO; n * 2 * plane];
    for i in 0..n {
        for px in 0..plane {
            let mut sum = 0.0f64;
            for ch in 0..c {
                sum += x[(i * c + ch) * plane + px].to_f64();
            }
            out[(i * 2) * plane + px] = R::from_f64(sum / c as f64);
            out[(i * 2 + 1) * plane + px] = x[(i * c + arg[i * plane + px]) * plane + px];
        }
    }
    out
}

/// Piecewise-linear activations with the branch decisions pinned to the
/// reference pre-activations, mirroring `activate_deriv`'s `> 0` convention.
pub fn activate_frozen_linear<R: Real>(x: &[R], ref32: &[f32], slope: f32) -> Vec<R> {
    x.iter()
        .zip(ref32)
        .map(|(&v, &r)| if r > 0.0 { v } else { R::from_f32(slope) * v })
        .collect()
}

// ---------------------------------------------------------------------------
// Broadcast multiply and elementwise add
// ---------------------------------------------------------------------------

/// Broadcast pattern of the gate operand in a gated multiply.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Broadcast {
    /// Same shape as the other operand.
    Full,
    /// Gate is (n,1,h,w), broadcast over channels.
    Spatial,
    /// Gate is (n,c,1,1), broadcast over pixels.
    Channel,
}

pub fn mul_fwd<R: Real>(a: &[R], b: &[R], n: usize, c: usize, h: usize, w: usize, bc: Broadcast) -> Vec<R> {
    let plane = h * w;
    let mut out = vec![R::ZERO; n * c * plane];
    match bc {
        Broadcast::Full => {
            for (o, (&av, &bv)) in out.iter_mut().zip(a.iter().zip(b)) {
                *o = av * bv;
            }
        }
        Broadcast::Spatial => {
            for i in 0..n {
                let gate = &b[i * plane..][..plane];
                for ch in 0..c {
                    let ap = &a[(i * c + ch) * plane..][..plane];
                    let op = &mut out[(i * c + ch) * plane..][..plane];
                    for ((o, &av), &gv) in op.iter_mut().zip(ap).zip(gate) {
                        *o = av * gv;
                    }
                }
            }
        }
        Broadcast::Channel => {
            for i in 0..n {
                for ch in 0..c {
                    let gv = b[i * c + ch];
                    let ap = &a[(i * c + ch) * plane..][..plane];
                    let op = &mut out[(i * c + ch) * plane..][..plane];
                    for (o, &av) in op.iter_mut().zip(ap) {
                        *o = av * gv;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn mul_bwd(
    a: &[f32],
    b: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    bc: Broadcast,
    gout: &[f32],
) -> (Vec<f32>, Vec<f32>) {
    let plane = h * w;
    let mut ga = vec![0.0f32; n * c * plane];
    let gb_len = match bc {
        Broadcast::Full => n * c * plane,
        Broadcast::Spatial => n * plane,
        Broadcast::Channel => n * c,
    };
    let mut gb = vec![0.0f32; gb_len];
    match bc {
        Broadcast::Full => {
            for i in 0..ga.len() {
                ga[i] = gout[i] * b[i];
                gb[i] = gout[i] * a[i];
            }
        }
        Broadcast::Spatial => {
            for i in 0..n {
                for px in 0..plane {
                    let gv = b[i * plane + px];
                    let mut acc = 0.0f64;
                    for ch in 0..c {
                        let idx = (i * c + ch) * plane + px;
                        ga[idx] = gout[idx] * gv;
                        acc += (gout[idx] * a[idx]) as f64;
                    }
                    gb[i * plane + px] = acc as f32;
                }
            }
        }
        Broadcast::Channel => {
            for i in 0..n {
                for ch in 0..c {
                    let gv = b[i * c + ch];
                    let ap = &a[(i * c + ch) * plane..][..plane];
                    let gp = &gout[(i * c + ch) * plane..][..plane];
                    let gap = &mut ga[(i * c + ch) * plane..][..plane];
                    let mut acc = 0.0f64;
                    for ((gav, &av), &gov) in gap.iter_mut().zip(ap).zip(gp) {
                        *gav = gov * gv;
                        acc += (gov * av) as f64;
                    }
                    gb[i * c + ch] = acc as f32;
                }
            }
        }
    }
    (ga, gb)
}

pub fn add_fwd<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}
