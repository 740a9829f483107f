//! Numeric kernels behind the tape's operators. Everything here is pure
//! slice arithmetic; shapes are validated by the callers in `tape`.

/// Dimensions of a stride-1 2D correlation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.height + 2 * self.pad + 1 - self.kh
    }

    pub fn out_w(&self) -> usize {
        self.width + 2 * self.pad + 1 - self.kw
    }

    fn rows(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }
}

/// `c = alpha·a·b + beta·c` over strided views; each operand is a pointer
/// plus (row stride, column stride).
#[derive(Clone, Copy)]
struct View {
    ptr: *const f64,
    rs: isize,
    cs: isize,
}

/// # Safety
/// Every index reachable through the strides must be inside the backing
/// allocations, and no two elements of `c` may alias.
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_view(m: usize, k: usize, n: usize, a: View, b: View, beta: f64, c: *mut f64, rsc: isize, csc: isize) {
    matrixmultiply::dgemm(m, k, n, 1.0, a.ptr, a.rs, a.cs, b.ptr, b.rs, b.cs, beta, c, rsc, csc);
}

/// Geometry of the zero-padded input. Output pixels are computed on rows of
/// the padded width, so every kernel tap is a plain offset into the padded
/// planes and the convolution becomes `kh·kw` small matrix products. The
/// `kw - 1` trailing columns of each wide row are scratch.
struct Wide {
    wp: usize,
    oh: usize,
    ow: usize,
    plane: usize,
    n: usize,
    /// Length of the padded buffer, with slack for the scratch columns.
    len: usize,
}

impl Wide {
    fn new(d: &ConvDims) -> Self {
        let (hp, wp) = (d.height + 2 * d.pad, d.width + 2 * d.pad);
        let plane = hp * wp;
        Self {
            wp,
            oh: d.out_h(),
            ow: d.out_w(),
            plane,
            n: d.out_h() * wp,
            len: d.in_ch * plane + d.kw,
        }
    }

    fn tap(&self, i: usize, j: usize) -> usize {
        i * self.wp + j
    }
}

fn pad_input(x: &[f64], d: &ConvDims, g: &Wide) -> Vec<f64> {
    let mut xp = vec![0.0; g.len];
    for ci in 0..d.in_ch {
        for y in 0..d.height {
            let src = &x[(ci * d.height + y) * d.width..][..d.width];
            let dst = ci * g.plane + (y + d.pad) * g.wp + d.pad;
            xp[dst..dst + d.width].copy_from_slice(src);
        }
    }
    xp
}

fn weight_tap(weight: &[f64], d: &ConvDims, i: usize, j: usize) -> View {
    let taps = d.kh * d.kw;
    View {
        ptr: weight[i * d.kw + j..].as_ptr(),
        rs: (d.in_ch * taps) as isize,
        cs: taps as isize,
    }
}

/// Returns the output and the padded input kept for the backward pass.
pub(crate) fn conv2d_forward(
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    d: &ConvDims,
) -> (Vec<f64>, Vec<f64>) {
    assert!(x.len() == d.in_ch * d.height * d.width && weight.len() == d.out_ch * d.rows());
    let g = Wide::new(d);
    let xp = pad_input(x, d, &g);
    let mut wide = vec![0.0; d.out_ch * g.n];
    for i in 0..d.kh {
        for j in 0..d.kw {
            let b = View {
                ptr: xp[g.tap(i, j)..].as_ptr(),
                rs: g.plane as isize,
                cs: 1,
            };
            // SAFETY: the furthest read is `(in_ch-1)·plane + tap + n - 1`,
            // which stays below `len` thanks to the slack.
            unsafe {
                gemm_view(d.out_ch, d.in_ch, g.n, weight_tap(weight, d, i, j), b, 1.0, wide.as_mut_ptr(), g.n as isize, 1);
            }
        }
    }
    let mut out = vec![0.0; d.out_ch * g.oh * g.ow];
    for co in 0..d.out_ch {
        for y in 0..g.oh {
            let src = &wide[co * g.n + y * g.wp..][..g.ow];
            let dst = &mut out[(co * g.oh + y) * g.ow..][..g.ow];
            for (o, v) in dst.iter_mut().zip(src) {
                *o = v + bias[co];
            }
        }
    }
    (out, xp)
}

/// Gradients `(dx, dw, db)` of a correlation given the upstream gradient
/// and the padded input saved by the forward pass.
pub(crate) fn conv2d_backward(
    grad_out: &[f64],
    padded: &[f64],
    weight: &[f64],
    d: &ConvDims,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = Wide::new(d);
    assert!(padded.len() == g.len && grad_out.len() == d.out_ch * g.oh * g.ow);
    let mut gwide = vec![0.0; d.out_ch * g.n];
    for co in 0..d.out_ch {
        for y in 0..g.oh {
            gwide[co * g.n + y * g.wp..][..g.ow].copy_from_slice(&grad_out[(co * g.oh + y) * g.ow..][..g.ow]);
        }
    }
    let taps = d.kh * d.kw;
    let mut gw = vec![0.0; d.out_ch * d.rows()];
    let mut gxp = vec![0.0; g.len];
    let gview = View {
        ptr: gwide.as_ptr(),
        rs: g.n as isize,
        cs: 1,
    };
    for i in 0..d.kh {
        for j in 0..d.kw {
            let tap = g.tap(i, j);
            let xt = View {
                ptr: padded[tap..].as_ptr(),
                rs: 1,
                cs: g.plane as isize,
            };
            let wt = weight_tap(weight, d, i, j);
            let wt = View { ptr: wt.ptr, rs: wt.cs, cs: wt.rs };
            // SAFETY: reads stay inside the padded buffer as in the forward
            // pass; the gw writes hit distinct `(co, ci, i, j)` slots; the
            // gxp rows start a full plane apart and span at most a plane plus
            // the slack, so they never alias. Scratch columns of `gwide` are
            // zero and add nothing.
            unsafe {
                gemm_view(d.out_ch, g.n, d.in_ch, gview, xt, 0.0, gw[i * d.kw + j..].as_mut_ptr(), (d.in_ch * taps) as isize, taps as isize);
                gemm_view(d.in_ch, d.out_ch, g.n, wt, gview, 1.0, gxp[tap..].as_mut_ptr(), g.plane as isize, 1);
            }
        }
    }
    let mut gx = vec![0.0; d.in_ch * d.height * d.width];
    for ci in 0..d.in_ch {
        for y in 0..d.height {
            let src = ci * g.plane + (y + d.pad) * g.wp + d.pad;
            gx[(ci * d.height + y) * d.width..][..d.width].copy_from_slice(&gxp[src..src + d.width]);
        }
    }
    let gb = grad_out.chunks(g.oh * g.ow).map(|c| c.iter().sum()).collect();
    (gx, gw, gb)
}

/// Per-channel normalization with batch statistics of a single sample.
/// Returns `(output, xhat, inv_std)`.
pub(crate) fn batchnorm_forward(
    x: &[f64],
    channels: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane = x.len() / channels;
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; channels];
    for c in 0..channels {
        let src = &x[c * plane..(c + 1) * plane];
        let mean = src.iter().sum::<f64>() / plane as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std[c] = istd;
        let xh = &mut xhat[c * plane..(c + 1) * plane];
        let o = &mut out[c * plane..(c + 1) * plane];
        for i in 0..plane {
            xh[i] = (src[i] - mean) * istd;
            o[i] = gamma[c] * xh[i] + beta[c];
        }
    }
    (out, xhat, inv_std)
}

/// Gradients `(dx, dgamma, dbeta)`.
pub(crate) fn batchnorm_backward(
    grad_out: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let channels = inv_std.len();
    let plane = grad_out.len() / channels;
    let n = plane as f64;
    let mut gx = vec![0.0; grad_out.len()];
    let mut ggamma = vec![0.0; channels];
    let mut gbeta = vec![0.0; channels];
    for c in 0..channels {
        let g = &grad_out[c * plane..(c + 1) * plane];
        let xh = &xhat[c * plane..(c + 1) * plane];
        let sum_g: f64 = g.iter().sum();
        let sum_gx: f64 = g.iter().zip(xh).map(|(a, b)| a * b).sum();
        ggamma[c] = sum_gx;
        gbeta[c] = sum_g;
        let scale = gamma[c] * inv_std[c] / n;
        let dst = &mut gx[c * plane..(c + 1) * plane];
        for i in 0..plane {
            dst[i] = scale * (n * g[i] - sum_g - xh[i] * sum_gx);
        }
    }
    (gx, ggamma, gbeta)
}

pub(crate) fn upsample2x(x: &[f64], channels: usize, height: usize, width: usize) -> Vec<f64> {
    let (oh, ow) = (2 * height, 2 * width);
    let mut out = vec![0.0; channels * oh * ow];
    for c in 0..channels {
        let src = &x[c * height * width..(c + 1) * height * width];
        let dst = &mut out[c * oh * ow..(c + 1) * oh * ow];
        for y in 0..oh {
            let srow = &src[(y / 2) * width..(y / 2 + 1) * width];
            let drow = &mut dst[y * ow..(y + 1) * ow];
            for (xo, v) in drow.iter_mut().enumerate() {
                *v = srow[xo / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward(
    grad_out: &[f64],
    channels: usize,
    height: usize,
    width: usize,
) -> Vec<f64> {
    let ow = 2 * width;
    let mut gx = vec![0.0; channels * height * width];
    for c in 0..channels {
        let src = &grad_out[c * 4 * height * width..(c + 1) * 4 * height * width];
        let dst = &mut gx[c * height * width..(c + 1) * height * width];
        for y in 0..2 * height {
            for xo in 0..ow {
                dst[(y / 2) * width + xo / 2] += src[y * ow + xo];
            }
        }
    }
    gx
}

/// Planar complex product `x ⊙ c` (or `x ⊙ conj(c)` when `conjugate`).
pub(crate) fn complex_mul_planar(x: &[f64], c: &[f64], conjugate: bool) -> Vec<f64> {
    let n = x.len() / 2;
    let sign = if conjugate { -1.0 } else { 1.0 };
    let mut out = vec![0.0; x.len()];
    for i in 0..n {
        let (xr, xi) = (x[i], x[n + i]);
        let (cr, ci) = (c[i], sign * c[n + i]);
        out[i] = xr * cr - xi * ci;
        out[n + i] = xr * ci + xi * cr;
    }
    out
}
