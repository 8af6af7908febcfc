//! Dense and strided-convolution primitives with hand-written backward passes.
//!
//! Tensors are flat `f64` slices. Batched activations are row-major
//! `[rows, features]`; images are `[n, h, w, c]` (channel-last), which makes a
//! convolution output of shape `[n * h_out * w_out, c_out]` the same memory
//! as an `[n, h_out, w_out, c_out]` image.

/// `c = beta * c + op(a) · op(b)` where `op(a)` is `m × k` and `op(b)` is `k × n`.
///
/// With `ta` set, `a` is stored as `k × m`; with `tb` set, `b` is stored as `n × k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a square-kernel strided convolution over channel-last images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// The kernel-4, stride-2, pad-1 layer that halves spatial resolution.
    pub fn halving(in_h: usize, in_w: usize, in_c: usize, out_c: usize) -> Self {
        Self {
            in_h,
            in_w,
            in_c,
            out_h: in_h / 2,
            out_w: in_w / 2,
            out_c,
            kernel: 4,
            stride: 2,
            pad: 1,
        }
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn weight_len(&self) -> usize {
        self.patch_len() * self.out_c
    }

    /// Input coordinate hit by output `o` and kernel tap `k`, if inside the image.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, size: usize) -> Option<usize> {
        let i = (o * stride + k) as isize - pad as isize;
        (i >= 0 && (i as usize) < size).then_some(i as usize)
    }

    /// Unfolds `n` images into a `[n * out_pixels, patch_len]` matrix.
    pub fn im2col(&self, x: &[f64], n: usize, cols: &mut Vec<f64>) {
        let plen = self.patch_len();
        cols.clear();
        cols.resize(n * self.out_pixels() * plen, 0.0);
        let c = self.in_c;
        for img in 0..n {
            let xi = &x[img * self.in_len()..(img + 1) * self.in_len()];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row = (img * self.out_pixels() + oy * self.out_w + ox) * plen;
                    for ky in 0..self.kernel {
                        let Some(iy) = Self::src(oy, ky, self.stride, self.pad, self.in_h) else {
                            continue;
                        };
                        for kx in 0..self.kernel {
                            let Some(ix) = Self::src(ox, kx, self.stride, self.pad, self.in_w)
                            else {
                                continue;
                            };
                            let dst = row + (ky * self.kernel + kx) * c;
                            let srco = (iy * self.in_w + ix) * c;
                            cols[dst..dst + c].copy_from_slice(&xi[srco..srco + c]);
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatter-adds patches back into `x`.
    pub fn col2im(&self, cols: &[f64], n: usize, x: &mut [f64]) {
        let plen = self.patch_len();
        let c = self.in_c;
        for img in 0..n {
            let xi = &mut x[img * self.in_len()..(img + 1) * self.in_len()];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row = (img * self.out_pixels() + oy * self.out_w + ox) * plen;
                    for ky in 0..self.kernel {
                        let Some(iy) = Self::src(oy, ky, self.stride, self.pad, self.in_h) else {
                            continue;
                        };
                        for kx in 0..self.kernel {
                            let Some(ix) = Self::src(ox, kx, self.stride, self.pad, self.in_w)
                            else {
                                continue;
                            };
                            let srco = row + (ky * self.kernel + kx) * c;
                            let dst = (iy * self.in_w + ix) * c;
                            for (d, s) in xi[dst..dst + c].iter_mut().zip(&cols[srco..srco + c]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolution forward: `y = im2col(x) · w + b`. Returns the unfolded input
/// for reuse in the backward pass.
pub(crate) fn conv_forward(
    g: &ConvGeom,
    w: &[f64],
    b: &[f64],
    x: &[f64],
    n: usize,
    y: &mut Vec<f64>,
) -> Vec<f64> {
    let mut cols = Vec::new();
    g.im2col(x, n, &mut cols);
    let rows = n * g.out_pixels();
    y.clear();
    y.resize(rows * g.out_c, 0.0);
    for row in y.chunks_exact_mut(g.out_c) {
        row.copy_from_slice(b);
    }
    gemm(rows, g.patch_len(), g.out_c, &cols, false, w, false, y, 1.0);
    cols
}

/// Convolution backward. Accumulates into `dw`/`db`; writes `dx` when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    g: &ConvGeom,
    w: &[f64],
    cols: &[f64],
    dy: &[f64],
    n: usize,
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let rows = n * g.out_pixels();
    gemm(g.patch_len(), rows, g.out_c, cols, true, dy, false, dw, 1.0);
    for row in dy.chunks_exact(g.out_c) {
        for (d, v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    if let Some(dx) = dx {
        let mut dcols = vec![0.0; rows * g.patch_len()];
        gemm(rows, g.out_c, g.patch_len(), dy, false, w, true, &mut dcols, 0.0);
        dx.iter_mut().for_each(|v| *v = 0.0);
        g.col2im(&dcols, n, dx);
    }
}

/// Transposed convolution, defined as the adjoint of the convolution `g`
/// (which maps the large image to the small one). The input is the small
/// image `[n, g.out_h, g.out_w, g.out_c]`; the output is the large image
/// `[n, g.in_h, g.in_w, g.in_c]`. The weight has the same `[patch_len, out_c]`
/// layout as the forward convolution's.
pub(crate) fn deconv_forward(
    g: &ConvGeom,
    w: &[f64],
    b: &[f64],
    x: &[f64],
    n: usize,
    y: &mut Vec<f64>,
) {
    let rows = n * g.out_pixels();
    let mut q = vec![0.0; rows * g.patch_len()];
    gemm(rows, g.out_c, g.patch_len(), x, false, w, true, &mut q, 0.0);
    y.clear();
    y.resize(n * g.in_len(), 0.0);
    g.col2im(&q, n, y);
    for px in y.chunks_exact_mut(g.in_c) {
        for (v, bias) in px.iter_mut().zip(b) {
            *v += bias;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn deconv_backward(
    g: &ConvGeom,
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    n: usize,
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let rows = n * g.out_pixels();
    let mut dq = Vec::new();
    g.im2col(dy, n, &mut dq);
    // q = x · wᵀ  ⇒  dw += dqᵀ · x
    gemm(g.patch_len(), rows, g.out_c, &dq, true, x, false, dw, 1.0);
    for px in dy.chunks_exact(g.in_c) {
        for (d, v) in db.iter_mut().zip(px) {
            *d += v;
        }
    }
    if let Some(dx) = dx {
        gemm(rows, g.patch_len(), g.out_c, &dq, false, w, false, dx, 0.0);
    }
}

/// `y[n, out] = x[n, in] · w[in, out] + b`.
pub(crate) fn dense_forward(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    n: usize,
    fan_in: usize,
    y: &mut Vec<f64>,
) {
    let fan_out = b.len();
    y.clear();
    y.resize(n * fan_out, 0.0);
    for row in y.chunks_exact_mut(fan_out) {
        row.copy_from_slice(b);
    }
    if n == 1 {
        // gemv: the recurrent steps run one row at a time
        for (xi, wrow) in x[..fan_in].iter().zip(w.chunks_exact(fan_out)) {
            if *xi != 0.0 {
                for (yo, wo) in y.iter_mut().zip(wrow) {
                    *yo += xi * wo;
                }
            }
        }
    } else {
        gemm(n, fan_in, fan_out, x, false, w, false, y, 1.0);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    n: usize,
    fan_in: usize,
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let fan_out = db.len();
    if n == 1 {
        for (xi, dwrow) in x[..fan_in].iter().zip(dw.chunks_exact_mut(fan_out)) {
            if *xi != 0.0 {
                for (d, g) in dwrow.iter_mut().zip(dy) {
                    *d += xi * g;
                }
            }
        }
    } else {
        gemm(fan_in, n, fan_out, x, true, dy, false, dw, 1.0);
    }
    for row in dy.chunks_exact(fan_out) {
        for (d, v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    if let Some(dx) = dx {
        if n == 1 {
            for (dxi, wrow) in dx.iter_mut().zip(w.chunks_exact(fan_out)) {
                *dxi = wrow.iter().zip(dy).map(|(a, b)| a * b).sum();
            }
        } else {
            gemm(n, fan_out, fan_in, dy, false, w, true, dx, 0.0);
        }
    }
}

pub(crate) fn relu_inplace(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zeroes gradient entries whose (post-activation) value is not positive.
pub(crate) fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp()).ln_1p()
}
