//! Raw forward/backward kernels on flat buffers.
//!
//! Layouts: sequences are `[batch, channels, length]`, features `[batch, n]`,
//! conv weights `[out, in, kernel]`, linear weights `[out, in]`.

/// `c = alpha * op(a) * op(b) + beta * c` where `op(a)` is `m x k` and
/// `op(b)` is `k x n`, all row-major.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index matrixmultiply touches for
    // these strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub len_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvGeometry {
    pub fn len_out(&self) -> usize {
        (self.len_in + self.pad_left + self.pad_right - self.kernel) / self.stride + 1
    }

    fn rows(&self) -> usize {
        self.c_in * self.kernel
    }

    fn cols(&self) -> usize {
        self.batch * self.len_out()
    }
}

/// Output positions `t` whose input index `t * stride + k - pad_left` lies in
/// `[0, len_in)`.
fn valid_range(g: &ConvGeometry, k: usize, lo: usize) -> (usize, usize) {
    let s = g.stride;
    // smallest t with t*s + k >= pad_left
    let start = if k >= g.pad_left { 0 } else { (g.pad_left - k).div_ceil(s) };
    // largest t with t*s + k - pad_left <= len_in - 1
    let lim = g.len_in + g.pad_left;
    let end = if lim > k { ((lim - k - 1) / s + 1).min(lo) } else { 0 };
    (start.min(end), end)
}

/// Unfolds `x` into `[c_in * kernel, batch * len_out]`.
fn im2col(g: &ConvGeometry, x: &[f64], cols: &mut [f64]) {
    let lo = g.len_out();
    let ncols = g.cols();
    for k in 0..g.kernel {
        let (t0, t1) = valid_range(g, k, lo);
        for ci in 0..g.c_in {
            let row = &mut cols[(ci * g.kernel + k) * ncols..][..ncols];
            for b in 0..g.batch {
                let xrow = &x[(b * g.c_in + ci) * g.len_in..][..g.len_in];
                let dst = &mut row[b * lo..][..lo];
                dst[..t0].fill(0.0);
                dst[t1..].fill(0.0);
                if t1 > t0 {
                    let p0 = t0 * g.stride + k - g.pad_left;
                    if g.stride == 1 {
                        dst[t0..t1].copy_from_slice(&xrow[p0..p0 + (t1 - t0)]);
                    } else {
                        for (j, d) in dst[t0..t1].iter_mut().enumerate() {
                            *d = xrow[p0 + j * g.stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeometry, cols: &[f64], dx: &mut [f64]) {
    let lo = g.len_out();
    let ncols = g.cols();
    for k in 0..g.kernel {
        let (t0, t1) = valid_range(g, k, lo);
        if t1 <= t0 {
            continue;
        }
        let p0 = t0 * g.stride + k - g.pad_left;
        for ci in 0..g.c_in {
            let row = &cols[(ci * g.kernel + k) * ncols..][..ncols];
            for b in 0..g.batch {
                let dxrow = &mut dx[(b * g.c_in + ci) * g.len_in..][..g.len_in];
                let src = &row[b * lo + t0..b * lo + t1];
                if g.stride == 1 {
                    for (d, s) in dxrow[p0..p0 + src.len()].iter_mut().zip(src) {
                        *d += s;
                    }
                } else {
                    for (j, s) in src.iter().enumerate() {
                        dxrow[p0 + j * g.stride] += s;
                    }
                }
            }
        }
    }
}

/// Cross-correlation (no kernel flip). Returns `[batch, c_out, len_out]`.
pub fn conv1d_forward(g: &ConvGeometry, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let lo = g.len_out();
    let ncols = g.cols();
    let mut cols = vec![0.0; g.rows() * ncols];
    im2col(g, x, &mut cols);
    // [c_out, batch * lo]
    let mut tmp = vec![0.0; g.c_out * ncols];
    gemm(g.c_out, g.rows(), ncols, 1.0, w, false, &cols, false, 0.0, &mut tmp);
    let mut out = vec![0.0; g.batch * g.c_out * lo];
    for co in 0..g.c_out {
        let bv = bias.map_or(0.0, |b| b[co]);
        for b in 0..g.batch {
            let src = &tmp[co * ncols + b * lo..][..lo];
            let dst = &mut out[(b * g.c_out + co) * lo..][..lo];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bv;
            }
        }
    }
    out
}

pub struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub fn conv1d_backward(
    g: &ConvGeometry,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> ConvGrads {
    let lo = g.len_out();
    let ncols = g.cols();
    // dy -> [c_out, batch * lo]
    let mut dyt = vec![0.0; g.c_out * ncols];
    for b in 0..g.batch {
        for co in 0..g.c_out {
            dyt[co * ncols + b * lo..][..lo].copy_from_slice(&dy[(b * g.c_out + co) * lo..][..lo]);
        }
    }
    let db = need_db.then(|| {
        (0..g.c_out)
            .map(|co| dyt[co * ncols..][..ncols].iter().sum())
            .collect()
    });
    let dw = need_dw.then(|| {
        let mut cols = vec![0.0; g.rows() * ncols];
        im2col(g, x, &mut cols);
        let mut dw = vec![0.0; g.c_out * g.rows()];
        gemm(g.c_out, ncols, g.rows(), 1.0, &dyt, false, &cols, true, 0.0, &mut dw);
        dw
    });
    let dx = need_dx.then(|| {
        let mut dcols = vec![0.0; g.rows() * ncols];
        gemm(g.rows(), g.c_out, ncols, 1.0, w, true, &dyt, false, 0.0, &mut dcols);
        let mut dx = vec![0.0; g.batch * g.c_in * g.len_in];
        col2im(g, &dcols, &mut dx);
        dx
    });
    ConvGrads { dx, dw, db }
}

/// `y = x W^T + b` with `x: [batch, n_in]`, `W: [n_out, n_in]`.
pub fn linear_forward(batch: usize, n_in: usize, n_out: usize, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; batch * n_out];
    if let Some(b) = b {
        for row in y.chunks_mut(n_out) {
            row.copy_from_slice(b);
        }
    }
    gemm(batch, n_in, n_out, 1.0, x, false, w, true, if b.is_some() { 1.0 } else { 0.0 }, &mut y);
    y
}

/// Per-channel statistics over batch and length.
pub fn channel_moments(batch: usize, channels: usize, len: usize, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = (batch * len) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for c in 0..channels {
        let mut s = 0.0;
        for b in 0..batch {
            s += x[(b * channels + c) * len..][..len].iter().sum::<f64>();
        }
        let m = s / n;
        let mut ss = 0.0;
        for b in 0..batch {
            ss += x[(b * channels + c) * len..][..len]
                .iter()
                .map(|v| (v - m) * (v - m))
                .sum::<f64>();
        }
        mean[c] = m;
        var[c] = ss / n;
    }
    (mean, var)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

/// Row-wise numerically stable softmax over rows of width `n`.
pub fn softmax_rows(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, dst) in x.chunks(n).zip(out.chunks_mut(n)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (d, v) in dst.iter_mut().zip(row) {
            *d = (v - m).exp();
            z += *d;
        }
        for d in dst.iter_mut() {
            *d /= z;
        }
    }
    out
}

/// Row-wise `log(sum(exp(x)))`.
pub fn logsumexp_rows(x: &[f64], n: usize) -> Vec<f64> {
    x.chunks(n)
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
        })
        .collect()
}
