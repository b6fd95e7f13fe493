//! Dense row-major kernels shared by the differentiable ops.
//! All of them accumulate into `c`.

/// c[m x n] += a[m x k] * b[k x n]
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    gemm(a, (k, 1), b, (n, 1), c, 1.0, m, k, n);
}

/// c[m x n] += a[m x k] * b[n x k]^T
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    gemm(a, (k, 1), b, (1, k), c, 1.0, m, k, n);
}

/// c[m x n] += a[k x m]^T * b[k x n]
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    gemm(a, (1, m), b, (n, 1), c, 1.0, m, k, n);
}

/// c[m x n] = a[k x m]^T * b[k x n]; the old contents of `c` are ignored.
pub(crate) fn gemm_tn_into(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    if k == 0 {
        c[..m * n].fill(0.0);
    }
    gemm(a, (1, m), b, (n, 1), c, 0.0, m, k, n);
}

/// Strided `c = beta c + a b`, with `(row stride, column stride)` for a and b.
#[allow(clippy::too_many_arguments)]
fn gemm(
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    c: &mut [f64],
    beta: f64,
    m: usize,
    k: usize,
    n: usize,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: the asserted lengths cover every index the strides address.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a square-kernel convolution on one CHW plane stack.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(in_ch: usize, h: usize, w: usize, kernel: usize, stride: usize) -> Self {
        let pad = kernel / 2;
        let out_h = (h + 2 * pad - kernel) / stride + 1;
        let out_w = (w + 2 * pad - kernel) / stride + 1;
        ConvGeom { in_ch, h, w, kernel, stride, pad, out_h, out_w }
    }

    pub fn rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// True when im2col is the identity (1x1, stride 1).
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    fn out_range(&self, k: usize, len_in: usize, len_out: usize) -> (usize, usize) {
        // Output positions o with 0 <= o*stride + k - pad < len_in.
        let lo = if k >= self.pad { 0 } else { (self.pad - k).div_ceil(self.stride) };
        let hi_num = len_in + self.pad;
        let hi = if hi_num > k { ((hi_num - k - 1) / self.stride + 1).min(len_out) } else { 0 };
        (lo, hi.max(lo))
    }
}

/// Unfolds one CHW input into a (C*k*k) x (out_h*out_w) matrix.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let kk = g.kernel;
    let ncols = g.cols();
    for ci in 0..g.in_ch {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..kk {
            let (oy_lo, oy_hi) = g.out_range(ky, g.h, g.out_h);
            for kx in 0..kk {
                let (ox_lo, ox_hi) = g.out_range(kx, g.w, g.out_w);
                let row = (ci * kk + ky) * kk + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                dst[..oy_lo * g.out_w].fill(0.0);
                dst[oy_hi * g.out_w..].fill(0.0);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    line[..ox_lo].fill(0.0);
                    line[ox_hi..].fill(0.0);
                    for ox in ox_lo..ox_hi {
                        let ix = ox * g.stride + kx - g.pad;
                        line[ox] = plane[iy * g.w + ix];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into a CHW gradient.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let kk = g.kernel;
    let ncols = g.cols();
    for ci in 0..g.in_ch {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..kk {
            let (oy_lo, oy_hi) = g.out_range(ky, g.h, g.out_h);
            for kx in 0..kk {
                let (ox_lo, ox_hi) = g.out_range(kx, g.w, g.out_w);
                let row = (ci * kk + ky) * kk + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    for ox in ox_lo..ox_hi {
                        let ix = ox * g.stride + kx - g.pad;
                        plane[iy * g.w + ix] += src[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}
