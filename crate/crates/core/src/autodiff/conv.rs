//! 2-D convolution (cross-correlation) and nearest-neighbour upsampling.

use super::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, gemm_tn_into, im2col, ConvGeom};
use super::tape::{DiffTensor, Grads, Op, Tape, Var};
use crate::error::{Error, Result};

impl Tape {
    /// Square-kernel convolution on NCHW input with weights
    /// [out, in, k, k]. Padding is `k / 2`, so stride 1 keeps the size and
    /// stride 2 yields `ceil(n / 2)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let (n, cin, h, wd) = self.nchw(x)?;
        let (cout, k) = match *self.shape(w) {
            [co, ci, k1, k2] if ci == cin && k1 == k2 => (co, k1),
            ref s => return Err(Error::Shape(format!("conv2d weight {s:?} does not fit input {:?}", self.shape(x)))),
        };
        if stride == 0 || k % 2 == 0 {
            return Err(Error::Shape(format!("conv2d kernel {k} stride {stride}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::Shape(format!("conv2d bias {:?}, expected [{cout}]", self.shape(b))));
            }
        }
        let g = ConvGeom::new(cin, h, wd, k, stride);
        let (rows, ncols) = (g.rows(), g.cols());
        let mut out = vec![0.0; n * cout * ncols];
        // Kept on the tape so the weight gradient can reuse it.
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; n * rows * ncols] };
        let xv = self.value(x);
        let wv = self.value(w);
        for s in 0..n {
            let xs = &xv[s * cin * h * wd..(s + 1) * cin * h * wd];
            let os = &mut out[s * cout * ncols..(s + 1) * cout * ncols];
            if let Some(b) = b {
                for (co, &bv) in self.value(b).iter().enumerate() {
                    os[co * ncols..(co + 1) * ncols].iter_mut().for_each(|v| *v = bv);
                }
            }
            if g.is_pointwise() {
                gemm_nn(wv, xs, os, cout, rows, ncols);
            } else {
                let cs = &mut cols[s * rows * ncols..(s + 1) * rows * ncols];
                im2col(xs, &g, cs);
                gemm_nn(wv, cs, os, cout, rows, ncols);
            }
        }
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(vec![n, cout, g.out_h, g.out_w], out, Op::Conv2d { x, w, b, kernel: k, stride, cols }, &inputs))
    }

    /// Each pixel becomes a 2x2 block.
    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.nchw(x)?;
        let xv = self.value(x);
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![0.0; n * c * h2 * w2];
        for plane in 0..n * c {
            let src = &xv[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * h2 * w2..(plane + 1) * h2 * w2];
            for y in 0..h2 {
                for xx in 0..w2 {
                    dst[y * w2 + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        Ok(self.push(vec![n, c, h2, w2], out, Op::Upsample2x(x), &[x]))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    t: &Tape,
    out: &DiffTensor,
    x: Var,
    w: Var,
    b: Option<Var>,
    kernel: usize,
    stride: usize,
    cols: &[f64],
    g: &[f64],
    grads: &mut Grads,
) {
    let [n, cin, h, wd] = *t.shape(x) else { unreachable!() };
    let cout = out.shape()[1];
    let geom = ConvGeom::new(cin, h, wd, kernel, stride);
    let (rows, ncols) = (geom.rows(), geom.cols());
    let xv = t.value(x);
    let wv = t.value(w);
    let plane_in = cin * h * wd;

    if let Some(b) = b {
        t.acc(grads, b, |d| {
            for s in 0..n {
                for co in 0..cout {
                    let off = (s * cout + co) * ncols;
                    d[co] += g[off..off + ncols].iter().sum::<f64>();
                }
            }
        });
    }

    let need_w = t.needs_grad(w);
    let need_x = t.needs_grad(x);
    let mut dcols = if need_x && !geom.is_pointwise() { vec![0.0; rows * ncols] } else { Vec::new() };
    for s in 0..n {
        let gs = &g[s * cout * ncols..(s + 1) * cout * ncols];
        let xs = &xv[s * plane_in..(s + 1) * plane_in];
        if need_w {
            let src = if geom.is_pointwise() { xs } else { &cols[s * rows * ncols..(s + 1) * rows * ncols] };
            t.acc(grads, w, |d| gemm_nt(gs, src, d, cout, ncols, rows));
        }
        if need_x {
            if geom.is_pointwise() {
                t.acc(grads, x, |d| gemm_tn(wv, gs, &mut d[s * plane_in..(s + 1) * plane_in], rows, cout, ncols));
            } else {
                gemm_tn_into(wv, gs, &mut dcols, rows, cout, ncols);
                t.acc(grads, x, |d| col2im(&dcols, &geom, &mut d[s * plane_in..(s + 1) * plane_in]));
            }
        }
    }
}

pub(crate) fn upsample_backward(t: &Tape, x: Var, g: &[f64], grads: &mut Grads) {
    let [n, c, h, w] = *t.shape(x) else { unreachable!() };
    let (h2, w2) = (2 * h, 2 * w);
    t.acc(grads, x, |d| {
        for plane in 0..n * c {
            let src = &g[plane * h2 * w2..(plane + 1) * h2 * w2];
            let dst = &mut d[plane * h * w..(plane + 1) * h * w];
            for y in 0..h2 {
                for xx in 0..w2 {
                    dst[(y / 2) * w + xx / 2] += src[y * w2 + xx];
                }
            }
        }
    });
}
