//! Element-wise, reduction, reshaping and dense-algebra ops.

use std::sync::Arc;

use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::tape::{numel, sigmoid, DiffTensor, Grads, Op, Reduction, Tape, Var};
use crate::error::{Error, Result};
use crate::types::PatternStack;

impl Tape {
    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let data = self.value(a).iter().map(|x| x * s).collect();
        self.push(self.shape(a).to_vec(), data, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let data = self.value(a).iter().map(|x| x + c).collect();
        self.push(self.shape(a).to_vec(), data, Op::Offset(a), &[a])
    }

    /// x * sigmoid(x)
    pub fn silu(&mut self, a: Var) -> Var {
        let data = self.value(a).iter().map(|&x| x * sigmoid(x)).collect();
        self.push(self.shape(a).to_vec(), data, Op::Silu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(self.shape(a).to_vec(), data, Op::Sigmoid(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push(vec![1], vec![s], Op::Mean(a), &[a])
    }

    pub fn reduce(&mut self, a: Var, r: Reduction) -> Var {
        match r {
            Reduction::Sum => self.sum(a),
            Reduction::Mean => self.mean(a),
        }
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() {
            return Err(Error::Shape(format!("reshape {:?} -> {shape:?}", self.shape(a))));
        }
        let data = self.value(a).to_vec();
        Ok(self.push(shape.to_vec(), data, Op::Reshape(a), &[a]))
    }

    pub(crate) fn nchw(&self, v: Var) -> Result<(usize, usize, usize, usize)> {
        match *self.shape(v) {
            [n, c, h, w] => Ok((n, c, h, w)),
            ref s => Err(Error::Shape(format!("expected NCHW tensor, got {s:?}"))),
        }
    }

    /// Concatenation along the channel axis of two NCHW tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.nchw(a)?;
        let (nb, cb, hb, wb) = self.nchw(b)?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::Shape(format!("concat_channels {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for s in 0..n {
            data.extend_from_slice(&self.value(a)[s * ca * plane..(s + 1) * ca * plane]);
            data.extend_from_slice(&self.value(b)[s * cb * plane..(s + 1) * cb * plane]);
        }
        Ok(self.push(vec![n, ca + cb, h, w], data, Op::ConcatChannels(a, b), &[a, b]))
    }

    /// [1, C, H, W] -> [H*W, C] (positions by channels).
    pub fn to_tokens(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.nchw(x)?;
        if n != 1 {
            return Err(Error::Shape(format!("to_tokens needs batch 1, got {n}")));
        }
        let p = h * w;
        let xv = self.value(x);
        let mut data = vec![0.0; p * c];
        for ch in 0..c {
            for pos in 0..p {
                data[pos * c + ch] = xv[ch * p + pos];
            }
        }
        Ok(self.push(vec![p, c], data, Op::ToTokens(x), &[x]))
    }

    /// [H*W, C] -> [1, C, H, W].
    pub fn from_tokens(&mut self, t: Var, h: usize, w: usize) -> Result<Var> {
        let (p, c) = self.matrix(t)?;
        if p != h * w {
            return Err(Error::Shape(format!("{p} tokens cannot form {h}x{w}")));
        }
        let tv = self.value(t);
        let mut data = vec![0.0; p * c];
        for ch in 0..c {
            for pos in 0..p {
                data[ch * p + pos] = tv[pos * c + ch];
            }
        }
        Ok(self.push(vec![1, c, h, w], data, Op::FromTokens(t), &[t]))
    }

    pub(crate) fn matrix(&self, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::Shape(format!("expected a matrix, got {s:?}"))),
        }
    }

    /// `x W^T + b` for x [P, in], W [out, in], b [out].
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (p, fin) = self.matrix(x)?;
        let (fout, win) = self.matrix(w)?;
        if fin != win {
            return Err(Error::Shape(format!("linear: input {fin} features, weight {:?}", self.shape(w))));
        }
        let mut data = vec![0.0; p * fout];
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                return Err(Error::Shape(format!("linear bias {:?}, expected [{fout}]", self.shape(b))));
            }
            let bv = self.value(b);
            for row in data.chunks_exact_mut(fout) {
                row.copy_from_slice(bv);
            }
        }
        gemm_nt(self.value(x), self.value(w), &mut data, p, fin, fout);
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(vec![p, fout], data, Op::Linear { x, w, b }, &inputs))
    }

    /// [m, k] x [k, n]
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a)?;
        let (k2, n) = self.matrix(b)?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul {:?} x {:?}", self.shape(a), self.shape(b))));
        }
        let mut data = vec![0.0; m * n];
        gemm_nn(self.value(a), self.value(b), &mut data, m, k, n);
        Ok(self.push(vec![m, n], data, Op::MatMul(a, b), &[a, b]))
    }

    /// [m, k] x [n, k]^T
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a)?;
        let (n, k2) = self.matrix(b)?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul_nt {:?} x {:?}^T", self.shape(a), self.shape(b))));
        }
        let mut data = vec![0.0; m * n];
        gemm_nt(self.value(a), self.value(b), &mut data, m, k, n);
        Ok(self.push(vec![m, n], data, Op::MatMulNt(a, b), &[a, b]))
    }

    /// Numerically stable softmax of each row of a matrix.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.matrix(x)?;
        let mut data = self.value(x).to_vec();
        for row in data.chunks_exact_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Ok(self.push(vec![r, c], data, Op::SoftmaxRows(x), &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix(x)?;
        if start + len > c || len == 0 {
            return Err(Error::Shape(format!("columns {start}..{} of {c}", start + len)));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(r * len);
        for row in xv.chunks_exact(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        Ok(self.push(vec![r, len], data, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols of nothing".into()));
        }
        let (r, _) = self.matrix(parts[0])?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (rp, cp) = self.matrix(p)?;
            if rp != r {
                return Err(Error::Shape(format!("concat_cols rows {rp} vs {r}")));
            }
            widths.push(cp);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for row in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p)[row * w..(row + 1) * w]);
            }
        }
        Ok(self.push(vec![r, total], data, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Bucket projection: the pixel-sum of each pattern times `x`. Uses the
    /// same pairwise summation as [`crate::forward::measure`].
    pub fn project(&mut self, x: Var, patterns: Arc<PatternStack>) -> Result<Var> {
        if self.value(x).len() != patterns.pixels() {
            return Err(Error::Shape(format!(
                "tensor {:?} vs {}x{} patterns",
                self.shape(x),
                patterns.width(),
                patterns.height()
            )));
        }
        let data = patterns.apply(self.value(x));
        let m = patterns.count();
        Ok(self.push(vec![m], data, Op::Project { x, patterns }, &[x]))
    }
}

pub(crate) fn concat_channels_backward(t: &Tape, a: Var, b: Var, g: &[f64], grads: &mut Grads) {
    let [n, ca, h, w] = *t.shape(a) else { unreachable!() };
    let cb = t.shape(b)[1];
    let plane = h * w;
    let ct = ca + cb;
    t.acc(grads, a, |d| {
        for s in 0..n {
            let src = &g[s * ct * plane..s * ct * plane + ca * plane];
            super::tape::add_into(&mut d[s * ca * plane..(s + 1) * ca * plane], src);
        }
    });
    t.acc(grads, b, |d| {
        for s in 0..n {
            let src = &g[s * ct * plane + ca * plane..(s + 1) * ct * plane];
            super::tape::add_into(&mut d[s * cb * plane..(s + 1) * cb * plane], src);
        }
    });
}

pub(crate) fn to_tokens_backward(t: &Tape, x: Var, g: &[f64], grads: &mut Grads) {
    let [_, c, h, w] = *t.shape(x) else { unreachable!() };
    let p = h * w;
    t.acc(grads, x, |d| {
        for ch in 0..c {
            for pos in 0..p {
                d[ch * p + pos] += g[pos * c + ch];
            }
        }
    });
}

pub(crate) fn from_tokens_backward(t: &Tape, tok: Var, out: &DiffTensor, g: &[f64], grads: &mut Grads) {
    let c = out.shape()[1];
    let p = out.shape()[2] * out.shape()[3];
    t.acc(grads, tok, |d| {
        for ch in 0..c {
            for pos in 0..p {
                d[pos * c + ch] += g[ch * p + pos];
            }
        }
    });
}

pub(crate) fn linear_backward(t: &Tape, x: Var, w: Var, b: Option<Var>, g: &[f64], grads: &mut Grads) {
    let [p, fin] = *t.shape(x) else { unreachable!() };
    let fout = t.shape(w)[0];
    t.acc(grads, x, |d| gemm_nn(g, t.value(w), d, p, fout, fin));
    t.acc(grads, w, |d| gemm_tn(g, t.value(x), d, fout, p, fin));
    if let Some(b) = b {
        t.acc(grads, b, |d| {
            for row in g.chunks_exact(fout) {
                super::tape::add_into(d, row);
            }
        });
    }
}

pub(crate) fn matmul_backward(t: &Tape, a: Var, b: Var, g: &[f64], grads: &mut Grads) {
    let [m, k] = *t.shape(a) else { unreachable!() };
    let n = t.shape(b)[1];
    t.acc(grads, a, |d| gemm_nt(g, t.value(b), d, m, n, k));
    t.acc(grads, b, |d| gemm_tn(t.value(a), g, d, k, m, n));
}

pub(crate) fn matmul_nt_backward(t: &Tape, a: Var, b: Var, g: &[f64], grads: &mut Grads) {
    let [m, k] = *t.shape(a) else { unreachable!() };
    let n = t.shape(b)[0];
    t.acc(grads, a, |d| gemm_nn(g, t.value(b), d, m, n, k));
    t.acc(grads, b, |d| gemm_tn(g, t.value(a), d, n, m, k));
}

pub(crate) fn softmax_backward(t: &Tape, x: Var, out: &DiffTensor, g: &[f64], grads: &mut Grads) {
    let c = out.shape()[1];
    let y = out.data();
    t.acc(grads, x, |d| {
        for ((dr, yr), gr) in d.chunks_exact_mut(c).zip(y.chunks_exact(c)).zip(g.chunks_exact(c)) {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for j in 0..c {
                dr[j] += yr[j] * (gr[j] - dot);
            }
        }
    });
}

pub(crate) fn slice_cols_backward(t: &Tape, x: Var, start: usize, out: &DiffTensor, g: &[f64], grads: &mut Grads) {
    let c = t.shape(x)[1];
    let len = out.shape()[1];
    t.acc(grads, x, |d| {
        for (dr, gr) in d.chunks_exact_mut(c).zip(g.chunks_exact(len)) {
            super::tape::add_into(&mut dr[start..start + len], gr);
        }
    });
}

pub(crate) fn concat_cols_backward(t: &Tape, parts: &[Var], g: &[f64], grads: &mut Grads) {
    let total: usize = parts.iter().map(|&p| t.shape(p)[1]).sum();
    let mut offset = 0;
    for &p in parts {
        let w = t.shape(p)[1];
        t.acc(grads, p, |d| {
            for (dr, gr) in d.chunks_exact_mut(w).zip(g.chunks_exact(total)) {
                super::tape::add_into(dr, &gr[offset..offset + w]);
            }
        });
        offset += w;
    }
}
