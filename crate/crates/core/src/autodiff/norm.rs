//! Group normalization and batch normalization with supplied statistics.

use super::tape::{Grads, Op, Tape, Var};
use crate::error::{Error, Result};

impl Tape {
    fn affine_params(&self, gain: Var, bias: Var, c: usize) -> Result<()> {
        if self.shape(gain) != [c] || self.shape(bias) != [c] {
            return Err(Error::Shape(format!(
                "norm affine {:?}/{:?} for {c} channels",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        Ok(())
    }

    /// Normalizes each (sample, channel group) to zero mean and unit variance
    /// (biased variance, `eps` inside the root), then applies the per-channel
    /// affine map.
    pub fn group_norm(&mut self, x: Var, groups: usize, eps: f64, gain: Var, bias: Var) -> Result<Var> {
        let (n, c, h, w) = self.nchw(x)?;
        if groups == 0 || c % groups != 0 {
            return Err(Error::Shape(format!("{c} channels not divisible into {groups} groups")));
        }
        self.affine_params(gain, bias, c)?;
        let cg = c / groups;
        let len = cg * h * w;
        let xv = self.value(x);
        let (gv, bv) = (self.value(gain), self.value(bias));
        let mut out = vec![0.0; xv.len()];
        let mut means = Vec::with_capacity(n * groups);
        let mut rstds = Vec::with_capacity(n * groups);
        for s in 0..n {
            for gi in 0..groups {
                let off = (s * c + gi * cg) * h * w;
                let seg = &xv[off..off + len];
                let mean = seg.iter().sum::<f64>() / len as f64;
                let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
                let rstd = 1.0 / (var + eps).sqrt();
                for ch in 0..cg {
                    let cabs = gi * cg + ch;
                    let base = off + ch * h * w;
                    for j in 0..h * w {
                        out[base + j] = (xv[base + j] - mean) * rstd * gv[cabs] + bv[cabs];
                    }
                }
                means.push(mean);
                rstds.push(rstd);
            }
        }
        Ok(self.push(
            vec![n, c, h, w],
            out,
            Op::GroupNorm { x, gain, bias, groups, mean: means, rstd: rstds },
            &[x, gain, bias],
        ))
    }

    /// Per-channel normalization with fixed (running) statistics.
    pub fn batch_norm_inference_style(
        &mut self,
        x: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
        gain: Var,
        bias: Var,
    ) -> Result<Var> {
        let (n, c, h, w) = self.nchw(x)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::Shape(format!("running stats for {c} channels")));
        }
        self.affine_params(gain, bias, c)?;
        let rstd: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xv = self.value(x);
        let (gv, bv) = (self.value(gain), self.value(bias));
        let plane = h * w;
        let mut out = vec![0.0; xv.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                for j in 0..plane {
                    out[base + j] = (xv[base + j] - running_mean[ch]) * rstd[ch] * gv[ch] + bv[ch];
                }
            }
        }
        Ok(self.push(
            vec![n, c, h, w],
            out,
            Op::BatchNorm { x, gain, bias, mean: running_mean.to_vec(), rstd },
            &[x, gain, bias],
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_backward(
    t: &Tape,
    x: Var,
    gain: Var,
    bias: Var,
    groups: usize,
    means: &[f64],
    rstds: &[f64],
    g: &[f64],
    grads: &mut Grads,
) {
    let [n, c, h, w] = *t.shape(x) else { unreachable!() };
    let cg = c / groups;
    let plane = h * w;
    let len = (cg * plane) as f64;
    let xv = t.value(x);
    let gv = t.value(gain);
    t.acc(grads, bias, |d| {
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                d[ch] += g[base..base + plane].iter().sum::<f64>();
            }
        }
    });
    t.acc(grads, gain, |d| {
        for s in 0..n {
            for ch in 0..c {
                let k = s * groups + ch / cg;
                let base = (s * c + ch) * plane;
                let mut acc = 0.0;
                for j in 0..plane {
                    acc += g[base + j] * (xv[base + j] - means[k]) * rstds[k];
                }
                d[ch] += acc;
            }
        }
    });
    t.acc(grads, x, |d| {
        for s in 0..n {
            for gi in 0..groups {
                let k = s * groups + gi;
                let (mean, rstd) = (means[k], rstds[k]);
                let off = (s * c + gi * cg) * plane;
                let (mut sum_dxhat, mut sum_dxhat_xhat) = (0.0, 0.0);
                for ch in 0..cg {
                    let gain_c = gv[gi * cg + ch];
                    let base = off + ch * plane;
                    for j in 0..plane {
                        let dxhat = g[base + j] * gain_c;
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * (xv[base + j] - mean) * rstd;
                    }
                }
                for ch in 0..cg {
                    let gain_c = gv[gi * cg + ch];
                    let base = off + ch * plane;
                    for j in 0..plane {
                        let xhat = (xv[base + j] - mean) * rstd;
                        let dxhat = g[base + j] * gain_c;
                        d[base + j] += rstd * (dxhat - sum_dxhat / len - xhat * sum_dxhat_xhat / len);
                    }
                }
            }
        }
    });
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm_backward(
    t: &Tape,
    x: Var,
    gain: Var,
    bias: Var,
    means: &[f64],
    rstds: &[f64],
    g: &[f64],
    grads: &mut Grads,
) {
    let [n, c, h, w] = *t.shape(x) else { unreachable!() };
    let plane = h * w;
    let xv = t.value(x);
    let gv = t.value(gain);
    t.acc(grads, bias, |d| {
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                d[ch] += g[base..base + plane].iter().sum::<f64>();
            }
        }
    });
    t.acc(grads, gain, |d| {
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                for j in 0..plane {
                    d[ch] += g[base + j] * (xv[base + j] - means[ch]) * rstds[ch];
                }
            }
        }
    });
    t.acc(grads, x, |d| {
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                let k = gv[ch] * rstds[ch];
                for j in 0..plane {
                    d[base + j] += g[base + j] * k;
                }
            }
        }
    });
}
