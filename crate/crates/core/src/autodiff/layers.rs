//! Parameterized building blocks: convolution, linear, normalization,
//! multi-head attention, residual and transformer blocks.

use serde::{Deserialize, Serialize};

use super::params::{Bound, InitScheme, ParamId, ParameterSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const NORM_EPS: f64 = 1e-5;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    /// Uniform fan-in init, or all zeros when `zero` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        zero: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 || kernel.is_multiple_of(2) || !(stride == 1 || stride == 2) {
            return Err(Error::Spec(format!("{name}: conv {in_ch}->{out_ch} k{kernel} s{stride}")));
        }
        let winit = if zero { InitScheme::Zeros } else { InitScheme::UniformFanIn { fan_in: in_ch * kernel * kernel } };
        let weight = ps.add(&format!("{name}.weight"), &[out_ch, in_ch, kernel, kernel], winit, rng)?;
        let bias = ps.add(&format!("{name}.bias"), &[out_ch], InitScheme::Zeros, rng)?;
        Ok(Conv2d { weight, bias, in_ch, out_ch, kernel, stride })
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        t.conv2d(x, p.var(self.weight), Some(p.var(self.bias)), self.stride)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        in_features: usize,
        out_features: usize,
        zero: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::Spec(format!("{name}: linear {in_features}->{out_features}")));
        }
        let winit = if zero { InitScheme::Zeros } else { InitScheme::UniformFanIn { fan_in: in_features } };
        let weight = ps.add(&format!("{name}.weight"), &[out_features, in_features], winit, rng)?;
        let bias = Some(ps.add(&format!("{name}.bias"), &[out_features], InitScheme::Zeros, rng)?);
        Ok(Linear { weight, bias, in_features, out_features })
    }

    /// Weight only, `x W^T`.
    pub fn without_bias(
        ps: &mut ParameterSet,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::Spec(format!("{name}: linear {in_features}->{out_features}")));
        }
        let init = InitScheme::UniformFanIn { fan_in: in_features };
        let weight = ps.add(&format!("{name}.weight"), &[out_features, in_features], init, rng)?;
        Ok(Linear { weight, bias: None, in_features, out_features })
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        t.linear(x, p.var(self.weight), self.bias.map(|b| p.var(b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Group,
    /// Fixed statistics (mean 0, variance 1); only the affine part learns.
    BatchInference,
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub kind: NormKind,
    pub gain: ParamId,
    pub bias: ParamId,
    pub channels: usize,
    pub groups: usize,
}

impl Norm {
    /// Group count is `gcd(channels, preferred_groups)` so any width works.
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        kind: NormKind,
        channels: usize,
        preferred_groups: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let gain = ps.add(&format!("{name}.gain"), &[channels], InitScheme::Ones, rng)?;
        let bias = ps.add(&format!("{name}.bias"), &[channels], InitScheme::Zeros, rng)?;
        let groups = gcd(channels, preferred_groups.max(1));
        Ok(Norm { kind, gain, bias, channels, groups })
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let (g, b) = (p.var(self.gain), p.var(self.bias));
        match self.kind {
            NormKind::Group => t.group_norm(x, self.groups, NORM_EPS, g, b),
            NormKind::BatchInference => {
                let c = self.channels;
                t.batch_norm_inference_style(x, &vec![0.0; c], &vec![1.0; c], NORM_EPS, g, b)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionSpec {
    pub channels: usize,
    pub heads: usize,
}

impl AttentionSpec {
    pub fn new(channels: usize, heads: usize) -> Result<Self> {
        if heads == 0 || channels == 0 || !channels.is_multiple_of(heads) {
            return Err(Error::Shape(format!("{channels} channels cannot split into {heads} heads")));
        }
        Ok(AttentionSpec { channels, heads })
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.head_dim() as f64).sqrt()
    }
}

/// Intermediate values of one attention evaluation.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// Per head, [N, N] softmax weights (rows are query positions).
    pub weights: Vec<Var>,
    /// Concatenated head outputs before the output projection, [N, C].
    pub heads: Var,
    pub output: Var,
}

/// Each head sees its own d-channel slice of the tokens and has private
/// d -> d query, key and value maps. A C -> C projection mixes the heads.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub spec: AttentionSpec,
    pub query: Vec<Linear>,
    pub key: Vec<Linear>,
    pub value: Vec<Linear>,
    pub out: Linear,
}

impl MultiHeadAttention {
    pub fn new(ps: &mut ParameterSet, name: &str, spec: AttentionSpec, rng: &mut Rng) -> Result<Self> {
        let spec = AttentionSpec::new(spec.channels, spec.heads)?;
        let d = spec.head_dim();
        let (mut query, mut key, mut value) = (Vec::new(), Vec::new(), Vec::new());
        for h in 0..spec.heads {
            query.push(Linear::new(ps, &format!("{name}.head{h}.q"), d, d, false, rng)?);
            // A key bias only shifts each score row by a constant, which softmax ignores.
            key.push(Linear::without_bias(ps, &format!("{name}.head{h}.k"), d, d, rng)?);
            value.push(Linear::new(ps, &format!("{name}.head{h}.v"), d, d, false, rng)?);
        }
        let out = Linear::new(ps, &format!("{name}.out"), spec.channels, spec.channels, false, rng)?;
        Ok(MultiHeadAttention { spec, query, key, value, out })
    }

    pub fn forward_traced(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<AttentionTrace> {
        let (_, c) = t.matrix(x)?;
        if c != self.spec.channels {
            return Err(Error::Shape(format!("attention over {} channels got {c}", self.spec.channels)));
        }
        let d = self.spec.head_dim();
        let mut weights = Vec::with_capacity(self.spec.heads);
        let mut outs = Vec::with_capacity(self.spec.heads);
        for h in 0..self.spec.heads {
            let xs = t.slice_cols(x, h * d, d)?;
            let q = self.query[h].forward(t, p, xs)?;
            let k = self.key[h].forward(t, p, xs)?;
            let v = self.value[h].forward(t, p, xs)?;
            let scores = t.matmul_nt(q, k)?;
            let scores = t.scale(scores, self.spec.scale());
            let w = t.softmax_rows(scores)?;
            outs.push(t.matmul(w, v)?);
            weights.push(w);
        }
        let heads = if outs.len() == 1 { outs[0] } else { t.concat_cols(&outs)? };
        let output = self.out.forward(t, p, heads)?;
        Ok(AttentionTrace { weights, heads, output })
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        Ok(self.forward_traced(t, p, x)?.output)
    }
}

/// `y = F(x) + skip(x)`, F = norm -> SiLU -> conv3x3 -> norm -> SiLU -> conv3x3.
#[derive(Debug, Clone)]
pub struct ResnetBlock {
    pub norm1: Norm,
    pub conv1: Conv2d,
    pub norm2: Norm,
    pub conv2: Conv2d,
    /// 1x1 projection, present only when channel counts differ.
    pub skip: Option<Conv2d>,
}

impl ResnetBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        norm: NormKind,
        groups: usize,
        zero_init: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let norm1 = Norm::new(ps, &format!("{name}.norm1"), norm, in_ch, groups, rng)?;
        let conv1 = Conv2d::new(ps, &format!("{name}.conv1"), in_ch, out_ch, 3, 1, false, rng)?;
        let norm2 = Norm::new(ps, &format!("{name}.norm2"), norm, out_ch, groups, rng)?;
        let conv2 = Conv2d::new(ps, &format!("{name}.conv2"), out_ch, out_ch, 3, 1, zero_init, rng)?;
        let skip = if in_ch != out_ch {
            Some(Conv2d::new(ps, &format!("{name}.skip"), in_ch, out_ch, 1, 1, false, rng)?)
        } else {
            None
        };
        Ok(ResnetBlock { norm1, conv1, norm2, conv2, skip })
    }

    /// The residual branch F(x) alone.
    pub fn residual(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.norm1.forward(t, p, x)?;
        let h = t.silu(h);
        let h = self.conv1.forward(t, p, h)?;
        let h = self.norm2.forward(t, p, h)?;
        let h = t.silu(h);
        self.conv2.forward(t, p, h)
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let f = self.residual(t, p, x)?;
        let s = match &self.skip {
            Some(c) => c.forward(t, p, x)?,
            None => x,
        };
        t.add(f, s)
    }
}

/// Spatial self-attention block: norm -> 1x1 conv -> tokens -> attention and
/// feed-forward (each with its own residual) -> back to a grid -> 1x1 conv,
/// added to the block input.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub norm: Norm,
    pub proj_in: Conv2d,
    pub attention: MultiHeadAttention,
    pub ff1: Linear,
    pub ff2: Linear,
    pub proj_out: Conv2d,
}

pub const FF_MULT: usize = 2;

impl TransformerBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        spec: AttentionSpec,
        norm: NormKind,
        groups: usize,
        zero_init: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let c = spec.channels;
        let norm = Norm::new(ps, &format!("{name}.norm"), norm, c, groups, rng)?;
        let proj_in = Conv2d::new(ps, &format!("{name}.proj_in"), c, c, 1, 1, false, rng)?;
        let attention = MultiHeadAttention::new(ps, &format!("{name}.attn"), spec, rng)?;
        let ff1 = Linear::new(ps, &format!("{name}.ff1"), c, FF_MULT * c, false, rng)?;
        let ff2 = Linear::new(ps, &format!("{name}.ff2"), FF_MULT * c, c, false, rng)?;
        let proj_out = Conv2d::new(ps, &format!("{name}.proj_out"), c, c, 1, 1, zero_init, rng)?;
        Ok(TransformerBlock { norm, proj_in, attention, ff1, ff2, proj_out })
    }

    pub fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let (_, _, h, w) = t.nchw(x)?;
        let y = self.norm.forward(t, p, x)?;
        let y = self.proj_in.forward(t, p, y)?;
        let tok = t.to_tokens(y)?;
        let a = self.attention.forward(t, p, tok)?;
        let tok = t.add(tok, a)?;
        let f = self.ff1.forward(t, p, tok)?;
        let f = t.silu(f);
        let f = self.ff2.forward(t, p, f)?;
        let tok = t.add(tok, f)?;
        let y = t.from_tokens(tok, h, w)?;
        let y = self.proj_out.forward(t, p, y)?;
        t.add(x, y)
    }
}
