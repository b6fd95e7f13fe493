//! Network assembly, the fixed random input, and prediction.

use crate::autodiff::{AttentionSpec, Bound, Conv2d, Norm, ParameterSet, ResnetBlock, Tape, TransformerBlock, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::Image2D;

use super::spec::{Architecture, InputDistribution, LatentMode, ModelSpec};

/// The fixed random field `x^r` fed to the network for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconInput {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
    pub distribution: InputDistribution,
}

impl ReconInput {
    /// Shaped like the network's working grid: the image itself in pixel
    /// mode, the latent grid otherwise.
    pub fn generate(spec: &ModelSpec, width: usize, height: usize, rng: &mut Rng) -> Result<Self> {
        spec.check_image_dims(width, height)?;
        let f = spec.latent_factor();
        let shape = [1, spec.input_channels, height / f, width / f];
        let n = shape.iter().product();
        let data = match spec.input_distribution {
            InputDistribution::Uniform => (0..n).map(|_| rng.uniform()).collect(),
            InputDistribution::Normal => (0..n).map(|_| rng.normal()).collect(),
        };
        Ok(ReconInput { shape, data, distribution: spec.input_distribution })
    }
}

#[derive(Debug, Clone)]
struct Level {
    blocks: Vec<ResnetBlock>,
    attention: Option<TransformerBlock>,
}

impl Level {
    fn forward(&self, t: &mut Tape, p: &Bound, mut x: Var) -> Result<Var> {
        for b in &self.blocks {
            x = b.forward(t, p, x)?;
        }
        if let Some(a) = &self.attention {
            x = a.forward(t, p, x)?;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
struct UNetBody {
    stem: Conv2d,
    encoder: Vec<Level>,
    down: Vec<Conv2d>,
    mid: Vec<ResnetBlock>,
    mid_attention: Option<TransformerBlock>,
    up: Vec<Conv2d>,
    decoder: Vec<Level>,
    out_norm: Norm,
    out_conv: Conv2d,
}

#[derive(Debug, Clone)]
struct CnnLayer {
    conv: Conv2d,
    norm: Norm,
}

#[derive(Debug, Clone)]
struct CnnBody {
    layers: Vec<CnnLayer>,
    out_conv: Conv2d,
}

#[derive(Debug, Clone)]
enum Body {
    UNet(Box<UNetBody>),
    Cnn(CnnBody),
}

#[derive(Debug, Clone)]
struct LatentDecoder {
    stages: Vec<Conv2d>,
    out_conv: Conv2d,
}

/// Shapes observed during one forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    /// Network output before decoding; equals `output` minus the sigmoid in
    /// pixel mode.
    pub body_output: Vec<usize>,
    /// Latent grid shape, present only in latent mode.
    pub latent: Option<Vec<usize>>,
    pub output: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParameterSet,
    body: Body,
    decoder: Option<LatentDecoder>,
}

pub fn build_model(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
    spec.validate()?;
    let mut ps = ParameterSet::new();
    let out_ch = match &spec.latent {
        LatentMode::Pixel => 1,
        LatentMode::Latent { channels, .. } => *channels,
    };
    let body = match spec.architecture {
        Architecture::Gilm | Architecture::Unet => Body::UNet(Box::new(build_unet(spec, out_ch, &mut ps, rng)?)),
        Architecture::Cnn => Body::Cnn(build_cnn(spec, out_ch, &mut ps, rng)?),
    };
    let decoder = match &spec.latent {
        LatentMode::Pixel => None,
        LatentMode::Latent { channels, decoder_widths, .. } => {
            let mut stages = Vec::new();
            let mut prev = *channels;
            for (i, &w) in decoder_widths.iter().enumerate() {
                stages.push(Conv2d::new(&mut ps, &format!("decoder.up{i}"), prev, w, 3, 1, false, rng)?);
                prev = w;
            }
            let out_conv = Conv2d::new(&mut ps, "decoder.out", prev, 1, 3, 1, false, rng)?;
            Some(LatentDecoder { stages, out_conv })
        }
    };
    Ok(Model { spec: spec.clone(), params: ps, body, decoder })
}

fn attention_block(
    spec: &ModelSpec,
    ps: &mut ParameterSet,
    name: &str,
    width: usize,
    heads: usize,
    rng: &mut Rng,
) -> Result<Option<TransformerBlock>> {
    if heads == 0 {
        return Ok(None);
    }
    let a = AttentionSpec::new(width, heads).map_err(|e| Error::Spec(e.to_string()))?;
    Ok(Some(TransformerBlock::new(ps, name, a, spec.norm, spec.norm_groups, spec.zero_init, rng)?))
}

fn build_unet(spec: &ModelSpec, out_ch: usize, ps: &mut ParameterSet, rng: &mut Rng) -> Result<UNetBody> {
    let w = &spec.widths;
    let levels = w.len();
    let heads = |l: usize| spec.attention_heads.get(l).copied().unwrap_or(0);
    let resnet = |ps: &mut ParameterSet, name: String, cin, cout, rng: &mut Rng| {
        ResnetBlock::new(ps, &name, cin, cout, spec.norm, spec.norm_groups, spec.zero_init, rng)
    };

    let stem = Conv2d::new(ps, "stem", spec.input_channels, w[0], 3, 1, false, rng)?;
    let mut encoder = Vec::with_capacity(levels);
    let mut down = Vec::new();
    let mut ch = w[0];
    for l in 0..levels {
        let mut blocks = Vec::new();
        for b in 0..spec.blocks[l] {
            blocks.push(resnet(ps, format!("enc{l}.res{b}"), ch, w[l], rng)?);
            ch = w[l];
        }
        if spec.blocks[l] == 0 && ch != w[l] {
            return Err(Error::Spec(format!("level {l} changes width {ch}->{} but has no blocks", w[l])));
        }
        let attention = attention_block(spec, ps, &format!("enc{l}.attn"), w[l], heads(l), rng)?;
        encoder.push(Level { blocks, attention });
        if l + 1 < levels {
            down.push(Conv2d::new(ps, &format!("down{l}"), w[l], w[l], 3, 2, false, rng)?);
        }
    }

    let deepest = w[levels - 1];
    let mut mid = vec![resnet(ps, "mid.res0".into(), deepest, deepest, rng)?];
    let mid_attention = attention_block(spec, ps, "mid.attn", deepest, spec.mid_attention_heads, rng)?;
    if mid_attention.is_some() {
        mid.push(resnet(ps, "mid.res1".into(), deepest, deepest, rng)?);
    }

    let mut up = Vec::new();
    let mut decoder = Vec::with_capacity(levels);
    let mut ch = deepest;
    for l in (0..levels).rev() {
        if l + 1 < levels {
            up.push(Conv2d::new(ps, &format!("up{l}"), ch, w[l], 3, 1, false, rng)?);
            ch = w[l];
        }
        // The skip concatenation doubles the input of the first block.
        let mut cin = ch + w[l];
        let mut blocks = Vec::new();
        for b in 0..spec.blocks[l].max(1) {
            blocks.push(resnet(ps, format!("dec{l}.res{b}"), cin, w[l], rng)?);
            cin = w[l];
        }
        ch = w[l];
        let attention = attention_block(spec, ps, &format!("dec{l}.attn"), w[l], heads(l), rng)?;
        decoder.push(Level { blocks, attention });
    }
    let out_norm = Norm::new(ps, "out.norm", spec.norm, w[0], spec.norm_groups, rng)?;
    let out_conv = Conv2d::new(ps, "out.conv", w[0], out_ch, 3, 1, false, rng)?;
    Ok(UNetBody { stem, encoder, down, mid, mid_attention, up, decoder, out_norm, out_conv })
}

fn build_cnn(spec: &ModelSpec, out_ch: usize, ps: &mut ParameterSet, rng: &mut Rng) -> Result<CnnBody> {
    let mut layers = Vec::new();
    let mut ch = spec.input_channels;
    for (l, (&w, &n)) in spec.widths.iter().zip(&spec.blocks).enumerate() {
        for b in 0..n {
            let name = format!("conv{l}.{b}");
            let conv = Conv2d::new(ps, &name, ch, w, 3, 1, false, rng)?;
            let norm = Norm::new(ps, &format!("{name}.norm"), spec.norm, w, spec.norm_groups, rng)?;
            layers.push(CnnLayer { conv, norm });
            ch = w;
        }
    }
    let out_conv = Conv2d::new(ps, "out.conv", ch, out_ch, 3, 1, false, rng)?;
    Ok(CnnBody { layers, out_conv })
}

impl UNetBody {
    fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let mut h = self.stem.forward(t, p, x)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        for (l, level) in self.encoder.iter().enumerate() {
            h = level.forward(t, p, h)?;
            skips.push(h);
            if let Some(d) = self.down.get(l) {
                h = d.forward(t, p, h)?;
            }
        }
        h = self.mid[0].forward(t, p, h)?;
        if let Some(a) = &self.mid_attention {
            h = a.forward(t, p, h)?;
            h = self.mid[1].forward(t, p, h)?;
        }
        let mut ups = self.up.iter();
        for (i, level) in self.decoder.iter().enumerate() {
            if i > 0 {
                h = t.upsample_nearest2x(h)?;
                h = ups.next().expect("one up conv per upsampling").forward(t, p, h)?;
            }
            let skip = skips.pop().expect("one skip per level");
            h = t.concat_channels(h, skip)?;
            h = level.forward(t, p, h)?;
        }
        let h = self.out_norm.forward(t, p, h)?;
        let h = t.silu(h);
        self.out_conv.forward(t, p, h)
    }
}

impl CnnBody {
    fn forward(&self, t: &mut Tape, p: &Bound, mut h: Var) -> Result<Var> {
        for layer in &self.layers {
            h = layer.conv.forward(t, p, h)?;
            h = layer.norm.forward(t, p, h)?;
            h = t.silu(h);
        }
        self.out_conv.forward(t, p, h)
    }
}

impl Model {
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Number of multi-head attention modules.
    pub fn attention_modules(&self) -> usize {
        match &self.body {
            Body::Cnn(_) => 0,
            Body::UNet(u) => {
                u.encoder.iter().chain(&u.decoder).filter(|l| l.attention.is_some()).count()
                    + usize::from(u.mid_attention.is_some())
            }
        }
    }

    pub fn input_var(&self, t: &mut Tape, input: &ReconInput) -> Result<Var> {
        if input.shape[1] != self.spec.input_channels {
            return Err(Error::Shape(format!(
                "input has {} channels, model expects {}",
                input.shape[1], self.spec.input_channels
            )));
        }
        t.constant(&input.shape, input.data.clone())
    }

    /// Differentiable forward pass: returns the [1, 1, H, W] sigmoid output.
    pub fn forward(&self, t: &mut Tape, p: &Bound, x: Var) -> Result<(Var, ShapeTrace)> {
        let (_, _, h, w) = t.nchw(x)?;
        let f = self.spec.latent_factor();
        self.spec.check_image_dims(w * f, h * f)?;
        let y = match &self.body {
            Body::UNet(u) => u.forward(t, p, x)?,
            Body::Cnn(c) => c.forward(t, p, x)?,
        };
        let body_output = t.shape(y).to_vec();
        let (y, latent) = match &self.decoder {
            None => (y, None),
            Some(d) => {
                let mut z = y;
                for s in &d.stages {
                    z = t.upsample_nearest2x(z)?;
                    z = s.forward(t, p, z)?;
                    z = t.silu(z);
                }
                (d.out_conv.forward(t, p, z)?, Some(body_output.clone()))
            }
        };
        let out = t.sigmoid(y);
        let output = t.shape(out).to_vec();
        Ok((out, ShapeTrace { body_output, latent, output }))
    }

    /// Evaluates the network on `input` without keeping a graph.
    pub fn predict(&self, input: &ReconInput) -> Result<(Image2D, ShapeTrace)> {
        let mut t = Tape::new();
        let p = self.params.bind(&mut t)?;
        let x = self.input_var(&mut t, input)?;
        let (out, trace) = self.forward(&mut t, &p, x)?;
        let s = t.shape(out);
        let img = Image2D::new(s[3], s[2], t.value(out).to_vec())?;
        Ok((img, trace))
    }
}
