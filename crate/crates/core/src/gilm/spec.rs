//! Declarative network descriptions.

use serde::{Deserialize, Serialize};

use crate::autodiff::NormKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Encoder/decoder with skip concatenations, residual blocks and attention.
    Gilm,
    /// Same topology without attention.
    Unet,
    /// Plain convolution stack at full resolution.
    Cnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputDistribution {
    #[default]
    Uniform,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LatentMode {
    #[default]
    Pixel,
    /// The network works on a grid `factor` times smaller; a conv + upsample
    /// decoder (one stage per halving) maps it back to pixels.
    Latent { factor: usize, channels: usize, decoder_widths: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Channel width per resolution level.
    pub widths: Vec<usize>,
    /// Residual blocks (or conv layers for the CNN) per level.
    pub blocks: Vec<usize>,
    /// Attention heads per encoder/decoder level, 0 for none. GILM only.
    pub attention_heads: Vec<usize>,
    /// Heads of the bottleneck transformer block, 0 for none. GILM only.
    pub mid_attention_heads: usize,
    pub latent: LatentMode,
    pub input_channels: usize,
    pub input_distribution: InputDistribution,
    pub norm: NormKind,
    pub norm_groups: usize,
    /// Zero the last conv of every residual and transformer block.
    pub zero_init: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::toy_gilm()
    }
}

impl ModelSpec {
    pub fn toy_gilm() -> Self {
        ModelSpec {
            architecture: Architecture::Gilm,
            widths: vec![16, 32],
            blocks: vec![1, 1],
            attention_heads: vec![0, 0],
            mid_attention_heads: 4,
            latent: LatentMode::Pixel,
            input_channels: 1,
            input_distribution: InputDistribution::Uniform,
            norm: NormKind::Group,
            norm_groups: 8,
            zero_init: true,
        }
    }

    pub fn toy_unet() -> Self {
        ModelSpec { architecture: Architecture::Unet, mid_attention_heads: 0, ..Self::toy_gilm() }
    }

    pub fn toy_cnn() -> Self {
        ModelSpec {
            architecture: Architecture::Cnn,
            widths: vec![16, 16],
            blocks: vec![2, 2],
            attention_heads: vec![0, 0],
            mid_attention_heads: 0,
            ..Self::toy_gilm()
        }
    }

    /// Number of 2x downsamplings between the finest and coarsest level.
    pub fn depth(&self) -> usize {
        match self.architecture {
            Architecture::Cnn => 0,
            _ => self.widths.len().saturating_sub(1),
        }
    }

    pub fn latent_factor(&self) -> usize {
        match &self.latent {
            LatentMode::Pixel => 1,
            LatentMode::Latent { factor, .. } => *factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad(format!("widths must be non-empty and positive, got {:?}", self.widths));
        }
        if self.blocks.len() != self.widths.len() {
            return bad(format!("{} block counts for {} levels", self.blocks.len(), self.widths.len()));
        }
        if self.input_channels == 0 || self.norm_groups == 0 {
            return bad("input_channels and norm_groups must be positive".into());
        }
        let heads = &self.attention_heads;
        if !heads.is_empty() && heads.len() != self.widths.len() {
            return bad(format!("{} attention entries for {} levels", heads.len(), self.widths.len()));
        }
        let any_attention = heads.iter().any(|&h| h > 0) || self.mid_attention_heads > 0;
        if any_attention && self.architecture != Architecture::Gilm {
            return bad(format!("{:?} has no attention blocks", self.architecture));
        }
        for (&h, &w) in heads.iter().zip(&self.widths) {
            if h > 0 && w % h != 0 {
                return bad(format!("width {w} not divisible by {h} heads"));
            }
        }
        let deepest = *self.widths.last().expect("non-empty");
        if self.mid_attention_heads > 0 && !deepest.is_multiple_of(self.mid_attention_heads) {
            return bad(format!("bottleneck width {deepest} not divisible by {} heads", self.mid_attention_heads));
        }
        if let LatentMode::Latent { factor, channels, decoder_widths } = &self.latent {
            if !matches!(factor, 4 | 8) {
                return bad(format!("latent factor must be 4 or 8, got {factor}"));
            }
            if *channels == 0 {
                return bad("latent channels must be positive".into());
            }
            let stages = factor.trailing_zeros() as usize;
            if decoder_widths.len() != stages || decoder_widths.contains(&0) {
                return bad(format!("factor {factor} needs {stages} positive decoder widths, got {decoder_widths:?}"));
            }
        }
        Ok(())
    }

    /// Checks that an image of this size fits the spec's down/upsampling.
    pub fn check_image_dims(&self, width: usize, height: usize) -> Result<()> {
        let f = self.latent_factor();
        if width == 0 || height == 0 || !width.is_multiple_of(f) || !height.is_multiple_of(f) {
            return Err(Error::Spec(format!("latent factor {f} does not divide {width}x{height}")));
        }
        let unit = 1usize << self.depth();
        let (lw, lh) = (width / f, height / f);
        if lw % unit != 0 || lh % unit != 0 {
            return Err(Error::Spec(format!(
                "{lw}x{lh} grid not divisible by 2^{} for {} levels",
                self.depth(),
                self.widths.len()
            )));
        }
        Ok(())
    }
}
