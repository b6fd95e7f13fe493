//! Measurement-consistency loss and the self-supervised training loop.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Reduction, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::{check_pair, normalize_image, BucketSignal, Image2D, PatternStack};

use super::model::{build_model, Model, ReconInput};
use super::spec::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    #[default]
    Mean,
    Sum,
}

impl From<LossReduction> for Reduction {
    fn from(r: LossReduction) -> Self {
        match r {
            LossReduction::Mean => Reduction::Mean,
            LossReduction::Sum => Reduction::Sum,
        }
    }
}

/// `sum_i (I[i] - <H_i, x>)^2`, summed or averaged over measurements.
pub fn physics_loss(
    t: &mut Tape,
    x: Var,
    patterns: &Arc<PatternStack>,
    signal: &BucketSignal,
    reduction: LossReduction,
) -> Result<Var> {
    check_pair(patterns, signal)?;
    let pred = t.project(x, Arc::clone(patterns))?;
    let target = t.constant(&[signal.len()], signal.values().to_vec())?;
    let r = t.sub(target, pred)?;
    let sq = t.mul(r, r)?;
    Ok(t.reduce(sq, reduction.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Zero returns the untrained prediction.
    pub max_iters: usize,
    /// Stop after this many iterations without `min_improvement` relative
    /// loss decrease. Zero disables early stopping.
    pub patience: usize,
    pub min_improvement: f64,
    pub reduction: LossReduction,
    pub seed: u64,
    /// Keep the prediction every this many iterations, zero for never.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 2000,
            patience: 200,
            min_improvement: 0.01,
            reduction: LossReduction::Mean,
            seed: 0,
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.min_improvement);
        if !ok {
            return Err(Error::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Adam { lr: cfg.learning_rate, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, step: 0, m, v }
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = (&'a mut [f64], &'a [f64])>) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (p, g)) in params.into_iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                p[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Best iterate, min-max normalized.
    pub image: Image2D,
    /// Best iterate as produced by the network.
    pub raw: Image2D,
    /// Untrained prediction.
    pub initial: Image2D,
    /// Loss before each update.
    pub history: Vec<f64>,
    /// PSNR of each normalized prediction against the ground truth, when
    /// one was supplied.
    pub psnr_history: Vec<f64>,
    pub snapshots: Vec<(usize, Image2D)>,
    pub best_iter: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

fn image_of(t: &Tape, v: Var) -> Result<Image2D> {
    let s = t.shape(v);
    Image2D::new(s[3], s[2], t.value(v).to_vec())
}

/// Trains `model` so its prediction from `input` reproduces `signal`.
/// Returns the lowest-loss prediction seen.
pub fn train_reconstruct(
    model: &mut Model,
    input: &ReconInput,
    patterns: &Arc<PatternStack>,
    signal: &BucketSignal,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    train_reconstruct_tracked(model, input, patterns, signal, cfg, None)
}

/// [`train_reconstruct`] that also scores every iterate against `truth`.
pub fn train_reconstruct_tracked(
    model: &mut Model,
    input: &ReconInput,
    patterns: &Arc<PatternStack>,
    signal: &BucketSignal,
    cfg: &TrainConfig,
    truth: Option<&Image2D>,
) -> Result<TrainResult> {
    cfg.validate()?;
    if let Some(t) = truth {
        if t.width() != patterns.width() || t.height() != patterns.height() {
            return Err(Error::Shape("ground truth does not match the patterns".into()));
        }
    }
    let mut psnr_history = Vec::new();
    check_pair(patterns, signal)?;
    let mut adam = Adam::new(cfg, model.params.iter().map(|p| p.data.len()));
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut snapshots = Vec::new();
    let mut best: Option<(usize, f64, Image2D)> = None;
    let mut initial = None;
    let mut plateau_ref = f64::INFINITY;
    let mut since_improvement = 0;
    let mut stopped_early = false;

    for iter in 0..cfg.max_iters.max(1) {
        let mut t = Tape::new();
        let bound = model.params.bind(&mut t)?;
        let x = model.input_var(&mut t, input)?;
        let (out, _) = model.forward(&mut t, &bound, x)?;
        let pred = image_of(&t, out)?;
        if initial.is_none() {
            initial = Some(pred.clone());
        }
        if cfg.max_iters == 0 {
            break;
        }
        let loss = physics_loss(&mut t, out, patterns, signal, cfg.reduction)?;
        let lv = t.scalar(loss);
        if !lv.is_finite() {
            return Err(Error::NumericalFailure {
                iteration: iter,
                detail: format!("loss {lv}, parameter norm {:.6e}", model.params.norm()),
            });
        }
        history.push(lv);
        if let Some(truth) = truth {
            psnr_history.push(crate::metrics::psnr(&normalize_image(&pred)?, truth)?);
        }
        if cfg.snapshot_every > 0 && iter % cfg.snapshot_every == 0 {
            snapshots.push((iter, pred.clone()));
        }
        if best.as_ref().is_none_or(|b| lv < b.1) {
            best = Some((iter, lv, pred));
        }
        if lv < plateau_ref * (1.0 - cfg.min_improvement) {
            plateau_ref = lv;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if cfg.patience > 0 && since_improvement >= cfg.patience {
                stopped_early = true;
                break;
            }
        }

        t.backward(loss)?;
        let grads: Vec<&[f64]> = bound.vars().iter().map(|&v| t.grad(v).expect("parameter grad")).collect();
        if let Some(k) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NumericalFailure {
                iteration: iter,
                detail: format!(
                    "non-finite gradient for {}, parameter norm {:.6e}",
                    model.params.iter().nth(k).map_or("?", |p| p.name.as_str()),
                    model.params.norm()
                ),
            });
        }
        adam.step(model.params.iter_mut().map(|p| p.data.as_mut_slice()).zip(grads));
    }

    let initial = initial.expect("at least one forward pass");
    let (best_iter, best_loss, raw) = match best {
        Some(b) => b,
        None => (0, f64::NAN, initial.clone()),
    };
    Ok(TrainResult {
        image: normalize_image(&raw)?,
        raw,
        initial,
        history,
        psnr_history,
        snapshots,
        best_iter,
        best_loss,
        stopped_early,
    })
}

/// Builds a model and its input from `cfg.seed`, then trains it.
pub fn reconstruct(
    spec: &ModelSpec,
    patterns: &PatternStack,
    signal: &BucketSignal,
    cfg: &TrainConfig,
) -> Result<(Model, TrainResult)> {
    reconstruct_tracked(spec, patterns, signal, cfg, None)
}

pub fn reconstruct_tracked(
    spec: &ModelSpec,
    patterns: &PatternStack,
    signal: &BucketSignal,
    cfg: &TrainConfig,
    truth: Option<&Image2D>,
) -> Result<(Model, TrainResult)> {
    let root = Rng::new(cfg.seed);
    let mut model = build_model(spec, &mut root.split(0))?;
    let input = ReconInput::generate(spec, patterns.width(), patterns.height(), &mut root.split(1))?;
    let patterns = Arc::new(patterns.clone());
    let result = train_reconstruct_tracked(&mut model, &input, &patterns, signal, cfg, truth)?;
    Ok((model, result))
}
