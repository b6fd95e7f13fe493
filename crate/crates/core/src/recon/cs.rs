//! Compressed-sensing reconstruction: monotone FISTA on
//! `0.5 ||A x - b||^2 + lambda * Reg(x)` with a [0,1] box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::{check_pair, BucketSignal, Image2D, PatternStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// Isotropic total variation.
    #[default]
    Tv,
    /// l1 norm of the pixel values.
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// 1 / (power-method estimate of ||A^T A||).
    #[default]
    Auto,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsConfig {
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub max_iters: usize,
    pub step: StepSize,
    /// Stop when the relative change of an accepted iterate falls below this.
    pub tol: f64,
    /// Dual iterations per TV proximal step (warm-started across steps).
    pub tv_inner_iters: usize,
    /// Power iterations for the automatic step size.
    pub power_iters: usize,
    /// Seed of the power-method start vector.
    pub seed: u64,
}

impl Default for CsConfig {
    fn default() -> Self {
        CsConfig {
            regularizer: Regularizer::Tv,
            lambda: 1e-2,
            max_iters: 500,
            step: StepSize::Auto,
            tol: 1e-6,
            tv_inner_iters: 20,
            power_iters: 50,
            seed: 0,
        }
    }
}

impl CsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda = {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if let StepSize::Explicit(s) = self.step {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter(format!("step = {s}")));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol = {}", self.tol)));
        }
        if self.power_iters == 0 || self.tv_inner_iters == 0 {
            return Err(Error::InvalidParameter("iteration counts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CsResult {
    pub image: Image2D,
    /// Objective after each iteration.
    pub loss_history: Vec<f64>,
    pub lipschitz: f64,
}

/// Power-method estimate of the largest eigenvalue of `A^T A`.
///
/// Each iteration returns the Rayleigh quotient of the current unit vector,
/// which for a PSD operator never decreases along the power sequence.
pub fn lipschitz_estimate(patterns: &PatternStack, iters: usize, rng: &mut Rng) -> Result<f64> {
    if iters == 0 {
        return Err(Error::InvalidParameter("power iterations must be >= 1".into()));
    }
    if patterns.data().iter().all(|&v| v == 0.0) {
        return Err(Error::DegeneratePatterns("all-zero pattern matrix".into()));
    }
    let mut v: Vec<f64> = (0..patterns.pixels()).map(|_| rng.normal()).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut est = 0.0;
    for _ in 0..iters {
        let w = patterns.apply_adjoint(&patterns.apply(&v));
        est = dot(&v, &w);
        let wn = dot(&w, &w).sqrt();
        if wn == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / wn).collect();
    }
    Ok(est)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Forward differences with Neumann boundary; the last column/row has zero
// difference. `div` is the negative adjoint of `grad`.

fn grad(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            gy[i] = if y + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

fn div(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut d = 0.0;
            if x + 1 < w {
                d += px[i];
            }
            if x > 0 {
                d -= px[i - 1];
            }
            if y + 1 < h {
                d += py[i];
            }
            if y > 0 {
                d -= py[i - w];
            }
            out[i] = d;
        }
    }
}

pub fn total_variation(u: &[f64], w: usize, h: usize) -> f64 {
    let mut gx = vec![0.0; u.len()];
    let mut gy = vec![0.0; u.len()];
    grad(u, w, h, &mut gx, &mut gy);
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).sum()
}

/// Dual state of the TV proximal solver, kept between calls for warm starts.
struct TvDual {
    px: Vec<f64>,
    py: Vec<f64>,
}

impl TvDual {
    fn new(n: usize) -> Self {
        TvDual { px: vec![0.0; n], py: vec![0.0; n] }
    }
}

/// Fast gradient projection on the dual of the isotropic TV denoising
/// problem `min_u 0.5 ||u - x||^2 + weight * TV(u)`; `u = x + weight * div p`.
fn prox_tv_dual(x: &[f64], w: usize, h: usize, weight: f64, iters: usize, dual: &mut TvDual) -> Vec<f64> {
    if weight == 0.0 {
        return x.to_vec();
    }
    let n = x.len();
    let mut rx = dual.px.clone();
    let mut ry = dual.py.clone();
    let mut t = 1.0f64;
    let mut u = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let step = 1.0 / (8.0 * weight);
    for _ in 0..iters {
        div(&rx, &ry, w, h, &mut d);
        for i in 0..n {
            u[i] = x[i] + weight * d[i];
        }
        grad(&u, w, h, &mut gx, &mut gy);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            let mut qx = rx[i] + step * gx[i];
            let mut qy = ry[i] + step * gy[i];
            let mag = (qx * qx + qy * qy).sqrt();
            if mag > 1.0 {
                qx /= mag;
                qy /= mag;
            }
            rx[i] = qx + beta * (qx - dual.px[i]);
            ry[i] = qy + beta * (qy - dual.py[i]);
            dual.px[i] = qx;
            dual.py[i] = qy;
        }
        t = t_next;
    }
    div(&dual.px, &dual.py, w, h, &mut d);
    (0..n).map(|i| x[i] + weight * d[i]).collect()
}

/// Approximate isotropic-TV proximal map. `weight = 0` is the identity.
pub fn prox_tv(x: &Image2D, weight: f64, inner_iters: usize) -> Result<Image2D> {
    if !(weight >= 0.0) {
        return Err(Error::InvalidParameter(format!("TV weight = {weight}")));
    }
    if weight == 0.0 || inner_iters == 0 {
        return Ok(x.clone());
    }
    let mut dual = TvDual::new(x.len());
    let u = prox_tv_dual(x.data(), x.width(), x.height(), weight, inner_iters, &mut dual);
    Image2D::new(x.width(), x.height(), u)
}

struct Problem<'a> {
    patterns: &'a PatternStack,
    b: &'a [f64],
    cfg: &'a CsConfig,
}

impl Problem<'_> {
    fn objective(&self, x: &[f64]) -> f64 {
        let r = self.patterns.apply(x);
        let data: f64 = r.iter().zip(self.b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
        let reg = match self.cfg.regularizer {
            Regularizer::Tv => total_variation(x, self.patterns.width(), self.patterns.height()),
            Regularizer::L1 => x.iter().map(|v| v.abs()).sum(),
        };
        data + self.cfg.lambda * reg
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut r = self.patterns.apply(y);
        r.iter_mut().zip(self.b).for_each(|(a, b)| *a -= b);
        self.patterns.apply_adjoint(&r)
    }
}

/// Monotone FISTA with momentum restart.
///
/// A candidate that raises the objective is rejected: the iterate stays put
/// and momentum restarts from it, so the recorded objective never increases.
pub fn fista_reconstruct(patterns: &PatternStack, signal: &BucketSignal, cfg: &CsConfig) -> Result<CsResult> {
    check_pair(patterns, signal)?;
    cfg.validate()?;
    let (w, h) = (patterns.width(), patterns.height());
    let n = patterns.pixels();
    let lipschitz = match cfg.step {
        StepSize::Auto => lipschitz_estimate(patterns, cfg.power_iters, &mut Rng::new(cfg.seed))?,
        StepSize::Explicit(s) => 1.0 / s,
    };
    if !(lipschitz > 0.0) {
        return Err(Error::DegeneratePatterns(format!("Lipschitz estimate {lipschitz}")));
    }
    let step = 1.0 / lipschitz;
    let problem = Problem { patterns, b: signal.values(), cfg };
    let mut dual = TvDual::new(n);

    let mut x = vec![0.0; n];
    let mut fx = problem.objective(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut restarted_from_x = false;

    for iter in 0..cfg.max_iters {
        let g = problem.gradient(&y);
        let v: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        let mut z = match cfg.regularizer {
            Regularizer::Tv => prox_tv_dual(&v, w, h, cfg.lambda * step, cfg.tv_inner_iters, &mut dual),
            Regularizer::L1 => {
                let thr = cfg.lambda * step;
                v.iter().map(|&vi| vi.signum() * (vi.abs() - thr).max(0.0)).collect()
            }
        };
        z.iter_mut().for_each(|zi| *zi = zi.clamp(0.0, 1.0));
        let fz = problem.objective(&z);
        if !fz.is_finite() {
            return Err(Error::NumericalFailure { iteration: iter, detail: format!("objective became {fz}") });
        }

        if fz <= fx {
            let change = z.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scale = x.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            y = z.iter().zip(&x).map(|(zi, xi)| zi + beta * (zi - xi)).collect();
            x = z;
            fx = fz;
            t = t_next;
            restarted_from_x = false;
            history.push(fx);
            if change <= cfg.tol * scale {
                break;
            }
        } else {
            history.push(fx);
            if restarted_from_x {
                // A plain proximal step from x failed to descend: stalled.
                break;
            }
            y.clone_from(&x);
            t = 1.0;
            restarted_from_x = true;
        }
    }

    Ok(CsResult { image: Image2D::new(w, h, x)?, loss_history: history, lipschitz })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_stack(n: usize, scale: f64) -> PatternStack {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = scale;
        }
        PatternStack::new(n, n, 1, data).unwrap()
    }

    #[test]
    fn lipschitz_of_identity() {
        let est = lipschitz_estimate(&identity_stack(16, 1.0), 50, &mut Rng::new(1)).unwrap();
        assert!((est - 1.0).abs() < 1e-6);
        let est = lipschitz_estimate(&identity_stack(16, 2.0), 50, &mut Rng::new(1)).unwrap();
        assert!((est - 4.0).abs() < 1e-6);
    }

    #[test]
    fn lipschitz_rejects_zero_patterns() {
        let p = PatternStack::new(3, 2, 2, vec![0.0; 12]).unwrap();
        assert!(matches!(lipschitz_estimate(&p, 5, &mut Rng::new(0)), Err(Error::DegeneratePatterns(_))));
    }

    #[test]
    fn exact_identity_recovery() {
        let n = 64;
        let pats = identity_stack(n, 1.0);
        let truth: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5).collect();
        let sig = BucketSignal::new(truth.clone(), None).unwrap();
        let cfg = CsConfig { lambda: 0.0, max_iters: 200, ..Default::default() };
        let res = fista_reconstruct(&pats, &sig, &cfg).unwrap();
        let err: f64 = res.image.data().iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nrm: f64 = truth.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / nrm < 1e-6);
    }

    #[test]
    fn zero_data_gives_zero_image() {
        let mut rng = Rng::new(3);
        let pats = crate::forward::generate_patterns(Default::default(), 30, 6, 6, &mut rng).unwrap();
        let sig = BucketSignal::new(vec![0.0; 30], None).unwrap();
        for reg in [Regularizer::Tv, Regularizer::L1] {
            let cfg = CsConfig { regularizer: reg, lambda: 0.1, ..Default::default() };
            let res = fista_reconstruct(&pats, &sig, &cfg).unwrap();
            assert!(res.image.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn prox_tv_identities() {
        let img = Image2D::from_fn(7, 5, |x, y| ((x * 3 + y * 5) % 7) as f64 / 7.0).unwrap();
        assert_eq!(prox_tv(&img, 0.0, 50).unwrap(), img);
        let c = Image2D::filled(7, 5, 0.4).unwrap();
        let out = prox_tv(&c, 2.5, 50).unwrap();
        for v in out.data() {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(CsConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(CsConfig { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(CsConfig { step: StepSize::Explicit(0.0), ..Default::default() }.validate().is_err());
    }
}
