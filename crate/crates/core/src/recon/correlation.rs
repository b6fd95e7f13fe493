//! Second-order correlation estimators: plain GI (covariance) and
//! differential GI.
//!
//! The `_raw` variants return the unnormalized estimate; the public
//! estimators min-max normalize it.

use crate::error::{Error, Result};
use crate::types::{check_pair, BucketSignal, Image2D, PatternStack};

fn check_inputs(patterns: &PatternStack, signal: &BucketSignal) -> Result<()> {
    check_pair(patterns, signal)?;
    if patterns.count() < 2 {
        return Err(Error::InsufficientMeasurements { needed: 2, got: patterns.count() });
    }
    Ok(())
}

/// Per-pixel `<(b - <b>)(H - <H>)>`.
pub fn gi_correlation_raw(patterns: &PatternStack, signal: &BucketSignal) -> Result<Image2D> {
    check_inputs(patterns, signal)?;
    let m = patterns.count() as f64;
    let n = patterns.pixels();
    let b_mean = signal.mean();
    let mut cross = vec![0.0; n];
    for (p, &b) in patterns.iter().zip(signal.values()) {
        let db = b - b_mean;
        if db == 0.0 {
            continue;
        }
        for j in 0..n {
            cross[j] += db * p[j];
        }
    }
    // sum_i (b_i - <b>) vanishes up to rounding; remove that residue times <H>.
    let resid: f64 = signal.values().iter().map(|b| b - b_mean).sum();
    let mut data: Vec<f64> = cross.iter().map(|c| c / m).collect();
    if resid != 0.0 {
        let mut mean_h = vec![0.0; n];
        for p in patterns.iter() {
            for j in 0..n {
                mean_h[j] += p[j];
            }
        }
        for j in 0..n {
            data[j] -= resid * (mean_h[j] / m) / m;
        }
    }
    Image2D::new(patterns.width(), patterns.height(), data)
}

pub fn gi_correlation(patterns: &PatternStack, signal: &BucketSignal) -> Result<Image2D> {
    gi_correlation_raw(patterns, signal)?.normalize()
}

/// Per-pixel `<b H> - (<b>/<R>) <R H>` with R_i the total of pattern i.
pub fn dgi_raw(patterns: &PatternStack, signal: &BucketSignal) -> Result<Image2D> {
    check_inputs(patterns, signal)?;
    let m = patterns.count() as f64;
    let n = patterns.pixels();
    let totals = patterns.totals();
    let r_mean = totals.iter().sum::<f64>() / m;
    if r_mean == 0.0 {
        return Err(Error::DegeneratePatterns("mean pattern total is zero".into()));
    }
    let ratio = signal.mean() / r_mean;
    let mut bh = vec![0.0; n];
    let mut rh = vec![0.0; n];
    for ((p, &b), &r) in patterns.iter().zip(signal.values()).zip(&totals) {
        for j in 0..n {
            bh[j] += b * p[j];
            rh[j] += r * p[j];
        }
    }
    let data = (0..n).map(|j| bh[j] / m - ratio * (rh[j] / m)).collect();
    Image2D::new(patterns.width(), patterns.height(), data)
}

pub fn dgi(patterns: &PatternStack, signal: &BucketSignal) -> Result<Image2D> {
    dgi_raw(patterns, signal)?.normalize()
}
