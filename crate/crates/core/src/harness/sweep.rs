//! Measurement-count and resolution sweeps with per-method summaries.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{environment, run_experiment, unique_run_dir, write_records_csv, ResultRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepSpec {
    Measurements {
        values: Vec<usize>,
    },
    /// `[width, height]` pairs, all measured with the same M.
    Resolution {
        dims: Vec<[usize; 2]>,
        measurements: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub experiment: ExperimentConfig,
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub width: usize,
    pub height: usize,
    pub measurements: usize,
    pub beta: f64,
    pub beta_display: String,
    pub seeds: usize,
    pub psnr_mean: Option<f64>,
    pub psnr_median: Option<f64>,
    pub ssim_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub dir: PathBuf,
    pub records: Vec<ResultRecord>,
    pub summary: Vec<SummaryRow>,
}

/// `count` evenly spaced measurement counts up to `fraction` of `pixels`,
/// e.g. 10 levels up to 60% of 32x32 gives 61, 123, ..., 614.
pub fn desk_measurement_levels(pixels: usize, fraction: f64, count: usize) -> Vec<usize> {
    let top = (pixels as f64 * fraction).round();
    (1..=count).map(|k| ((top * k as f64) / count as f64).round().max(1.0) as usize).collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// One row per (method, size, M) in first-seen order.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(String, usize, usize, usize), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.method.clone(), r.width, r.height, r.measurements);
        groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        groups.get_mut(&(r.method.clone(), r.width, r.height, r.measurements)).expect("inserted").push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let psnrs: Vec<f64> = rs.iter().filter_map(|r| r.psnr).collect();
            let ssims: Vec<f64> = rs.iter().filter_map(|r| r.ssim).collect();
            SummaryRow {
                method: key.0,
                width: key.1,
                height: key.2,
                measurements: key.3,
                beta: rs[0].beta,
                beta_display: rs[0].beta_display.clone(),
                seeds: rs.len(),
                psnr_mean: mean(&psnrs),
                psnr_median: median(&psnrs),
                ssim_mean: mean(&ssims),
            }
        })
        .collect()
}

fn run_points(base: &ExperimentConfig, tag: &str, points: Vec<ExperimentConfig>) -> Result<SweepRun> {
    if points.is_empty() {
        return Err(Error::Config("sweep has no points".into()));
    }
    for p in &points {
        p.validate()?;
    }
    let hash = {
        let all = serde_json::to_string(&points)?;
        let mut probe = base.clone();
        probe.name = all;
        probe.hash()
    };
    let dir = unique_run_dir(&base.output_dir, &format!("{}-{tag}", base.name), &hash)?;
    let echo = serde_json::json!({ "points": points, "sweep_hash": hash, "environment": environment() });
    std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&echo)?)?;
    let mut records = Vec::new();
    for mut p in points {
        p.output_dir = dir.clone();
        records.extend(run_experiment(&p)?.records);
    }
    let summary = summarize(&records);
    write_records_csv(&dir.join("records.csv"), &records)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for row in &summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(SweepRun { dir, records, summary })
}

pub fn sweep_measurements(cfg: &ExperimentConfig, m_list: &[usize]) -> Result<SweepRun> {
    let points = m_list
        .iter()
        .map(|&m| ExperimentConfig { name: format!("{}-m{m}", cfg.name), measurements: m, ..cfg.clone() })
        .collect();
    run_points(cfg, "msweep", points)
}

pub fn sweep_resolution(cfg: &ExperimentConfig, dims: &[(usize, usize)], measurements: usize) -> Result<SweepRun> {
    let points = dims
        .iter()
        .map(|&(w, h)| ExperimentConfig {
            name: format!("{}-{w}x{h}", cfg.name),
            width: w,
            height: h,
            measurements,
            ..cfg.clone()
        })
        .collect();
    run_points(cfg, "rsweep", points)
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepRun> {
    match &cfg.sweep {
        SweepSpec::Measurements { values } => sweep_measurements(&cfg.experiment, values),
        SweepSpec::Resolution { dims, measurements } => {
            let d: Vec<(usize, usize)> = dims.iter().map(|&[w, h]| (w, h)).collect();
            sweep_resolution(&cfg.experiment, &d, *measurements)
        }
    }
}
