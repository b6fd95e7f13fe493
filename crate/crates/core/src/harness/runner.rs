//! Single experiments: simulate (or replay), reconstruct with each method,
//! score, and persist.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodConfig, ObjectSource};
use crate::error::{Error, Result};
use crate::forward::{apply_noise, generate_patterns, measure};
use crate::gilm::reconstruct_tracked;
use crate::io::{load_bundle, load_image, save_image, BitDepth};
use crate::metrics::{psnr, ssim, SSIM_WINDOW};
use crate::recon::{dgi, fista_reconstruct, gi_correlation};
use crate::rng::Rng;
use crate::types::{format_sampling_rate, normalize_image, sampling_rate, BucketSignal, Image2D, PatternStack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub measurements: usize,
    pub beta: f64,
    pub beta_display: String,
    /// Against the normalized reconstruction; infinite for a perfect match.
    pub psnr: Option<f64>,
    /// Absent without ground truth or for images smaller than the window.
    pub ssim: Option<f64>,
    pub detail: String,
    pub config_hash: String,
    pub wall_time_s: f64,
}

/// Patterns, bucket signal and (if known) ground truth for one seed.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub patterns: PatternStack,
    pub signal: BucketSignal,
    pub truth: Option<Image2D>,
}

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub image: Image2D,
    pub detail: String,
    /// (loss, psnr) per iteration for the trained networks.
    pub history: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct RunImage {
    pub method: String,
    pub seed: u64,
    pub image: Image2D,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub dir: PathBuf,
    pub records: Vec<ResultRecord>,
    pub images: Vec<RunImage>,
    pub truth: Option<Image2D>,
}

pub fn load_truth(cfg: &ExperimentConfig) -> Result<Option<Image2D>> {
    let Some(obj) = &cfg.object else { return Ok(None) };
    let img = match obj {
        ObjectSource::Builtin { target } => target.render(cfg.width, cfg.height)?,
        ObjectSource::Image { path } => {
            let img = load_image(path)?;
            if img.width() != cfg.width || img.height() != cfg.height {
                return Err(Error::Config(format!(
                    "{} is {}x{}, config says {}x{}",
                    path.display(),
                    img.width(),
                    img.height(),
                    cfg.width,
                    cfg.height
                )));
            }
            img
        }
    };
    Ok(Some(img))
}

/// Patterns from stream 1 and noise from stream 2 of `seed`, or the replay
/// bundle when one is configured.
pub fn simulate(cfg: &ExperimentConfig, seed: u64, truth: Option<&Image2D>) -> Result<Measurement> {
    if let Some(dir) = &cfg.replay {
        let b = load_bundle(dir)?;
        if (b.patterns.width(), b.patterns.height(), b.patterns.count()) != (cfg.width, cfg.height, cfg.measurements) {
            return Err(Error::Replay(format!(
                "bundle holds {} patterns of {}x{}, config expects {} of {}x{}",
                b.patterns.count(),
                b.patterns.width(),
                b.patterns.height(),
                cfg.measurements,
                cfg.width,
                cfg.height
            )));
        }
        return Ok(Measurement { patterns: b.patterns, signal: b.signal, truth: truth.cloned() });
    }
    let truth = truth.ok_or_else(|| Error::Config("simulation needs an object".into()))?;
    let root = Rng::new(seed);
    let patterns = generate_patterns(cfg.patterns, cfg.measurements, cfg.width, cfg.height, &mut root.split(1))?;
    let clean = measure(truth, &patterns)?;
    let signal = apply_noise(&clean, cfg.noise, &mut root.split(2))?;
    Ok(Measurement { patterns, signal, truth: Some(truth.clone()) })
}

pub fn run_method(
    method: &MethodConfig,
    patterns: &PatternStack,
    signal: &BucketSignal,
    seed: u64,
    truth: Option<&Image2D>,
) -> Result<MethodOutput> {
    let plain = |image| Ok(MethodOutput { image, detail: String::new(), history: None });
    match method {
        MethodConfig::Gi => plain(gi_correlation(patterns, signal)?),
        MethodConfig::Dgi => plain(dgi(patterns, signal)?),
        MethodConfig::Gics { cs, lambda_grid } => {
            let mut cfg = cs.clone();
            cfg.seed = seed;
            let grid = match truth {
                Some(_) if !lambda_grid.is_empty() => lambda_grid.clone(),
                _ => vec![cs.lambda],
            };
            let mut best: Option<(f64, f64, Image2D, usize)> = None;
            for &lambda in &grid {
                cfg.lambda = lambda;
                let r = fista_reconstruct(patterns, signal, &cfg)?;
                let score = match truth {
                    Some(t) => psnr(&normalize_image(&r.image)?, t)?,
                    None => 0.0,
                };
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, lambda, r.image, r.loss_history.len()));
                }
            }
            let (_, lambda, image, iters) = best.expect("non-empty grid");
            Ok(MethodOutput { image, detail: format!("lambda={lambda:e};iters={iters}"), history: None })
        }
        MethodConfig::Cnn { model, train }
        | MethodConfig::Unet { model, train }
        | MethodConfig::Gilm { model, train } => {
            let mut train = train.clone();
            train.seed = seed;
            let (m, r) = reconstruct_tracked(model, patterns, signal, &train, truth)?;
            let detail = format!(
                "params={};iters={};best_iter={};best_loss={:e}",
                m.param_count(),
                r.history.len(),
                r.best_iter,
                r.best_loss
            );
            Ok(MethodOutput { image: r.image, detail, history: Some((r.history, r.psnr_history)) })
        }
    }
}

/// PSNR and SSIM of the normalized reconstruction.
pub fn score(image: &Image2D, truth: &Image2D) -> Result<(f64, Option<f64>)> {
    let n = normalize_image(image)?;
    let p = psnr(&n, truth)?;
    let s = if truth.width() >= SSIM_WINDOW && truth.height() >= SSIM_WINDOW { Some(ssim(&n, truth)?) } else { None };
    Ok((p, s))
}

/// `YYYYMMDDTHHMMSS` in UTC.
fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0) as i64;
    let (days, rem) = (secs.div_euclid(86_400), secs.rem_euclid(86_400));
    // Civil-from-days conversion for the proleptic Gregorian calendar.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}{m:02}{d:02}T{:02}{:02}{:02}", rem / 3600, rem % 3600 / 60, rem % 60)
}

/// Creates `<base>/<name>-<timestamp>-<hash8>`, adding a counter if taken.
pub fn unique_run_dir(base: &Path, name: &str, hash: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(base)?;
    let stem = format!("{name}-{}-{}", timestamp(), &hash[..8]);
    for k in 0.. {
        let dir = if k == 0 { base.join(&stem) } else { base.join(format!("{stem}-{k}")) };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

pub fn write_records_csv(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRecord>, _>>()?;
    Ok(rows)
}

fn write_history(path: &Path, loss: &[f64], psnr: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "loss", "psnr"])?;
    for (i, l) in loss.iter().enumerate() {
        let p = psnr.get(i).map(|p| p.to_string()).unwrap_or_default();
        w.write_record([i.to_string(), l.to_string(), p])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn environment() -> serde_json::Value {
    serde_json::json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "available_parallelism": std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    })
}

/// Runs every (seed, method) pair and writes `config.json`, `records.csv`,
/// `records.json`, `images/` and `histories/` into a fresh directory under
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let truth = load_truth(cfg)?;
    let hash = cfg.hash();
    let dir = unique_run_dir(&cfg.output_dir, &cfg.name, &hash)?;
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("histories"))?;
    let echo = serde_json::json!({ "config": cfg, "config_hash": hash, "environment": environment() });
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&echo)?)?;
    if let Some(t) = &truth {
        save_image(t, dir.join("images").join("truth.png"), BitDepth::Sixteen)?;
    }

    let beta = sampling_rate(cfg.measurements, cfg.width, cfg.height)?;
    let beta_display = format_sampling_rate(cfg.measurements, cfg.width, cfg.height)?;
    let mut records = Vec::new();
    let mut images = Vec::new();
    for &seed in &cfg.seeds {
        let m = simulate(cfg, seed, truth.as_ref())?;
        for method in &cfg.methods {
            let start = Instant::now();
            let out = run_method(method, &m.patterns, &m.signal, seed, m.truth.as_ref())?;
            let wall = start.elapsed().as_secs_f64();
            let (p, s) = match &m.truth {
                Some(t) => {
                    let (p, s) = score(&out.image, t)?;
                    (Some(p), s)
                }
                None => (None, None),
            };
            let stem = format!("{}_seed{seed}", method.name());
            save_image(
                &normalize_image(&out.image)?,
                dir.join("images").join(format!("{stem}.png")),
                BitDepth::Sixteen,
            )?;
            if let Some((loss, ps)) = &out.history {
                write_history(&dir.join("histories").join(format!("{stem}.csv")), loss, ps)?;
            }
            records.push(ResultRecord {
                method: method.name().to_string(),
                seed,
                width: cfg.width,
                height: cfg.height,
                measurements: cfg.measurements,
                beta,
                beta_display: beta_display.clone(),
                psnr: p,
                ssim: s,
                detail: out.detail,
                config_hash: hash.clone(),
                wall_time_s: wall,
            });
            images.push(RunImage { method: method.name().to_string(), seed, image: out.image });
        }
    }
    write_records_csv(&dir.join("records.csv"), &records)?;
    std::fs::write(dir.join("records.json"), serde_json::to_string_pretty(&records)?)?;
    Ok(ExperimentRun { dir, records, images, truth })
}
