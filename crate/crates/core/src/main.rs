use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ghostkit::harness::{
    self, profile_line, run_experiment, run_sweep, BuiltinTarget, ExperimentConfig, LineSpec, MethodConfig,
    ObjectSource, SweepConfig, SweepSpec,
};
use ghostkit::io::{load_bundle, load_image, save_bundle, save_image, BitDepth};
use ghostkit::{format_sampling_rate, metrics, normalize_image};

#[derive(Parser)]
#[command(name = "ghostkit", version, about = "Computational ghost imaging: simulate, reconstruct, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate patterns and bucket signal and write a replay bundle.
    Simulate(SimulateArgs),
    /// Reconstruct an image from a bundle with one method.
    Reconstruct(ReconstructArgs),
    /// Run an experiment config, or a sweep config, and write records.
    Sweep(SweepArgs),
    /// PSNR and SSIM of an image against a reference.
    Evaluate(EvaluateArgs),
    /// Intensity profile and Michelson contrast along a row or column.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    measurements: Option<usize>,
    /// Builtin target when no config is given: a letter (I O P E N 4 D Q), `bars` or `photo`.
    #[arg(long, default_value = "E")]
    target: String,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// GI, DGI, GICS, CNN, UNET or GILM.
    #[arg(long, default_value = "DGI")]
    method: String,
    /// Method config (JSON), e.g. {"method": "gilm", "train": {"max_iters": 500}}.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output image (.png or .pgm).
    #[arg(long)]
    out: PathBuf,
    /// Ground truth to score against.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replace the seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated method names replacing the configured list.
    #[arg(long)]
    method: Option<String>,
    /// Single measurement count replacing the configured one(s).
    #[arg(long)]
    measurements: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Min-max normalize the image first.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, conflicts_with = "column")]
    row: Option<usize>,
    #[arg(long)]
    column: Option<usize>,
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Exclusive end; defaults to the full line.
    #[arg(long)]
    end: Option<usize>,
}

fn parse_target(s: &str) -> Result<BuiltinTarget> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "bars" => BuiltinTarget::Bars,
        "photo" => BuiltinTarget::Photo,
        _ if s.chars().count() == 1 => BuiltinTarget::Letter { glyph: s.chars().next().expect("one char") },
        _ => bail!("unknown target {s:?}"),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<ExperimentConfig>(p)?,
        None => ExperimentConfig {
            name: "simulate".into(),
            object: Some(ObjectSource::Builtin { target: parse_target(&a.target)? }),
            width: a.size,
            height: a.size,
            patterns: Default::default(),
            measurements: (a.size * a.size * 6).div_ceil(10),
            noise: Default::default(),
            methods: vec![MethodConfig::Dgi],
            seeds: vec![0],
            output_dir: a.out.clone(),
            replay: None,
        },
    };
    if let Some(m) = a.measurements {
        cfg.measurements = m;
    }
    let seed = a.seed.or(cfg.seeds.first().copied()).unwrap_or(0);
    cfg.seeds = vec![seed];
    cfg.validate()?;
    let truth = harness::load_truth(&cfg)?;
    let m = harness::simulate(&cfg, seed, truth.as_ref())?;
    save_bundle(&a.out, &m.patterns, &m.signal, Some(format!("simulated:{}", cfg.hash())), Some(seed))?;
    if let Some(t) = &m.truth {
        save_image(t, a.out.join("truth.png"), BitDepth::Sixteen)?;
    }
    println!(
        "wrote {} measurements of {}x{} (sampling {}) to {}",
        cfg.measurements,
        cfg.width,
        cfg.height,
        format_sampling_rate(cfg.measurements, cfg.width, cfg.height)?,
        a.out.display()
    );
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let bundle = load_bundle(&a.bundle)?;
    let method = match &a.config {
        Some(p) => read_json::<MethodConfig>(p)?,
        None => MethodConfig::from_name(&a.method)?,
    };
    method.validate()?;
    let truth = a.reference.as_ref().map(load_image).transpose()?;
    let out = harness::run_method(&method, &bundle.patterns, &bundle.signal, a.seed, truth.as_ref())?;
    save_image(&normalize_image(&out.image)?, &a.out, BitDepth::Sixteen)?;
    let mut report = serde_json::json!({ "method": method.name(), "output": a.out, "detail": out.detail });
    if let Some(t) = &truth {
        let (p, s) = harness::score(&out.image, t)?;
        report["psnr"] = p.into();
        report["ssim"] = s.into();
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg: SweepConfig = match serde_json::from_str::<SweepConfig>(&text) {
        Ok(s) => s,
        Err(_) => {
            let e = ExperimentConfig::from_json(&text)?;
            let m = e.measurements;
            SweepConfig { experiment: e, sweep: SweepSpec::Measurements { values: vec![m] } }
        }
    };
    let exp = &mut cfg.experiment;
    if let Some(s) = a.seed {
        exp.seeds = vec![s];
    }
    if let Some(o) = a.out {
        exp.output_dir = o;
    }
    if let Some(list) = &a.method {
        exp.methods = list.split(',').map(|m| MethodConfig::from_name(m.trim())).collect::<ghostkit::Result<_>>()?;
    }
    if let Some(m) = a.measurements {
        exp.measurements = m;
        cfg.sweep = match cfg.sweep {
            SweepSpec::Measurements { .. } => SweepSpec::Measurements { values: vec![m] },
            SweepSpec::Resolution { dims, .. } => SweepSpec::Resolution { dims, measurements: m },
        };
    }
    let run = if matches!(&cfg.sweep, SweepSpec::Measurements { values } if values.len() == 1) {
        let r = run_experiment(&cfg.experiment)?;
        println!("{}", r.dir.display());
        harness::summarize(&r.records)
    } else {
        let r = run_sweep(&cfg)?;
        println!("{}", r.dir.display());
        r.summary
    };
    println!("{:<6} {:>9} {:>6} {:>7} {:>10} {:>8}", "method", "size", "M", "beta", "psnr_med", "ssim");
    for row in run {
        println!(
            "{:<6} {:>9} {:>6} {:>7} {:>10.2} {:>8}",
            row.method,
            format!("{}x{}", row.width, row.height),
            row.measurements,
            row.beta_display,
            row.psnr_median.unwrap_or(f64::NAN),
            row.ssim_mean.map_or("-".to_string(), |s| format!("{s:.4}"))
        );
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut img = load_image(&a.image)?;
    if a.normalize {
        img = normalize_image(&img)?;
    }
    let reference = load_image(&a.reference)?;
    let p = metrics::psnr(&img, &reference)?;
    let s = metrics::ssim(&img, &reference).ok();
    let report = serde_json::json!({
        "psnr": if p.is_finite() { serde_json::json!(p) } else { serde_json::json!("inf") },
        "ssim": s,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn profile(a: ProfileArgs) -> Result<()> {
    let img = load_image(&a.image)?;
    let spec = match (a.row, a.column) {
        (Some(index), None) => LineSpec::Row { index, start: a.start, end: a.end.unwrap_or(img.width()) },
        (None, Some(index)) => LineSpec::Column { index, start: a.start, end: a.end.unwrap_or(img.height()) },
        _ => bail!("give exactly one of --row or --column"),
    };
    let p = profile_line(&img, spec)?;
    println!("{}", serde_json::to_string_pretty(&p)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Sweep(a) => sweep(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Profile(a) => profile(a),
    }
}
