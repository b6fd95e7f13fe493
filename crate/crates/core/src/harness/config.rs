//! Experiment descriptions.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::targets::BuiltinTarget;
use crate::error::{Error, Result};
use crate::forward::{NoiseModel, PatternKind};
use crate::gilm::{ModelSpec, TrainConfig};
use crate::recon::CsConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ObjectSource {
    Builtin {
        target: BuiltinTarget,
    },
    /// PNG or PGM, converted to grayscale in [0,1]; must match the
    /// configured dimensions.
    Image {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    Gi,
    Dgi,
    Gics {
        #[serde(default)]
        cs: CsConfig,
        /// When non-empty and ground truth is known, the lambda with the best
        /// PSNR is kept.
        #[serde(default)]
        lambda_grid: Vec<f64>,
    },
    Cnn {
        #[serde(default = "ModelSpec::toy_cnn")]
        model: ModelSpec,
        #[serde(default)]
        train: TrainConfig,
    },
    Unet {
        #[serde(default = "ModelSpec::toy_unet")]
        model: ModelSpec,
        #[serde(default)]
        train: TrainConfig,
    },
    Gilm {
        #[serde(default = "ModelSpec::toy_gilm")]
        model: ModelSpec,
        #[serde(default)]
        train: TrainConfig,
    },
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Gi => "GI",
            MethodConfig::Dgi => "DGI",
            MethodConfig::Gics { .. } => "GICS",
            MethodConfig::Cnn { .. } => "CNN",
            MethodConfig::Unet { .. } => "UNET",
            MethodConfig::Gilm { .. } => "GILM",
        }
    }

    /// Default configuration for a method name (case-insensitive).
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_uppercase().as_str() {
            "GI" => MethodConfig::Gi,
            "DGI" => MethodConfig::Dgi,
            "GICS" => MethodConfig::Gics { cs: CsConfig::default(), lambda_grid: Vec::new() },
            "CNN" => MethodConfig::Cnn { model: ModelSpec::toy_cnn(), train: TrainConfig::default() },
            "UNET" => MethodConfig::Unet { model: ModelSpec::toy_unet(), train: TrainConfig::default() },
            "GILM" => MethodConfig::Gilm { model: ModelSpec::toy_gilm(), train: TrainConfig::default() },
            other => return Err(Error::Config(format!("unknown method {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodConfig::Gi | MethodConfig::Dgi => Ok(()),
            MethodConfig::Gics { cs, lambda_grid } => {
                cs.validate()?;
                if lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
                    return Err(Error::Config(format!("invalid lambda grid {lambda_grid:?}")));
                }
                Ok(())
            }
            MethodConfig::Cnn { model, train }
            | MethodConfig::Unet { model, train }
            | MethodConfig::Gilm { model, train } => {
                let expected = match self {
                    MethodConfig::Cnn { .. } => crate::gilm::Architecture::Cnn,
                    MethodConfig::Unet { .. } => crate::gilm::Architecture::Unet,
                    _ => crate::gilm::Architecture::Gilm,
                };
                if model.architecture != expected {
                    return Err(Error::Config(format!(
                        "{} method given a {:?} model",
                        self.name(),
                        model.architecture
                    )));
                }
                model.validate()?;
                train.validate()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Ground truth. Optional only when `replay` is given.
    #[serde(default)]
    pub object: Option<ObjectSource>,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub patterns: PatternKind,
    pub measurements: usize,
    #[serde(default)]
    pub noise: NoiseModel,
    pub methods: Vec<MethodConfig>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Replay-bundle directory; replaces simulated patterns and signal.
    #[serde(default)]
    pub replay: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        if self.measurements == 0 {
            return Err(Error::Config("measurements must be at least 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!("image size {}x{}", self.width, self.height)));
        }
        match (&self.object, &self.replay) {
            (None, None) => return Err(Error::Config("need an object or a replay bundle".into())),
            (Some(ObjectSource::Image { path }), _) if !path.exists() => {
                return Err(Error::Config(format!("object image {} does not exist", path.display())))
            }
            _ => {}
        }
        if let Some(r) = &self.replay {
            if !r.is_dir() {
                return Err(Error::Config(format!("replay bundle {} does not exist", r.display())));
            }
        }
        if self.replay.is_none() {
            self.patterns
                .validate(self.measurements, self.width, self.height)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        self.noise.validate().map_err(|e| Error::Config(e.to_string()))?;
        for m in &self.methods {
            m.validate().map_err(|e| Error::Config(format!("{}: {e}", m.name())))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output directory
    /// is left out so relocated runs of one experiment share a hash.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&ExperimentConfig { output_dir: PathBuf::new(), ..self.clone() })
            .expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            object: Some(ObjectSource::Builtin { target: BuiltinTarget::Letter { glyph: 'E' } }),
            width: 16,
            height: 16,
            patterns: PatternKind::default(),
            measurements: 100,
            noise: NoiseModel::None,
            methods: vec![MethodConfig::Dgi],
            seeds: vec![1],
            output_dir: "runs".into(),
            replay: None,
        }
    }

    #[test]
    fn validation() {
        base().validate().unwrap();
        let mut c = base();
        c.seeds.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base();
        c.methods.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base();
        c.object = Some(ObjectSource::Image { path: "/nonexistent/x.png".into() });
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_method_is_config_error() {
        assert!(matches!(MethodConfig::from_name("svd"), Err(Error::Config(_))));
        let bad = r#"{"width": 16, "height": 16, "measurements": 10, "methods": [{"method": "svd"}], "seeds": [1]}"#;
        assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = base();
        let mut b = base();
        assert_eq!(a.hash(), b.hash());
        b.measurements = 101;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let text = r#"{
            "object": {"source": "builtin", "target": {"kind": "letter", "glyph": "N"}},
            "width": 16, "height": 16, "measurements": 154,
            "methods": [{"method": "dgi"}, {"method": "gilm", "train": {"max_iters": 10}}],
            "seeds": [1, 2]
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.methods[1].name(), "GILM");
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
