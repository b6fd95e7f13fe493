//! Replay bundle: a directory holding `patterns.gbin` (M x H x W),
//! `signal.gbin` (M) and `meta.json`. Lets recorded hardware signals be
//! reconstructed with the same code paths as simulated ones.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gbin::{read_gbin, write_gbin, Dtype};
use crate::error::{Error, Result};
use crate::types::{BucketSignal, PatternStack, Provenance};

pub const PATTERNS_FILE: &str = "patterns.gbin";
pub const SIGNAL_FILE: &str = "signal.gbin";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub width: usize,
    pub height: usize,
    pub measurements: usize,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ReplayBundle {
    pub patterns: PatternStack,
    pub signal: BucketSignal,
    pub meta: BundleMeta,
}

pub fn save_bundle(
    dir: impl AsRef<Path>,
    patterns: &PatternStack,
    signal: &BucketSignal,
    source: Option<String>,
    seed: Option<u64>,
) -> Result<BundleMeta> {
    crate::types::check_pair(patterns, signal)?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let dims = [patterns.count(), patterns.height(), patterns.width()];
    write_gbin(dir.join(PATTERNS_FILE), Dtype::F64, &dims, patterns.data())?;
    write_gbin(dir.join(SIGNAL_FILE), Dtype::F64, &[signal.len()], signal.values())?;
    let meta =
        BundleMeta { width: patterns.width(), height: patterns.height(), measurements: patterns.count(), source, seed };
    std::fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

/// Loads and cross-checks a bundle. The signal is tagged as replayed.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ReplayBundle> {
    let dir = dir.as_ref();
    let meta: BundleMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(META_FILE))?)?;
    let p = read_gbin(dir.join(PATTERNS_FILE))?;
    let s = read_gbin(dir.join(SIGNAL_FILE))?;
    let [m, h, w] = p.dims[..] else {
        return Err(Error::Replay(format!("patterns must be rank 3, got dims {:?}", p.dims)));
    };
    if s.dims.len() != 1 {
        return Err(Error::Replay(format!("signal must be rank 1, got dims {:?}", s.dims)));
    }
    if (m, h, w) != (meta.measurements, meta.height, meta.width) {
        return Err(Error::Replay(format!(
            "patterns are {m}x{h}x{w} but meta says {}x{}x{}",
            meta.measurements, meta.height, meta.width
        )));
    }
    if s.dims[0] != m {
        return Err(Error::Replay(format!("{} signal values for {m} patterns", s.dims[0])));
    }
    let patterns = PatternStack::new(m, w, h, p.data).map_err(|e| Error::Replay(e.to_string()))?;
    let signal = BucketSignal::new(s.data, Some(Provenance::Replayed)).map_err(|e| Error::Replay(e.to_string()))?;
    Ok(ReplayBundle { patterns, signal, meta })
}
