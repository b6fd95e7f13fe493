//! 1-D intensity profiles and Michelson contrast.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Image2D;

/// A horizontal or vertical segment; `end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum LineSpec {
    Row { index: usize, start: usize, end: usize },
    Column { index: usize, start: usize, end: usize },
}

impl LineSpec {
    pub fn full_row(img: &Image2D, index: usize) -> Self {
        LineSpec::Row { index, start: 0, end: img.width() }
    }

    pub fn full_column(img: &Image2D, index: usize) -> Self {
        LineSpec::Column { index, start: 0, end: img.height() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    pub values: Vec<f64>,
    pub contrast: f64,
}

/// `(max - min) / (max + min)`, zero for an all-zero or empty span.
pub fn michelson_contrast(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() || max + min == 0.0 {
        return 0.0;
    }
    (max - min) / (max + min)
}

pub fn profile_line(img: &Image2D, spec: LineSpec) -> Result<LineProfile> {
    let (index, start, end, limit, across) = match spec {
        LineSpec::Row { index, start, end } => (index, start, end, img.width(), img.height()),
        LineSpec::Column { index, start, end } => (index, start, end, img.height(), img.width()),
    };
    if index >= across || start >= end || end > limit {
        return Err(Error::InvalidParameter(format!("{spec:?} outside a {}x{} image", img.width(), img.height())));
    }
    let values: Vec<f64> = match spec {
        LineSpec::Row { .. } => (start..end).map(|x| img.get(x, index)).collect(),
        LineSpec::Column { .. } => (start..end).map(|y| img.get(index, y)).collect(),
    };
    let contrast = michelson_contrast(&values);
    Ok(LineProfile { values, contrast })
}
