//! Value types shared by the whole pipeline: images, pattern stacks, bucket
//! signals and sampling-rate arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!("{width}x{height} image")));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite value at index {i}")));
        }
        Ok(Image2D { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_dims(&self, other: &Image2D) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Min-max rescale into [0, 1].
    ///
    /// A constant nonzero image maps to all ones, an all-zero image stays zero.
    pub fn normalize(&self) -> Result<Image2D> {
        normalize_image(self)
    }

    pub fn clamp01(&self) -> Image2D {
        Image2D { width: self.width, height: self.height, data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect() }
    }
}

pub fn normalize_image(img: &Image2D) -> Result<Image2D> {
    if img.data.is_empty() {
        return Err(Error::InvalidImage("empty image".into()));
    }
    if img.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidImage("non-finite value".into()));
    }
    let (lo, hi) = img.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let data = if hi > lo {
        let span = hi - lo;
        img.data.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else if lo == 0.0 {
        vec![0.0; img.data.len()]
    } else {
        vec![1.0; img.data.len()]
    };
    Ok(Image2D { width: img.width, height: img.height, data })
}

/// The stack of M illumination patterns, stored as one contiguous M x N
/// row-major matrix (N = width * height).
#[derive(Debug, Clone, PartialEq)]
pub struct PatternStack {
    count: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PatternStack {
    pub fn new(count: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!("{width}x{height} patterns")));
        }
        if count == 0 {
            return Err(Error::InsufficientMeasurements { needed: 1, got: 0 });
        }
        let n = width * height;
        if data.len() != count * n {
            return Err(Error::Shape(format!(
                "{count} patterns of {width}x{height} need {} values, got {}",
                count * n,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!("pattern value at flat index {i} is negative or non-finite")));
        }
        Ok(PatternStack { count, width, height, data })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixels per pattern.
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn pattern(&self, i: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.pixels())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Per-pattern totals R_i, summed in the same pairwise order as
    /// [`crate::forward::measure`].
    pub fn totals(&self) -> Vec<f64> {
        self.iter().map(crate::forward::pairwise_sum).collect()
    }

    /// `A x` for the flattened pattern matrix A.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.pixels());
        self.iter().map(|p| crate::forward::pairwise_dot(p, x)).collect()
    }

    /// `A^T r`.
    pub fn apply_adjoint(&self, r: &[f64]) -> Vec<f64> {
        debug_assert_eq!(r.len(), self.count);
        let mut out = vec![0.0; self.pixels()];
        for (p, &ri) in self.iter().zip(r) {
            if ri == 0.0 {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(p) {
                *o += ri * v;
            }
        }
        out
    }

    /// Keeps the patterns at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<PatternStack> {
        let n = self.pixels();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= self.count {
                return Err(Error::Shape(format!("pattern index {i} out of {}", self.count)));
            }
            data.extend_from_slice(self.pattern(i));
        }
        PatternStack::new(indices.len(), self.width, self.height, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Simulated,
    Replayed,
}

/// Single-pixel detector sequence, one value per pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSignal {
    values: Vec<f64>,
    provenance: Option<Provenance>,
}

impl BucketSignal {
    pub fn new(values: Vec<f64>, provenance: Option<Provenance>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite bucket value at {i}")));
        }
        Ok(BucketSignal { values, provenance })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    /// Arithmetic mean, shifted by the first value so a constant signal
    /// returns that constant exactly.
    pub fn mean(&self) -> f64 {
        match self.values.first() {
            None => 0.0,
            Some(&b0) => b0 + self.values.iter().map(|v| v - b0).sum::<f64>() / self.values.len() as f64,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Result<BucketSignal> {
        let mut values = Vec::with_capacity(indices.len());
        for &i in indices {
            match self.values.get(i) {
                Some(&v) => values.push(v),
                None => return Err(Error::Shape(format!("signal index {i} out of {}", self.values.len()))),
            }
        }
        BucketSignal::new(values, self.provenance)
    }
}

/// Checks that a pattern stack and a signal describe the same experiment.
pub(crate) fn check_pair(patterns: &PatternStack, signal: &BucketSignal) -> Result<()> {
    if patterns.count() != signal.len() {
        return Err(Error::Shape(format!("{} patterns but {} bucket values", patterns.count(), signal.len())));
    }
    Ok(())
}

/// beta = M / (width * height).
pub fn sampling_rate(measurements: usize, width: usize, height: usize) -> Result<f64> {
    let n = width * height;
    if n == 0 {
        return Err(Error::InvalidDimensions(format!("{width}x{height}")));
    }
    if measurements == 0 {
        return Err(Error::InsufficientMeasurements { needed: 1, got: 0 });
    }
    Ok(measurements as f64 / n as f64)
}

/// Percent display of `M / N`, truncated (never rounded) to two significant
/// digits: 10000/320² -> "9.7%", 1000/320² -> "0.97%".
///
/// Works on the exact rational so float noise can never flip a digit.
pub fn format_sampling_rate(measurements: usize, width: usize, height: usize) -> Result<String> {
    sampling_rate(measurements, width, height)?;
    let num = 100u128 * measurements as u128;
    let den = (width * height) as u128;
    // Find k such that 10 <= num/den * 10^k < 100.
    let mut k: i32 = 0;
    let (mut n, mut d) = (num, den);
    while n < 10 * d {
        n *= 10;
        k += 1;
    }
    while n >= 100 * d {
        d *= 10;
        k -= 1;
    }
    let digits = n / d;
    if k <= 0 {
        let whole = digits * 10u128.pow((-k) as u32);
        Ok(format!("{whole}%"))
    } else {
        let k = k as usize;
        let s = format!("{:0>width$}", digits, width = k + 1);
        let (int_part, frac) = s.split_at(s.len() - k);
        Ok(format!("{int_part}.{frac}%"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, d: &[f64]) -> Image2D {
        Image2D::new(w, h, d.to_vec()).unwrap()
    }

    #[test]
    fn normalize_affine() {
        let n = img(2, 2, &[0.0, 2.0, 4.0, 8.0]).normalize().unwrap();
        assert_eq!(n.data(), &[0.0, 0.25, 0.5, 1.0]);
        let n = img(2, 1, &[-1.0, 1.0]).normalize().unwrap();
        assert_eq!(n.data(), &[0.0, 1.0]);
    }

    #[test]
    fn normalize_degenerate() {
        let z = Image2D::filled(4, 4, 0.0).unwrap().normalize().unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let c = Image2D::filled(3, 3, 0.3).unwrap().normalize().unwrap();
        assert!(c.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(Image2D::new(1, 2, vec![0.0, f64::NAN]), Err(Error::InvalidImage(_))));
        assert!(matches!(Image2D::new(2, 2, vec![0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn sampling_rate_values() {
        let b = sampling_rate(10000, 320, 320).unwrap();
        assert!((b - 0.09765625).abs() < 1e-15);
        assert_eq!(format_sampling_rate(10000, 320, 320).unwrap(), "9.7%");
        assert_eq!(format_sampling_rate(10000, 480, 480).unwrap(), "4.3%");
        assert_eq!(format_sampling_rate(10000, 640, 640).unwrap(), "2.4%");
        assert_eq!(format_sampling_rate(1000, 320, 320).unwrap(), "0.97%");
        assert_eq!(format_sampling_rate(1024, 32, 32).unwrap(), "100%");
        assert_eq!(format_sampling_rate(2048, 32, 32).unwrap(), "200%");
        assert_eq!(format_sampling_rate(614, 32, 32).unwrap(), "59%");
        assert!(matches!(sampling_rate(10, 0, 5), Err(Error::InvalidDimensions(_))));
    }

    #[test]
    fn sampling_rate_is_linear_in_m() {
        for m in [1usize, 7, 1000, 12345] {
            let a = sampling_rate(m, 17, 33).unwrap();
            let b = sampling_rate(2 * m, 17, 33).unwrap();
            assert_eq!(b, 2.0 * a);
        }
    }
}
