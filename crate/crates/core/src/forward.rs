//! Illumination pattern generation and the single-pixel measurement chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::{BucketSignal, Image2D, PatternStack, Provenance};

/// Below this length pairwise summation falls back to a left-to-right loop.
pub const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) sum. The split point is `len / 2` at every level and
/// blocks of at most [`PAIRWISE_BLOCK`] are summed sequentially, so the
/// rounding pattern depends only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= PAIRWISE_BLOCK {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        return s;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Pairwise sum of the element-wise product, same tree as [`pairwise_sum`].
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAIRWISE_BLOCK {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        return s;
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternKind {
    /// Independent {0,1} pixels with P(1) = p.
    BernoulliBinary { p: f64 },
    /// Low-pass filtered white Gaussian field, rescaled to [0,1] with mean 0.5.
    GaussianSpeckle { correlation_length: f64 },
    /// Rows of the natural-order Hadamard matrix under one seeded row and
    /// column permutation, mapped {-1,+1} -> {0,1}.
    HadamardPermuted,
}

impl Default for PatternKind {
    fn default() -> Self {
        PatternKind::BernoulliBinary { p: 0.5 }
    }
}

impl PatternKind {
    pub fn validate(&self, count: usize, width: usize, height: usize) -> Result<()> {
        match *self {
            PatternKind::BernoulliBinary { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::InvalidParameter(format!("Bernoulli p = {p} not in (0,1)")));
                }
            }
            PatternKind::GaussianSpeckle { correlation_length } => {
                if !(correlation_length >= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "speckle correlation length {correlation_length} < 1"
                    )));
                }
            }
            PatternKind::HadamardPermuted => {
                let n = width * height;
                if !n.is_power_of_two() {
                    return Err(Error::UnsupportedSize(format!(
                        "Hadamard patterns need a power-of-two pixel count, got {width}x{height}"
                    )));
                }
                if count > n {
                    return Err(Error::UnsupportedSize(format!(
                        "Hadamard stack holds at most {n} patterns, asked for {count}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn generate_patterns(
    kind: PatternKind,
    count: usize,
    width: usize,
    height: usize,
    rng: &mut Rng,
) -> Result<PatternStack> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(format!("{width}x{height}")));
    }
    if count == 0 {
        return Err(Error::InsufficientMeasurements { needed: 1, got: 0 });
    }
    kind.validate(count, width, height)?;
    let n = width * height;
    let mut data = Vec::with_capacity(count * n);
    match kind {
        PatternKind::BernoulliBinary { p } => {
            for i in 0..count {
                let mut r = rng.split(i as u64);
                data.extend((0..n).map(|_| if r.bernoulli(p) { 1.0 } else { 0.0 }));
            }
        }
        PatternKind::GaussianSpeckle { correlation_length } => {
            for i in 0..count {
                let mut r = rng.split(i as u64);
                data.extend(gaussian_speckle(width, height, correlation_length, &mut r));
            }
        }
        PatternKind::HadamardPermuted => {
            let rows = rng.permutation(n);
            let cols = rng.permutation(n);
            for &row in rows.iter().take(count) {
                data.extend(cols.iter().map(|&c| hadamard_entry(row, c) * 0.5 + 0.5));
            }
        }
    }
    PatternStack::new(count, width, height, data)
}

/// Entry (r, c) of the Sylvester-ordered Hadamard matrix.
pub fn hadamard_entry(r: usize, c: usize) -> f64 {
    if (r & c).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// White noise blurred with a Gaussian of sigma `L / (2 sqrt(ln 2))`: the
/// autocorrelation of the result is Gaussian with half-width-at-half-maximum L.
/// Boundaries wrap so the field is stationary.
fn gaussian_speckle(width: usize, height: usize, corr: f64, rng: &mut Rng) -> Vec<f64> {
    let sigma = corr / (2.0 * std::f64::consts::LN_2.sqrt());
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let white: Vec<f64> = (0..width * height).map(|_| rng.normal()).collect();
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;

    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let xx = wrap(x as isize + k as isize - radius, width);
                s += w * white[y * width + xx];
            }
            tmp[y * width + x] = s;
        }
    }
    let mut field = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let yy = wrap(y as isize + k as isize - radius, height);
                s += w * tmp[yy * width + x];
            }
            field[y * width + x] = s;
        }
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let peak = field.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if peak == 0.0 {
        return vec![0.5; field.len()];
    }
    field.iter().map(|v| (0.5 + 0.5 * (v - mean) / peak).max(0.0)).collect()
}

/// Bucket values: for each pattern, the pixel sum of pattern * object.
pub fn measure(object: &Image2D, patterns: &PatternStack) -> Result<BucketSignal> {
    if object.width() != patterns.width() || object.height() != patterns.height() {
        return Err(Error::Shape(format!(
            "object {}x{} vs patterns {}x{}",
            object.width(),
            object.height(),
            patterns.width(),
            patterns.height()
        )));
    }
    BucketSignal::new(patterns.apply(object.data()), Some(Provenance::Simulated))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    /// N(0, (sigma * mean(signal))^2) added per element.
    GaussianAdditive { sigma: f64 },
    /// b -> Poisson(b * k) / k.
    PoissonShot { photons_per_unit: f64 },
    /// Multiplicative per-measurement gain (1 + N(0, sigma_g^2)), clipped at 0.
    /// Stands in for turbulence.
    GainJitter { sigma_g: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseModel::None => true,
            NoiseModel::GaussianAdditive { sigma } => sigma >= 0.0,
            NoiseModel::PoissonShot { photons_per_unit } => photons_per_unit > 0.0,
            NoiseModel::GainJitter { sigma_g } => sigma_g >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad noise parameters {self:?}")))
        }
    }
}

pub fn apply_noise(signal: &BucketSignal, model: NoiseModel, rng: &mut Rng) -> Result<BucketSignal> {
    model.validate()?;
    let values = match model {
        NoiseModel::None => signal.values().to_vec(),
        NoiseModel::GaussianAdditive { sigma } => {
            if sigma == 0.0 {
                signal.values().to_vec()
            } else {
                let sd = sigma * signal.mean();
                signal.values().iter().map(|&b| b + sd * rng.normal()).collect()
            }
        }
        NoiseModel::PoissonShot { photons_per_unit: k } => {
            signal.values().iter().map(|&b| rng.poisson(b.max(0.0) * k) / k).collect()
        }
        NoiseModel::GainJitter { sigma_g } => {
            if sigma_g == 0.0 {
                signal.values().to_vec()
            } else {
                signal.values().iter().map(|&b| b * (1.0 + sigma_g * rng.normal()).max(0.0)).collect()
            }
        }
    };
    BucketSignal::new(values, signal.provenance())
}

/// Exact inverse for a complete {0,1} Hadamard stack (M = N, one all-ones
/// pattern). With S = 2P - 1 orthogonal, S x = 2b - sum(x), so
/// x = S^T (2b - sum(x)) / N.
pub fn hadamard_inverse(patterns: &PatternStack, signal: &BucketSignal) -> Result<Image2D> {
    crate::types::check_pair(patterns, signal)?;
    let n = patterns.pixels();
    if patterns.count() != n {
        return Err(Error::InsufficientMeasurements { needed: n, got: patterns.count() });
    }
    let ones = patterns
        .iter()
        .position(|p| p.iter().all(|&v| v == 1.0))
        .ok_or_else(|| Error::DegeneratePatterns("no all-ones pattern in stack".into()))?;
    let total = signal.values()[ones];
    let mut x = vec![0.0; n];
    for (p, &b) in patterns.iter().zip(signal.values()) {
        let r = 2.0 * b - total;
        for (xi, &v) in x.iter_mut().zip(p) {
            *xi += (2.0 * v - 1.0) * r;
        }
    }
    x.iter_mut().for_each(|v| *v /= n as f64);
    Image2D::new(patterns.width(), patterns.height(), x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_small_cases() {
        let pats = PatternStack::new(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let obj = Image2D::new(2, 2, vec![0.5, 0.2, 0.1, 0.8]).unwrap();
        let b = measure(&obj, &pats).unwrap();
        assert!((b.values()[0] - 1.3).abs() < 1e-15);

        let mut rng = Rng::new(4);
        let pats = generate_patterns(PatternKind::default(), 20, 5, 3, &mut rng).unwrap();
        let zeros = measure(&Image2D::filled(5, 3, 0.0).unwrap(), &pats).unwrap();
        assert!(zeros.values().iter().all(|&v| v == 0.0));
        let ones = measure(&Image2D::filled(5, 3, 1.0).unwrap(), &pats).unwrap();
        assert_eq!(ones.values(), pats.totals().as_slice());
    }

    #[test]
    fn measure_shape_mismatch() {
        let pats = PatternStack::new(1, 2, 2, vec![1.0; 4]).unwrap();
        let obj = Image2D::filled(3, 2, 1.0).unwrap();
        assert!(matches!(measure(&obj, &pats), Err(Error::Shape(_))));
    }

    #[test]
    fn hadamard_rejects_bad_sizes() {
        let mut rng = Rng::new(0);
        let e = generate_patterns(PatternKind::HadamardPermuted, 4, 3, 3, &mut rng);
        assert!(matches!(e, Err(Error::UnsupportedSize(_))));
        let e = generate_patterns(PatternKind::HadamardPermuted, 17, 4, 4, &mut rng);
        assert!(matches!(e, Err(Error::UnsupportedSize(_))));
    }

    #[test]
    fn hadamard_rows_orthogonal() {
        let mut rng = Rng::new(11);
        let pats = generate_patterns(PatternKind::HadamardPermuted, 16, 4, 4, &mut rng).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let d: f64 =
                    pats.pattern(i).iter().zip(pats.pattern(j)).map(|(a, b)| (2.0 * a - 1.0) * (2.0 * b - 1.0)).sum();
                assert_eq!(d, if i == j { 16.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn bernoulli_mean() {
        let mut rng = Rng::new(2);
        let pats = generate_patterns(PatternKind::BernoulliBinary { p: 0.5 }, 1000, 32, 32, &mut rng).unwrap();
        let means: Vec<f64> = pats.iter().map(|p| p.iter().sum::<f64>() / p.len() as f64).collect();
        let avg = means.iter().sum::<f64>() / means.len() as f64;
        assert!((avg - 0.5).abs() <= 0.05, "average pattern mean {avg}");
        // Per-pattern sd is 0.5/32, so the band is about 3.2 sigma wide.
        let inside = means.iter().filter(|m| (*m - 0.5).abs() <= 0.05).count();
        assert!(inside >= 990, "{inside} of 1000 patterns inside 0.5 +- 0.05");
    }

    #[test]
    fn speckle_range_and_mean() {
        let mut rng = Rng::new(5);
        let pats =
            generate_patterns(PatternKind::GaussianSpeckle { correlation_length: 3.0 }, 3, 32, 32, &mut rng).unwrap();
        for p in pats.iter() {
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let m = p.iter().sum::<f64>() / p.len() as f64;
            assert!((m - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_identities() {
        let s = BucketSignal::new(vec![1.0, 2.0, 3.0], None).unwrap();
        let mut rng = Rng::new(1);
        assert_eq!(apply_noise(&s, NoiseModel::None, &mut rng).unwrap(), s);
        assert_eq!(apply_noise(&s, NoiseModel::GaussianAdditive { sigma: 0.0 }, &mut rng).unwrap(), s);
        assert_eq!(apply_noise(&s, NoiseModel::GainJitter { sigma_g: 0.0 }, &mut rng).unwrap(), s);
        assert!(apply_noise(&s, NoiseModel::GaussianAdditive { sigma: -1.0 }, &mut rng).is_err());
        assert!(apply_noise(&s, NoiseModel::PoissonShot { photons_per_unit: 0.0 }, &mut rng).is_err());
    }

    #[test]
    fn gain_jitter_never_negative() {
        let s = BucketSignal::new(vec![1.0; 500], None).unwrap();
        let mut rng = Rng::new(9);
        let n = apply_noise(&s, NoiseModel::GainJitter { sigma_g: 2.0 }, &mut rng).unwrap();
        assert!(n.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn poisson_mean_is_preserved() {
        let s = BucketSignal::new(vec![5.0; 4000], None).unwrap();
        let mut rng = Rng::new(3);
        let n = apply_noise(&s, NoiseModel::PoissonShot { photons_per_unit: 10.0 }, &mut rng).unwrap();
        assert!((n.mean() - 5.0).abs() < 0.05);
    }
}
