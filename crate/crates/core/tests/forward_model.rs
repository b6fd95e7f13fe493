mod common;

use common::naive_measure;
use ghostkit::forward::{apply_noise, generate_patterns, hadamard_inverse, measure, NoiseModel, PatternKind};
use ghostkit::{BucketSignal, Error, Image2D, PatternStack, Rng};
use proptest::prelude::*;

/// Sum of `terms[lo..hi]`: sequential for spans of at most 8, otherwise the
/// two halves split at the midpoint are summed separately.
fn random_image(w: usize, h: usize, rng: &mut Rng) -> Image2D {
    Image2D::new(w, h, (0..w * h).map(|_| rng.uniform()).collect()).unwrap()
}

fn random_patterns(m: usize, w: usize, h: usize, rng: &mut Rng) -> PatternStack {
    PatternStack::new(m, w, h, (0..m * w * h).map(|_| rng.uniform() * 2.0).collect()).unwrap()
}

#[test]
fn measure_matches_naive_reference_bitwise() {
    let mut rng = Rng::new(77);
    for case in 0..50 {
        let w = 1 + rng.below(40);
        let h = 1 + rng.below(40);
        let m = 1 + rng.below(30);
        let obj = random_image(w, h, &mut rng);
        let pats = random_patterns(m, w, h, &mut rng);
        let fast = measure(&obj, &pats).unwrap();
        let slow = naive_measure(&obj, &pats);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert_eq!(a.to_bits(), b.to_bits(), "case {case}: {w}x{h} M={m}");
        }
    }
}

#[test]
fn measure_closed_forms() {
    let pats = PatternStack::new(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let obj = Image2D::new(2, 2, vec![0.5, 0.2, 0.1, 0.8]).unwrap();
    assert!((measure(&obj, &pats).unwrap().values()[0] - 1.3).abs() < 1e-15);

    let mut rng = Rng::new(1);
    let pats = random_patterns(20, 9, 7, &mut rng);
    let zero = Image2D::filled(9, 7, 0.0).unwrap();
    assert!(measure(&zero, &pats).unwrap().values().iter().all(|&v| v == 0.0));
    let ones = Image2D::filled(9, 7, 1.0).unwrap();
    assert_eq!(measure(&ones, &pats).unwrap().values(), &pats.totals()[..]);

    let wrong = Image2D::filled(7, 9, 1.0).unwrap();
    assert!(matches!(measure(&wrong, &pats), Err(Error::Shape(_))));
}

#[test]
fn hadamard_stack_is_invertible() {
    let mut rng = Rng::new(4);
    for (w, h) in [(4, 4), (8, 8), (16, 16), (32, 16)] {
        let obj = random_image(w, h, &mut rng);
        let pats = generate_patterns(PatternKind::HadamardPermuted, w * h, w, h, &mut rng).unwrap();
        let sig = measure(&obj, &pats).unwrap();
        let rec = hadamard_inverse(&pats, &sig).unwrap();
        let err: f64 = rec.data().iter().zip(obj.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = obj.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-10, "{w}x{h}: {}", err / norm);
    }
}

#[test]
fn hadamard_4x4_is_orthogonal() {
    let pats = generate_patterns(PatternKind::HadamardPermuted, 16, 4, 4, &mut Rng::new(8)).unwrap();
    for i in 0..16 {
        for j in 0..16 {
            let d: f64 =
                pats.pattern(i).iter().zip(pats.pattern(j)).map(|(a, b)| (2.0 * a - 1.0) * (2.0 * b - 1.0)).sum();
            assert_eq!(d, if i == j { 16.0 } else { 0.0 });
        }
    }
    assert!(matches!(
        generate_patterns(PatternKind::HadamardPermuted, 4, 3, 4, &mut Rng::new(0)),
        Err(Error::UnsupportedSize(_))
    ));
    assert!(matches!(
        generate_patterns(PatternKind::HadamardPermuted, 17, 4, 4, &mut Rng::new(0)),
        Err(Error::UnsupportedSize(_))
    ));
}

/// Lag at which the circular autocorrelation, averaged over both axes,
/// first falls to half its zero-lag value (linear interpolation).
fn autocorrelation_half_width(p: &[f64], w: usize, h: usize) -> f64 {
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let c: Vec<f64> = p.iter().map(|v| v - mean).collect();
    let corr = |dx: usize, dy: usize| -> f64 {
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w {
                s += c[y * w + x] * c[((y + dy) % h) * w + (x + dx) % w];
            }
        }
        s
    };
    let c0 = corr(0, 0);
    let profile: Vec<f64> = (0..w / 2).map(|l| 0.5 * (corr(l, 0) + corr(0, l)) / c0).collect();
    for l in 1..profile.len() {
        if profile[l] <= 0.5 {
            let (a, b) = (profile[l - 1], profile[l]);
            return (l - 1) as f64 + (a - 0.5) / (a - b);
        }
    }
    f64::INFINITY
}

#[test]
fn speckle_correlation_length() {
    for seed in 0..5 {
        let pats = generate_patterns(
            PatternKind::GaussianSpeckle { correlation_length: 4.0 },
            1,
            128,
            128,
            &mut Rng::new(seed),
        )
        .unwrap();
        let hw = autocorrelation_half_width(pats.pattern(0), 128, 128);
        assert!((hw - 4.0).abs() <= 1.0, "seed {seed}: half width {hw}");
        let p = pats.pattern(0);
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 0.5).abs() < 1e-9);
    }
}

#[test]
fn gaussian_noise_moment() {
    // Constant signal of 1000 values, sigma = 0.1 of the mean.
    let sig = BucketSignal::new(vec![50.0; 1000], None).unwrap();
    let mut inside = 0;
    for seed in 0..10 {
        let noisy = apply_noise(&sig, NoiseModel::GaussianAdditive { sigma: 0.1 }, &mut Rng::new(seed)).unwrap();
        let v = noisy.values();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        if (sd - 5.0).abs() <= 0.15 * 5.0 {
            inside += 1;
        }
    }
    assert_eq!(inside, 10);
}

#[test]
fn noise_identities() {
    let sig = BucketSignal::new((0..30).map(|i| i as f64 * 1.5).collect(), None).unwrap();
    let mut rng = Rng::new(3);
    assert_eq!(apply_noise(&sig, NoiseModel::None, &mut rng).unwrap().values(), sig.values());
    assert_eq!(
        apply_noise(&sig, NoiseModel::GaussianAdditive { sigma: 0.0 }, &mut rng).unwrap().values(),
        sig.values()
    );
    assert_eq!(apply_noise(&sig, NoiseModel::GainJitter { sigma_g: 0.0 }, &mut rng).unwrap().values(), sig.values());
}

#[test]
fn generation_is_deterministic() {
    for kind in [
        PatternKind::BernoulliBinary { p: 0.3 },
        PatternKind::GaussianSpeckle { correlation_length: 2.0 },
        PatternKind::HadamardPermuted,
    ] {
        let a = generate_patterns(kind, 32, 8, 8, &mut Rng::new(11)).unwrap();
        let b = generate_patterns(kind, 32, 8, 8, &mut Rng::new(11)).unwrap();
        let c = generate_patterns(kind, 32, 8, 8, &mut Rng::new(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measure_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let (w, h) = (1 + rng.below(12), 1 + rng.below(12));
        let pats = random_patterns(1 + rng.below(10), w, h, &mut rng);
        let x: Vec<f64> = (0..w * h).map(|_| rng.uniform()).collect();
        let y: Vec<f64> = (0..w * h).map(|_| rng.uniform()).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        // Image2D holds any finite reals; [0,1] is only enforced by normalize.
        let mx = measure(&Image2D::new(w, h, x).unwrap(), &pats).unwrap();
        let my = measure(&Image2D::new(w, h, y).unwrap(), &pats).unwrap();
        let mc = measure(&Image2D::new(w, h, combo).unwrap(), &pats).unwrap();
        for i in 0..pats.count() {
            let expect = a * mx.values()[i] + b * my.values()[i];
            prop_assert!((mc.values()[i] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn poisson_and_jitter_stay_non_negative(seed in any::<u64>(), k in 0.1f64..100.0, s in 0.0f64..2.0) {
        let sig = BucketSignal::new((0..50).map(|i| i as f64 * 0.7).collect(), None).unwrap();
        let mut rng = Rng::new(seed);
        let p = apply_noise(&sig, NoiseModel::PoissonShot { photons_per_unit: k }, &mut rng).unwrap();
        prop_assert!(p.values().iter().all(|&v| v >= 0.0));
        let j = apply_noise(&sig, NoiseModel::GainJitter { sigma_g: s }, &mut rng).unwrap();
        prop_assert!(j.values().iter().all(|&v| v >= 0.0));
    }
}
