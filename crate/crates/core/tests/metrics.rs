mod common;

use common::{psnr_oracle, ssim_oracle};
use ghostkit::harness::BuiltinTarget;
use ghostkit::metrics::{psnr, ssim, SSIM_C1};
use ghostkit::{Error, Image2D, Rng};
use proptest::prelude::*;

fn noisy(img: &Image2D, sigma: f64, rng: &mut Rng) -> Image2D {
    Image2D::new(
        img.width(),
        img.height(),
        img.data().iter().map(|v| (v + sigma * rng.normal()).clamp(0.0, 1.0)).collect(),
    )
    .unwrap()
}

#[test]
fn psnr_closed_forms() {
    let a = Image2D::filled(8, 8, 0.5).unwrap();
    let b = Image2D::filled(8, 8, 0.6).unwrap();
    assert!((psnr(&b, &a).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    let c = Image2D::filled(8, 7, 0.5).unwrap();
    assert!(matches!(psnr(&a, &c), Err(Error::Shape(_))));
}

#[test]
fn ssim_closed_forms() {
    for (a, b) in [(0.5, 0.6), (0.1, 0.9), (0.0, 1.0), (0.3, 0.3)] {
        let x = Image2D::filled(16, 12, a).unwrap();
        let r = Image2D::filled(16, 12, b).unwrap();
        let expect = (2.0 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1);
        assert!((ssim(&x, &r).unwrap() - expect).abs() < 1e-9, "{a} {b}");
    }
    let photo = BuiltinTarget::Photo.render(32, 32).unwrap();
    assert_eq!(ssim(&photo, &photo).unwrap(), 1.0);
    let small = Image2D::filled(10, 20, 0.5).unwrap();
    assert!(matches!(ssim(&small, &small), Err(Error::InsufficientSize(_))));
}

#[test]
fn metrics_match_direct_oracles() {
    let photo = BuiltinTarget::Photo.render(40, 32).unwrap();
    for seed in 0..5 {
        let mut rng = Rng::new(seed);
        let x = noisy(&photo, 0.05 + 0.05 * seed as f64, &mut rng);
        assert!((psnr(&x, &photo).unwrap() - psnr_oracle(&x, &photo)).abs() < 1e-9);
        assert!((ssim(&x, &photo).unwrap() - ssim_oracle(&x, &photo)).abs() < 1e-6);
    }
}

#[test]
fn psnr_falls_with_noise() {
    let photo = BuiltinTarget::Photo.render(32, 32).unwrap();
    let sigmas = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3];
    let mean: Vec<f64> = sigmas
        .iter()
        .map(|&s| (0..5).map(|seed| psnr(&noisy(&photo, s, &mut Rng::new(seed)), &photo).unwrap()).sum::<f64>() / 5.0)
        .collect();
    // Spearman rho = 1 between sigma and -PSNR means strictly decreasing.
    assert!(mean.windows(2).all(|w| w[1] < w[0]), "{mean:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetry(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let a = Image2D::new(13, 12, (0..156).map(|_| rng.uniform()).collect()).unwrap();
        let b = Image2D::new(13, 12, (0..156).map(|_| rng.uniform()).collect()).unwrap();
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}
