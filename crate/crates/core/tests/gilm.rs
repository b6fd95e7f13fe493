mod common;

use std::sync::Arc;

use common::{conv, norm, resnet, transformer, unet_audit};
use ghostkit::autodiff::{grad_check, Conv2d, Linear, ParameterSet, Tape};
use ghostkit::forward::{generate_patterns, measure, PatternKind};
use ghostkit::gilm::{
    build_model, physics_loss, reconstruct, train_reconstruct, Architecture, LatentMode, LossReduction, ModelSpec,
    ReconInput, TrainConfig,
};
use ghostkit::harness::BuiltinTarget;
use ghostkit::{normalize_image, BucketSignal, Error, Image2D, PatternStack, Rng};

// ---- parameter counts ----

#[test]
fn single_layer_counts() {
    let mut ps = ParameterSet::new();
    Conv2d::new(&mut ps, "c", 1, 8, 3, 1, false, &mut Rng::new(0)).unwrap();
    assert_eq!(ps.scalar_count(), 80);
    let mut ps = ParameterSet::new();
    Linear::new(&mut ps, "l", 16, 4, false, &mut Rng::new(0)).unwrap();
    assert_eq!(ps.scalar_count(), 68);
}

#[test]
fn toy_gilm_count_matches_audit() {
    let toy = ModelSpec::toy_gilm();
    // Hand-expanded for widths [16, 32], one block per level, 4 bottleneck heads.
    let hand = conv(1, 16, 3)
        + resnet(16, 16)
        + conv(16, 16, 3)
        + resnet(16, 32)
        + resnet(32, 32)
        + transformer(32, 4)
        + resnet(32, 32)
        + resnet(64, 32)
        + conv(32, 16, 3)
        + resnet(32, 16)
        + norm(16)
        + conv(16, 1, 3);
    let model = build_model(&toy, &mut Rng::new(0)).unwrap();
    assert_eq!(model.param_count(), hand);
    assert_eq!(unet_audit(&toy), hand);

    let variants = [
        ModelSpec::toy_unet(),
        ModelSpec { widths: vec![8, 16, 32], blocks: vec![2, 1, 1], attention_heads: vec![0, 2, 4], ..toy.clone() },
        ModelSpec {
            latent: LatentMode::Latent { factor: 4, channels: 4, decoder_widths: vec![16, 8] },
            input_channels: 4,
            ..toy.clone()
        },
    ];
    for spec in variants {
        assert_eq!(build_model(&spec, &mut Rng::new(1)).unwrap().param_count(), unet_audit(&spec), "{spec:?}");
    }
}

#[test]
fn cnn_count_and_no_attention() {
    let spec = ModelSpec::toy_cnn();
    let model = build_model(&spec, &mut Rng::new(0)).unwrap();
    assert_eq!(model.attention_modules(), 0);
    let expect = conv(1, 16, 3) + 3 * conv(16, 16, 3) + 4 * norm(16) + conv(16, 1, 3);
    assert_eq!(model.param_count(), expect);
    assert_eq!(build_model(&ModelSpec::toy_gilm(), &mut Rng::new(0)).unwrap().attention_modules(), 1);
    assert_eq!(build_model(&ModelSpec::toy_unet(), &mut Rng::new(0)).unwrap().attention_modules(), 0);
}

// ---- construction and prediction ----

#[test]
fn toy_gilm_runs_at_64() {
    let spec = ModelSpec::toy_gilm();
    let model = build_model(&spec, &mut Rng::new(2)).unwrap();
    let input = ReconInput::generate(&spec, 64, 64, &mut Rng::new(3)).unwrap();
    let (img, trace) = model.predict(&input).unwrap();
    assert_eq!(trace.output, vec![1, 1, 64, 64]);
    assert_eq!((img.width(), img.height()), (64, 64));
    assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let (again, _) = model.predict(&input).unwrap();
    assert_eq!(img, again);
}

#[test]
fn checksum_and_input_are_seed_determined() {
    let spec = ModelSpec::toy_gilm();
    let a = build_model(&spec, &mut Rng::new(5)).unwrap();
    let b = build_model(&spec, &mut Rng::new(5)).unwrap();
    let c = build_model(&spec, &mut Rng::new(6)).unwrap();
    assert_eq!(a.params.checksum(), b.params.checksum());
    assert_ne!(a.params.checksum(), c.params.checksum());
    let i1 = ReconInput::generate(&spec, 16, 16, &mut Rng::new(9)).unwrap();
    let i2 = ReconInput::generate(&spec, 16, 16, &mut Rng::new(9)).unwrap();
    assert!(i1.data.iter().zip(&i2.data).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert!(i1.data.iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn latent_mode_shape_trace() {
    let spec = ModelSpec {
        latent: LatentMode::Latent { factor: 4, channels: 4, decoder_widths: vec![16, 8] },
        input_channels: 4,
        ..ModelSpec::toy_gilm()
    };
    let model = build_model(&spec, &mut Rng::new(0)).unwrap();
    let input = ReconInput::generate(&spec, 64, 64, &mut Rng::new(1)).unwrap();
    assert_eq!(input.shape, [1, 4, 16, 16]);
    let (img, trace) = model.predict(&input).unwrap();
    assert_eq!(trace.latent, Some(vec![1, 4, 16, 16]));
    assert_eq!(trace.output, vec![1, 1, 64, 64]);
    assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn invalid_specs() {
    let toy = ModelSpec::toy_gilm();
    let bad = [
        ModelSpec { mid_attention_heads: 5, ..toy.clone() },
        ModelSpec { attention_heads: vec![3, 0], ..toy.clone() },
        ModelSpec { architecture: Architecture::Unet, ..toy.clone() },
        ModelSpec { latent: LatentMode::Latent { factor: 2, channels: 4, decoder_widths: vec![8] }, ..toy.clone() },
        ModelSpec { latent: LatentMode::Latent { factor: 8, channels: 4, decoder_widths: vec![8] }, ..toy.clone() },
        ModelSpec { blocks: vec![1], ..toy.clone() },
    ];
    for spec in bad {
        assert!(matches!(build_model(&spec, &mut Rng::new(0)), Err(Error::Spec(_))), "{spec:?}");
    }
    let latent = ModelSpec { latent: LatentMode::Latent { factor: 4, channels: 4, decoder_widths: vec![8, 8] }, ..toy };
    assert!(matches!(ReconInput::generate(&latent, 30, 32, &mut Rng::new(0)), Err(Error::Spec(_))));
    assert!(matches!(ReconInput::generate(&latent, 20, 20, &mut Rng::new(0)), Err(Error::Spec(_))));
}

// ---- physics loss ----

fn setup(seed: u64) -> (Arc<PatternStack>, Image2D) {
    let mut rng = Rng::new(seed);
    let pats = generate_patterns(PatternKind::default(), 20, 4, 3, &mut rng).unwrap();
    let obj = Image2D::new(4, 3, (0..12).map(|_| rng.uniform()).collect()).unwrap();
    (Arc::new(pats), obj)
}

fn loss_of(x: &[f64], pats: &Arc<PatternStack>, sig: &BucketSignal, r: LossReduction) -> f64 {
    let mut t = Tape::new();
    let xv = t.leaf(&[1, 1, 3, 4], x.to_vec()).unwrap();
    let l = physics_loss(&mut t, xv, pats, sig, r).unwrap();
    t.scalar(l)
}

#[test]
fn physics_loss_closed_forms() {
    let (pats, obj) = setup(1);
    let sig = measure(&obj, &pats).unwrap();
    assert_eq!(loss_of(obj.data(), &pats, &sig, LossReduction::Sum), 0.0);

    let ones = Image2D::filled(4, 3, 1.0).unwrap();
    let sig1 = measure(&ones, &pats).unwrap();
    let expect: f64 = pats.totals().iter().map(|r| r * r).sum();
    assert!((loss_of(&[0.0; 12], &pats, &sig1, LossReduction::Sum) - expect).abs() < 1e-9);

    let mut rng = Rng::new(4);
    let x: Vec<f64> = (0..12).map(|_| rng.uniform()).collect();
    let pred = measure(&Image2D::new(4, 3, x.clone()).unwrap(), &pats).unwrap();
    let sum: f64 = sig.values().iter().zip(pred.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    assert!((loss_of(&x, &pats, &sig, LossReduction::Sum) - sum).abs() < 1e-9);
    assert!((loss_of(&x, &pats, &sig, LossReduction::Mean) - sum / 20.0).abs() < 1e-9);

    let short = BucketSignal::new(vec![1.0; 5], None).unwrap();
    let mut t = Tape::new();
    let xv = t.leaf(&[1, 1, 3, 4], x).unwrap();
    assert!(matches!(physics_loss(&mut t, xv, &pats, &short, LossReduction::Sum), Err(Error::Shape(_))));
}

#[test]
fn physics_loss_gradient() {
    for seed in 0..5 {
        let (pats, obj) = setup(seed);
        let sig = measure(&obj, &pats).unwrap();
        let mut rng = Rng::new(seed + 10);
        let x: Vec<f64> = (0..12).map(|_| rng.uniform()).collect();
        let mut t = Tape::new();
        let xv = t.leaf(&[1, 1, 3, 4], x.clone()).unwrap();
        let l = physics_loss(&mut t, xv, &pats, &sig, LossReduction::Sum).unwrap();
        t.backward(l).unwrap();
        let pred = pats.apply(&x);
        let mut expect = vec![0.0; 12];
        for (i, p) in pats.iter().enumerate() {
            let r = sig.values()[i] - pred[i];
            for j in 0..12 {
                expect[j] -= 2.0 * r * p[j];
            }
        }
        for (a, e) in t.grad(xv).unwrap().iter().zip(&expect) {
            assert!((a - e).abs() <= 1e-9 * (1.0 + e.abs()));
        }
        let pats2 = Arc::clone(&pats);
        let report =
            grad_check(|t, v| physics_loss(t, v, &pats2, &sig, LossReduction::Sum), &[1, 1, 3, 4], &x, 1e-5, 1e-6)
                .unwrap();
        assert!(report.passed, "{report:?}");
    }
}

// ---- training ----

fn letter_problem(side: usize, m: usize, seed: u64) -> (PatternStack, BucketSignal, Image2D) {
    let obj = BuiltinTarget::Letter { glyph: 'E' }.render(side, side).unwrap();
    let pats = generate_patterns(PatternKind::default(), m, side, side, &mut Rng::new(seed)).unwrap();
    let sig = measure(&obj, &pats).unwrap();
    (pats, sig, obj)
}

#[test]
fn zero_iterations_return_initial_prediction() {
    let (pats, sig, _) = letter_problem(8, 40, 0);
    let cfg = TrainConfig { max_iters: 0, ..Default::default() };
    let spec = ModelSpec::toy_gilm();
    let (model, res) = reconstruct(&spec, &pats, &sig, &cfg).unwrap();
    assert!(res.history.is_empty());
    let input = ReconInput::generate(&spec, 8, 8, &mut Rng::new(cfg.seed).split(1)).unwrap();
    let (initial, _) = model.predict(&input).unwrap();
    assert_eq!(res.initial, initial);
    assert_eq!(res.image, normalize_image(&initial).unwrap());
}

#[test]
fn training_is_deterministic_and_improves() {
    let (pats, sig, _) = letter_problem(8, 40, 1);
    let cfg = TrainConfig { max_iters: 60, learning_rate: 3e-3, seed: 4, ..Default::default() };
    for spec in [ModelSpec::toy_gilm(), ModelSpec::toy_cnn()] {
        let (_, a) = reconstruct(&spec, &pats, &sig, &cfg).unwrap();
        let (_, b) = reconstruct(&spec, &pats, &sig, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.image, b.image);
        assert!(a.history.len() <= cfg.max_iters);
        assert!(a.best_loss <= a.history[0]);
        let resid = |img: &Image2D| -> f64 {
            let p = measure(img, &pats).unwrap();
            p.values().iter().zip(sig.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        assert!(resid(&a.raw) < resid(&a.initial));
    }
}

#[test]
fn explicit_model_training_and_checkpoint() {
    let (pats, sig, _) = letter_problem(8, 40, 2);
    let spec = ModelSpec::toy_unet();
    let mut model = build_model(&spec, &mut Rng::new(0)).unwrap();
    let input = ReconInput::generate(&spec, 8, 8, &mut Rng::new(1)).unwrap();
    let cfg = TrainConfig { max_iters: 20, snapshot_every: 5, ..Default::default() };
    let res = train_reconstruct(&mut model, &input, &Arc::new(pats), &sig, &cfg).unwrap();
    assert_eq!(res.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 5, 10, 15]);

    let dir = tempfile::tempdir().unwrap();
    model.params.save_checkpoint(dir.path()).unwrap();
    let mut fresh = build_model(&spec, &mut Rng::new(99)).unwrap();
    fresh.params.load_checkpoint(dir.path()).unwrap();
    assert_eq!(fresh.params.checksum(), model.params.checksum());
    assert_eq!(fresh.predict(&input).unwrap().0, model.predict(&input).unwrap().0);
}

#[test]
fn overflowing_loss_is_reported() {
    let (pats, _, _) = letter_problem(8, 10, 3);
    let sig = BucketSignal::new(vec![1e300; 10], None).unwrap();
    let cfg = TrainConfig { max_iters: 5, reduction: LossReduction::Sum, ..Default::default() };
    match reconstruct(&ModelSpec::toy_cnn(), &pats, &sig, &cfg) {
        Err(Error::NumericalFailure { iteration: 0, detail }) => assert!(detail.contains("norm")),
        other => panic!("expected NumericalFailure, got {:?}", other.map(|r| r.1.history)),
    }
}

#[test]
fn invalid_train_configs() {
    for cfg in [
        TrainConfig { learning_rate: 0.0, ..Default::default() },
        TrainConfig { beta1: 1.0, ..Default::default() },
        TrainConfig { eps: -1.0, ..Default::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
    }
}
