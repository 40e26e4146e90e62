mod common;

use common::{
    gauss_vec, heun_orders, max_fd_relative_error, random_model, scalar_loss, GaussianDataField,
};
use diffprune::datasets::{Mixture, SubsetManifest};
use diffprune::diffusion::{
    load_model, per_sample_grad, per_sample_loss, pretrain_trace, probe_grad_dots,
    probe_grad_norms, probe_losses, probe_mean_grad, sample_ode, save_model, train, Architecture,
    Probe, TrainConfig, VelocityModel,
};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Model whose output is the constant `c` everywhere.
fn constant_model(c: &[f64]) -> VelocityModel {
    let arch = Architecture::new(c.len(), vec![3], 0).unwrap();
    let mut params = vec![0.0; arch.param_count()];
    let n = params.len();
    params[n - c.len()..].copy_from_slice(c);
    VelocityModel::from_params(arch, params, 0).unwrap()
}

#[test]
fn exact_velocity_gives_zero_loss_and_zero_gradient() {
    let x0 = [0.5, -1.0];
    let x1 = [1.5, 2.0];
    let model = constant_model(&[1.0, 3.0]);
    assert_eq!(per_sample_loss(&model, &x0, &x1, 0.3, None).unwrap(), 0.0);
    assert!(per_sample_grad(&model, &x0, &x1, 0.3, None)
        .unwrap()
        .iter()
        .all(|&g| g == 0.0));
}

#[test]
fn zero_velocity_unit_noise_gives_unit_loss() {
    let model = constant_model(&[0.0, 0.0, 0.0]);
    for t in [0.01, 0.5, 0.99] {
        assert_eq!(
            per_sample_loss(&model, &[0.0; 3], &[1.0, 0.0, 0.0], t, None).unwrap(),
            1.0
        );
    }
}

#[test]
fn loss_matches_scalar_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let labels = rng.random_range(0..3);
        let model = random_model(&mut rng, labels);
        let d = model.dim();
        let x0 = gauss_vec(&mut rng, d);
        let x1 = gauss_vec(&mut rng, d);
        let t = rng.random_range(0.01..0.99);
        let label = (labels > 0).then(|| rng.random_range(0..labels));
        let got = per_sample_loss(&model, &x0, &x1, t, label).unwrap();
        let want = scalar_loss(&model, &x0, &x1, t, label);
        assert!(
            (got - want).abs() <= 1e-12 * want.max(1.0),
            "{got} vs {want}"
        );
    }
}

#[test]
fn gradient_matches_central_differences() {
    let worst = max_fd_relative_error(100, 2024);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn duplicated_sample_has_identical_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = random_model(&mut rng, 0);
    let x0 = gauss_vec(&mut rng, model.dim());
    let x1 = gauss_vec(&mut rng, model.dim());
    assert_eq!(
        per_sample_grad(&model, &x0, &x1, 0.1, None).unwrap(),
        per_sample_grad(&model, &x0, &x1, 0.1, None).unwrap()
    );
}

#[test]
fn non_finite_inputs_are_numeric_errors() {
    let model = constant_model(&[0.0]);
    assert!(matches!(
        per_sample_loss(&model, &[f64::NAN], &[0.0], 0.5, None),
        Err(diffprune::Error::Numeric(_))
    ));
    assert!(per_sample_loss(&model, &[0.0], &[0.0], 1.0, None).is_err());
}

#[test]
fn batched_probes_agree_with_per_sample_gradients() {
    let ds = Mixture::ring(3, 2.0, 0.5).unwrap().sample(700, 8).unwrap();
    let model = VelocityModel::init(Architecture::new(2, vec![7, 5], 0).unwrap(), 4);
    let noise = diffprune::diffusion::probe_noise(ds.len(), 2, 9);
    let probe = Probe {
        noise: noise.view(),
        t: 0.1,
    };
    let norms = probe_grad_norms(&model, &ds, &probe).unwrap();
    let losses = probe_losses(&model, &ds, &probe).unwrap();
    let mean = probe_mean_grad(&model, &ds, &probe).unwrap();
    let dots = probe_grad_dots(&model, &ds, &probe, &mean).unwrap();
    let mut explicit_mean = vec![0.0; mean.len()];
    for i in 0..ds.len() {
        let x0 = ds.features().row(i).to_vec();
        let x1 = noise.row(i).to_vec();
        let g = per_sample_grad(&model, &x0, &x1, 0.1, None).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - norms[i]).abs() <= 1e-10 * norm.max(1.0));
        let l = per_sample_loss(&model, &x0, &x1, 0.1, None).unwrap();
        assert!((l - losses[i]).abs() <= 1e-12 * l.max(1.0));
        let dot: f64 = g.iter().zip(&mean).map(|(a, b)| a * b).sum();
        assert!((dot - dots[i]).abs() <= 1e-10 * dot.abs().max(1.0));
        for (m, v) in explicit_mean.iter_mut().zip(&g) {
            *m += v / ds.len() as f64;
        }
    }
    for (a, b) in explicit_mean.iter().zip(&mean) {
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}

fn small_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 400,
        batch_size: 128,
        learning_rate: 3e-3,
        seed,
        log_every: 50,
        ..TrainConfig::default()
    }
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let ds = Mixture::ring(8, 5.0, 0.3).unwrap().sample(4096, 1).unwrap();
    let arch = Architecture::new(2, vec![64, 64], 0).unwrap();
    let full = SubsetManifest::full(ds.len(), 0).unwrap();
    let cfg = small_cfg(3);
    let a = train(VelocityModel::init(arch.clone(), 1), &ds, &full, &cfg).unwrap();
    assert_eq!(a.loss_curve.len(), 8);
    assert!(
        a.loss_curve.last().unwrap() < a.loss_curve.first().unwrap(),
        "{:?}",
        a.loss_curve
    );
    let b = train(VelocityModel::init(arch.clone(), 1), &ds, &full, &cfg).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.loss_curve, b.loss_curve);

    // a half-size random subset also trains
    let table = diffprune::pruning::score_random(ds.len(), 2).unwrap();
    let spec = diffprune::pruning::SelectionSpec::new(
        "random",
        0.5,
        diffprune::pruning::Direction::Top,
        diffprune::pruning::ClusterPolicy::None,
    );
    let half = diffprune::pruning::select_by_score(&table, &spec).unwrap();
    let c = train(VelocityModel::init(arch, 1), &ds, &half, &cfg).unwrap();
    assert!(c.loss_curve.last().unwrap() < c.loss_curve.first().unwrap());
}

#[test]
fn empty_or_invalid_training_requests_fail() {
    let ds = Mixture::ring(2, 1.0, 0.1).unwrap().sample(10, 0).unwrap();
    let arch = Architecture::new(2, vec![4], 0).unwrap();
    let out_of_range = SubsetManifest::new(vec![0, 20], 0.0, "x", 0).unwrap();
    assert!(train(
        VelocityModel::init(arch.clone(), 0),
        &ds,
        &out_of_range,
        &small_cfg(0)
    )
    .is_err());
    let bad = TrainConfig {
        probe_timestep: 1.0,
        ..small_cfg(0)
    };
    let full = SubsetManifest::full(10, 0).unwrap();
    assert!(train(VelocityModel::init(arch, 0), &ds, &full, &bad).is_err());
}

#[test]
fn pretrain_trace_shapes_and_frozen_model() {
    let ds = Mixture::ring(4, 2.0, 0.3).unwrap().sample(64, 3).unwrap();
    let arch = Architecture::new(2, vec![16], 0).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        pretrain_epochs: 2,
        ..small_cfg(1)
    };
    let (trace, _) = pretrain_trace(VelocityModel::init(arch.clone(), 0), &ds, &cfg).unwrap();
    assert_eq!(trace.losses.dim(), (64, 2));
    assert!(trace.losses.iter().all(|&l| l.is_finite() && l >= 0.0));

    let frozen = TrainConfig {
        learning_rate: 0.0,
        pretrain_epochs: 4,
        ..cfg.clone()
    };
    let (trace, _) = pretrain_trace(VelocityModel::init(arch.clone(), 0), &ds, &frozen).unwrap();
    for j in 1..4 {
        assert_eq!(trace.losses.column(j), trace.losses.column(0));
    }

    let one = TrainConfig {
        pretrain_epochs: 1,
        ..cfg
    };
    assert!(pretrain_trace(VelocityModel::init(arch, 0), &ds, &one).is_err());
}

#[test]
fn pretrain_losses_fall_on_average() {
    // Empirical check over three seeds: the mean epoch-to-epoch change of the
    // column means is negative.
    let mut total_change = 0.0;
    for seed in 0..3 {
        let ds = Mixture::ring(4, 2.0, 0.3)
            .unwrap()
            .sample(64, 10 + seed)
            .unwrap();
        let arch = Architecture::new(2, vec![32, 32], 0).unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            pretrain_epochs: 6,
            learning_rate: 3e-3,
            seed,
            ..TrainConfig::default()
        };
        let (trace, _) = pretrain_trace(VelocityModel::init(arch, seed), &ds, &cfg).unwrap();
        let means = trace.losses.mean_axis(Axis(0)).unwrap();
        total_change += (means[means.len() - 1] - means[0]) / (means.len() - 1) as f64;
    }
    assert!(total_change < 0.0, "{total_change}");
}

#[test]
fn heun_is_second_order_on_the_analytic_field() {
    let field = GaussianDataField {
        mean: vec![1.0, -2.0],
        std: 0.5,
    };
    let orders = heun_orders(&field, &[32, 64, 128]);
    for o in &orders {
        assert!(*o >= 1.9, "{orders:?}");
    }
}

#[test]
fn near_point_mass_flow_collapses_to_the_mean() {
    let field = GaussianDataField {
        mean: vec![0.0, 0.0],
        std: 1e-4,
    };
    let worst = |steps| {
        let out = sample_ode(&field, 32, steps, 7, None).unwrap();
        out.iter().fold(0.0f64, |m: f64, v: &f64| m.max(v.abs()))
    };
    let (coarse, fine) = (worst(100), worst(400));
    assert!(fine < 1e-2, "{fine}");
    assert!(coarse / fine > 2.0, "{coarse} {fine}");
}

#[test]
fn sampling_is_seeded_and_checkpoints_round_trip() {
    let arch = Architecture::new(2, vec![8, 8], 3).unwrap();
    let model = VelocityModel::init(arch, 12);
    let labels = [0, 1, 2, 1];
    let a = sample_ode(&model, 4, 10, 5, Some(&labels)).unwrap();
    let b = sample_ode(&model, 4, 10, 5, Some(&labels)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_ode(&model, 4, 10, 6, Some(&labels)).unwrap());
    assert!(sample_ode(&model, 4, 0, 5, Some(&labels)).is_err());

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.json");
    save_model(&model, &p).unwrap();
    let back = load_model(&p).unwrap();
    assert_eq!(back, model);
    let c: Array2<f64> = sample_ode(&back, 4, 10, 5, Some(&labels)).unwrap();
    assert_eq!(a, c);
}
