use std::collections::BTreeSet;

use diffprune::datasets::{Dataset, Mixture};
use diffprune::diffusion::{
    per_sample_grad, pretrain_trace, probe_grad_dots, probe_mean_grad, Architecture, LossTrace,
    Probe, TrainConfig, VelocityModel,
};
use diffprune::pruning::{
    cluster_histogram, kmeans_fit, score_cluster_distance, score_el2n, score_grand,
    score_monotonicity, score_moso, score_random, select_balanced_clusters, select_by_score,
    select_proportional_clusters, ClusterPolicy, Direction, ScoreTable, SelectionSpec,
};
use ndarray::{array, Array2};

fn top(table: &ScoreTable, pr: f64) -> Vec<usize> {
    let spec = SelectionSpec::new(table.method_tag(), pr, Direction::Top, ClusterPolicy::None);
    select_by_score(table, &spec).unwrap().kept_ids().to_vec()
}

fn trace_of(rows: &[&[f64]]) -> LossTrace {
    let e = rows[0].len();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    LossTrace {
        losses: Array2::from_shape_vec((rows.len(), e), flat).unwrap(),
        noise: Array2::zeros((rows.len(), 1)),
        probe_timestep: 0.5,
    }
}

#[test]
fn random_keeps_exact_count_and_is_seeded() {
    let table = score_random(5, 1).unwrap();
    assert_eq!(top(&table, 0.4).len(), 3);
    assert_eq!(score_random(5, 1).unwrap(), table);
    assert_ne!(score_random(5, 2).unwrap(), table);
}

#[test]
fn random_selection_frequencies_are_uniform() {
    let (n, seeds) = (5, 1000);
    let mut counts = [0usize; 5];
    for seed in 0..seeds {
        for id in top(&score_random(n, seed).unwrap(), 0.4) {
            counts[id] += 1;
        }
    }
    let sigma = (seeds as f64 * 0.6 * 0.4).sqrt();
    for (id, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - 600.0).abs() < 5.0 * sigma,
            "id {id} kept {c} times"
        );
    }
}

#[test]
fn monotonicity_counts_loss_increases() {
    let table = score_monotonicity(&trace_of(&[
        &[1.0, 0.9, 1.1, 1.05],
        &[4.0, 3.0, 2.0, 1.0],
        &[1.0, 2.0, 3.0, 4.0],
    ]))
    .unwrap();
    assert_eq!(table.scores(), &[1.0, 0.0, 3.0]);
    assert!(score_monotonicity(&trace_of(&[&[1.0]])).is_err());
}

/// d = 1, one hidden unit: input `[x_t, t, 1 - t]`, `h = tanh(a·u + b0)`,
/// `v = c·h + b1`, loss `r²` with `r = v - (x1 - x0)`.
#[test]
fn grand_matches_hand_computed_gradient_norm() {
    let (a, b0, c, b1) = ([0.7, -0.4, 0.25], 0.1, -1.3, 0.2);
    let arch = Architecture::new(1, vec![1], 0).unwrap();
    let model = VelocityModel::from_params(arch, vec![a[0], a[1], a[2], b0, c, b1], 0).unwrap();
    let (x0, x1, t) = (0.8, -0.6, 0.3);
    let xt = (1.0 - t) * x0 + t * x1;
    let u = [xt, t, 1.0 - t];
    let h = (a[0] * u[0] + a[1] * u[1] + a[2] * u[2] + b0).tanh();
    let r = c * h + b1 - (x1 - x0);
    let back = 2.0 * r * c * (1.0 - h * h);
    let grad = [
        back * u[0],
        back * u[1],
        back * u[2],
        back,
        2.0 * r * h,
        2.0 * r,
    ];
    let expected = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

    let ds = Dataset::new(array![[x0]], None).unwrap();
    let noise = array![[x1]];
    let table = score_grand(
        &model,
        &ds,
        &Probe {
            noise: noise.view(),
            t,
        },
    )
    .unwrap();
    assert!(
        (table.scores()[0] - expected).abs() < 1e-10,
        "{} vs {expected}",
        table.scores()[0]
    );
}

fn constant_model(dim: usize, value: f64) -> VelocityModel {
    let arch = Architecture::new(dim, vec![2], 0).unwrap();
    let mut params = vec![0.0; arch.param_count()];
    let n = params.len();
    params[n - dim..].iter_mut().for_each(|p| *p = value);
    VelocityModel::from_params(arch, params, 0).unwrap()
}

#[test]
fn grand_and_el2n_vanish_on_exact_samples() {
    // constant velocity 0.5 is exact whenever noise - x0 = 0.5
    let model = constant_model(1, 0.5);
    let ds = Dataset::new(array![[0.0], [1.0], [0.0]], None).unwrap();
    let noise = array![[0.5], [1.5], [2.0]];
    let probe = Probe {
        noise: noise.view(),
        t: 0.4,
    };
    let grand = score_grand(&model, &ds, &probe).unwrap();
    let el2n = score_el2n(&model, &ds, &probe).unwrap();
    assert_eq!(&grand.scores()[..2], &[0.0, 0.0]);
    assert_eq!(&el2n.scores()[..2], &[0.0, 0.0]);
    assert!(grand.scores()[2] > 0.0);
    assert!((el2n.scores()[2] - 2.25).abs() < 1e-12);
}

#[test]
fn el2n_of_zero_model_is_squared_noise_norm() {
    let model = constant_model(2, 0.0);
    let ds = Dataset::new(array![[0.0, 0.0]], None).unwrap();
    let noise = array![[1.0, 0.0]];
    let table = score_el2n(
        &model,
        &ds,
        &Probe {
            noise: noise.view(),
            t: 0.7,
        },
    )
    .unwrap();
    assert_eq!(table.scores(), &[1.0]);
}

#[test]
fn moso_dot_product_reduces_to_squared_mean_gradient() {
    // every sample identical: each gradient equals the mean gradient
    let arch = Architecture::new(2, vec![5], 0).unwrap();
    let model = VelocityModel::init(arch, 3);
    let ds = Dataset::new(array![[0.3, -1.0], [0.3, -1.0], [0.3, -1.0]], None).unwrap();
    let noise = array![[0.2, 0.9], [0.2, 0.9], [0.2, 0.9]];
    let probe = Probe {
        noise: noise.view(),
        t: 0.35,
    };
    let mean = probe_mean_grad(&model, &ds, &probe).unwrap();
    let single = per_sample_grad(&model, &[0.3, -1.0], &[0.2, 0.9], 0.35, None).unwrap();
    for (m, s) in mean.iter().zip(&single) {
        assert!((m - s).abs() < 1e-12);
    }
    let squared: f64 = mean.iter().map(|g| g * g).sum();
    for dot in probe_grad_dots(&model, &ds, &probe, &mean).unwrap() {
        assert!((dot - squared).abs() < 1e-10 * squared.max(1.0));
    }
}

#[test]
fn moso_is_seeded_and_finite() {
    let ds = Mixture::ring(4, 2.0, 0.3).unwrap().sample(64, 1).unwrap();
    let arch = Architecture::new(2, vec![8], 0).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        pretrain_epochs: 2,
        ..TrainConfig::default()
    };
    let a = score_moso(&ds, &arch, &cfg, 1, 7).unwrap();
    let b = score_moso(&ds, &arch, &cfg, 1, 7).unwrap();
    let c = score_moso(&ds, &arch, &cfg, 3, 7).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.scores(), c.scores());
    assert!(c.scores().iter().all(|s| s.is_finite()));
    assert!(score_moso(&ds, &arch, &cfg, 0, 7).is_err());
}

#[test]
fn kmeans_with_k_equal_n_puts_every_point_on_a_center() {
    let pts = array![[0.0, 0.0], [1.0, 3.0], [-2.0, 0.5], [4.0, 4.0]];
    let cm = kmeans_fit(pts.view(), 4, 1, 100, 1e-12).unwrap();
    assert_eq!(cm.inertia, 0.0);
    assert_eq!(cm.sizes(), vec![1, 1, 1, 1]);
    assert!(kmeans_fit(pts.view(), 5, 1, 100, 1e-12).is_err());
}

fn sorted_centers(c: &Array2<f64>) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = c.rows().into_iter().map(|r| (r[0], r[1])).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

#[test]
fn kmeans_is_invariant_to_duplicating_the_data() {
    let ds = Mixture::ring(3, 6.0, 0.5).unwrap().sample(150, 4).unwrap();
    let doubled = ndarray::concatenate![ndarray::Axis(0), ds.features(), ds.features()];
    let a = kmeans_fit(ds.features(), 3, 2, 300, 1e-10).unwrap();
    let b = kmeans_fit(doubled.view(), 3, 2, 300, 1e-10).unwrap();
    for (p, q) in sorted_centers(&a.centers)
        .iter()
        .zip(sorted_centers(&b.centers))
    {
        assert!((p.0 - q.0).abs() < 1e-8 && (p.1 - q.1).abs() < 1e-8);
    }
    assert!((2.0 * a.inertia - b.inertia).abs() < 1e-8 * b.inertia);
}

#[test]
fn kmeans_assignment_is_a_fixed_point() {
    let ds = Mixture::square(2.5, 1.0, [0.7, 0.1, 0.1, 0.1])
        .unwrap()
        .sample(800, 9)
        .unwrap();
    let cm = kmeans_fit(ds.features(), 4, 9, 300, 1e-10).unwrap();
    assert_eq!(cm.assign(ds.features()).unwrap(), cm.assignment);
    assert_eq!(cm.sizes().iter().sum::<usize>(), 800);
}

#[test]
fn clustering_uses_attached_embeddings() {
    // features put everything in one blob; embeddings separate two groups
    let features = Array2::from_shape_fn((20, 2), |(i, j)| 0.01 * (i * 2 + j) as f64);
    let embeddings =
        Array2::from_shape_fn(
            (20, 3),
            |(i, j)| if i < 10 { j as f64 } else { 100.0 + j as f64 },
        );
    let ds = Dataset::new(features, None)
        .unwrap()
        .with_embeddings(embeddings)
        .unwrap();
    let cm = kmeans_fit(ds.clustering_space(), 2, 0, 100, 1e-10).unwrap();
    let first: BTreeSet<usize> = cm.assignment[..10].iter().copied().collect();
    let second: BTreeSet<usize> = cm.assignment[10..].iter().copied().collect();
    assert_eq!(first.len(), 1);
    assert_eq!(second.len(), 1);
    assert_ne!(first, second);
}

#[test]
fn histogram_counts() {
    assert_eq!(cluster_histogram(&[0, 0, 1], 2), vec![2, 1]);
    assert_eq!(cluster_histogram(&[], 3), vec![0, 0, 0]);
}

#[test]
fn cluster_selections_on_skewed_mixture() {
    let ds = Mixture::square(2.5, 1.0, [0.7, 0.1, 0.1, 0.1])
        .unwrap()
        .sample(1000, 3)
        .unwrap();
    let cm = kmeans_fit(ds.features(), 4, 3, 300, 1e-8).unwrap();
    let table = score_cluster_distance(&cm).unwrap();

    let balanced = select_balanced_clusters(&cm, Direction::Top, 0).unwrap();
    let kept: Vec<usize> = balanced
        .kept_ids()
        .iter()
        .map(|&i| cm.assignment[i])
        .collect();
    let counts = cluster_histogram(&kept, 4);
    let s = *cm.sizes().iter().min().unwrap();
    assert!(counts.iter().all(|&c| c == s), "{counts:?}");

    let spec = SelectionSpec::new(
        "cluster",
        0.75,
        Direction::Bottom,
        ClusterPolicy::Proportional,
    );
    let prop = select_proportional_clusters(&table, &cm, &spec).unwrap();
    assert_eq!(prop.len(), 250);
    let kept: Vec<usize> = prop.kept_ids().iter().map(|&i| cm.assignment[i]).collect();
    for (c, (&k, &n)) in cluster_histogram(&kept, 4)
        .iter()
        .zip(&cm.sizes())
        .enumerate()
    {
        assert!(
            (k as f64 - n as f64 * 0.25).abs() <= 1.0,
            "cluster {c}: {k} of {n}"
        );
    }
    // furthest-from-center ranks: every kept sample is at least as far as every pruned one
    for c in 0..4 {
        let members: Vec<usize> = (0..1000).filter(|&i| cm.assignment[i] == c).collect();
        let kept_min = members
            .iter()
            .filter(|&&i| prop.contains(i))
            .map(|&i| cm.distances[i])
            .fold(f64::INFINITY, f64::min);
        let pruned_max = members
            .iter()
            .filter(|&&i| !prop.contains(i))
            .map(|&i| cm.distances[i])
            .fold(0.0, f64::max);
        assert!(kept_min >= pruned_max);
    }
}

#[test]
fn every_method_is_deterministic() {
    let ds = Mixture::ring(8, 5.0, 0.3).unwrap().sample(256, 5).unwrap();
    let arch = Architecture::new(2, vec![8], 0).unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        pretrain_epochs: 3,
        seed: 2,
        ..TrainConfig::default()
    };
    let tables = || {
        let (trace, model) =
            pretrain_trace(VelocityModel::init(arch.clone(), 1), &ds, &cfg).unwrap();
        let cm = kmeans_fit(ds.features(), 8, 1, 100, 1e-8).unwrap();
        vec![
            score_random(ds.len(), 1).unwrap(),
            score_monotonicity(&trace).unwrap(),
            score_grand(&model, &ds, &trace.probe()).unwrap(),
            score_el2n(&model, &ds, &trace.probe()).unwrap(),
            score_moso(&ds, &arch, &cfg, 2, 1).unwrap(),
            score_cluster_distance(&cm).unwrap(),
        ]
    };
    let (a, b) = (tables(), tables());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x, y);
        assert_eq!(top(x, 0.5), top(y, 0.5));
    }
}
