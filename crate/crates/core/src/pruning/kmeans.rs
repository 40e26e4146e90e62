use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::error::{Error, Result};
use crate::{persist, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest final inertia wins.
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 300,
            tol: 1e-8,
            restarts: 16,
        }
    }
}

/// A fitted clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// `(k, e)` cluster centers.
    pub centers: Array2<f64>,
    pub assignment: Vec<usize>,
    /// Euclidean distance of each sample to its assigned center.
    pub distances: Vec<f64>,
    pub k: usize,
    /// Sum of squared distances.
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        cluster_histogram(&self.assignment, self.k)
    }

    /// Ids of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Nearest-center assignment of new points (ties go to the lower index).
    pub fn assign(&self, points: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        if points.ncols() != self.centers.ncols() {
            return Err(Error::Shape {
                context: "points to assign".into(),
                expected: self.centers.ncols(),
                actual: points.ncols(),
            });
        }
        Ok(points
            .rows()
            .into_iter()
            .map(|p| nearest(p, self.centers.view()).0)
            .collect())
    }
}

/// Per-cluster counts of an assignment vector.
pub fn save_clusters(cm: &ClusterModel, path: impl AsRef<Path>) -> Result<()> {
    persist::write_json(path.as_ref(), cm)
}

pub fn load_clusters(path: impl AsRef<Path>) -> Result<ClusterModel> {
    persist::read_json(path.as_ref())
}

pub fn cluster_histogram(assignment: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &c in assignment {
        if c >= counts.len() {
            counts.resize(c + 1, 0);
        }
        counts[c] += 1;
    }
    counts
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: ArrayView1<'_, f64>, centers: ArrayView2<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(x: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, x.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (i, p) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, x.row(pick)));
        }
    }
    centers
}

struct Lloyd {
    centers: Array2<f64>,
    assignment: Vec<usize>,
    sq: Vec<f64>,
    history: Vec<f64>,
}

impl Lloyd {
    fn assign(&mut self, x: ArrayView2<'_, f64>) {
        for (i, p) in x.rows().into_iter().enumerate() {
            let (c, d) = nearest(p, self.centers.view());
            self.assignment[i] = c;
            self.sq[i] = d;
        }
        self.repair_empty(x);
        self.history.push(self.sq.iter().sum());
    }

    /// Give every empty cluster the point farthest from its center within the
    /// currently largest cluster, and move that center onto it.
    fn repair_empty(&mut self, x: ArrayView2<'_, f64>) {
        let k = self.centers.nrows();
        loop {
            let sizes = cluster_histogram(&self.assignment, k);
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                return;
            };
            // largest cluster, lowest index on ties
            let largest = sizes
                .iter()
                .enumerate()
                .fold(0, |best, (c, &s)| if s > sizes[best] { c } else { best });
            let far = (0..self.assignment.len())
                .filter(|&i| self.assignment[i] == largest)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if self.sq[b] >= self.sq[i] => Some(b),
                    _ => Some(i),
                })
                .expect("largest cluster is non-empty");
            self.centers.row_mut(empty).assign(&x.row(far));
            self.assignment[far] = empty;
            self.sq[far] = 0.0;
        }
    }

    fn update(&mut self, x: ArrayView2<'_, f64>) -> f64 {
        let (k, e) = self.centers.dim();
        let mut sums = Array2::<f64>::zeros((k, e));
        let mut counts = vec![0usize; k];
        for (i, p) in x.rows().into_iter().enumerate() {
            let c = self.assignment[i];
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += &p;
        }
        let mut shift: f64 = 0.0;
        for (c, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let mean = sums.row(c).mapv(|v| v / count as f64);
            shift = shift.max(sq_dist(mean.view(), self.centers.row(c)).sqrt());
            self.centers.row_mut(c).assign(&mean);
        }
        shift
    }
}

/// k-means with seeded k-means++ initialisation and Lloyd iterations.
pub fn kmeans_fit(
    embeddings: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let cfg = KMeansConfig {
        max_iters,
        tol,
        ..KMeansConfig::new(k, seed)
    };
    kmeans_fit_with(embeddings, &cfg)
}

pub fn kmeans_fit_with(x: ArrayView2<'_, f64>, cfg: &KMeansConfig) -> Result<ClusterModel> {
    let n = x.nrows();
    if cfg.k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if cfg.k > n {
        return Err(Error::invalid(format!(
            "k = {} exceeds sample count {n}",
            cfg.k
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("embeddings need at least one column"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite embedding"));
    }
    let mut best: Option<Lloyd> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = rng::derived_stream(cfg.seed, "kmeans-init", &restart.to_string());
        let mut run = Lloyd {
            centers: plus_plus_init(x, cfg.k, &mut rng),
            assignment: vec![0; n],
            sq: vec![0.0; n],
            history: Vec::new(),
        };
        for _ in 0..cfg.max_iters {
            run.assign(x);
            if run.update(x) < cfg.tol {
                break;
            }
        }
        run.assign(x);
        let inertia = *run.history.last().expect("assigned at least once");
        if best
            .as_ref()
            .is_none_or(|b| inertia < *b.history.last().unwrap())
        {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    Ok(ClusterModel {
        k: cfg.k,
        inertia: run.sq.iter().sum(),
        distances: run.sq.iter().map(|d| d.sqrt()).collect(),
        centers: run.centers,
        assignment: run.assignment,
        inertia_history: run.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Exhaustive optimum over all assignments of `x` to 2 non-empty clusters.
    fn brute_force_two_clusters(x: ArrayView2<'_, f64>) -> f64 {
        let n = x.nrows();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut sse = 0.0;
            for side in [0, 1] {
                let rows: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1) == side).collect();
                let mean = x
                    .select(ndarray::Axis(0), &rows)
                    .mean_axis(ndarray::Axis(0))
                    .unwrap();
                sse += rows
                    .iter()
                    .map(|&i| sq_dist(x.row(i), mean.view()))
                    .sum::<f64>();
            }
            best = best.min(sse);
        }
        best
    }

    #[test]
    fn square_corners_match_exhaustive_optimum() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let optimum = brute_force_two_clusters(x.view());
        assert!((optimum - 1.0).abs() < 1e-12);
        for seed in 0..50 {
            let cm = kmeans_fit(x.view(), 2, seed, 100, 1e-10).unwrap();
            assert_eq!(cm.sizes(), vec![2, 2], "seed {seed}");
            assert!(
                (cm.inertia - optimum).abs() < 1e-12,
                "seed {seed}: {}",
                cm.inertia
            );
        }
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let x = array![[0.0, 1.0], [3.0, 2.0], [-1.0, 5.0], [2.0, 2.0], [9.0, 0.0]];
        let cm = kmeans_fit(x.view(), 5, 3, 100, 1e-10).unwrap();
        assert_eq!(cm.inertia, 0.0);
        assert_eq!(cm.sizes(), vec![1; 5]);
        for (i, &c) in cm.assignment.iter().enumerate() {
            assert_eq!(cm.centers.row(c), x.row(i));
        }
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(kmeans_fit(x.view(), 3, 0, 10, 1e-6).is_err());
    }

    #[test]
    fn inertia_is_monotone_and_final_assignment_is_fixed_point() {
        let ds = crate::datasets::Mixture::ring(6, 3.0, 0.8)
            .unwrap()
            .sample(600, 11)
            .unwrap();
        let cm = kmeans_fit(ds.features(), 6, 2, 200, 1e-10).unwrap();
        for w in cm.inertia_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
        }
        for (i, p) in ds.features().rows().into_iter().enumerate() {
            let (c, _) = nearest(p, cm.centers.view());
            assert_eq!(c, cm.assignment[i]);
            let d = sq_dist(p, cm.centers.row(c)).sqrt();
            assert!((d - cm.distances[i]).abs() < 1e-12);
        }
        let sum: f64 = cm.distances.iter().map(|d| d * d).sum();
        assert!((sum - cm.inertia).abs() < 1e-9);
        assert!(cm.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn duplicating_the_data_keeps_the_centers() {
        let ds = crate::datasets::Mixture::ring(4, 5.0, 0.3)
            .unwrap()
            .sample(200, 5)
            .unwrap();
        let x = ds.features();
        let doubled = ndarray::concatenate(ndarray::Axis(0), &[x, x]).unwrap();
        let a = kmeans_fit(x, 4, 1, 200, 1e-10).unwrap();
        let b = kmeans_fit(doubled.view(), 4, 1, 200, 1e-10).unwrap();
        // centers may come out in a different order
        for ca in a.centers.rows() {
            let closest = b
                .centers
                .rows()
                .into_iter()
                .map(|cb| sq_dist(ca, cb).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 1e-8, "{closest}");
        }
        assert!((b.inertia - 2.0 * a.inertia).abs() < 1e-8);
    }

    #[test]
    fn empty_clusters_are_repaired() {
        // all points identical except one: k-means++ must still yield k non-empty clusters
        let x = array![[0.0], [0.0], [0.0], [0.0], [1.0]];
        let cm = kmeans_fit(x.view(), 3, 0, 50, 1e-10).unwrap();
        assert!(cm.sizes().iter().all(|&s| s > 0), "{:?}", cm.sizes());
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(cluster_histogram(&[0, 0, 1], 2), vec![2, 1]);
        assert_eq!(cluster_histogram(&[], 3), vec![0, 0, 0]);
    }
}
