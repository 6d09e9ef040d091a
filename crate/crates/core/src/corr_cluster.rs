//! Correlation-distance clustering of feature rows.
//!
//! Rows are first put in canonical form (centered, unit norm). On canonical rows the
//! correlation distance is `1 - <x, y>`, which is half the squared Euclidean distance,
//! so Lloyd iterations with normalized-mean centroids (spherical k-means) decrease the
//! summed distance monotonically.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DeaError, Result};

/// `1 - pearson(x, y)`. A constant vector is at distance 1 from everything.
pub fn correlation_distance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.sum() / n;
    let my = y.sum() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y.iter()) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 1.0;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    1.0 - r
}

/// Rows centered to mean zero and scaled to unit norm.
#[derive(Debug, Clone)]
pub struct CanonicalRows {
    pub values: Array2<f64>,
    /// Rows with no spread; these are stored as all-zero.
    pub constant: Vec<bool>,
}

/// Centers and unit-normalizes one row in place. Returns false for a constant row,
/// which is zeroed.
pub fn canonicalize_row(mut row: ndarray::ArrayViewMut1<f64>) -> bool {
    let n = row.len() as f64;
    let mean = row.sum() / n;
    row.mapv_inplace(|v| v - mean);
    let norm = row.dot(&row).sqrt();
    let scale = row.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(mean.abs());
    if norm > 0.0 && norm > 1e-13 * scale {
        row.mapv_inplace(|v| v / norm);
        true
    } else {
        row.fill(0.0);
        false
    }
}

pub fn canonicalize_rows(values: &Array2<f64>) -> CanonicalRows {
    let mut out = values.clone();
    let constant = out
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .map(|row| !canonicalize_row(row))
        .collect();
    CanonicalRows {
        values: out,
        constant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub max_iter: usize,
    /// Relative objective decrease below which iteration stops.
    pub tol: f64,
    /// Independent seeded initializations; the lowest final objective is kept.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            max_iter: 300,
            tol: 1e-6,
            restarts: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Cluster id of every row.
    pub assignment: Vec<usize>,
    /// U x N canonical centroids.
    pub centroids: Array2<f64>,
    /// Summed correlation distance after each iteration of the kept run.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusterState {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::INFINITY)
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.nrows()
    }
}

/// M x U correlation distances from every row to every centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: Array2<f64>,
}

/// Clusters the rows of `data` into `u` groups under correlation distance.
pub fn cluster(data: &Array2<f64>, u: usize, cfg: &ClusterConfig) -> Result<ClusterState> {
    let m = data.nrows();
    if u < 2 || u > m {
        return Err(DeaError::invalid(format!(
            "cluster count {u} outside [2, {m}]"
        )));
    }
    if cfg.restarts == 0 || cfg.max_iter == 0 {
        return Err(DeaError::invalid("restarts and max_iter must be positive"));
    }
    let canon = canonicalize_rows(data);
    if canon.constant.iter().all(|&c| c) {
        return Err(DeaError::invalid("every row is constant; nothing to cluster"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<ClusterState> = None;
    for _ in 0..cfg.restarts {
        let run_seed: u64 = rng.random();
        let state = lloyd(&canon, u, cfg, run_seed);
        if best.as_ref().is_none_or(|b| state.objective() < b.objective()) {
            best = Some(state);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(canon: &CanonicalRows, u: usize, cfg: &ClusterConfig, seed: u64) -> ClusterState {
    let x = &canon.values;
    let m = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(canon, u, &mut rng);
    let mut assignment = vec![0usize; m];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        let nearest = assign(x, &centroids);
        let changed = nearest.iter().zip(&assignment).any(|(a, b)| a.0 != *b);
        for (slot, (c, _)) in assignment.iter_mut().zip(&nearest) {
            *slot = *c;
        }
        let mut dist: Vec<f64> = nearest.iter().map(|p| p.1).collect();
        repair_empty(canon, &mut assignment, &mut dist, &mut centroids);
        update_centroids(x, &assignment, &mut centroids);

        let obj = objective(x, &assignment, &centroids);
        let prev = history.last().copied();
        history.push(obj);
        if let Some(prev) = prev {
            let rel = (prev - obj) / prev.abs().max(f64::MIN_POSITIVE);
            if !changed || rel < cfg.tol {
                break;
            }
        }
        if obj == 0.0 {
            break;
        }
    }

    ClusterState {
        assignment,
        centroids,
        objective_history: history,
        iterations,
    }
}

/// k-means++ seeding: each new centroid is a row drawn with probability proportional
/// to its distance from the closest centroid chosen so far.
fn init_plus_plus(canon: &CanonicalRows, u: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let x = &canon.values;
    let (m, n) = x.dim();
    let candidates: Vec<usize> = (0..m).filter(|&i| !canon.constant[i]).collect();
    let mut centroids = Array2::zeros((u, n));
    let first = candidates[rng.random_range(0..candidates.len())];
    centroids.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = candidates
        .iter()
        .map(|&i| 1.0 - x.row(i).dot(&x.row(first)))
        .collect();

    for j in 1..u {
        let weights: Vec<f64> = closest.iter().map(|d| d.max(0.0)).collect();
        let pick = match WeightedIndex::new(&weights) {
            Ok(dist) => candidates[dist.sample(rng)],
            // every candidate coincides with a chosen centroid
            Err(_) => candidates[rng.random_range(0..candidates.len())],
        };
        centroids.row_mut(j).assign(&x.row(pick));
        for (d, &i) in closest.iter_mut().zip(&candidates) {
            *d = d.min(1.0 - x.row(i).dot(&x.row(pick)));
        }
    }
    centroids
}

/// Nearest centroid and its distance for each row; ties go to the lower centroid id.
fn assign(x: &Array2<f64>, centroids: &Array2<f64>) -> Vec<(usize, f64)> {
    x.axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let mut best = (0usize, f64::INFINITY);
            for (j, c) in centroids.rows().into_iter().enumerate() {
                let d = 1.0 - row.dot(&c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

/// Gives every empty cluster the worst-fitting row from a cluster that can spare one.
fn repair_empty(
    canon: &CanonicalRows,
    assignment: &mut [usize],
    dist: &mut [f64],
    centroids: &mut Array2<f64>,
) {
    let u = centroids.nrows();
    let mut counts = vec![0usize; u];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    for empty in 0..u {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for (i, &a) in assignment.iter().enumerate() {
            if counts[a] < 2 {
                continue;
            }
            let better = match donor {
                None => true,
                Some(d) => {
                    // prefer rows that can define a direction
                    let key = |r: usize| (!canon.constant[r], dist[r]);
                    let (ci, di) = key(i);
                    let (cd, dd) = key(d);
                    (ci && !cd) || (ci == cd && di > dd)
                }
            };
            if better {
                donor = Some(i);
            }
        }
        let row = donor.expect("an empty cluster implies a cluster with two or more rows");
        counts[assignment[row]] -= 1;
        counts[empty] += 1;
        assignment[row] = empty;
        if !canon.constant[row] {
            centroids.row_mut(empty).assign(&canon.values.row(row));
            dist[row] = 0.0;
        }
    }
}

/// Normalized mean of the member rows. A cluster whose members sum to zero keeps its
/// previous centroid (every unit vector is then equally good).
fn update_centroids(x: &Array2<f64>, assignment: &[usize], centroids: &mut Array2<f64>) {
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    for (i, &a) in assignment.iter().enumerate() {
        let mut s = sums.row_mut(a);
        s += &x.row(i);
    }
    for (mut c, s) in centroids.rows_mut().into_iter().zip(sums.rows()) {
        let norm = s.dot(&s).sqrt();
        if norm > 1e-12 {
            c.assign(&(&s / norm));
        }
    }
}

fn objective(x: &Array2<f64>, assignment: &[usize], centroids: &Array2<f64>) -> f64 {
    let per_row: Vec<f64> = x
        .axis_iter(Axis(0))
        .into_par_iter()
        .zip(assignment.par_iter())
        .map(|(row, &a)| (1.0 - row.dot(&centroids.row(a))).max(0.0))
        .collect();
    per_row.iter().sum()
}

/// `Y[i][j]` = correlation distance of row `i` to centroid `j`.
pub fn distance_matrix(data: &Array2<f64>, state: &ClusterState) -> Result<DistanceMatrix> {
    if data.ncols() != state.centroids.ncols() {
        return Err(DeaError::Dimension(format!(
            "data has {} observations, centroids have {}",
            data.ncols(),
            state.centroids.ncols()
        )));
    }
    distances_to(data, &state.centroids)
}

/// Correlation distances of `data` rows to the rows of `centroids`.
pub fn distances_to(data: &Array2<f64>, centroids: &Array2<f64>) -> Result<DistanceMatrix> {
    let (m, u) = (data.nrows(), centroids.nrows());
    let canon = canonicalize_rows(data);
    let cent = canonicalize_rows(centroids);
    let rows: Vec<Array1<f64>> = canon
        .values
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            cent.values
                .rows()
                .into_iter()
                .map(|c| (1.0 - row.dot(&c)).clamp(0.0, 2.0))
                .collect()
        })
        .collect();
    let mut values = Array2::zeros((m, u));
    for (i, r) in rows.iter().enumerate() {
        values.row_mut(i).assign(r);
    }
    Ok(DistanceMatrix { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand_distr::StandardNormal;

    fn d(a: &[f64], b: &[f64]) -> f64 {
        correlation_distance(Array1::from(a.to_vec()).view(), Array1::from(b.to_vec()).view())
    }

    #[test]
    fn correlation_distance_examples() {
        assert!(d(&[1., 2., 3.], &[1., 2., 3.]).abs() < 1e-15);
        assert!((d(&[1., 2., 3.], &[3., 2., 1.]) - 2.0).abs() < 1e-15);
        assert!(d(&[1., 2., 3.], &[2., 4., 6.]).abs() < 1e-15);
        assert_eq!(d(&[1., 2., 3.], &[7., 7., 7.]), 1.0);
    }

    #[test]
    fn canonical_rows() {
        let c = canonicalize_rows(&array![[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c.values[[0, 0]] + h).abs() < 1e-15);
        assert!(c.values[[0, 1]].abs() < 1e-15);
        assert!((c.values[[0, 2]] - h).abs() < 1e-15);
        assert_eq!(c.constant, vec![false, true]);
        assert_eq!(c.values.row(1).to_vec(), vec![0.0; 3]);

        let again = canonicalize_rows(&c.values);
        for (a, b) in again.values.iter().zip(c.values.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn canonical_distance_is_half_squared_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = Array2::from_shape_fn((2, 7), |_| rng.sample::<f64, _>(StandardNormal));
            let c = canonicalize_rows(&x);
            let diff = &c.values.row(0) - &c.values.row(1);
            let half_sq = diff.dot(&diff) / 2.0;
            let corr = correlation_distance(x.row(0), x.row(1));
            assert!((corr - half_sq).abs() < 1e-12);
        }
    }

    #[test]
    fn two_correlated_pairs() {
        let x = array![
            [1.0, 2.0, 3.0, 4.0],
            [2.0, 4.1, 6.0, 8.0],
            [4.0, 1.0, 3.0, 2.0],
            [8.0, 2.0, 6.0, 4.0],
        ];
        let s = cluster(&x, 2, &ClusterConfig::default()).unwrap();
        assert_eq!(s.assignment[0], s.assignment[1]);
        assert_eq!(s.assignment[2], s.assignment[3]);
        assert_ne!(s.assignment[0], s.assignment[2]);
    }

    #[test]
    fn one_cluster_per_row() {
        let x = array![[1.0, 2.0, 0.0], [0.0, 1.0, 5.0], [3.0, 0.0, 1.0]];
        let s = cluster(&x, 3, &ClusterConfig::default()).unwrap();
        assert!(s.objective().abs() < 1e-12);
        let mut ids = s.assignment.clone();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn duplicated_row_shares_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = Array2::from_shape_fn((9, 6), |_| rng.sample::<f64, _>(StandardNormal));
        let copy = x.row(2).to_owned();
        x.row_mut(7).assign(&copy);
        for seed in 0..10 {
            let cfg = ClusterConfig { seed, ..Default::default() };
            let s = cluster(&x, 4, &cfg).unwrap();
            assert_eq!(s.assignment[2], s.assignment[7]);
        }
    }

    #[test]
    fn no_empty_clusters_and_monotone_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // a block of identical rows makes empty clusters likely during iteration
        let mut x = Array2::from_shape_fn((30, 8), |_| rng.sample::<f64, _>(StandardNormal));
        let base = x.row(0).to_owned();
        for i in 1..12 {
            x.row_mut(i).assign(&base);
        }
        for seed in 0..5 {
            let cfg = ClusterConfig { seed, restarts: 1, ..Default::default() };
            let s = cluster(&x, 20, &cfg).unwrap();
            let mut seen = [false; 20];
            for &a in &s.assignment {
                seen[a] = true;
            }
            assert!(seen.iter().all(|&b| b));
            for w in s.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            for c in s.centroids.rows() {
                assert!((c.dot(&c) - 1.0).abs() < 1e-12);
                assert!(c.sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_rows_are_tolerated() {
        let x = array![[1.0, 1.0, 1.0], [1.0, 2.0, 3.0], [3.0, 1.0, 2.0], [2.0, 2.0, 2.0]];
        let s = cluster(&x, 3, &ClusterConfig::default()).unwrap();
        assert_eq!(s.assignment.len(), 4);
        let all_const = array![[1.0, 1.0], [2.0, 2.0]];
        assert!(cluster(&all_const, 2, &ClusterConfig::default()).is_err());
    }

    #[test]
    fn cluster_count_range() {
        let x = array![[1.0, 2.0], [2.0, 1.0], [0.0, 3.0]];
        assert!(cluster(&x, 1, &ClusterConfig::default()).is_err());
        assert!(cluster(&x, 4, &ClusterConfig::default()).is_err());
    }

    #[test]
    fn distance_matrix_matches_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((3, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let s = cluster(&x, 2, &ClusterConfig::default()).unwrap();
        let y = distance_matrix(&x, &s).unwrap();
        assert_eq!(y.values.dim(), (3, 2));
        for i in 0..3 {
            for j in 0..2 {
                let direct = correlation_distance(x.row(i), s.centroids.row(j));
                assert!((y.values[[i, j]] - direct).abs() < 1e-12);
            }
            let a = s.assignment[i];
            let min = y.values.row(i).fold(f64::INFINITY, |p, &q| p.min(q));
            assert!((y.values[[i, a]] - min).abs() < 1e-12);
        }
        let wrong = Array2::zeros((3, 4));
        assert!(distance_matrix(&wrong, &s).is_err());
    }

    #[test]
    fn equal_and_anticorrelated_rows() {
        let x = array![[1.0, 2.0, 3.0], [3.0, 2.0, 1.0], [0.0, 0.5, 2.0]];
        let cent = array![[1.0, 2.0, 3.0]];
        let y = distances_to(&x, &cent).unwrap();
        assert!(y.values[[0, 0]].abs() < 1e-15);
        assert!((y.values[[1, 0]] - 2.0).abs() < 1e-15);
    }
}
