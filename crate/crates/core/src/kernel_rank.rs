//! Centroid ranking over a k-nearest-neighbour graph of distance-matrix rows.
//!
//! Rows of the M x U distance matrix are linked to their `k` nearest rows (Euclidean),
//! edges are weighted with `exp(-d / sigma^2)`, and every centroid column `d_r` is scored
//! with `d_r' S d_r / d_r' D d_r`, `D` being the diagonal of kernel row sums. The
//! bandwidth is picked from a grid to maximize the sum of the `q` best scores.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr_cluster::DistanceMatrix;
use crate::error::{DeaError, Result};

/// Symmetric sparse matrix stored as per-row `(column, value)` lists sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSym {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let m = self.dim();
        let mut out = Array2::zeros((m, m));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[[i, j]] = v;
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Euclidean distances between neighbouring rows of Y; zero diagonal, union-symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    /// Off-diagonal edges only.
    pub edges: SparseSym,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    /// Includes the unit diagonal.
    pub values: SparseSym,
    pub sigma: f64,
    /// Row sums of `values`.
    pub degree: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidScores {
    pub scores: Vec<f64>,
    /// Chosen columns, best first.
    pub selected: Vec<usize>,
    pub sigma_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDistanceMatrix {
    pub values: Array2<f64>,
}

fn euclidean(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// k-NN graph over the rows of `y`. Neighbour ties go to the lower row index.
pub fn neighbor_graph(y: &DistanceMatrix, k: usize) -> Result<NeighborGraph> {
    let v = &y.values;
    let m = v.nrows();
    if k == 0 || k + 1 > m {
        return Err(DeaError::invalid(format!(
            "neighbour count {k} outside [1, {}]",
            m.saturating_sub(1)
        )));
    }

    let knn: Vec<Vec<usize>> = v
        .axis_iter(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut cand: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (euclidean(row, v.row(j)), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.into_iter().map(|c| c.1).collect()
        })
        .collect();

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, nb) in knn.iter().enumerate() {
        for &j in nb {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let rows: Vec<Vec<(usize, f64)>> = adj
        .into_par_iter()
        .enumerate()
        .map(|(i, mut nb)| {
            nb.sort_unstable();
            nb.dedup();
            nb.into_iter()
                .map(|j| {
                    // evaluate in a fixed (low, high) order so both halves are bit-identical
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    (j, euclidean(v.row(a), v.row(b)))
                })
                .collect()
        })
        .collect();
    Ok(NeighborGraph {
        edges: SparseSym { rows },
        k,
    })
}

/// `S[i][j] = exp(-d_ij / sigma^2)` on graph edges, 1 on the diagonal, 0 elsewhere.
pub fn kernel(graph: &NeighborGraph, sigma: f64) -> Result<KernelMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(DeaError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let s2 = sigma * sigma;
    let rows: Vec<Vec<(usize, f64)>> = graph
        .edges
        .rows
        .iter()
        .enumerate()
        .map(|(i, edges)| {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(edges.len() + 1);
            let mut placed = false;
            for &(j, d) in edges {
                if !placed && j > i {
                    row.push((i, 1.0));
                    placed = true;
                }
                row.push((j, (-d / s2).exp()));
            }
            if !placed {
                row.push((i, 1.0));
            }
            row
        })
        .collect();
    let degree = rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    Ok(KernelMatrix {
        values: SparseSym { rows },
        sigma,
        degree,
    })
}

/// Quotient `d' S d / d' D d` for one column; 0 when the denominator vanishes.
fn column_score(y: &Array2<f64>, r: usize, kern: &KernelMatrix) -> f64 {
    let col = y.column(r);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, row) in kern.values.rows.iter().enumerate() {
        let di = col[i];
        let mut s = 0.0;
        for &(j, v) in row {
            s += v * col[j];
        }
        num += di * s;
        den += kern.degree[i] * di * di;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn score_columns(y: &DistanceMatrix, kern: &KernelMatrix) -> Result<Vec<f64>> {
    if y.values.nrows() != kern.values.dim() {
        return Err(DeaError::Dimension(format!(
            "distance matrix has {} rows, kernel is {}x{}",
            y.values.nrows(),
            kern.values.dim(),
            kern.values.dim()
        )));
    }
    Ok((0..y.values.ncols())
        .into_par_iter()
        .map(|r| column_score(&y.values, r, kern))
        .collect())
}

/// Column indices of the `q` best scores, best first; ties go to the lower index.
pub fn top_indices(scores: &[f64], q: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(q);
    order
}

/// Sum of the top `q` entries, added best first.
fn top_sum(scores: &[f64], q: usize) -> f64 {
    top_indices(scores, q).iter().map(|&i| scores[i]).sum()
}

/// Grid search over sigma. Ties between grid points go to the smaller sigma.
pub fn optimize_sigma(
    y: &DistanceMatrix,
    graph: &NeighborGraph,
    grid: &[f64],
    q: usize,
) -> Result<CentroidScores> {
    let u = y.values.ncols();
    if grid.is_empty() {
        return Err(DeaError::invalid("sigma grid is empty"));
    }
    if q == 0 || q > u {
        return Err(DeaError::invalid(format!("selection count {q} outside [1, {u}]")));
    }
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for &sigma in grid {
        let kern = kernel(graph, sigma)?;
        let scores = score_columns(y, &kern)?;
        let total = top_sum(&scores, q);
        let better = match &best {
            None => true,
            Some((bt, bs, _)) => total > *bt || (total == *bt && sigma < *bs),
        };
        if better {
            best = Some((total, sigma, scores));
        }
    }
    let (_, sigma_star, scores) = best.expect("grid is nonempty");
    let selected = top_indices(&scores, q);
    Ok(CentroidScores {
        scores,
        selected,
        sigma_star,
    })
}

pub fn reduce(y: &DistanceMatrix, scores: &CentroidScores) -> Result<ReducedDistanceMatrix> {
    let u = y.values.ncols();
    if let Some(&bad) = scores.selected.iter().find(|&&c| c >= u) {
        return Err(DeaError::invalid(format!("selected column {bad} >= {u}")));
    }
    Ok(ReducedDistanceMatrix {
        values: y.values.select(Axis(1), &scores.selected),
    })
}

/// Inclusive arithmetic grid `start, start+step, ..., end`, rounded to 12 decimals so
/// that `0.5:0.1:1.5` yields exactly the decimal values.
pub fn sigma_grid(start: f64, step: f64, end: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || end < start || start <= 0.0 {
        return Err(DeaError::invalid(format!(
            "invalid sigma grid {start}:{step}:{end}"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let v = start + step * i as f64;
            (v * 1e12).round() / 1e12
        })
        .collect())
}

pub fn default_sigma_grid() -> Vec<f64> {
    sigma_grid(0.5, 0.1, 1.5).expect("static grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dm(v: Array2<f64>) -> DistanceMatrix {
        DistanceMatrix { values: v }
    }

    #[test]
    fn knn_on_a_line() {
        // a-b: 1, b-c: 1, a-c: 2
        let y = dm(array![[0.0], [1.0], [2.0]]);
        let g = neighbor_graph(&y, 1).unwrap();
        let dense = g.edges.to_dense();
        assert_eq!(
            dense,
            array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]
        );
    }

    #[test]
    fn full_neighbourhood_is_dense() {
        let y = dm(array![[0.0, 1.0], [1.0, 1.0], [3.0, 0.0], [0.5, 0.5]]);
        let g = neighbor_graph(&y, 3).unwrap();
        let d = g.edges.to_dense();
        for i in 0..4 {
            assert_eq!(d[[i, i]], 0.0);
            for j in 0..4 {
                if i != j {
                    assert!(d[[i, j]] > 0.0);
                    assert_eq!(d[[i, j]].to_bits(), d[[j, i]].to_bits());
                }
            }
        }
        assert!(neighbor_graph(&y, 4).is_err());
        assert!(neighbor_graph(&y, 0).is_err());
    }

    #[test]
    fn duplicate_rows_are_neighbours_at_zero() {
        let y = dm(array![[0.2, 0.3], [0.2, 0.3], [1.0, 1.5]]);
        let g = neighbor_graph(&y, 1).unwrap();
        // row 2 ties between rows 0 and 1 and keeps the lower index
        assert_eq!(g.edges.rows[0][0], (1, 0.0));
        assert_eq!(g.edges.rows[1], vec![(0, 0.0)]);
        assert_eq!(g.edges.rows[2].len(), 1);
        assert_eq!(g.edges.rows[2][0].0, 0);
        // zero-distance edges still count as edges in the kernel
        let k = kernel(&g, 1.0).unwrap();
        assert_eq!(k.values.get(0, 1), 1.0);
    }

    #[test]
    fn kernel_entries() {
        let y = dm(array![[0.0], [1.0], [2.0]]);
        let g = neighbor_graph(&y, 1).unwrap();
        let k = kernel(&g, 1.0).unwrap();
        assert!((k.values.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(k.values.get(0, 2), 0.0);
        assert_eq!(k.values.get(1, 1), 1.0);
        assert!((k.degree[1] - (1.0 + 2.0 * (-1.0f64).exp())).abs() < 1e-15);
        let wide = kernel(&g, 100.0).unwrap();
        assert!((wide.values.get(0, 1) - 0.9999).abs() < 1e-6);
        assert!(kernel(&g, 0.0).is_err());
        assert!(kernel(&g, -1.0).is_err());
    }

    fn identity_kernel(m: usize) -> KernelMatrix {
        KernelMatrix {
            values: SparseSym {
                rows: (0..m).map(|i| vec![(i, 1.0)]).collect(),
            },
            sigma: 1.0,
            degree: vec![1.0; m],
        }
    }

    #[test]
    fn identity_kernel_scores_one_and_zero_column_scores_zero() {
        let y = dm(array![[0.3, 0.0], [1.2, 0.0], [0.7, 0.0]]);
        let s = score_columns(&y, &identity_kernel(3)).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert_eq!(s[1], 0.0);
        assert!(score_columns(&y, &identity_kernel(4)).is_err());
    }

    #[test]
    fn scores_match_dense_quadratic_forms() {
        let y = dm(array![[0.2, 1.1], [0.9, 0.4], [1.5, 0.3], [0.1, 1.9]]);
        let sd = array![
            [1.0, 0.5, 0.0, 0.2],
            [0.5, 1.0, 0.3, 0.0],
            [0.0, 0.3, 1.0, 0.7],
            [0.2, 0.0, 0.7, 1.0]
        ];
        let rows = (0..4)
            .map(|i| (0..4).filter(|&j| sd[[i, j]] != 0.0).map(|j| (j, sd[[i, j]])).collect())
            .collect();
        let degree: Vec<f64> = sd.rows().into_iter().map(|r| r.sum()).collect();
        let k = KernelMatrix {
            values: SparseSym { rows },
            sigma: 1.0,
            degree: degree.clone(),
        };
        let got = score_columns(&y, &k).unwrap();
        let dg = Array2::from_diag(&ndarray::Array1::from(degree));
        for (r, g) in got.iter().enumerate() {
            let c = y.values.column(r);
            let expect = c.dot(&sd.dot(&c)) / c.dot(&dg.dot(&c));
            assert!((g - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn sigma_search_edge_cases() {
        let y = dm(array![
            [0.1, 0.9, 1.2],
            [0.2, 0.8, 1.0],
            [1.1, 0.3, 0.2],
            [1.0, 0.2, 0.4],
            [0.5, 0.5, 1.9]
        ]);
        let g = neighbor_graph(&y, 2).unwrap();
        let one = optimize_sigma(&y, &g, &[0.7], 2).unwrap();
        assert_eq!(one.sigma_star, 0.7);
        let all = optimize_sigma(&y, &g, &default_sigma_grid(), 3).unwrap();
        let mut sel = all.selected.clone();
        sel.sort();
        assert_eq!(sel, vec![0, 1, 2]);
        assert!(optimize_sigma(&y, &g, &[], 1).is_err());
        assert!(optimize_sigma(&y, &g, &[1.0], 0).is_err());
        assert!(optimize_sigma(&y, &g, &[1.0], 4).is_err());
    }

    #[test]
    fn reduce_picks_columns_in_order() {
        let y = dm(array![[0.0, 1.0, 2.0], [0.5, 1.5, 0.25]]);
        let s = CentroidScores {
            scores: vec![0.5, 0.1, 0.9],
            selected: vec![2, 0],
            sigma_star: 1.0,
        };
        assert_eq!(reduce(&y, &s).unwrap().values, array![[2.0, 0.0], [0.25, 0.5]]);
        let equal = CentroidScores {
            scores: vec![0.3; 3],
            selected: top_indices(&[0.3; 3], 3),
            sigma_star: 1.0,
        };
        assert_eq!(reduce(&y, &equal).unwrap().values, y.values);
    }

    #[test]
    fn default_grid_has_eleven_points() {
        let g = default_sigma_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[5], 1.0);
        assert_eq!(g[10], 1.5);
        assert_eq!(g[3], 0.8);
    }
}
