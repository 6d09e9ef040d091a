use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DeaError, Result};

pub const DEFAULT_ITERATIONS: usize = 500;

/// `X ~ W H` with nonnegative factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnmfModel {
    /// M x P basis; its columns are the component images.
    #[serde(with = "crate::serde_matrix")]
    pub basis: Array2<f64>,
    /// P x N coefficients.
    #[serde(with = "crate::serde_matrix")]
    pub coefficients: Array2<f64>,
    /// Frobenius norm `||X - W H||` after every iteration.
    pub residuals: Vec<f64>,
}

impl NnmfModel {
    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }

    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    /// Linear projection `W' x` of every column: P x N_new.
    pub fn transform(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        if data.nrows() != self.basis.nrows() {
            return Err(DeaError::Dimension(format!(
                "NNMF model has {} features, data has {}",
                self.basis.nrows(),
                data.nrows()
            )));
        }
        Ok(self.basis.t().dot(data))
    }
}

fn frobenius(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    (x - &w.dot(h)).mapv(|v| v * v).sum().sqrt()
}

/// Multiplies `f` elementwise by `num / den`; entries with a zero denominator keep
/// their value.
fn multiplicative_step(f: &mut Array2<f64>, num: &Array2<f64>, den: &Array2<f64>) {
    ndarray::Zip::from(f).and(num).and(den).for_each(|v, &a, &b| {
        if b > 0.0 {
            *v *= a / b;
        }
    });
}

/// Lee-Seung multiplicative updates for the Frobenius objective.
pub fn nnmf_fit(data: &Array2<f64>, p: usize, iters: usize, seed: u64) -> Result<NnmfModel> {
    let (m, n) = data.dim();
    if p == 0 || p > m.min(n) {
        return Err(DeaError::invalid(format!(
            "NNMF component count {p} outside [1, {}]",
            m.min(n)
        )));
    }
    if let Some(((r, c), v)) = data.indexed_iter().find(|(_, v)| !(**v >= 0.0)) {
        return Err(DeaError::invalid(format!(
            "NNMF needs nonnegative data; entry ({}, {}) is {v}",
            r + 1,
            c + 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // uniform on (0, 1]
    let mut draw = |shape| Array2::from_shape_simple_fn(shape, || 1.0 - rng.random::<f64>());
    let mut w = draw((m, p));
    let mut h = draw((p, n));
    let mut residuals = Vec::with_capacity(iters);

    for _ in 0..iters {
        let wt = w.t();
        let num = wt.dot(data);
        let den = wt.dot(&w).dot(&h);
        multiplicative_step(&mut h, &num, &den);

        let ht = h.t();
        let num = data.dot(&ht);
        let den = w.dot(&h.dot(&ht));
        multiplicative_step(&mut w, &num, &den);

        residuals.push(frobenius(data, &w, &h));
    }
    Ok(NnmfModel {
        basis: w,
        coefficients: h,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_rank_one() {
        let a: Vec<f64> = (0..10).map(|i| 0.5 + i as f64 * 0.3).collect();
        let b: Vec<f64> = (0..7).map(|j| 1.0 + (j as f64).sin().abs()).collect();
        let x = Array2::from_shape_fn((10, 7), |(i, j)| a[i] * b[j]);
        let model = nnmf_fit(&x, 1, 500, 3).unwrap();
        let norm = x.mapv(|v| v * v).sum().sqrt();
        assert!(model.residual() / norm < 1e-6);
    }

    #[test]
    fn residual_monotone_and_factors_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_simple_fn((15, 12), || rng.random::<f64>());
        let model = nnmf_fit(&x, 4, 200, 1).unwrap();
        for w in model.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(model.basis.iter().all(|&v| v >= 0.0));
        assert!(model.coefficients.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_negative_input() {
        let x = ndarray::array![[1.0, -0.1], [0.5, 0.2]];
        assert!(nnmf_fit(&x, 1, 10, 0).is_err());
        assert!(nnmf_fit(&x.mapv(f64::abs), 3, 10, 0).is_err());
    }
}
