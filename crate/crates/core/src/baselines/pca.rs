use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DeaError, Result};

/// Principal components of the observation columns, living in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Mean observation (length M).
    pub mean: Array1<f64>,
    /// M x P orthonormal columns ("eigen images").
    #[serde(with = "crate::serde_matrix")]
    pub components: Array2<f64>,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Top-`p` left singular vectors of the mean-centered M x N data.
///
/// Each component is signed so that its largest-magnitude entry is positive.
pub fn pca_fit(data: &Array2<f64>, p: usize) -> Result<PcaModel> {
    let (m, n) = data.dim();
    if p == 0 || p > m.min(n) {
        return Err(DeaError::invalid(format!(
            "PCA component count {p} outside [1, {}]",
            m.min(n)
        )));
    }
    let mean = data.mean_axis(Axis(1)).expect("nonempty");
    let centered = data - &mean.view().insert_axis(Axis(1));
    let dm = DMatrix::from_fn(m, n, |i, j| centered[[i, j]]);
    let svd = dm.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| DeaError::Numerical("SVD did not produce left vectors".into()))?;
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let mut components = Array2::zeros((m, p));
    let mut singular_values = Vec::with_capacity(p);
    for (k, &src) in order.iter().take(p).enumerate() {
        let col = u.column(src);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            components[[i, k]] = sign * col[i];
        }
        singular_values.push(sv[src]);
    }
    Ok(PcaModel {
        mean,
        components,
        singular_values,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    /// Scores `C' (x - mean)` for every column: P x N_new.
    pub fn transform(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        if data.nrows() != self.mean.len() {
            return Err(DeaError::Dimension(format!(
                "PCA model has {} features, data has {}",
                self.mean.len(),
                data.nrows()
            )));
        }
        let centered = data - &self.mean.view().insert_axis(Axis(1));
        Ok(self.components.t().dot(&centered))
    }

    /// Squared Frobenius error of reconstructing `data` from its scores.
    pub fn reconstruction_error(&self, data: &Array2<f64>) -> Result<f64> {
        let scores = self.transform(data)?;
        let approx = self.components.dot(&scores) + self.mean.view().insert_axis(Axis(1));
        Ok((data - &approx).mapv(|v| v * v).sum())
    }
}
