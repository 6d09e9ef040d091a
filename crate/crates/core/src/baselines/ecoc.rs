//! One-vs-one error-correcting output codes with linear max-margin learners.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DeaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcocConfig {
    /// L2 coefficient of the hinge objective.
    pub lambda: f64,
    pub epochs: usize,
    /// Standardize each feature with training statistics before learning.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for EcocConfig {
    fn default() -> Self {
        EcocConfig {
            lambda: 1e-2,
            epochs: 200,
            standardize: true,
            seed: 0,
        }
    }
}

/// Weight vector and bias of one binary learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLearner {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl LinearLearner {
    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        self.weights.dot(&x) + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcocClassifier {
    /// Distinct training labels, sorted.
    pub classes: Vec<String>,
    /// classes x learners; +1 / -1 for the two classes a learner separates, 0 otherwise.
    #[serde(with = "crate::serde_matrix")]
    pub code: Array2<f64>,
    pub learners: Vec<LinearLearner>,
    pub feature_mean: Array1<f64>,
    pub feature_scale: Array1<f64>,
}

/// Trains on the columns of `features` (P x N_train).
pub fn ecoc_fit(features: &Array2<f64>, labels: &[String], cfg: &EcocConfig) -> Result<EcocClassifier> {
    let (p, n) = features.dim();
    if labels.len() != n {
        return Err(DeaError::Dimension(format!(
            "{n} training columns but {} labels",
            labels.len()
        )));
    }
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 {
        return Err(DeaError::invalid("ECOC needs lambda > 0 and epochs > 0"));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(DeaError::invalid("ECOC needs at least two classes"));
    }

    let (feature_mean, feature_scale) = if cfg.standardize {
        let mean = features.mean_axis(Axis(1)).expect("nonempty");
        let sd = features.std_axis(Axis(1), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        (mean, sd)
    } else {
        (Array1::zeros(p), Array1::ones(p))
    };
    let x = standardize(features, &feature_mean, &feature_scale);
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is in class list"))
        .collect();

    let c = classes.len();
    let pairs: Vec<(usize, usize)> = (0..c)
        .flat_map(|a| ((a + 1)..c).map(move |b| (a, b)))
        .collect();
    let mut code = Array2::zeros((c, pairs.len()));
    let mut learners = Vec::with_capacity(pairs.len());
    for (l, &(a, b)) in pairs.iter().enumerate() {
        code[[a, l]] = 1.0;
        code[[b, l]] = -1.0;
        let mut idx = Vec::new();
        let mut y = Vec::new();
        for (j, &k) in class_of.iter().enumerate() {
            if k == a || k == b {
                idx.push(j);
                y.push(if k == a { 1.0 } else { -1.0 });
            }
        }
        let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(l as u64);
        learners.push(train_binary(&x, &idx, &y, cfg, seed));
    }
    Ok(EcocClassifier {
        classes,
        code,
        learners,
        feature_mean,
        feature_scale,
    })
}

fn standardize(x: &Array2<f64>, mean: &Array1<f64>, scale: &Array1<f64>) -> Array2<f64> {
    (x - &mean.view().insert_axis(Axis(1))) / scale.view().insert_axis(Axis(1))
}

/// `lambda/2 ||w||^2 + mean hinge`, the bias folded in as an extra weight.
fn objective(x: &Array2<f64>, idx: &[usize], y: &[f64], w: &Array1<f64>, lambda: f64) -> f64 {
    let p = x.nrows();
    let reg = 0.5 * lambda * w.dot(w);
    let hinge: f64 = idx
        .iter()
        .zip(y)
        .map(|(&j, &yj)| {
            let f = x.column(j).dot(&w.slice(ndarray::s![..p])) + w[p];
            (1.0 - yj * f).max(0.0)
        })
        .sum();
    reg + hinge / idx.len() as f64
}

/// Pegasos stochastic subgradient descent; keeps the best epoch-end iterate.
fn train_binary(
    x: &Array2<f64>,
    idx: &[usize],
    y: &[f64],
    cfg: &EcocConfig,
    seed: u64,
) -> LinearLearner {
    let p = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array1::<f64>::zeros(p + 1);
    let mut best = (objective(x, idx, y, &w, cfg.lambda), w.clone());
    let mut order: Vec<usize> = (0..idx.len()).collect();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let col = x.column(idx[k]);
            let f = col.dot(&w.slice(ndarray::s![..p])) + w[p];
            w *= 1.0 - eta * cfg.lambda;
            if y[k] * f < 1.0 {
                let step = eta * y[k];
                w.slice_mut(ndarray::s![..p]).scaled_add(step, &col);
                w[p] += step;
            }
        }
        let obj = objective(x, idx, y, &w, cfg.lambda);
        if obj < best.0 {
            best = (obj, w.clone());
        }
    }
    let w = best.1;
    LinearLearner {
        weights: w.slice(ndarray::s![..p]).to_owned(),
        bias: w[p],
    }
}

impl EcocClassifier {
    pub fn n_features(&self) -> usize {
        self.feature_mean.len()
    }

    /// Hamming decoding of learner signs; ties go to the lower class index.
    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<String>> {
        if features.nrows() != self.n_features() {
            return Err(DeaError::Dimension(format!(
                "classifier expects {} features, got {}",
                self.n_features(),
                features.nrows()
            )));
        }
        let x = standardize(features, &self.feature_mean, &self.feature_scale);
        Ok(x
            .columns()
            .into_iter()
            .map(|col| {
                let signs: Vec<f64> = self
                    .learners
                    .iter()
                    .map(|l| {
                        let f = l.decision(col);
                        if f > 0.0 {
                            1.0
                        } else if f < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mut best = (0usize, f64::INFINITY);
                for (k, row) in self.code.rows().into_iter().enumerate() {
                    let loss: f64 = row
                        .iter()
                        .zip(&signs)
                        .map(|(&c, &s)| c.abs() * (1.0 - c * s) / 2.0)
                        .sum();
                    if loss < best.1 {
                        best = (k, loss);
                    }
                }
                self.classes[best.0].clone()
            })
            .collect())
    }
}

pub fn ecoc_predict(model: &EcocClassifier, features: &Array2<f64>) -> Result<Vec<String>> {
    model.predict(features)
}

/// Fraction of positions where the two label lists agree.
pub fn accuracy(predicted: &[String], truth: &[String]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(DeaError::Dimension(format!(
            "cannot score {} predictions against {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn blobs(centers: &[(f64, f64)], per: usize, spread: f64, seed: u64) -> (Array2<f64>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = centers.len() * per;
        let mut x = Array2::zeros((2, n));
        let mut labels = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for k in 0..per {
                let j = c * per + k;
                x[[0, j]] = cx + spread * rng.sample::<f64, _>(StandardNormal);
                x[[1, j]] = cy + spread * rng.sample::<f64, _>(StandardNormal);
                labels.push(format!("c{c}"));
            }
        }
        (x, labels)
    }

    #[test]
    fn one_vs_one_learner_count() {
        let (x, y) = blobs(&[(0.0, 0.0), (5.0, 0.0), (0.0, 5.0)], 10, 0.5, 1);
        let m = ecoc_fit(&x, &y, &EcocConfig::default()).unwrap();
        assert_eq!(m.learners.len(), 3);
        assert_eq!(m.code.dim(), (3, 3));
        let (x4, y4) = blobs(&[(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (5.0, 5.0)], 5, 0.5, 1);
        assert_eq!(ecoc_fit(&x4, &y4, &EcocConfig::default()).unwrap().learners.len(), 6);
    }

    #[test]
    fn separable_blobs_are_learned_exactly() {
        // spread 0.3 around centers 6 apart: the gap is far beyond any sample
        let (x, y) = blobs(&[(0.0, 0.0), (6.0, 1.0)], 25, 0.3, 2);
        let m = ecoc_fit(&x, &y, &EcocConfig::default()).unwrap();
        let pred = m.predict(&x).unwrap();
        assert_eq!(accuracy(&pred, &y).unwrap(), 1.0);
    }

    #[test]
    fn conflicting_duplicates_cannot_be_perfect() {
        let x = ndarray::array![[0.0, 0.0, 1.0, 2.0], [1.0, 1.0, 0.0, 2.0]];
        let y = s(&["a", "b", "a", "b"]);
        let m = ecoc_fit(&x, &y, &EcocConfig::default()).unwrap();
        let acc = accuracy(&m.predict(&x).unwrap(), &y).unwrap();
        assert!((0.0..1.0).contains(&acc));
    }

    #[test]
    fn decoding_ignores_learner_scale() {
        let (x, y) = blobs(&[(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)], 12, 1.0, 3);
        let m = ecoc_fit(&x, &y, &EcocConfig::default()).unwrap();
        let mut scaled = m.clone();
        for (k, l) in scaled.learners.iter_mut().enumerate() {
            let f = 0.01 + 7.0 * k as f64;
            l.weights *= f;
            l.bias *= f;
        }
        assert_eq!(m.predict(&x).unwrap(), scaled.predict(&x).unwrap());
    }

    #[test]
    fn degenerate_inputs() {
        let x = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
        assert!(ecoc_fit(&x, &s(&["a", "a"]), &EcocConfig::default()).is_err());
        assert!(ecoc_fit(&x, &s(&["a"]), &EcocConfig::default()).is_err());
        let m = ecoc_fit(&x, &s(&["a", "b"]), &EcocConfig::default()).unwrap();
        assert!(m.predict(&Array2::zeros((3, 1))).is_err());
    }

    #[test]
    fn accuracy_endpoints() {
        let a = s(&["x", "y", "z"]);
        assert_eq!(accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(accuracy(&s(&["y", "z", "x"]), &a).unwrap(), 0.0);
        assert!(accuracy(&a, &a[..2]).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = blobs(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)], 10, 1.0, 4);
        let cfg = EcocConfig { seed: 42, ..Default::default() };
        assert_eq!(ecoc_fit(&x, &y, &cfg).unwrap(), ecoc_fit(&x, &y, &cfg).unwrap());
    }
}
