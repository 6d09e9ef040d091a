//! Synthetic datasets with planted class-distinguishing features.
//!
//! Every observation belongs to one of `classes` classes. Informative feature rows are
//! shifted by `signal` in the observations of one class (assigned round-robin across
//! the informative rows). All rows receive Gaussian noise of scale `noise` plus a
//! shared low-rank nuisance term: per-row loadings `N(0, 1/r)` times per-observation
//! factors `N(0, 1)`, so each row gets unit nuisance variance that carries no class
//! information.

use ndarray::{Array1, Array2};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data_io::DataMatrix;
use crate::error::{DeaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub classes: usize,
    pub per_class: usize,
    pub m_features: usize,
    pub n_informative: usize,
    pub signal: f64,
    pub noise: f64,
    pub nuisance_rank: usize,
    /// Standard deviation of the nuisance term in every row.
    pub nuisance_scale: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            classes: 3,
            per_class: 40,
            m_features: 400,
            n_informative: 40,
            signal: 2.0,
            noise: 1.0,
            nuisance_rank: 3,
            nuisance_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDataset {
    pub data: DataMatrix,
    /// Sorted row indices of the informative features.
    pub informative_features: Vec<usize>,
    pub config: PlantedConfig,
}

impl PlantedDataset {
    pub fn labels(&self) -> &[String] {
        self.data.class_labels.as_deref().expect("planted data is labeled")
    }
}

pub fn generate_planted(cfg: &PlantedConfig) -> Result<PlantedDataset> {
    if cfg.classes < 2 || cfg.per_class == 0 {
        return Err(DeaError::invalid("need at least two classes with one sample each"));
    }
    if cfg.m_features < 2 || cfg.n_informative > cfg.m_features {
        return Err(DeaError::invalid(format!(
            "{} informative of {} features is not a valid layout",
            cfg.n_informative, cfg.m_features
        )));
    }
    if !(cfg.signal >= 0.0 && cfg.noise >= 0.0 && cfg.nuisance_scale >= 0.0) {
        return Err(DeaError::invalid("signal, noise and nuisance scale must be nonnegative"));
    }
    let (m, n) = (cfg.m_features, cfg.classes * cfg.per_class);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut informative = index::sample(&mut rng, m, cfg.n_informative).into_vec();
    informative.sort_unstable();
    let class_of: Vec<usize> = (0..n).map(|j| j / cfg.per_class).collect();

    let gauss = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    let mut values = Array2::from_shape_simple_fn((m, n), || 0.0);
    for v in values.iter_mut() {
        *v = cfg.noise * gauss(&mut rng);
    }
    if cfg.nuisance_rank > 0 {
        let r = cfg.nuisance_rank;
        let scale = cfg.nuisance_scale / (r as f64).sqrt();
        let loadings = Array2::from_shape_simple_fn((m, r), || scale * gauss(&mut rng));
        let factors = Array2::from_shape_simple_fn((r, n), || gauss(&mut rng));
        values += &loadings.dot(&factors);
    }
    for (k, &row) in informative.iter().enumerate() {
        let target = k % cfg.classes;
        for j in 0..n {
            if class_of[j] == target {
                values[[row, j]] += cfg.signal;
            }
        }
    }

    let labels = class_of.iter().map(|c| format!("class{c}")).collect();
    let data = DataMatrix::new(values)?.with_class_labels(labels)?;
    Ok(PlantedDataset {
        data,
        informative_features: informative,
        config: cfg.clone(),
    })
}

/// Splits observation indices per class; each class contributes
/// `round(fraction * count)` training samples, clamped to `[1, count - 1]` when the
/// class has two or more members. Both index lists are sorted.
pub fn stratified_split(labels: &[String], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DeaError::invalid(format!(
            "training fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut classes: Vec<&String> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&j| &labels[j] == class).collect();
        members.shuffle(&mut rng);
        let count = members.len();
        let mut k = (train_fraction * count as f64).round() as usize;
        if count >= 2 {
            k = k.clamp(1, count - 1);
        } else {
            k = 1;
        }
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fraction of `truth` found among `candidates`.
pub fn recall(candidates: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let hits = truth.iter().filter(|t| candidates.contains(t)).count();
    hits as f64 / truth.len() as f64
}

/// Mean of each class's columns for one row.
pub fn class_means(row: &Array1<f64>, labels: &[String]) -> Vec<(String, f64)> {
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| {
            let vals: Vec<f64> = labels
                .iter()
                .zip(row.iter())
                .filter(|(l, _)| **l == c)
                .map(|(_, &v)| v)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (c, mean)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_is_reproducible() {
        let cfg = PlantedConfig { seed: 12, ..Default::default() };
        let a = generate_planted(&cfg).unwrap();
        let b = generate_planted(&cfg).unwrap();
        assert_eq!(a.data.values().dim(), (400, 120));
        assert_eq!(a.informative_features.len(), 40);
        for (x, y) in a.data.values().iter().zip(b.data.values().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.informative_features, b.informative_features);
        let other = generate_planted(&PlantedConfig { seed: 13, ..cfg }).unwrap();
        assert_ne!(other.data.values(), a.data.values());
    }

    #[test]
    fn noiseless_classes_are_exactly_separated() {
        let cfg = PlantedConfig {
            classes: 3,
            per_class: 5,
            m_features: 30,
            n_informative: 6,
            signal: 1.5,
            noise: 0.0,
            nuisance_rank: 0,
            seed: 4,
            ..Default::default()
        };
        let d = generate_planted(&cfg).unwrap();
        let labels = d.labels().to_vec();
        for (i, row) in d.data.values().rows().into_iter().enumerate() {
            let means = class_means(&row.to_owned(), &labels);
            if d.informative_features.contains(&i) {
                let hi = means.iter().filter(|(_, m)| *m == 1.5).count();
                assert_eq!(hi, 1);
                // within a class the row is constant
                for j in 0..15 {
                    assert!(row[j] == 0.0 || row[j] == 1.5);
                }
            } else {
                assert!(row.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn class_counts_and_label_format() {
        let cfg = PlantedConfig { classes: 4, per_class: 7, m_features: 20, n_informative: 8, ..Default::default() };
        let d = generate_planted(&cfg).unwrap();
        for c in 0..4 {
            let name = format!("class{c}");
            assert_eq!(d.labels().iter().filter(|l| **l == name).count(), 7);
        }
        assert!(d.informative_features.iter().all(|&i| i < 20));
    }

    #[test]
    fn invalid_layouts() {
        let bad = PlantedConfig { n_informative: 500, ..Default::default() };
        assert!(generate_planted(&bad).is_err());
        let bad = PlantedConfig { classes: 1, ..Default::default() };
        assert!(generate_planted(&bad).is_err());
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<String> = (0..50).map(|j| format!("c{}", j % 3)).collect();
        for frac in [0.3, 0.5, 0.7] {
            let (train, test) = stratified_split(&labels, frac, 1).unwrap();
            assert_eq!(train.len() + test.len(), 50);
            for c in 0..3 {
                let name = format!("c{c}");
                let total = labels.iter().filter(|l| **l == name).count() as f64;
                let got = train.iter().filter(|&&j| labels[j] == name).count() as f64;
                assert!((got - frac * total).abs() <= 1.0);
            }
        }
        assert!(stratified_split(&labels, 1.0, 0).is_err());
    }
}
