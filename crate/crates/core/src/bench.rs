//! Accuracy sweeps of DEA, PCA and NNMF projections on planted data.
//!
//! For every seed a planted dataset is generated and each component model is fitted on
//! all observations without labels. Projections are then split per class into training
//! and test columns and scored with the same ECOC classifier.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{accuracy, ecoc_fit, nnmf_fit, pca_fit, EcocConfig};
use crate::data_io::{normalize, NormalizeMode};
use crate::error::{DeaError, Result};
use crate::pipeline::{self, PipelineConfig};
use crate::synth::{generate_planted, stratified_split, PlantedConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dea,
    Pca,
    Nnmf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dea, Method::Pca, Method::Nnmf];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dea => "dea",
            Method::Pca => "pca",
            Method::Nnmf => "nnmf",
        })
    }
}

impl FromStr for Method {
    type Err = DeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dea" => Ok(Method::Dea),
            "pca" => Ok(Method::Pca),
            "nnmf" | "nmf" => Ok(Method::Nnmf),
            other => Err(DeaError::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub planted: PlantedConfig,
    pub methods: Vec<Method>,
    pub components: Vec<usize>,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub pipeline: PipelineConfig,
    pub ecoc: EcocConfig,
    pub nnmf_iterations: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            planted: PlantedConfig::default(),
            methods: Method::ALL.to_vec(),
            components: vec![8, 16, 32],
            fractions: vec![0.3, 0.5, 0.7],
            seeds: (0..10).collect(),
            pipeline: PipelineConfig::default(),
            ecoc: EcocConfig::default(),
            nnmf_iterations: crate::baselines::nnmf::DEFAULT_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub components: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub accuracy: f64,
    /// Seconds spent fitting the component model.
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub method: Method,
    pub components: usize,
    pub train_fraction: f64,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Scores each projection (P x N) on every stratified split of `labels`.
fn score_projection(
    projection: &Array2<f64>,
    labels: &[String],
    fractions: &[f64],
    seed: u64,
    ecoc: &EcocConfig,
) -> Result<Vec<f64>> {
    fractions
        .iter()
        .map(|&frac| {
            let (train, test) = stratified_split(labels, frac, seed)?;
            let pick = |idx: &[usize]| -> Vec<String> { idx.iter().map(|&j| labels[j].clone()).collect() };
            let cfg = EcocConfig { seed, ..ecoc.clone() };
            let clf = ecoc_fit(&projection.select(Axis(1), &train), &pick(&train), &cfg)?;
            let predicted = clf.predict(&projection.select(Axis(1), &test))?;
            accuracy(&predicted, &pick(&test))
        })
        .collect()
}

/// Rows for one seed, in method, component, fraction order.
pub fn run_seed(cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchRow>> {
    let planted = generate_planted(&PlantedConfig { seed, ..cfg.planted.clone() })?;
    let labels = planted.labels().to_vec();
    let zscored = normalize(&planted.data, NormalizeMode::ZscoreRows);
    let nonneg = normalize(&planted.data, NormalizeMode::MinmaxRows);
    let mut rows = Vec::new();

    for &method in &cfg.methods {
        let mut reduction = None;
        for &p in &cfg.components {
            let start = std::time::Instant::now();
            let projection = match method {
                Method::Dea => {
                    let pcfg = PipelineConfig { seed, p, ..cfg.pipeline.clone() };
                    if reduction.is_none() {
                        reduction = Some(pipeline::fit_reduction(&zscored, &pcfg)?);
                    }
                    let red = reduction.as_ref().expect("set above");
                    let (model, _) = pipeline::fit_components(&zscored, red, &pcfg, p)?;
                    model.transform(zscored.values())?
                }
                Method::Pca => pca_fit(zscored.values(), p)?.transform(zscored.values())?,
                Method::Nnmf => {
                    nnmf_fit(nonneg.values(), p, cfg.nnmf_iterations, seed)?.transform(nonneg.values())?
                }
            };
            let fit_seconds = start.elapsed().as_secs_f64();
            let accs = score_projection(&projection, &labels, &cfg.fractions, seed, &cfg.ecoc)?;
            for (&frac, acc) in cfg.fractions.iter().zip(accs) {
                rows.push(BenchRow {
                    method,
                    components: p,
                    train_fraction: frac,
                    seed,
                    accuracy: acc,
                    fit_seconds,
                });
            }
        }
    }
    Ok(rows)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.methods.is_empty() || cfg.components.is_empty() || cfg.fractions.is_empty() || cfg.seeds.is_empty() {
        return Err(DeaError::invalid("benchmark needs at least one method, component count, fraction and seed"));
    }
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            log::info!("bench seed {seed}");
            run_seed(cfg, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Mean and sample standard deviation of accuracy per (method, components, fraction).
pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut groups: BTreeMap<(Method, usize, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method, r.components, r.train_fraction.to_bits()))
            .or_default()
            .push(r.accuracy);
    }
    groups
        .into_iter()
        .map(|((method, components, frac), accs)| {
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = if accs.len() > 1 {
                accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            BenchSummary {
                method,
                components,
                train_fraction: f64::from_bits(frac),
                runs: accs.len(),
                mean_accuracy: mean,
                std_accuracy: var.sqrt(),
            }
        })
        .collect()
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,components,train_fraction,seed,accuracy,fit_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6}\n",
            r.method, r.components, r.train_fraction, r.seed, r.accuracy, r.fit_seconds
        ));
    }
    out
}

pub fn summary_to_csv(summary: &[BenchSummary]) -> String {
    let mut out = String::from("method,components,train_fraction,runs,mean_accuracy,std_accuracy\n");
    for s in summary {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6}\n",
            s.method, s.components, s.train_fraction, s.runs, s.mean_accuracy, s.std_accuracy
        ));
    }
    out
}
