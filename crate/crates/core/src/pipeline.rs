//! End-to-end distinctive element analysis.
//!
//! `fit` chains the three optimizations: correlation clustering of feature rows into U
//! centroids, kernel ranking that keeps the Q best centroid columns of the distance
//! matrix, and a sparse autoencoder that condenses each Q-dimensional row to P
//! activations. The resulting M x P matrix `H` holds the components; observations are
//! projected with `H' x`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, AutoencoderParams, TrainConfig};
use crate::corr_cluster::{self, ClusterConfig, ClusterState, DistanceMatrix};
use crate::data_io::{DataMatrix, ImageSpec};
use crate::error::{DeaError, Result, Stage};
use crate::kernel_rank::{self, CentroidScores};
use crate::persist;

pub const MODEL_FORMAT: &str = "dea-model";
pub const MODEL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Cluster count; `None` applies the size rule (2N when M > 2N, else N).
    pub u: Option<usize>,
    /// Neighbour count; `None` means `round(ln M)`.
    pub k: Option<usize>,
    /// Fraction of centroid columns kept after ranking.
    pub q_fraction: f64,
    /// Output components.
    pub p: usize,
    pub sigma_grid: Vec<f64>,
    pub cluster_max_iter: usize,
    pub cluster_tol: f64,
    pub cluster_restarts: usize,
    pub lambda: f64,
    pub beta: f64,
    pub rho: f64,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub stop_tol: f64,
    /// Divisor mapping distances (bounded by 2) into the decoder's [0, 1] range.
    pub input_scale: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let cluster = ClusterConfig::default();
        PipelineConfig {
            u: None,
            k: None,
            q_fraction: 0.8,
            p: 8,
            sigma_grid: kernel_rank::default_sigma_grid(),
            cluster_max_iter: cluster.max_iter,
            cluster_tol: cluster.tol,
            cluster_restarts: cluster.restarts,
            lambda: train.lambda,
            beta: train.beta,
            rho: train.rho,
            max_epochs: train.max_epochs,
            learning_rate: train.learning_rate,
            stop_tol: train.stop_tol,
            input_scale: 2.0,
            seed: 0,
        }
    }
}

/// Sizes derived from a config and a data shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedShape {
    pub m: usize,
    pub n: usize,
    pub u: usize,
    pub q: usize,
    pub k: usize,
    pub p: usize,
}

/// Cluster count rule: `2N` when `M > 2N`, otherwise `N`.
pub fn auto_u(m: usize, n: usize) -> usize {
    if m > 2 * n {
        2 * n
    } else {
        n
    }
}

/// Neighbour count rule: natural log of M, rounded, at least 1.
pub fn auto_k(m: usize) -> usize {
    ((m as f64).ln().round() as usize).max(1)
}

/// Kept centroid columns: `round(fraction * U)`, at least 1.
pub fn q_for(u: usize, fraction: f64) -> usize {
    ((fraction * u as f64).round() as usize).max(1)
}

impl PipelineConfig {
    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            max_iter: self.cluster_max_iter,
            tol: self.cluster_tol,
            restarts: self.cluster_restarts,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            beta: self.beta,
            rho: self.rho,
            max_epochs: self.max_epochs,
            learning_rate: self.learning_rate,
            stop_tol: self.stop_tol,
            seed: self.seed.wrapping_add(0x5EED),
        }
    }

    /// Applies the size rules to an M x N input and checks `U >= Q > P`.
    pub fn resolve(&self, m: usize, n: usize) -> Result<ResolvedShape> {
        if !(self.q_fraction > 0.0 && self.q_fraction <= 1.0) {
            return Err(DeaError::invalid(format!(
                "q_fraction must lie in (0, 1], got {}",
                self.q_fraction
            )));
        }
        if !(self.input_scale > 0.0) {
            return Err(DeaError::invalid("input_scale must be positive"));
        }
        // the size rule can ask for more clusters than rows when N > M
        let u = self.u.unwrap_or_else(|| auto_u(m, n).min(m));
        if u < 2 || u > m {
            return Err(DeaError::invalid(format!(
                "cluster count {u} outside [2, {m}]"
            )));
        }
        let q = q_for(u, self.q_fraction);
        let k = self.k.unwrap_or_else(|| auto_k(m)).min(m.saturating_sub(1));
        if k == 0 {
            return Err(DeaError::invalid("neighbour count must be positive"));
        }
        if self.p == 0 || self.p >= q {
            return Err(DeaError::invalid(format!(
                "component count P = {} must satisfy 0 < P < Q = {q} (U = {u})",
                self.p
            )));
        }
        self.train_config().validate()?;
        Ok(ResolvedShape {
            m,
            n,
            u,
            q,
            k,
            p: self.p,
        })
    }
}

/// Fitted pipeline state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeaModel {
    pub config: PipelineConfig,
    pub shape: ResolvedShape,
    /// U x N canonical centroids.
    #[serde(with = "crate::serde_matrix")]
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    pub cluster_objective: f64,
    pub scores: Vec<f64>,
    /// Kept centroid columns, best first.
    pub selected: Vec<usize>,
    pub sigma_star: f64,
    pub autoencoder: AutoencoderParams,
    pub final_loss: f64,
    /// M x P components.
    #[serde(with = "crate::serde_matrix")]
    pub components: Array2<f64>,
    pub feature_labels: Option<Vec<String>>,
}

/// Intermediate results of the first two optimizations, reusable across several P.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub shape: ResolvedShape,
    pub cluster: ClusterState,
    pub distances: DistanceMatrix,
    pub ranking: CentroidScores,
    /// M x Q
    pub reduced: Array2<f64>,
    pub timings: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct FitTrace {
    pub reduction: Reduction,
    pub loss_history: Vec<f64>,
    pub epochs: usize,
    pub timings: Vec<(String, f64)>,
}

fn timed<T>(timings: &mut Vec<(String, f64)>, name: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push((name.to_string(), start.elapsed().as_secs_f64()));
    out
}

/// First and second optimizations.
pub fn fit_reduction(data: &DataMatrix, cfg: &PipelineConfig) -> Result<Reduction> {
    let x = data.values();
    let shape = cfg.resolve(x.nrows(), x.ncols())?;
    let mut timings = Vec::new();

    let ccfg = cfg.cluster_config();
    let cluster = timed(&mut timings, "cluster", || {
        corr_cluster::cluster(x, shape.u, &ccfg)
    })
    .map_err(|e| e.at(Stage::Cluster))?;
    let distances = timed(&mut timings, "distance_matrix", || {
        corr_cluster::distance_matrix(x, &cluster)
    })
    .map_err(|e| e.at(Stage::Distance))?;
    let graph = timed(&mut timings, "neighbor_graph", || {
        kernel_rank::neighbor_graph(&distances, shape.k)
    })
    .map_err(|e| e.at(Stage::NeighborGraph))?;
    let ranking = timed(&mut timings, "optimize_sigma", || {
        kernel_rank::optimize_sigma(&distances, &graph, &cfg.sigma_grid, shape.q)
    })
    .map_err(|e| e.at(Stage::SigmaSearch))?;
    let reduced = kernel_rank::reduce(&distances, &ranking)
        .map_err(|e| e.at(Stage::Reduce))?
        .values;
    Ok(Reduction {
        shape,
        cluster,
        distances,
        ranking,
        reduced,
        timings,
    })
}

/// Third optimization on top of a reduction, producing `p` components.
pub fn fit_components(
    data: &DataMatrix,
    reduction: &Reduction,
    cfg: &PipelineConfig,
    p: usize,
) -> Result<(DeaModel, FitTrace)> {
    let mut cfg = cfg.clone();
    cfg.p = p;
    let shape = cfg.resolve(data.n_features(), data.n_observations())?;
    if shape.u != reduction.shape.u || shape.q != reduction.shape.q {
        return Err(DeaError::invalid("reduction was computed with a different configuration"));
    }
    let mut timings = reduction.timings.clone();
    let scaled = &reduction.reduced / cfg.input_scale;
    let outcome = timed(&mut timings, "train", || {
        autoencoder::train(scaled.view(), p, &cfg.train_config())
    })
    .map_err(|e| e.at(Stage::Train))?;
    let components = timed(&mut timings, "project", || {
        autoencoder::project(&outcome.params, &reduction.reduced, cfg.input_scale)
    })
    .map_err(|e| e.at(Stage::Project))?;

    let model = DeaModel {
        shape,
        centroids: reduction.cluster.centroids.clone(),
        assignment: reduction.cluster.assignment.clone(),
        cluster_objective: reduction.cluster.objective(),
        scores: reduction.ranking.scores.clone(),
        selected: reduction.ranking.selected.clone(),
        sigma_star: reduction.ranking.sigma_star,
        autoencoder: outcome.params,
        final_loss: outcome.final_loss.total,
        components,
        feature_labels: data.feature_labels.clone(),
        config: cfg,
    };
    let trace = FitTrace {
        reduction: reduction.clone(),
        loss_history: outcome.loss_history,
        epochs: outcome.epochs,
        timings,
    };
    Ok((model, trace))
}

pub fn fit_with_trace(data: &DataMatrix, cfg: &PipelineConfig) -> Result<(DeaModel, FitTrace)> {
    let reduction = fit_reduction(data, cfg)?;
    fit_components(data, &reduction, cfg, cfg.p)
}

pub fn fit(data: &DataMatrix, cfg: &PipelineConfig) -> Result<DeaModel> {
    fit_with_trace(data, cfg).map(|(m, _)| m)
}

impl DeaModel {
    pub fn n_features(&self) -> usize {
        self.components.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    /// `H' X`: P x N_new scores for the observation columns of `data`.
    pub fn transform(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        if data.nrows() != self.n_features() {
            return Err(DeaError::Dimension(format!(
                "model has {} features, data has {}",
                self.n_features(),
                data.nrows()
            )));
        }
        Ok(self.components.t().dot(data))
    }

    /// Model restricted to the listed component columns, in the order given.
    pub fn keep_components(&self, keep: &[usize]) -> Result<DeaModel> {
        let p = self.n_components();
        if keep.is_empty() {
            return Err(DeaError::invalid("keep list is empty"));
        }
        if let Some(&bad) = keep.iter().find(|&&c| c >= p) {
            return Err(DeaError::invalid(format!("component {bad} >= {p}")));
        }
        let mut out = self.clone();
        out.components = self.components.select(Axis(1), keep);
        Ok(out)
    }

    /// Copy with the listed component columns zeroed.
    pub fn zero_components(&self, drop: &[usize]) -> Result<DeaModel> {
        let p = self.n_components();
        let mut out = self.clone();
        for &c in drop {
            if c >= p {
                return Err(DeaError::invalid(format!("component {c} >= {p}")));
            }
            out.components.column_mut(c).fill(0.0);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        persist::to_json(MODEL_FORMAT, MODEL_VERSION, self)
    }

    pub fn from_json(text: &str) -> Result<DeaModel> {
        let model: DeaModel = persist::from_json(MODEL_FORMAT, MODEL_VERSION, text)?;
        model.validate()?;
        Ok(model)
    }

    /// Cross-field shape checks for a deserialized model.
    fn validate(&self) -> Result<()> {
        let schema = |field: &str, msg: String| DeaError::Schema {
            field: field.into(),
            msg,
        };
        let s = &self.shape;
        if self.components.dim() != (s.m, s.p) {
            return Err(schema(
                "model.components",
                format!("expected {}x{}, found {:?}", s.m, s.p, self.components.dim()),
            ));
        }
        if self.centroids.dim() != (s.u, s.n) {
            return Err(schema(
                "model.centroids",
                format!("expected {}x{}, found {:?}", s.u, s.n, self.centroids.dim()),
            ));
        }
        if self.selected.len() != s.q || self.selected.iter().any(|&c| c >= s.u) {
            return Err(schema(
                "model.selected",
                format!("expected {} indices below {}", s.q, s.u),
            ));
        }
        if self.scores.len() != s.u {
            return Err(schema("model.scores", format!("expected {} entries", s.u)));
        }
        if self.assignment.len() != s.m || self.assignment.iter().any(|&a| a >= s.u) {
            return Err(schema(
                "model.assignment",
                format!("expected {} ids below {}", s.m, s.u),
            ));
        }
        let ae = &self.autoencoder;
        if ae.enc_weights.dim() != (s.p, s.q)
            || ae.dec_weights.dim() != (s.q, s.p)
            || ae.enc_bias.len() != s.p
            || ae.dec_bias.len() != s.q
        {
            return Err(schema(
                "model.autoencoder",
                format!("expected a {}->{}->{} network", s.q, s.p, s.q),
            ));
        }
        if let Some(labels) = &self.feature_labels {
            if labels.len() != s.m {
                return Err(schema(
                    "model.feature_labels",
                    format!("expected {} labels, found {}", s.m, labels.len()),
                ));
            }
        }
        Ok(())
    }
}

pub fn save_model(model: &DeaModel, path: &Path) -> Result<()> {
    persist::save(MODEL_FORMAT, MODEL_VERSION, model, path)
}

pub fn load_model(path: &Path) -> Result<DeaModel> {
    let text = std::fs::read_to_string(path).map_err(|e| DeaError::io(path, e))?;
    DeaModel::from_json(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub index: usize,
    pub label: Option<String>,
    /// Row norm of H, min-max normalized to [0, 1].
    pub score: f64,
    pub raw: f64,
}

/// Features ordered by descending score; ties keep the lower index first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// Mean of the normalized scores.
    Mean,
}

impl std::str::FromStr for Threshold {
    type Err = DeaError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("mean") {
            return Ok(Threshold::Mean);
        }
        s.parse::<f64>()
            .map(Threshold::Fixed)
            .map_err(|_| DeaError::invalid(format!("threshold `{s}` is neither a number nor `mean`")))
    }
}

impl FeatureRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices of the first `count` features.
    pub fn top(&self, count: usize) -> Vec<usize> {
        self.entries.iter().take(count).map(|e| e.index).collect()
    }

    /// Features scoring strictly above the threshold, in ranking order.
    pub fn important(&self, threshold: Threshold) -> Vec<&RankedFeature> {
        let cut = match threshold {
            Threshold::Fixed(t) => t,
            Threshold::Mean => {
                self.entries.iter().map(|e| e.score).sum::<f64>() / self.entries.len().max(1) as f64
            }
        };
        self.entries.iter().filter(|e| e.score > cut).collect()
    }
}

/// Scores every feature by the Euclidean norm of its row in an M x P component matrix.
pub fn rank_rows(components: &Array2<f64>, labels: Option<&[String]>) -> FeatureRanking {
    let raw: Vec<f64> = components
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut entries: Vec<RankedFeature> = raw
        .iter()
        .enumerate()
        .map(|(i, &r)| RankedFeature {
            index: i,
            label: labels.map(|l| l[i].clone()),
            score: if hi > lo { (r - lo) / (hi - lo) } else { 1.0 },
            raw: r,
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    FeatureRanking { entries }
}

pub fn rank_features(model: &DeaModel) -> FeatureRanking {
    rank_rows(&model.components, model.feature_labels.as_deref())
}

/// Rows of the `top` best-ranked features, kept in their original order.
pub fn select_features(data: &DataMatrix, ranking: &FeatureRanking, top: usize) -> Result<DataMatrix> {
    let m = data.n_features();
    if ranking.len() != m {
        return Err(DeaError::Dimension(format!(
            "ranking covers {} features, data has {m}",
            ranking.len()
        )));
    }
    if top == 0 || top > m {
        return Err(DeaError::invalid(format!("cannot select {top} of {m} features")));
    }
    let mut rows = ranking.top(top);
    rows.sort_unstable();
    data.select_rows(&rows)
}

/// Maps a column to 8-bit gray levels by min-max scaling; a constant column becomes 128.
pub fn component_to_gray(column: ndarray::ArrayView1<f64>, spec: ImageSpec) -> image::GrayImage {
    let lo = column.fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = column.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let level = |v: f64| -> u8 {
        if hi > lo {
            (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
        } else {
            128
        }
    };
    image::GrayImage::from_fn(spec.width as u32, spec.height as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        // multi-channel columns are averaged to one gray plane before scaling
        let v = if spec.channels == 1 {
            column[spec.index(y, x, 0)]
        } else {
            (0..spec.channels).map(|c| column[spec.index(y, x, c)]).sum::<f64>() / spec.channels as f64
        };
        image::Luma([level(v)])
    })
}

/// Writes one grayscale PNG per kept component column of an M x P matrix.
pub fn export_matrix_columns(
    components: &Array2<f64>,
    spec: ImageSpec,
    dir: &Path,
    keep: Option<&[usize]>,
    prefix: &str,
) -> Result<Vec<PathBuf>> {
    let (m, p) = components.dim();
    if spec.len() != m {
        return Err(DeaError::Dimension(format!(
            "image spec {}x{}x{} holds {} values but components have {m} rows",
            spec.height,
            spec.width,
            spec.channels,
            spec.len()
        )));
    }
    let all: Vec<usize> = (0..p).collect();
    let keep = keep.unwrap_or(&all);
    if let Some(&bad) = keep.iter().find(|&&c| c >= p) {
        return Err(DeaError::invalid(format!("component {bad} >= {p}")));
    }
    std::fs::create_dir_all(dir).map_err(|e| DeaError::io(dir, e))?;
    let mut written = Vec::with_capacity(keep.len());
    for &c in keep {
        let img = component_to_gray(components.column(c), spec);
        let path = dir.join(format!("{prefix}_{c:03}.png"));
        img.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => DeaError::io(&path, io),
                other => DeaError::Image(other.to_string()),
            })?;
        written.push(path);
    }
    Ok(written)
}

pub fn export_components(
    model: &DeaModel,
    spec: ImageSpec,
    dir: &Path,
    keep: Option<&[usize]>,
) -> Result<Vec<PathBuf>> {
    export_matrix_columns(&model.components, spec, dir, keep, "component")
}
