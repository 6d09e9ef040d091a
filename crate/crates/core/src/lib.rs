//! Distinctive element analysis (DEA).
//!
//! Feature rows of an M x N data matrix are clustered by correlation distance, the
//! most contrastive cluster centroids are kept by kernel ranking, and a sparse
//! autoencoder condenses each row's distances into P component loadings. Observations
//! are projected onto the components; component row norms rank the features.
//!
//! ```no_run
//! use dea_core::{fit, load_matrix, rank_features, MatrixFormat, PipelineConfig};
//!
//! let data = load_matrix("data.csv".as_ref(), MatrixFormat::Csv)?;
//! let model = fit(&data, &PipelineConfig::default())?;
//! let scores = model.transform(data.values())?;
//! let top = rank_features(&model).top(30);
//! # Ok::<(), dea_core::DeaError>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod baselines;
pub mod bench;
pub mod corr_cluster;
pub mod data_io;
pub mod error;
pub mod kernel_rank;
pub mod persist;
pub mod pipeline;
pub mod serde_matrix;
pub mod synth;

pub use data_io::{load_matrix, normalize, write_matrix, DataMatrix, ImageSpec, MatrixFormat, NormalizeMode};
pub use error::{DeaError, Result, Stage};
pub use pipeline::{
    export_components, fit, fit_with_trace, load_model, rank_features, save_model, select_features, DeaModel,
    FeatureRanking, PipelineConfig, Threshold,
};
pub use synth::{generate_planted, stratified_split, PlantedConfig, PlantedDataset};
