//! Comparison methods: PCA and NNMF component models, and the ECOC classifier used to
//! score projections from any of the component methods.

pub mod ecoc;
pub mod nnmf;
pub mod pca;

pub use ecoc::{accuracy, ecoc_fit, ecoc_predict, EcocClassifier, EcocConfig, LinearLearner};
pub use nnmf::{nnmf_fit, NnmfModel};
pub use pca::{pca_fit, PcaModel};
