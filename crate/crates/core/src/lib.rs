//! Mixed cross-entropy losses with LDA-derived class similarity.
//!
//! The crate covers the whole pipeline: dense linear algebra ([`numerics`]), datasets and
//! label noise ([`data`]), class-similarity matrices from linear discriminant analysis
//! ([`lda`]), the loss family and its gradients ([`loss`]), a small MLP trainer
//! ([`net`]) and finite-difference gradient verification ([`gradcheck`]).
//!
//! Batch work runs on rayon when the `parallel` feature (on by default) is enabled; see
//! [`exec::Exec`].

pub mod data;
pub mod exec;
pub mod gradcheck;
pub mod lda;
pub mod loss;
pub mod net;
pub mod numerics;

pub use data::{LabeledDataset, Split};
pub use exec::Exec;
pub use lda::{build_similarity_matrix, fit_lda, LdaModel, Ridge, SimilarityMatrix};
pub use loss::{MixingSpec, Mixture, PenaltyWeights};
pub use net::{LossConfig, MlpModel, TrainConfig, Trainer};
pub use numerics::Matrix;
