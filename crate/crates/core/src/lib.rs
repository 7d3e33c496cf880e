//! Discrete latent features for expression matrices.
//!
//! The crate covers the full path from a raw expression table to cluster
//! labels and downstream statistics:
//!
//! * [`datamatrix`] loads and preprocesses samples × features tables.
//! * [`autodiff`] is a small reverse-mode tape with an Adam optimizer.
//! * [`generative`] trains AE, VAE and VQ-VAE models and exports latents.
//! * [`clustering`], [`clustmetrics`] and [`dimred`] partition, score and
//!   project those latents.
//! * [`biostats`] runs differential expression, set overrepresentation and
//!   survival comparisons.
//! * [`synth`] produces labeled datasets with known cluster structure.

pub mod autodiff;
pub mod biostats;
pub mod clustering;
pub mod clustmetrics;
pub mod datamatrix;
pub mod dimred;
pub mod error;
pub mod generative;
pub mod linalg;
pub mod rng;
pub mod synth;
pub mod tsv;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use autodiff::{AdamConfig, AdamState, Graph, NodeId, ParamStore, Tensor};
pub use biostats::{DegResult, GeneSet, KmCurve, SurvivalRecord};
pub use clustering::{ClusterAlgorithm, ClusterAssignment, Dendrogram};
pub use clustmetrics::MetricsReport;
pub use datamatrix::{ExpressionMatrix, SampleMeta, Stage};
pub use dimred::Projection;
pub use error::{Error, Result};
pub use generative::{Codebook, LatentTable, Model, ModelConfig, ModelKind, TrainConfig};
pub use synth::{SynthConfig, SynthData};
