//! DeepWalk gradient dynamics on symmetric stochastic block models.
//!
//! The pipeline: sample a graph ([`sbm`]), turn random walks on it into a
//! co-occurrence matrix ([`walks`]), train embeddings by gradient descent on
//! the DeepWalk objective ([`trainer`]) and measure how well the result
//! separates the planted communities ([`metrics`]). [`theory`] holds the
//! population quantities the measurements are compared against.

pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod sbm;
pub mod theory;
pub mod trainer;
pub mod walks;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use metrics::{
    cluster_report, recovery_fraction, trajectory_distance, ClusterReport, ClusterRule,
};
pub use sbm::{expected_adjacency, expected_degree, generate_sbm, Graph, SbmParams};
pub use theory::{
    block_values, build_linear_update, cbar_spectrum, concentration_ratio, expected_cooccurrence,
    transition_deviation, BlockValues, DiagnosticRow, LinearUpdate,
};
pub use trainer::{
    error_term_norm, gd_step, gradient, linear_step, objective, run_deepwalk, run_linearized,
    softmax_matrix, EmbeddingState, InitMode, Probe, Stopping, TrainConfig, Trajectory,
};
pub use walks::{
    build_cooccurrence, limiting_cooccurrence, sample_walk, CoocKind, CoocMatrix, CoocMeta,
    CoocScaling, WalkConfig,
};
