//! Approach-constrained 6-DOF grasp synthesis toolkit.
//!
//! The pipeline: scenes of procedural primitives are rendered into
//! camera-frame point clouds, labeled by an analytic antipodal grasp
//! oracle, and used to train a small conditional generative sampler
//! whose cone constraint is canonicalized away by rotating the scene
//! into an "approach space" (constraint axis aligned with -y). Sampled
//! grasps can be refined under the cone constraint with a
//! Metropolis-Hastings chain, and samplers are benchmarked with
//! success-over-coverage curves and kept-ratio metrics.

pub mod cli;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod mlp;
pub mod model;
pub mod oracle;
pub mod refine;
pub mod rng;
pub mod scene;
pub mod training;

mod collision;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config key `{0}`")]
    ConfigKey(String),
    #[error("invalid config value for `{key}`: {reason}")]
    ConfigValue { key: String, reason: String },
    #[error("render failed for scene `{scene}`: {reason}")]
    Render { scene: String, reason: String },
    #[error("grasp generation exhausted {attempts} attempts on `{object}`")]
    GraspGeneration { object: String, attempts: u64 },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no grasps to evaluate")]
    EmptyGraspSet,
    #[error("dataset record {line}: {reason}")]
    DatasetRecord { line: usize, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
