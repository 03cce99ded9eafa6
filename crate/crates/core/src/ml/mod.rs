//! Distance estimators over `(rtt_raw, mean RSSI)`.
//!
//! Four regressors share one pipeline: z-score the two features with a
//! frozen [`Normalizer`], standardize the target, fit, and undo the target
//! scaling at prediction time. [`model::TrainedModel`] bundles all of it and
//! [`export`] writes it to a flat binary file that a microcontroller-style
//! evaluator can read.
//!
//! The low-level learners ([`tree::RegressionTree`], [`svr::Svr`],
//! [`gp::GaussianProcess`], [`nn::Mlp`]) work on plain feature rows and are
//! usable on their own.

pub mod cv;
pub mod export;
pub mod gp;
pub mod kernel;
mod linalg;
pub mod model;
pub mod nn;
pub mod normalize;
pub mod split;
pub mod svr;
pub mod tree;

pub use cv::{
    cross_validate, kfold_partition, CvConfig, CvOutcome, Domain, HyperSpace, SearchStrategy,
};
pub use export::{export_compact, import_compact, read_compact, write_compact, FormatError};
pub use kernel::{exponential_kernel, gaussian_kernel, KernelKind, KernelParams};
pub use model::{
    predict, train, train_gp, train_nn, train_svr, train_tree, Hyperparams, TargetMode,
    TrainOptions, TrainedModel, Variant,
};
pub use normalize::{fit_normalizer, Normalizer, TargetScale};
pub use split::{split, SourceSplit, SplitSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MlError {
    #[error("too few samples: need {needed}, have {have}")]
    TooFewSamples { needed: usize, have: usize },
    #[error("feature {0} is constant")]
    ConstantFeature(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(&'static str),
    #[error("solver did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("kernel matrix is not positive definite even after jitter")]
    FactorizationFailed,
    #[error("training loss became non-finite")]
    DivergedLoss,
    #[error("source {0} is empty")]
    EmptySource(usize),
    #[error("empty search space: {0}")]
    EmptySearchSpace(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Feature rows as plain vectors.
pub type Rows = [Vec<f64>];

pub(crate) fn check_rows(x: &Rows, y: &[f64]) -> Result<usize, MlError> {
    if x.len() != y.len() {
        return Err(MlError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let dim = x.first().map_or(0, Vec::len);
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(MlError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(dim)
}
