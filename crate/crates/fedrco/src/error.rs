//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric within tolerance (max asymmetry {max_asym:.3e})")]
    AsymmetricInput { max_asym: f64 },

    #[error(
        "symmetric factorization failed at pivot {pivot}: matrix not numerically positive definite"
    )]
    FactorizationFailure { pivot: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("kernel {kernel} larger than padded input {input}")]
    KernelLargerThanInput { kernel: usize, input: usize },

    #[error("curvature factor trace degenerate ({trace:.3e}); scale correction undefined")]
    DegenerateTrace { trace: f64 },

    #[error("factor inverses not ready; refresh before preconditioning")]
    InversesNotReady,

    #[error("gradient norm is zero; nothing to rescale")]
    ZeroGradient,

    #[error("class {class} has too few samples ({count})")]
    TooFewSamples { class: usize, count: usize },

    #[error("infeasible label assignment: {clients} clients x {labels_per_client} labels < {num_classes} classes")]
    InfeasibleAssignment {
        clients: usize,
        labels_per_client: usize,
        num_classes: usize,
    },

    #[error("invalid config at `{path}`: {reason}")]
    ConfigInvalid { path: String, reason: String },

    #[error("degenerate accuracies (local and global both zero)")]
    DegenerateAccuracies,

    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

impl Error {
    pub fn shape_mismatch(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
