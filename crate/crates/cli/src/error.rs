use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Module(#[from] zeno_schur::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Module(_) => 1,
        }
    }
}

macro_rules! module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Module(e.into())
            }
        }
    )*};
}

module_error!(
    zeno_schur::tensor::TensorError,
    zeno_schur::reduction::ReductionError,
    zeno_schur::flow::FlowError,
    zeno_schur::ensemble::EnsembleError,
    zeno_schur::minimal::MinimalError,
    zeno_schur::recon::ReconError
);
