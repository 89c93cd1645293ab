use std::process::ExitCode;

use terrafill::classical::FillError;
use terrafill::config::ConfigError;
use terrafill::diffusion::DiffusionError;
use terrafill::grid::GridError;
use terrafill::harness::HarnessError;
use terrafill::maskgen::MaskError;
use terrafill::mesh::MeshError;
use terrafill::nn::NnError;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: exit code 1.
    Usage(String),
    /// Unreadable or invalid input data or files: exit code 2.
    Data(String),
    /// A computation produced NaN or infinity: exit code 3.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        })
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(GridError, MaskError, FillError, MeshError, ConfigError, HarnessError, std::io::Error);

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite(_) => CliError::Numeric(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::NonFinite(_) => CliError::Numeric(e.to_string()),
            DiffusionError::Nn(inner) => inner.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}
