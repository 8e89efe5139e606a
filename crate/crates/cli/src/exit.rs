//! Exit codes and the mapping from errors to them.

use std::path::PathBuf;

use flamenco_core::Error as CoreError;

pub const OK: u8 = 0;
/// Bad command line, flag value or configuration file.
pub const USAGE: u8 = 2;
/// A referenced input file, directory or model does not exist.
pub const MISSING_INPUT: u8 = 3;
/// An input exists but cannot be decoded or violates its format.
pub const INVALID_INPUT: u8 = 4;
/// Training, fitting or evaluation could not be carried out on the data.
pub const COMPUTATION: u8 = 5;
/// Outputs could not be written.
pub const OUTPUT: u8 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("input not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    InvalidInput(String),
    #[error("cannot write {}: {source}", .path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::MissingModel(_) => MISSING_INPUT,
        CoreError::InvalidArgument(_) => USAGE,
        CoreError::SingleClass
        | CoreError::TooFewVectors { .. }
        | CoreError::ConstantInput
        | CoreError::TooFewGroups { .. }
        | CoreError::Fold { .. } => COMPUTATION,
        CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => MISSING_INPUT,
        CoreError::Io(_) => OUTPUT,
        _ => INVALID_INPUT,
    }
}

/// The first error in the chain that we know how to classify decides the code.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<CliError>() {
            return match c {
                CliError::Usage(_) => USAGE,
                CliError::MissingInput(_) => MISSING_INPUT,
                CliError::InvalidInput(_) => INVALID_INPUT,
                CliError::Output { .. } => OUTPUT,
            };
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound { MISSING_INPUT } else { OUTPUT };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return USAGE;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return INVALID_INPUT;
        }
    }
    COMPUTATION
}
