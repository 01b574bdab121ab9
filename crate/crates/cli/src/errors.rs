use std::fmt;

use lexsimp_core::control_tokens::EmbedError;
use lexsimp_core::generation::{BackendError, GenerationError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;

/// Invalid combination of flags or missing configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A backend answered nothing usable for a whole run.
#[derive(Debug)]
pub struct BackendFailure(pub String);

impl fmt::Display for BackendFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BackendFailure {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<BackendError>() || cause.is::<EmbedError>() || cause.is::<BackendFailure>() {
            return EXIT_BACKEND;
        }
        if let Some(GenerationError::Backend(_)) = cause.downcast_ref::<GenerationError>() {
            return EXIT_BACKEND;
        }
    }
    EXIT_DATA
}
