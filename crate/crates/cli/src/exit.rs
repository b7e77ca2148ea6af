//! Mapping from failures to the process exit-code contract.

use flowtrack_core::Error;

pub const CONFIG: u8 = 2;
pub const IO: u8 = 3;
pub const SHAPE: u8 = 4;
pub const EMPTY_EVAL: u8 = 5;

fn core_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::CorruptManifest(_) => IO,
        Error::ShapeMismatch(_) | Error::MissingWeight(_) | Error::WeightShape { .. } => SHAPE,
        Error::NoValidPoints => EMPTY_EVAL,
        _ => CONFIG,
    }
}

/// The first recognised cause in the chain decides; anything else is a
/// configuration or input problem.
pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
        if cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return CONFIG;
        }
    }
    CONFIG
}
