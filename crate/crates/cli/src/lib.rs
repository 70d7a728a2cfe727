//! Library side of the `otflow` command-line tool.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod selftest;

use config::ConfigError;

/// Process exit status for an error: 2 for configuration and input problems,
/// 3 for numerical aborts, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<otflow::Error>() {
            return match e {
                otflow::Error::NonFinite(_) | otflow::Error::NonFiniteLoss { .. } => 3,
                otflow::Error::Parse(_)
                | otflow::Error::InvalidArgument(_)
                | otflow::Error::ShapeMismatch { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}
