pub mod coupling;
pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod nn;
pub mod numcore;
pub mod points;
pub mod schedules;

pub use error::{Error, Result};
pub use points::PointBatch;
