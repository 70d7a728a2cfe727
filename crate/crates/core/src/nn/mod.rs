//! Spectrally normalized residual MLPs, time features and optimization.

mod adam;
mod residual;
mod spectral;
mod time;

use serde::{Deserialize, Serialize};

use crate::numcore::Tensor;

pub use adam::{cosine_lr, AdamState};
pub use residual::{residual_forward, Architecture, LipschitzMode, ResidualNet};
pub use spectral::{normalize_in_place, spectral_normalize, PowerIteration};
pub use time::time_features;

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

/// Serializable form of a [`Param`]: name, shape and flat values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl From<&Param> for ParamRecord {
    fn from(p: &Param) -> Self {
        Self {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            values: p.value.values().to_vec(),
        }
    }
}

impl TryFrom<ParamRecord> for Param {
    type Error = crate::error::Error;

    fn try_from(r: ParamRecord) -> crate::error::Result<Self> {
        Ok(Param::new(r.name, Tensor::new(r.shape, r.values)?))
    }
}
