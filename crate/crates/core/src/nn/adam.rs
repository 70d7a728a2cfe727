use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};

/// `base · ½(1 + cos(π·step/total))`.
pub fn cosine_lr(step: usize, total: usize, base: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("cosine_lr: total must be >= 1"));
    }
    if step > total {
        return Err(Error::invalid(format!(
            "cosine_lr: step {step} > total {total}"
        )));
    }
    Ok(base * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub base_lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Param], base_lr: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            base_lr,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One bias-corrected Adam update at learning rate `lr`; gradients are
    /// consumed (zeroed). A non-finite gradient aborts before anything moves.
    pub fn step(&mut self, params: &mut [Param], lr: f64) -> Result<()> {
        if params.len() != self.first.len()
            || params
                .iter()
                .zip(&self.first)
                .any(|(p, m)| p.value.len() != m.len())
        {
            return Err(Error::invalid("adam: parameter layout changed"));
        }
        for p in params.iter() {
            if let Some(g) = p.value.grad() {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("gradient"));
                }
            }
        }
        self.step_count += 1;
        let k = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(k);
        let c2 = 1.0 - self.beta2.powi(k);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let Some(g) = p.value.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let w = p.value.values_mut();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                w[i] -= lr * mh / (vh.sqrt() + eps);
            }
            p.value.zero_grad();
        }
        Ok(())
    }
}
