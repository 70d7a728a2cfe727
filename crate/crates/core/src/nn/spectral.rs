//! Power-iteration spectral normalization with warm-started singular vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

const SIGMA_FLOOR: f64 = 1e-12;

/// Left/right singular-vector estimates for one weight matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    u: Vec<f64>,
    v: Vec<f64>,
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|a| *a /= n);
    }
    n
}

fn check_2d(w: &Tensor) -> Result<(usize, usize)> {
    match w.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::invalid(format!(
            "spectral normalization needs a 2-D weight, got {s:?}"
        ))),
    }
}

impl PowerIteration {
    pub fn new(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        let mut v: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
        normalize(&mut u);
        normalize(&mut v);
        Self { u, v }
    }

    pub fn from_vectors(u: Vec<f64>, v: Vec<f64>) -> Self {
        Self { u, v }
    }

    pub fn left(&self) -> &[f64] {
        &self.u
    }

    pub fn right(&self) -> &[f64] {
        &self.v
    }

    /// Runs `iters` warm-started iterations and returns σ̂ = uᵀWv.
    pub fn estimate(&mut self, w: &Tensor, iters: usize) -> Result<f64> {
        let (rows, cols) = check_2d(w)?;
        if self.u.len() != rows || self.v.len() != cols {
            return Err(Error::ShapeMismatch {
                op: "power_iteration",
                left: vec![rows, cols],
                right: vec![self.u.len(), self.v.len()],
            });
        }
        let a = w.values();
        let mut sigma = 0.0;
        for _ in 0..iters.max(1) {
            // v ← Wᵀu / ‖Wᵀu‖
            let mut v = vec![0.0; cols];
            for (i, ui) in self.u.iter().enumerate() {
                let row = &a[i * cols..(i + 1) * cols];
                for (vj, wij) in v.iter_mut().zip(row) {
                    *vj += wij * ui;
                }
            }
            if normalize(&mut v) == 0.0 {
                return Ok(0.0);
            }
            // u ← Wv / ‖Wv‖; ‖Wv‖ = uᵀWv after normalization.
            let mut u: Vec<f64> = (0..rows)
                .map(|i| {
                    a[i * cols..(i + 1) * cols]
                        .iter()
                        .zip(&v)
                        .map(|(x, y)| x * y)
                        .sum()
                })
                .collect();
            sigma = normalize(&mut u);
            if sigma == 0.0 {
                return Ok(0.0);
            }
            self.u = u;
            self.v = v;
        }
        Ok(sigma)
    }
}

/// Returns `W · min(1, c / σ̂(W))` together with σ̂ before scaling.
pub fn spectral_normalize(
    w: &Tensor,
    c: f64,
    iters: usize,
    state: &mut PowerIteration,
) -> Result<(Tensor, f64)> {
    if iters == 0 {
        return Err(Error::invalid("power iteration count must be >= 1"));
    }
    let sigma = state.estimate(w, iters)?;
    let factor = (c / sigma.max(SIGMA_FLOOR)).min(1.0);
    let mut out = w.clone();
    if sigma > 0.0 && factor < 1.0 {
        out.values_mut().iter_mut().for_each(|x| *x *= factor);
    }
    Ok((out, sigma))
}

/// In-place variant; returns the scale factor that was applied.
pub fn normalize_in_place(
    w: &mut Tensor,
    c: f64,
    iters: usize,
    state: &mut PowerIteration,
) -> Result<f64> {
    let sigma = state.estimate(w, iters.max(1))?;
    let factor = (c / sigma.max(SIGMA_FLOOR)).min(1.0);
    if sigma > 0.0 && factor < 1.0 {
        w.values_mut().iter_mut().for_each(|x| *x *= factor);
        Ok(factor)
    } else {
        Ok(1.0)
    }
}
