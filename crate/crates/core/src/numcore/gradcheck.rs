//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::numcore::{Tape, Tensor, Var};

/// Smallest denominator used when forming relative errors, so coordinates
/// with (near-)zero gradient are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// Largest relative discrepancy between tape gradients and central
/// differences of step `h`, over every coordinate of every parameter.
///
/// `f` builds a scalar loss from the parameter handles it is given; it must be
/// deterministic.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p)).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss)[0])
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, a) in analytic.iter().enumerate() {
        for ci in 0..work[pi].len() {
            let orig = work[pi].values()[ci];
            work[pi].values_mut()[ci] = orig + h;
            let up = eval(&work)?;
            work[pi].values_mut()[ci] = orig - h;
            let down = eval(&work)?;
            work[pi].values_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = a[ci].abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max((a[ci] - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
