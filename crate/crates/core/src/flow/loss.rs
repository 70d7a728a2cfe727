use super::model::{check_unit, FlowModel, Mode};
use crate::error::{Error, Result};
use crate::numcore::{Rng, Tape, Tensor, Var};
use crate::points::PointBatch;
use crate::schedules::{interpolate_rows, standard_noise, velocity_rows, Schedule};

/// Network input and regression target for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    /// `x0` for flow maps, `x_t` for velocity fields.
    pub input: PointBatch,
    /// `x_t` for flow maps, the analytic velocity for velocity fields.
    pub target: PointBatch,
}

/// Regression pairs for `mode`; `eps` is shared by interpolant and velocity.
pub fn build_targets(
    mode: Mode,
    schedule: Schedule,
    x0: &PointBatch,
    x1: &PointBatch,
    ts: &[f64],
    eps: Option<&PointBatch>,
) -> Result<Targets> {
    let xt = interpolate_rows(schedule, x0, x1, ts, eps)?;
    Ok(match mode {
        Mode::NeuralFlow => Targets {
            input: x0.clone(),
            target: xt,
        },
        Mode::VelocityField => Targets {
            target: velocity_rows(schedule, x0, x1, ts, eps)?,
            input: xt,
        },
    })
}

/// Records the model's prediction for `input` on the tape: `x0 + φ(t)·g` or `v`.
pub fn predict_on_tape(
    tape: &mut Tape,
    vars: &[Var],
    m: &FlowModel,
    input: &PointBatch,
    ts: &[f64],
) -> Result<Var> {
    if ts.len() != input.len() {
        return Err(Error::ShapeMismatch {
            op: "predict",
            left: vec![input.len()],
            right: vec![ts.len()],
        });
    }
    let x = input.to_tensor();
    let inp = tape.constant(m.net.build_input(&x, &m.time_rows(ts)?)?);
    let out = m.net.forward(tape, vars, inp)?;
    match m.mode {
        Mode::VelocityField => Ok(out),
        Mode::NeuralFlow => {
            let gate: Vec<f64> = ts
                .iter()
                .flat_map(|&t| {
                    let p = m.phi.eval(t);
                    [p, p]
                })
                .collect();
            let gate = tape.constant(Tensor::matrix(ts.len(), 2, gate)?);
            let disp = tape.mul(gate, out)?;
            let base = tape.constant(x);
            tape.add(base, disp)
        }
    }
}

/// `mse(prediction, target)` on the tape.
pub fn objective(
    tape: &mut Tape,
    vars: &[Var],
    m: &FlowModel,
    targets: &Targets,
    ts: &[f64],
) -> Result<Var> {
    let pred = predict_on_tape(tape, vars, m, &targets.input, ts)?;
    let tgt = tape.constant(targets.target.to_tensor());
    tape.mse(pred, tgt)
}

fn loss_value(m: &FlowModel, targets: &Targets, ts: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = m.net.bind(&mut tape, false);
    let l = objective(&mut tape, &vars, m, targets, ts)?;
    Ok(tape.value(l)[0])
}

fn noise_for(schedule: Schedule, n: usize, rng: &mut Rng) -> Option<PointBatch> {
    (!schedule.is_deterministic()).then(|| standard_noise(n, rng))
}

/// `mse(F(t, x0), x_t)` for pre-paired rows at a common time.
pub fn nfm_loss(
    m: &FlowModel,
    schedule: Schedule,
    x0: &PointBatch,
    x1: &PointBatch,
    t: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if m.mode != Mode::NeuralFlow {
        return Err(Error::invalid("nfm_loss needs a flow-map model"));
    }
    check_unit(t)?;
    let ts = vec![t; x0.len()];
    let eps = noise_for(schedule, x0.len(), rng);
    let tg = build_targets(Mode::NeuralFlow, schedule, x0, x1, &ts, eps.as_ref())?;
    loss_value(m, &tg, &ts)
}

/// `mse(v(x_t, t), u_t)` with the interpolant and its velocity sharing noise.
pub fn cfm_loss(
    m: &FlowModel,
    schedule: Schedule,
    x0: &PointBatch,
    x1: &PointBatch,
    t: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if m.mode != Mode::VelocityField {
        return Err(Error::invalid("cfm_loss needs a velocity-field model"));
    }
    check_unit(t)?;
    let ts = vec![t; x0.len()];
    let eps = noise_for(schedule, x0.len(), rng);
    let tg = build_targets(Mode::VelocityField, schedule, x0, x1, &ts, eps.as_ref())?;
    loss_value(m, &tg, &ts)
}
