use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::loss::{build_targets, objective};
use super::model::{FlowModel, Mode};
use super::trace::{LossTrace, TraceRow};
use crate::coupling::{pair_batch, prepare_coupling, Coupling, Strategy};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{cosine_lr, AdamState};
use crate::numcore::{Rng, Stream, Tape};
use crate::points::PointBatch;
use crate::schedules::{standard_noise, Schedule};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Cosine,
    Constant,
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LrSchedule::Cosine => "cosine",
            LrSchedule::Constant => "constant",
        })
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cosine" => Ok(Self::Cosine),
            "constant" => Ok(Self::Constant),
            o => Err(Error::Parse(format!("unknown lr schedule `{o}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_schedule: LrSchedule,
    pub schedule: Schedule,
    pub coupling: Strategy,
    /// Sweeps for the minibatch precompute.
    pub sweeps: usize,
    pub seed: u64,
    /// Trace rows are still written every step; this only throttles the observer.
    pub eval_every: usize,
    /// Draw one time per row instead of one per batch.
    pub per_row_t: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 256,
            base_lr: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            schedule: Schedule::Linear,
            coupling: Strategy::Global,
            sweeps: 5,
            seed: 0,
            eval_every: 0,
            per_row_t: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.coupling.is_ot() && self.batch_size < 2 {
            return Err(Error::invalid("OT couplings need batch_size >= 2"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("base_lr must be > 0"));
        }
        if self.coupling == Strategy::Minibatch && self.sweeps == 0 {
            return Err(Error::invalid("minibatch coupling needs sweeps >= 1"));
        }
        self.schedule.validate()
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        match self.lr_schedule {
            LrSchedule::Cosine => cosine_lr(step, self.steps.max(1), self.base_lr),
            LrSchedule::Constant => Ok(self.base_lr),
        }
    }
}

/// What the observer sees after each optimizer step.
pub struct StepView<'a> {
    pub row: &'a TraceRow,
    pub x0: &'a PointBatch,
    pub x1: &'a PointBatch,
    pub ts: &'a [f64],
}

pub struct TrainOutcome {
    pub model: FlowModel,
    pub trace: LossTrace,
    pub coupling: Option<Coupling>,
}

/// Trains with the coupling the strategy prescribes, built from scratch.
pub fn train(
    model: FlowModel,
    cfg: &TrainConfig,
    data: &Dataset,
) -> Result<(FlowModel, LossTrace)> {
    let out = train_with(model, cfg, data, None, |_| {})?;
    Ok((out.model, out.trace))
}

fn draw_time(rng: &mut Rng, open: bool) -> f64 {
    loop {
        let t = rng.uniform();
        if !open || t > 0.0 {
            return t;
        }
    }
}

/// Full training loop: pair a batch, draw times, regress, Adam step with the
/// learning-rate schedule, re-normalize spectra.
///
/// `coupling` overrides the strategy's own precompute (used when resuming or
/// with a hand-built plan). `steps = 0` returns the model untouched.
pub fn train_with<O>(
    mut model: FlowModel,
    cfg: &TrainConfig,
    data: &Dataset,
    coupling: Option<Coupling>,
    mut observer: O,
) -> Result<TrainOutcome>
where
    O: FnMut(&StepView<'_>),
{
    cfg.validate()?;
    let n = data.len();
    if cfg.batch_size > n {
        return Err(Error::invalid(format!(
            "batch_size {} exceeds dataset size {n}",
            cfg.batch_size
        )));
    }
    let mut batches = Rng::for_stream(cfg.seed, Stream::Batches);
    let mut times = Rng::for_stream(cfg.seed, Stream::Times);
    let mut noise = Rng::for_stream(cfg.seed, Stream::Noise);
    let mut coup = match coupling {
        Some(c) => Some(c),
        None => prepare_coupling(
            cfg.coupling,
            &data.x0,
            &data.x1,
            cfg.batch_size,
            cfg.sweeps,
            &mut Rng::for_stream(cfg.seed, Stream::Coupling),
        )?,
    };
    let mut trace = LossTrace::default();
    let mut adam = AdamState::new(model.net.params(), cfg.base_lr);
    // velocities of noisy paths blow up at the endpoints
    let open = model.mode == Mode::VelocityField && !cfg.schedule.is_deterministic();
    let b = cfg.batch_size;
    for step in 0..cfg.steps {
        let pb = pair_batch(
            cfg.coupling,
            &mut batches,
            &data.x0,
            &data.x1,
            coup.as_mut(),
            b,
        )?;
        let ts: Vec<f64> = if cfg.per_row_t {
            (0..b).map(|_| draw_time(&mut times, open)).collect()
        } else {
            vec![draw_time(&mut times, open); b]
        };
        let eps = (!cfg.schedule.is_deterministic()).then(|| standard_noise(b, &mut noise));
        let targets = build_targets(model.mode, cfg.schedule, &pb.x0, &pb.x1, &ts, eps.as_ref())?;

        let mut tape = Tape::new();
        let vars = model.net.bind(&mut tape, true);
        let loss_var = objective(&mut tape, &vars, &model, &targets, &ts)?;
        let loss = tape.value(loss_var)[0];
        let lr = cfg.lr_at(step)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                trace: Box::new(trace),
            });
        }
        let grads = tape.backward(loss_var)?;
        for (p, &v) in model.net.params_mut().iter_mut().zip(&vars) {
            if let Some(g) = grads.get(v) {
                p.value.accumulate_grad(g)?;
            }
        }
        if let Err(e) = adam.step(model.net.params_mut(), lr) {
            return Err(match e {
                Error::NonFinite(_) => Error::NonFiniteLoss {
                    step,
                    trace: Box::new(trace),
                },
                other => other,
            });
        }
        model.net.normalize()?;
        let row = TraceRow {
            step,
            loss,
            lr,
            coupling_cost: (cfg.coupling == Strategy::Loom)
                .then(|| coup.as_ref().map(Coupling::total_cost))
                .flatten(),
        };
        trace.push(row);
        if cfg.eval_every == 0 || step % cfg.eval_every == 0 || step + 1 == cfg.steps {
            observer(&StepView {
                row: &row,
                x0: &pb.x0,
                x1: &pb.x1,
                ts: &ts,
            });
        }
    }
    Ok(TrainOutcome {
        model,
        trace,
        coupling: coup,
    })
}
