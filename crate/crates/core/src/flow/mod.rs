//! Flow maps, their training objectives and the velocity-field baseline.

mod loss;
mod model;
mod trace;
mod train;

pub use loss::{build_targets, cfm_loss, nfm_loss, objective, predict_on_tape, Targets};
pub use model::{
    displacement_time_variation, euler_integrate, euler_sample, flow_forward, flow_forward_rows,
    one_step_sample, trajectory, Displacement, FlowModel, Mode, Phi, Sample,
};
pub use trace::{LossTrace, TraceRow};
pub use train::{train, train_with, LrSchedule, StepView, TrainConfig, TrainOutcome};
