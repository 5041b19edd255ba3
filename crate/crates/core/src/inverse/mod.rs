//! Direct inverse design and the surrogate model.

mod adam;
mod direct;
mod history;
pub mod network;
pub mod surrogate;
mod train;

pub use adam::{adam_step, OptimizerState};
pub use direct::{
    invert_direct, relative_field_error, DirectConfig, DirectResult, StartMode, StartTrace,
    MAX_CONSECUTIVE_FAILURES,
};
pub use history::{HistoryRow, LossHistory, LossName, Split};
pub use network::{Activation, Mlp};
pub use surrogate::{ParamGrads, Stage, SurrogateArch, SurrogateModel};
pub use train::{
    clamp_for_solver, evaluate_batch, init_model, synthetic_conditions, train, transfer_learn, BatchEval, PhysicsSetup,
    PreparedSample, TrainConfig,
};
