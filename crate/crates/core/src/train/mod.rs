//! Optimisation, baseline variants and evaluation sweeps.

mod adam;
mod eval;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState, StepReport};
pub use eval::{
    eval_pool, eval_scene, eval_sweep, interference_angles, paired_interferer, width_sweep, ResultRow,
    ResultsTable, SweepConfig, SweepKind, FIXED_TARGET_DEG, SWEEP_WIDTHS, TARGET_ANGLES,
};
pub use trainer::{
    batch_gradients, batch_loss, heldout_si_snri, train, train_from, Crop, LogRecord, TrainConfig, TrainOutcome,
};
