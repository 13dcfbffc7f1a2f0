//! Loss, optimizer, training loop, checkpoints and the evaluation protocols.

mod checkpoint;
mod config;
mod loss;
mod optim;
mod report;
mod trainer;

pub use checkpoint::{Checkpoint, TensorEntry};
pub use config::TrainConfig;
pub use loss::{bce_logit_grad, bce_loss, BCE_EPS};
pub use optim::Adam;
pub use report::{EvalReport, Protocol, RECORDS_CSV, REPORT_JSON};
pub use trainer::{
    cross_validate, evaluate_split, external_validate, id_file_stem, predict, save_mask_png,
    train_fold, RunOptions, TrainOutcome,
};
