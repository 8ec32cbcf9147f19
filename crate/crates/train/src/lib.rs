//! Soft actor-critic training for the gaitlab walker.
//!
//! A single learner owns the replay buffer and networks; collector threads
//! own their environments and ship transitions back each round. Training
//! runs in three phases (`base`, `exo-finetune`, `weakness-finetune`), the
//! last two continuing from a base checkpoint.

use gaitlab_core::env::EnvError;
use thiserror::Error;

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod nn;
pub mod optim;
pub mod replay;
pub mod rollout;
pub mod sac;
pub mod train;

pub use checkpoint::PolicyCheckpoint;
pub use config::{EntropyMode, FrequencyUnit, TrainerConfig};
pub use eval::{evaluate, EvalSummary, Evaluation};
pub use train::{train, LogRow, TrainOutcome, TrainPhase, TrainSetup};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint was trained on environment {checkpoint}, this environment is {env}")]
    Fingerprint { checkpoint: String, env: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("replay buffer: {0}")]
    Replay(String),
    #[error("collector: {0}")]
    Collector(String),
    #[error("io: {0}")]
    Io(String),
}
