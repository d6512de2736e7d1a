//! DDPG with hindsight experience replay and behavioral cloning.

mod buffer;
mod config;
mod ddpg;
mod train;

pub use buffer::{ReplayBuffer, Transition, TransitionBatch};
pub use config::TrainerConfig;
pub use ddpg::{
    actor_loss_and_gradients, actor_update, critic_loss_and_gradients, critic_update,
    explore_action, ActorLosses, ActorSettings, Agent, DemoBatch, ExplorationPolicy, GreedyPolicy,
};
pub use train::{
    append_metrics, derive_seed, evaluate, read_metrics, resume, train, EpochMetrics, EvalReport,
    TrainSummary, Trainer, BEST_CHECKPOINT, LATEST_CHECKPOINT, METRICS_FILE,
};
