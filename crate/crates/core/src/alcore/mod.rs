//! The active-learning loop: target training with ranking loss and pseudo
//! labels, the VAE/discriminator game, query strategies and pool bookkeeping.

mod adversarial;
mod experiment;
mod losses;
mod pool;
mod select;
mod strategy;
mod train;

pub use adversarial::{latent_means, train_adversarial, AdversarialInputs, AdversarialOutcome, AdversarialSummary, PoolScores};
pub use experiment::{check_run, run_experiment, run_on_split, CycleMetrics, RunOutput};
pub use losses::{
    adversarial_from_probs, discriminator_from_probs, discriminator_loss, vae_adversarial_loss, vae_total_loss,
    vae_transductive_loss, PoolBatch, TransductiveTerms,
};
pub use pool::PoolState;
pub use select::{baseline_select, prediction_entropy, select_samples};
pub use strategy::StrategyKind;
pub use train::{supervised_lr, train_target_cycle, TargetCycle};
