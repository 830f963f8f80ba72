//! Differentiable sorting: exact ranks, synthetic sorter pretraining, the
//! listwise ranking loss on predicted losses and the combined task objective.

mod loss;
mod ranks;
mod sorter;
mod synth;

pub use loss::{chunked_ranking_loss, ranking_loss, task_loss};
pub use ranks::{spearman, true_ranks};
pub use sorter::{heldout_set, pretrain_sorter, ExactRanker, Ranker, Sorter, SorterConfig, SorterReport};
pub use synth::{gen_sorter_batch, sample_sorter_batch, SorterBatch};
