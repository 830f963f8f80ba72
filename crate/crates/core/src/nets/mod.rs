//! Network definitions: the target classifier with its loss-prediction head,
//! the VAE, the discriminator and the sorter network.

mod params;
mod rank;
mod sorter;
mod target;
mod vae;

pub use params::{Init, Linear, Mlp, ParamSet};
pub use rank::{labeled_rank_signal, normalize_predicted_losses};
pub use sorter::SorterNet;
pub use target::{argmax, Inference, LossPredHead, TapReducer, TargetConfig, TargetModel, TargetOutputs, HEAD_TAP_WIDTH};
pub use vae::{kl_to_unit_gaussian, rank_column, reparameterize, Discriminator, Vae, VaeConfig, VaeOutputs};
