pub mod alcore;
pub mod capl;
pub mod dataio;
pub mod error;
pub mod nets;
pub mod numerics;
pub mod ranking;
pub mod rng;

pub use error::{Error, Result};
