//! Single-image dehazing toolkit: a classical dark-channel-prior pipeline
//! feeding a small GAN-trained U-Net, with everything needed to reproduce the
//! architecture ablations at desk scale — synthetic data, training,
//! evaluation, and a finite-difference-verified tensor engine.

pub mod cli;
pub mod data;
pub mod dcp;
pub mod error;
pub mod image;
pub mod metrics;
pub mod net;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
