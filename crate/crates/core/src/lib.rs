//! Few-shot meta-learning with a closed-form kernel inner loop and a
//! similarity-weighted outer loop, plus MAML / FO-MAML baselines.

pub mod error;
pub mod ndcore;

pub use error::{Error, Result};
pub mod gradnet;
pub mod tasks;
pub mod inner_kernel;
pub mod inner_maml;
pub mod outer;
pub mod harness;
