pub mod augment;
pub mod bench;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod forest;
pub mod hazard;
pub mod kernels;
pub mod predict;
pub mod sampler;
pub mod store;

pub use error::{Error, Result};
