pub mod angles;
pub mod attack;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod fixtures;
pub mod imagery;
pub mod interval;
pub mod matrix;
pub mod metrics;
pub mod pilot;
pub mod qim;
pub mod radon;
pub mod watermark;

pub use error::{Error, Result};
