pub mod chartsynth;
pub mod error;
pub mod evalkit;
pub mod moe;
pub mod numkit;
pub mod seed;
pub mod stack;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
