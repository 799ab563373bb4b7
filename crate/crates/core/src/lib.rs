pub mod config;
pub mod error;
pub mod fsutil;
pub mod geo;
pub mod inventory;
pub mod matching;
pub mod segment_time;
mod tabular;
pub mod track;
pub mod workorder;

pub use error::{Error, Result};
