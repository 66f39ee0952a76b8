pub mod charts;
pub mod cli;
pub mod control;
pub mod error;
pub mod fixtures;
pub mod hausdorff;
pub mod flowcheck;
pub mod liealgebra;
pub mod metric;
pub mod nilpotent;
pub mod planner;
pub mod report;
pub mod symfield;

pub use error::{Error, Result};
