//! Stages of the graphsent command-line pipeline.
//!
//! Every stage reads its inputs from the configured paths or from earlier
//! stages' files in the output directory, so stages can be run one by one
//! or all together with `pipeline`.

pub mod config;
pub mod dataset;
pub mod stages;
mod table;

use std::fmt;

pub use config::{LabelSource, PipelineConfig};
pub use dataset::Dataset;

/// A problem with the command line or configuration.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// 2 for input errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<InputError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<graphsent_core::Error>() {
            return if e.is_input() { 2 } else { 1 };
        }
    }
    1
}
