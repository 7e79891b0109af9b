//! Config files, CSV and SVG output, experiment runners and the
//! `selda-sim` command line for the `selda-core` hopping leg model.

pub mod cli;
pub mod configfile;
pub mod csvio;
pub mod error;
pub mod experiments;
pub mod svg;

pub use error::{Error, Result};
