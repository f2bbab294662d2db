pub mod error;
pub mod explain;
pub mod metrics;
pub mod stl;

pub use error::{Error, Result};
pub mod concepts;
pub mod data;
pub mod kernel;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rewrite;
pub mod synthetic;
pub mod trajgen;
