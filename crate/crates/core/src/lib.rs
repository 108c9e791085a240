//! Importance-propagation graph neural network for drug response prediction.

pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataprep;
pub mod error;
pub mod graph;
pub mod io;
pub mod ip_layer;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{EdgeType, GeneGraph};
