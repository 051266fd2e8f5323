pub mod boosted;
pub mod data;
pub mod discretion;
pub mod error;
pub mod pipeline;
pub mod scoring;
pub mod seeds;
pub mod stats;
pub mod svg;
pub mod synthgen;
pub mod tree;

pub use error::{Error, Result};
