//! Std companion to `vislit-core`: configuration, file formats, chart
//! rasterization, LLM backends and the staged command-line pipeline.

pub mod backend;
pub mod config;
pub mod data;
pub mod error;
pub mod execute;
pub mod io;
pub mod output;
pub mod pipeline;
pub mod raster;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use pipeline::{Pipeline, Selection};
