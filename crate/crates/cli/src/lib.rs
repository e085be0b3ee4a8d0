//! Support code for the `sewerwatch` binary: config-file handling and SVG
//! figures.

pub mod config;
pub mod plot;
