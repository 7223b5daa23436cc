//! Experiment runners, dataset handling and report emission behind the
//! `kdlab` command-line tool.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod report;
pub mod svg;
