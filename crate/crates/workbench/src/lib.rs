//! Command-line front end and results API for the probing workbench.

pub mod cli;
pub mod meta;
pub mod pipeline;
pub mod service;
pub mod store;
pub mod views;
