//! Command-line experiments for piecewise linear Markov process samplers.

pub mod app;
pub mod commands;
pub mod config;
pub mod svg;
