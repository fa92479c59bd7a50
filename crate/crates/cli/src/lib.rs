//! Command-line front end: block-structured problem configs, dispatch into
//! the solver and calculus modules, CSV emission, and the acceptance
//! self-test.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod output;
