//! Harness around the SCG library: fixture analysis reports, estimator
//! experiments from config files, and the acceptance verification gate.

pub mod config;
pub mod menu;
pub mod report;
pub mod verify;
