//! Election orchestration, the adversary simulator and the `vbm` command line.

pub mod app;
pub mod sim;
