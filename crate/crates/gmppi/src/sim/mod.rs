//! Desk-scale experiment environment: procedural forests, analytic depth
//! rendering, the closed-loop runner, and run metrics.

pub mod forest;
pub mod metrics;
pub mod render;
pub mod runner;
pub mod scenario;
