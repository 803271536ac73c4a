//! Deterministic simulation of drone swarms surveying a toxic gas plume.
//!
//! A Gaussian plume is rasterized into 1 m boxes, a lane graph over the
//! survey region is routed with a min-max vehicle routing solver, drones fly
//! the routes while sampling, and a kernel estimator rebuilds the field from
//! the samples so it can be scored against ground truth.

pub mod config;
pub mod export;
pub mod flight;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod mission;
pub mod plume;
pub mod vrp;
