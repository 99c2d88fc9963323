pub mod annotator;
pub mod cli;
pub mod config;
pub mod features;
pub mod manifest;
pub mod rng;
pub mod metrics;
pub mod perturb;
pub mod report;
pub mod skintone;
pub mod synthetic;
