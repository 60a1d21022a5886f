//! Confounder-aware evaluation toolkit for binary screening classifiers.

pub mod data;
pub mod rng;
pub mod matching;
pub mod metrics;
pub mod utility;
pub mod synth;
pub mod resample;
pub mod probes;
pub mod baseline;
pub mod report;
pub mod pipeline;
