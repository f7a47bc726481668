//! Residual gradient compression for data-parallel training.
//!
//! Workers keep the gradient mass they did not transmit as a per-layer
//! residual, select only the largest-magnitude entries each step
//! (parallel-friendly trimmed and threshold-search selectors), optionally
//! quantize them to a single alternating-sign mean, and synchronize the
//! resulting sparse sets with an allgather-based sparse allreduce. An
//! analytic latency/bandwidth cost model predicts when that beats dense
//! synchronization, and a desk-scale synchronous trainer verifies the
//! pipeline end to end.

pub mod codec;
pub mod collective;
pub mod config;
pub mod cost;
pub mod data;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod selection;
pub mod tensor;
pub mod trainer;
