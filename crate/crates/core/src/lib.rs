//! Desk-scale 3D tumor segmentation: a dual-residual attention U-Net with
//! multiscale spatial attention, trained and evaluated end to end on CPU.
//!
//! Everything is deterministic by construction — fixed summation orders in
//! every kernel, seeded RNG streams, and parallelism only across independent
//! output elements — so a run reproduces bit for bit at any thread count.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
