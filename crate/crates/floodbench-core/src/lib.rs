//! Data pipeline for the flood-nowcasting benchmark: rasters and their
//! on-disk format, synthetic catchments and rainfall, the cellular-automaton
//! flood simulator that produces ground truth, and the feature stacks models
//! consume.
//!
//! The crate is deliberately free of any learning code; everything here is
//! deterministic given a master seed, and all randomness flows through named
//! sub-streams (see [`seed`]), so datasets regenerate bit-identically.

pub mod features;
pub mod io;
pub mod rainfall;
pub mod raster;
pub mod seed;
pub mod sim;
pub mod terrain;

pub use raster::{CatchmentMask, Raster, RasterStack, Units};
