//! Store location inference from purchase co-occurrence.
//!
//! Stores that share many customers tend to be close together. Given a set of
//! stores with known coordinates, this crate estimates how customer sharing
//! falls off with distance and places the remaining stores at the location
//! that best explains their sharing with the known ones.
//!
//! The pieces, in pipeline order:
//!
//! * [`sharing`]: customer sets and the thresholded sharing graph
//! * [`density`]: the binned distribution of sharing given distance
//! * [`solver`]: maximum-likelihood placement by grid search or gradient descent
//! * [`evaluation`]: leave-one-out benchmark against nearest-neighbor baselines
//! * [`synth`]: synthetic cities with ground truth
//! * [`io`] and [`pipeline`]: file formats and end-to-end runs

pub mod density;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod sharing;
pub mod solver;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use geometry::{GeoPoint, PlanarPoint, Region};
pub use sharing::StoreRef;
