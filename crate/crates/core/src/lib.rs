//! Geodesic extraction of tubular structures (vessel centerlines) from 2D images.

pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod oof;
pub mod orientation;
pub mod pipeline;
pub mod fast_marching;
pub mod geodesic;
pub mod raster;

pub use error::{Error, Result};
