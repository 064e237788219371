//! Micron-scale height maps from camera-based tactile images.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`raster`] – shared raster types, sensor geometry, raster file I/O.
//! 2. [`sim`] – a Lambertian three-light forward model of the gel, used as a
//!    test oracle and to synthesize calibration / validation scenes.
//! 3. [`calibration`] – grid plan, automatic touch detection, ground-truth
//!    normal synthesis and dataset building.
//! 4. [`net`] – the convolutional surface-normal estimator and its trainer.
//! 5. [`recon`] – FFT Poisson integration, high-pass detrending, border crop.
//! 6. [`channels`] – cross-section metrology of channel objects and agreement
//!    statistics.
//! 7. [`wrinkles`] – valley detection, skeletonization and depth estimation.
//! 8. [`hertz`] – Hertzian contact model and modulus fitting.
//! 9. [`stats`] – Friedman / Wilcoxon / Bonferroni and descriptive statistics.
//!
//! [`data`] bundles the reference per-participant and per-object tables used
//! as golden vectors.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod channels;
pub mod data;
mod error;
pub mod hertz;
pub mod net;
pub mod raster;
pub mod recon;
pub mod sim;
pub mod spectral;
pub mod stats;
pub mod wrinkles;

pub use error::{Error, Result};
pub use raster::{HeightMap, NormalMap, SensorGeometry, TactileImage};
