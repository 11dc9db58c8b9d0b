//! Non-neural tooling for x4 infrared image super-resolution benchmarks:
//! bicubic degradation, single-channel PSNR/SSIM scoring, reflect padding,
//! dihedral self-ensemble, weighted fusion with weight search, and
//! leaderboard ranking. Neural models plug in as external programs.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the common choices.

pub mod ensemble;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod resample;
pub mod runner;
pub mod scalar;
pub mod tta;

pub use ensemble::{
    fuse, grid_search_alpha, grid_search_simplex, EnsembleWeights, WeightSearchResult,
};
pub use error::{EngineError, Error, Result};
pub use image::{load_image, save_image, to_luma, BitDepth, FloatImage, Image};
pub use metrics::{evaluate_pair, psnr, score, ssim, MetricConfig, PairScore};
pub use resample::{degrade_x4, resize, upscale_x4, Filter};
pub use runner::{infer, infer_batch, list_pngs, run_external_batch, ModelSpec};
pub use scalar::Real;
pub use tta::{tta_infer, D4Transform};

/// Single-precision float raster.
pub type FloatImage32 = FloatImage<f32>;
/// Double-precision float raster; the default working type.
pub type FloatImage64 = FloatImage<f64>;
