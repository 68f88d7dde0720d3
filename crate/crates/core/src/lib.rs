//! Handwritten OCR line-dataset workbench: preprocessing, collection forms,
//! ground-truth hygiene, dataset management, engines and CER/WER metrics.

pub mod components;
pub mod dataset;
pub mod engines;
pub mod formkit;
pub mod imaging;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod textnorm;

pub use raster::{Raster, Rect};
pub use textnorm::GroundTruth;
