//! Extending labeled land-cover rasters to unlabeled regions.
//!
//! The pipeline reads a co-registered embedding raster and label raster,
//! filters and remaps classes, cuts the grid into tiles assigned to
//! train/validation/test, fits a pixel or tile classifier, predicts probability
//! rasters for new regions (with overlap smoothing for tile models) and scores
//! the predicted class maps with accuracy and macro-averaged F1 and Jaccard.
//!
//! [`synth`] builds worlds with a known Bayes-optimal classifier so every stage
//! can be checked end to end.

pub mod cli;
pub mod error;
pub mod infer;
pub mod metrics;
pub mod models;
pub mod prep;
pub mod raster;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use infer::{argmax_map, predict_raster_pixelwise, predict_raster_tiled, ProbabilityRaster};
pub use metrics::{confusion, evaluate_by_band, report as metrics_report, BandReport, ConfusionMatrix, MetricsReport};
pub use models::{Family, Model, ModelFile, PixelClassifier, TileClassifier, TrainConfig};
pub use raster::{ClassTable, EmbeddingRaster, LabelRaster, NODATA};
pub use synth::{generate_world, SynthConfig, SynthWorld};
