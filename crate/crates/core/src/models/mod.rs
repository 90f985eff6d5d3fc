//! Classifier families behind one contract.
//!
//! Pixel models ([`PixelClassifier`]) map a single D-vector to a class simplex.
//! Tile models ([`TileClassifier`]) see a whole tile at once; any pixel model
//! lifts to a tile model through [`Pixelwise`].

pub mod augment;
pub mod context;
pub mod forest;
pub mod gbt;
pub mod logreg;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prep::PixelDataset;
use crate::raster::EmbeddingRaster;

pub use augment::{augment_tile, Transform};
pub use context::{fit_context, ContextModel};
pub use forest::{fit_random_forest, RandomForestModel};
pub use gbt::{fit_gbt, GbtModel};
pub use logreg::{fit_logreg, logreg_loss_and_grad, LogRegGrad, LogRegModel};
pub use tree::{fit_tree, DecisionTree};

pub trait PixelClassifier: Sync {
    fn n_classes(&self) -> usize;
    fn n_features(&self) -> usize;

    /// Writes a length-C probability simplex for `x` into `out`.
    fn predict_proba_into(&self, x: &[f64], out: &mut [f64]);

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes()];
        self.predict_proba_into(x, &mut out);
        out
    }

    fn predict(&self, x: &[f64]) -> u16 {
        argmax(&self.predict_proba(x)) as u16
    }
}

pub trait TileClassifier: Sync {
    fn n_classes(&self) -> usize;
    fn n_bands(&self) -> usize;

    /// Class probabilities for every pixel of `tile`, pixel-major (row-major pixels × C).
    fn predict_tile(&self, tile: &EmbeddingRaster) -> Vec<f64>;
}

/// Lifts a pixel model to a tile model; each pixel is predicted independently.
pub struct Pixelwise<'a, M: ?Sized>(pub &'a M);

impl<M: PixelClassifier + ?Sized> TileClassifier for Pixelwise<'_, M> {
    fn n_classes(&self) -> usize {
        self.0.n_classes()
    }

    fn n_bands(&self) -> usize {
        self.0.n_features()
    }

    fn predict_tile(&self, tile: &EmbeddingRaster) -> Vec<f64> {
        let c = self.0.n_classes();
        let n = tile.plane_len();
        let mut out = vec![0.0; n * c];
        let mut x = vec![0.0; tile.bands() as usize];
        for p in 0..n {
            tile.pixel_into(p, &mut x);
            self.0.predict_proba_into(&x, &mut out[p * c..(p + 1) * c]);
        }
        out
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// In-place max-shifted softmax; returns log-sum-exp of the input logits.
pub fn softmax_in_place(z: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
    m + s.ln()
}

pub fn accuracy_on(model: &(impl PixelClassifier + ?Sized), ds: &PixelDataset) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let hits = (0..ds.len())
        .filter(|&i| model.predict(ds.row(i)) == ds.targets[i])
        .count();
    hits as f64 / ds.len() as f64
}

/// Mean softmax cross-entropy of the model's probabilities on `ds`.
pub fn log_loss_on(model: &(impl PixelClassifier + ?Sized), ds: &PixelDataset) -> f64 {
    let mut p = vec![0.0; model.n_classes()];
    let mut total = 0.0;
    for i in 0..ds.len() {
        model.predict_proba_into(ds.row(i), &mut p);
        total -= p[ds.targets[i] as usize].max(1e-300).ln();
    }
    total / ds.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogRegConfig {
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Initial gradient step; halved whenever a step would raise the loss.
    pub initial_step: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iters: 500,
            tol: 1e-7,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means `floor(sqrt(D))`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            mtry: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn mtry_for(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_hessian: f64,
    pub l2: f64,
    pub bins: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_leaves: 31,
            min_hessian: 1e-3,
            l2: 1.0,
            bins: 255,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextConfig {
    /// Odd neighborhood side length.
    pub window: u32,
    pub augment: bool,
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            window: 3,
            augment: true,
            epochs: 350,
            early_stop_patience: 15,
            seed: 0,
        }
    }
}

/// Hyperparameters for every family; each fit reads its own section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub logreg: LogRegConfig,
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
    pub context: ContextConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = &self.logreg;
        if !(lr.l2 >= 0.0 && lr.tol >= 0.0 && lr.initial_step > 0.0) {
            return Err(Error::Config("logreg l2/tol must be ≥ 0 and initial_step > 0".into()));
        }
        let f = &self.forest;
        if f.n_trees == 0 || f.min_samples_leaf == 0 || f.max_depth == Some(0) || f.mtry == Some(0) {
            return Err(Error::Config(
                "forest n_trees, min_samples_leaf, max_depth and mtry must be ≥ 1".into(),
            ));
        }
        let g = &self.gbt;
        if !(g.learning_rate >= 0.0 && g.l2 >= 0.0 && g.min_hessian >= 0.0) {
            return Err(Error::Config(
                "gbt learning_rate, l2 and min_hessian must be ≥ 0".into(),
            ));
        }
        if g.max_leaves < 2 || g.bins < 2 || g.bins > 255 {
            return Err(Error::Config("gbt max_leaves must be ≥ 2 and bins in [2, 255]".into()));
        }
        let c = &self.context;
        if c.window == 0 || c.window.is_multiple_of(2) {
            return Err(Error::Config(format!("context window must be odd, got {}", c.window)));
        }
        if c.early_stop_patience == 0 {
            return Err(Error::Config("early_stop_patience must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logreg,
    Forest,
    Gbt,
    Context,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Logreg, Family::Forest, Family::Gbt, Family::Context];

    pub fn display_name(self) -> &'static str {
        match self {
            Family::Logreg => "Logistic Regression",
            Family::Forest => "Random Forest",
            Family::Gbt => "Gradient Boosted Trees",
            Family::Context => "Tile Context Model",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Logreg => "logreg",
            Family::Forest => "forest",
            Family::Gbt => "gbt",
            Family::Context => "context",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Family::Logreg),
            "forest" => Ok(Family::Forest),
            "gbt" => Ok(Family::Gbt),
            "context" => Ok(Family::Context),
            other => Err(Error::Config(format!(
                "unknown model family {other:?} (expected logreg, forest, gbt or context)"
            ))),
        }
    }
}

/// Any fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    LogReg(LogRegModel),
    Forest(RandomForestModel),
    Gbt(GbtModel),
    Context(ContextModel),
}

impl Model {
    pub fn family(&self) -> Family {
        match self {
            Model::LogReg(_) => Family::Logreg,
            Model::Forest(_) => Family::Forest,
            Model::Gbt(_) => Family::Gbt,
            Model::Context(_) => Family::Context,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::LogReg(m) => m.n_classes(),
            Model::Forest(m) => m.n_classes(),
            Model::Gbt(m) => m.n_classes(),
            Model::Context(m) => TileClassifier::n_classes(m),
        }
    }

    /// Embedding bands the model consumes.
    pub fn n_bands(&self) -> usize {
        match self {
            Model::LogReg(m) => m.n_features(),
            Model::Forest(m) => m.n_features(),
            Model::Gbt(m) => m.n_features(),
            Model::Context(m) => m.n_bands(),
        }
    }

    pub fn as_pixel(&self) -> Option<&dyn PixelClassifier> {
        match self {
            Model::LogReg(m) => Some(m),
            Model::Forest(m) => Some(m),
            Model::Gbt(m) => Some(m),
            Model::Context(_) => None,
        }
    }

    pub fn as_tile(&self) -> Box<dyn TileClassifier + '_> {
        match self {
            Model::LogReg(m) => Box::new(Pixelwise(m)),
            Model::Forest(m) => Box::new(Pixelwise(m)),
            Model::Gbt(m) => Box::new(Pixelwise(m)),
            Model::Context(m) => Box::new(m.clone()),
        }
    }

    /// Per-step training losses (empty for forests).
    pub fn training_log(&self) -> &[f64] {
        match self {
            Model::LogReg(m) => &m.history,
            Model::Forest(_) => &[],
            Model::Gbt(m) => &m.round_losses,
            Model::Context(m) => &m.core.history,
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model document. The header fields are the compatibility tag checked
/// before a model is applied to a new raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub family: Family,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub config: TrainConfig,
    pub parameters: serde_json::Value,
}

impl ModelFile {
    pub fn new(model: &Model, config: &TrainConfig, class_names: Vec<String>) -> Result<Self> {
        let parameters = match model {
            Model::LogReg(m) => serde_json::to_value(m)?,
            Model::Forest(m) => serde_json::to_value(m)?,
            Model::Gbt(m) => serde_json::to_value(m)?,
            Model::Context(m) => serde_json::to_value(m)?,
        };
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            family: model.family(),
            n_features: model.n_bands(),
            n_classes: model.n_classes(),
            class_names,
            config: config.clone(),
            parameters,
        })
    }

    pub fn model(&self) -> Result<Model> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let p = self.parameters.clone();
        let model = match self.family {
            Family::Logreg => Model::LogReg(serde_json::from_value(p)?),
            Family::Forest => Model::Forest(serde_json::from_value(p)?),
            Family::Gbt => Model::Gbt(serde_json::from_value(p)?),
            Family::Context => Model::Context(serde_json::from_value(p)?),
        };
        if model.n_bands() != self.n_features || model.n_classes() != self.n_classes {
            return Err(Error::Format("model tag disagrees with its parameters".into()));
        }
        Ok(model)
    }

    /// Refuses rasters whose band count differs from the tag.
    pub fn check_compatible(&self, bands: usize) -> Result<()> {
        if bands != self.n_features {
            return Err(Error::Shape(format!(
                "model tag {} (format v{}) expects {} bands and {} classes; raster has {bands} bands",
                self.family, self.format_version, self.n_features, self.n_classes
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn softmax_is_stable() {
        let mut z = vec![1000.0, 1000.0];
        let lse = softmax_in_place(&mut z);
        assert_eq!(z, vec![0.5, 0.5]);
        assert!((lse - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("gbt".parse::<Family>().unwrap(), Family::Gbt);
        assert!(matches!("svm".parse::<Family>(), Err(Error::Config(_))));
    }

    #[test]
    fn config_defaults_match_library_conventions() {
        let c = TrainConfig::default();
        assert_eq!((c.logreg.l2, c.logreg.max_iters, c.logreg.tol), (1e-4, 500, 1e-7));
        assert_eq!(
            (c.forest.n_trees, c.forest.max_depth, c.forest.min_samples_leaf),
            (100, None, 1)
        );
        assert_eq!(c.forest.mtry_for(64), 8);
        assert_eq!(c.forest.mtry_for(8), 2);
        assert_eq!((c.gbt.n_rounds, c.gbt.max_leaves, c.gbt.bins), (100, 31, 255));
        assert_eq!((c.gbt.learning_rate, c.gbt.min_hessian, c.gbt.l2), (0.1, 1e-3, 1.0));
        assert_eq!(
            (c.context.window, c.context.epochs, c.context.early_stop_patience),
            (3, 350, 15)
        );
        assert!(c.validate().is_ok());
        let bad = TrainConfig {
            context: ContextConfig {
                window: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"logreg": {"l3": 1.0}}"#);
        assert!(err.is_err());
    }
}
