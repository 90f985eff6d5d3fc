//! Random forest of CART trees with soft voting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeBuilder};
use super::{ForestConfig, PixelClassifier};
use crate::error::{Error, Result};
use crate::prep::PixelDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub mtry: usize,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

impl PixelClassifier for RandomForestModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Mean over trees of each tree's normalized leaf histogram.
    fn predict_proba_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.trees {
            let counts = t.leaf_counts(x);
            let total = counts.iter().sum::<u64>() as f64;
            for (o, &c) in out.iter_mut().zip(counts) {
                *o += c as f64 / total;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
    }
}

/// Fits `n_trees` trees, tree `t` on a size-N bootstrap drawn with seed `seed + t`.
///
/// Rows are first put in provenance order, so the bootstrap is keyed to the
/// original pixels and the fit does not depend on dataset row order or on the
/// number of worker threads.
pub fn fit_random_forest(ds: &PixelDataset, cfg: &ForestConfig) -> Result<RandomForestModel> {
    if ds.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if cfg.n_trees == 0 {
        return Err(Error::Config("n_trees must be ≥ 1".into()));
    }
    let ds = ds.canonical();
    let n = ds.len();
    let mtry = cfg.mtry_for(ds.n_features);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            let mut builder = TreeBuilder::new(&ds, cfg, mtry, rng);
            let rows: Vec<usize> = (0..n).map(|_| builder.rng_mut().random_range(0..n)).collect();
            builder.build(rows)
        })
        .collect();
    Ok(RandomForestModel {
        n_classes: ds.n_classes,
        n_features: ds.n_features,
        mtry,
        seed: cfg.seed,
        trees,
    })
}
