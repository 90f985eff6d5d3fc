//! Tile-context classifier: logistic regression over each pixel's bands plus the
//! contrast between its k×k neighborhood mean and itself.
//!
//! Features are computed inside the tile the pixel is seen in, so predictions near
//! tile borders depend on tile placement, which is what overlap smoothing at
//! inference time averages out. Training runs over materialized train tiles with
//! optional augmentation, one gradient step per epoch, and early stopping on the
//! validation tiles' cross-entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logreg::{check_trainable, objective, Descent, LogRegModel, StepOutcome};
use super::{PixelClassifier, TileClassifier, TrainConfig, Transform};
use crate::error::{Error, Result};
use crate::prep::{PixelDataset, SplitAssignment, SplitKind};
use crate::raster::{validate_pair, EmbeddingRaster, LabelRaster, NODATA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextModel {
    pub bands: usize,
    pub window: u32,
    /// Logistic regression over `2 × bands` features.
    pub core: LogRegModel,
    /// Epochs actually run before stopping.
    pub epochs_run: usize,
    /// Validation cross-entropy after each epoch (empty without validation tiles).
    pub val_losses: Vec<f64>,
}

/// Row-major N×2D features: raw bands followed by `neighborhood mean − raw` per band.
///
/// The mean covers the `window`×`window` neighborhood clipped to the tile and to
/// pixels flagged available in `avail` (all pixels when `None`).
pub fn context_features(tile: &EmbeddingRaster, window: u32, avail: Option<&[bool]>) -> Vec<f64> {
    let (w, h, d) = (tile.width() as usize, tile.height() as usize, tile.bands() as usize);
    let n = w * h;
    let r = (window / 2) as usize;
    let ok = |p: usize| avail.is_none_or(|a| a[p]);

    // summed-area tables with a zero border row/column
    let stride = w + 1;
    let mut count = vec![0u32; stride * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            count[(y + 1) * stride + x + 1] =
                ok(y * w + x) as u32 + count[y * stride + x + 1] + count[(y + 1) * stride + x] - count[y * stride + x];
        }
    }
    let mut out = vec![0.0; n * 2 * d];
    let mut sat = vec![0.0f64; stride * (h + 1)];
    for b in 0..d {
        let plane = tile.band(b);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let v = if ok(p) { plane[p] as f64 } else { 0.0 };
                sat[(y + 1) * stride + x + 1] =
                    v + sat[y * stride + x + 1] + sat[(y + 1) * stride + x] - sat[y * stride + x];
            }
        }
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1) + 1);
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1) + 1);
                let p = y * w + x;
                let raw = plane[p] as f64;
                let k = count[y1 * stride + x1] + count[y0 * stride + x0]
                    - count[y0 * stride + x1]
                    - count[y1 * stride + x0];
                let contrast = if k == 0 || window == 1 {
                    0.0
                } else {
                    let s =
                        sat[y1 * stride + x1] + sat[y0 * stride + x0] - sat[y0 * stride + x1] - sat[y1 * stride + x0];
                    s / k as f64 - raw
                };
                out[p * 2 * d + b] = raw;
                out[p * 2 * d + d + b] = contrast;
            }
        }
    }
    out
}

impl TileClassifier for ContextModel {
    fn n_classes(&self) -> usize {
        self.core.n_classes
    }

    fn n_bands(&self) -> usize {
        self.bands
    }

    fn predict_tile(&self, tile: &EmbeddingRaster) -> Vec<f64> {
        let feats = context_features(tile, self.window, None);
        let c = self.core.n_classes;
        let f = 2 * self.bands;
        let n = tile.plane_len();
        let mut out = vec![0.0; n * c];
        for p in 0..n {
            self.core
                .predict_proba_into(&feats[p * f..(p + 1) * f], &mut out[p * c..(p + 1) * c]);
        }
        out
    }
}

struct Batch {
    features: Vec<f64>,
    targets: Vec<u16>,
}

fn build_batch(
    emb: &EmbeddingRaster,
    labels: &LabelRaster,
    split: &SplitAssignment,
    kind: SplitKind,
    window: u32,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Batch> {
    let t = split.grid.tile as usize;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for tile in split.tiles(kind) {
        let (mut e, mut l, mut inside) = split.grid.materialize(tile, emb, labels);
        if let Some(rng) = rng.as_deref_mut() {
            let tf = Transform::draw(rng);
            e = tf.apply_embedding(&e)?;
            l = tf.apply_labels(&l)?;
            inside = tf.apply_plane(&inside, t, t)?;
        }
        // the k×k mean commutes with these transforms, so augmentation permutes rows
        let f = context_features(&e, window, Some(&inside));
        let width = 2 * e.bands() as usize;
        for (p, &id) in l.ids().iter().enumerate() {
            if id != NODATA {
                features.extend_from_slice(&f[p * width..(p + 1) * width]);
                targets.push(id);
            }
        }
    }
    Ok(Batch { features, targets })
}

pub fn fit_context(
    emb: &EmbeddingRaster,
    labels: &LabelRaster,
    split: &SplitAssignment,
    cfg: &TrainConfig,
) -> Result<ContextModel> {
    validate_pair(emb, labels)?;
    let ccfg = &cfg.context;
    if ccfg.window == 0 || ccfg.window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "context window must be odd, got {}",
            ccfg.window
        )));
    }
    if split.count(SplitKind::Train) == 0 {
        return Err(Error::Data("no train tiles".into()));
    }
    let d = emb.bands() as usize;
    let f = 2 * d;
    let c = labels
        .ids()
        .iter()
        .filter(|&&v| v != NODATA)
        .max()
        .map_or(0, |&m| m as usize + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(ccfg.seed);
    let first = build_batch(
        emb,
        labels,
        split,
        SplitKind::Train,
        ccfg.window,
        ccfg.augment.then_some(&mut rng),
    )?;
    let probe = PixelDataset::new(first.features, f, first.targets)?;
    check_trainable(&probe)?;
    let mut batch = Batch {
        features: probe.features,
        targets: probe.targets,
    };

    let val = if split.count(SplitKind::Val) > 0 {
        let v = build_batch(emb, labels, split, SplitKind::Val, ccfg.window, None)?;
        (!v.targets.is_empty()).then_some(v)
    } else {
        None
    };
    let val_loss = |p: &[f64], v: &Batch| objective(p, c, f, &v.features, &v.targets, 0.0).0;

    let l2 = cfg.logreg.l2;
    let mut gd = Descent::new(vec![0.0; c * f + c], cfg.logreg.initial_step, |p: &[f64]| {
        objective(p, c, f, &batch.features, &batch.targets, l2)
    });
    let mut history = vec![gd.loss];
    let mut val_losses = Vec::new();
    let mut best = val.as_ref().map(|v| (val_loss(&gd.params, v), gd.params.clone()));
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 0..ccfg.epochs {
        if ccfg.augment && epoch > 0 {
            batch = build_batch(emb, labels, split, SplitKind::Train, ccfg.window, Some(&mut rng))?;
            gd.refresh(|p: &[f64]| objective(p, c, f, &batch.features, &batch.targets, l2));
        }
        epochs_run = epoch + 1;
        let outcome = gd.try_step(|p: &[f64]| objective(p, c, f, &batch.features, &batch.targets, l2));
        let converged = match outcome {
            StepOutcome::Accepted(rel) => {
                history.push(gd.loss);
                rel < cfg.logreg.tol
            }
            StepOutcome::Rejected => gd.step < 1e-30,
        };
        if let (Some(v), Some((best_loss, best_params))) = (val.as_ref(), best.as_mut()) {
            let vl = val_loss(&gd.params, v);
            val_losses.push(vl);
            if vl < *best_loss {
                *best_loss = vl;
                *best_params = gd.params.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= ccfg.early_stop_patience {
                    break;
                }
            }
        }
        if converged {
            break;
        }
    }

    let params = match best {
        Some((_, p)) => p,
        None => gd.params,
    };
    let mut core = LogRegModel::zeros(c, f);
    core.weights.copy_from_slice(&params[..c * f]);
    core.bias.copy_from_slice(&params[c * f..]);
    core.history = history;
    Ok(ContextModel {
        bands: d,
        window: ccfg.window,
        core,
        epochs_run,
        val_losses,
    })
}
