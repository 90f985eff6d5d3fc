//! Multinomial logistic regression trained by full-batch gradient descent.
//!
//! Objective: `-(1/N) Σ log softmax(W x + b)[y] + (l2/2) ‖W‖²` (bias unpenalized).
//! Steps that would raise the loss are rolled back and the step size halved, so
//! the recorded loss history never increases.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, LogRegConfig, PixelClassifier};
use crate::error::{Error, Result};
use crate::prep::PixelDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub n_classes: usize,
    pub n_features: usize,
    /// C×D row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Loss at initialization followed by the loss after every accepted step.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LogRegModel {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        Self {
            n_classes,
            n_features,
            weights: vec![0.0; n_classes * n_features],
            bias: vec![0.0; n_classes],
            history: Vec::new(),
        }
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let nw = self.n_classes * self.n_features;
        self.weights.copy_from_slice(&p[..nw]);
        self.bias.copy_from_slice(&p[nw..]);
    }

    #[inline]
    fn logits_into(params: &[f64], c: usize, d: usize, x: &[f64], z: &mut [f64]) {
        let bias = &params[c * d..];
        for k in 0..c {
            let w = &params[k * d..(k + 1) * d];
            let mut s = bias[k];
            for (wi, xi) in w.iter().zip(x) {
                s += wi * xi;
            }
            z[k] = s;
        }
    }
}

impl PixelClassifier for LogRegModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba_into(&self, x: &[f64], out: &mut [f64]) {
        let (c, d) = (self.n_classes, self.n_features);
        let bias = &self.bias;
        for k in 0..c {
            let w = &self.weights[k * d..(k + 1) * d];
            let mut s = bias[k];
            for (wi, xi) in w.iter().zip(x) {
                s += wi * xi;
            }
            out[k] = s;
        }
        softmax_in_place(out);
    }
}

// rows per partial sum; fixed so the summation order never depends on thread count
const CHUNK_ROWS: usize = 2048;

/// Loss and gradient over a flat parameter vector `[W (C×D) | b (C)]`.
pub(crate) fn objective(
    params: &[f64],
    c: usize,
    d: usize,
    features: &[f64],
    targets: &[u16],
    l2: f64,
) -> (f64, Vec<f64>) {
    let n = targets.len();
    let partials: Vec<(f64, Vec<f64>)> = targets
        .par_chunks(CHUNK_ROWS)
        .enumerate()
        .map(|(ci, ys)| {
            let mut grad = vec![0.0; c * d + c];
            let mut loss = 0.0;
            let mut z = vec![0.0; c];
            for (j, &y) in ys.iter().enumerate() {
                let i = ci * CHUNK_ROWS + j;
                let x = &features[i * d..(i + 1) * d];
                LogRegModel::logits_into(params, c, d, x, &mut z);
                let zy = z[y as usize];
                let lse = softmax_in_place(&mut z);
                loss += lse - zy;
                for k in 0..c {
                    let r = z[k] - if k == y as usize { 1.0 } else { 0.0 };
                    let g = &mut grad[k * d..(k + 1) * d];
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += r * xi;
                    }
                    grad[c * d + k] += r;
                }
            }
            (loss, grad)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; c * d + c];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    grad.iter_mut().for_each(|g| *g *= inv);
    let w = &params[..c * d];
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in grad[..c * d].iter_mut().zip(w) {
        *g += l2 * wi;
    }
    (loss, grad)
}

/// Gradient descent with step halving and rollback.
pub(crate) struct Descent {
    pub params: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
    pub step: f64,
}

pub(crate) enum StepOutcome {
    /// Loss did not increase; carries the relative improvement.
    Accepted(f64),
    Rejected,
}

impl Descent {
    pub fn new(params: Vec<f64>, step: f64, f: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> Self {
        let (loss, grad) = f(&params);
        Self {
            params,
            loss,
            grad,
            step,
        }
    }

    /// Re-evaluates loss and gradient at the current iterate (objective changed).
    pub fn refresh(&mut self, f: impl Fn(&[f64]) -> (f64, Vec<f64>)) {
        let (loss, grad) = f(&self.params);
        self.loss = loss;
        self.grad = grad;
    }

    pub fn try_step(&mut self, f: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> StepOutcome {
        let candidate: Vec<f64> = self
            .params
            .iter()
            .zip(&self.grad)
            .map(|(p, g)| p - self.step * g)
            .collect();
        let (loss, grad) = f(&candidate);
        if loss <= self.loss {
            let rel = (self.loss - loss) / self.loss.abs().max(f64::MIN_POSITIVE);
            self.params = candidate;
            self.loss = loss;
            self.grad = grad;
            StepOutcome::Accepted(rel)
        } else {
            self.step *= 0.5;
            StepOutcome::Rejected
        }
    }
}

// below this the iterate can no longer move in f64
const MIN_STEP: f64 = 1e-30;

pub fn logreg_loss_and_grad(model: &LogRegModel, ds: &PixelDataset, l2: f64) -> Result<(f64, LogRegGrad)> {
    if ds.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if ds.n_features != model.n_features {
        return Err(Error::Shape(format!(
            "dataset has {} features, model has {}",
            ds.n_features, model.n_features
        )));
    }
    if ds.n_classes > model.n_classes {
        return Err(Error::Shape(format!(
            "dataset has {} classes, model has {}",
            ds.n_classes, model.n_classes
        )));
    }
    let (c, d) = (model.n_classes, model.n_features);
    let (loss, g) = objective(&model.params(), c, d, &ds.features, &ds.targets, l2);
    Ok((
        loss,
        LogRegGrad {
            weights: g[..c * d].to_vec(),
            bias: g[c * d..].to_vec(),
        },
    ))
}

pub(crate) fn check_trainable(ds: &PixelDataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if ds.present_classes() < 2 {
        return Err(Error::Data("training data contains a single class".into()));
    }
    Ok(())
}

/// Runs descent for at most `max_iters` attempts from zero parameters.
pub(crate) fn descend(c: usize, d: usize, features: &[f64], targets: &[u16], cfg: &LogRegConfig) -> LogRegModel {
    let f = |p: &[f64]| objective(p, c, d, features, targets, cfg.l2);
    let mut model = LogRegModel::zeros(c, d);
    let mut gd = Descent::new(model.params(), cfg.initial_step, f);
    model.history.push(gd.loss);
    for _ in 0..cfg.max_iters {
        match gd.try_step(f) {
            StepOutcome::Accepted(rel) => {
                model.history.push(gd.loss);
                if rel < cfg.tol {
                    break;
                }
            }
            StepOutcome::Rejected if gd.step < MIN_STEP => break,
            StepOutcome::Rejected => {}
        }
    }
    model.set_params(&gd.params);
    model
}

pub fn fit_logreg(ds: &PixelDataset, cfg: &LogRegConfig) -> Result<LogRegModel> {
    check_trainable(ds)?;
    let ds = ds.canonical();
    Ok(descend(ds.n_classes, ds.n_features, &ds.features, &ds.targets, cfg))
}
