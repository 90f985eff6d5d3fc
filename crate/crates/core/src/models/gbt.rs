//! Multiclass gradient-boosted trees over quantile-binned features.
//!
//! Each round fits one regression tree per class to the softmax gradient
//! `g = p - 1[y=c]` and hessian `h = p(1-p)`. Trees grow leaf-wise: the leaf
//! with the largest gain `GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ)` splits next, up to
//! `max_leaves`, and leaves output `-G/(H+λ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, GbtConfig, PixelClassifier};
use crate::error::{Error, Result};
use crate::prep::PixelDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegNode {
    /// Rows with `bin <= split_bin` (equivalently `x <= threshold`) go left.
    Split {
        feature: usize,
        split_bin: u8,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                RegNode::Leaf { value } => return *value,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, RegNode::Leaf { .. })).count()
    }

    fn scale(&mut self, s: f64) {
        for n in &mut self.nodes {
            if let RegNode::Leaf { value } = n {
                *value *= s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub learning_rate: f64,
    /// Log class priors of the training data.
    pub base_score: Vec<f64>,
    /// Ascending bin edges per feature; bin `b` holds `(edges[b-1], edges[b]]`.
    pub bins: Vec<Vec<f64>>,
    /// `rounds[r][c]`: the class-`c` tree of round `r`.
    pub rounds: Vec<Vec<RegTree>>,
    /// Training cross-entropy before boosting and after each round.
    pub round_losses: Vec<f64>,
}

impl GbtModel {
    pub fn raw_scores(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.base_score);
        for round in &self.rounds {
            for (o, t) in out.iter_mut().zip(round) {
                *o += self.learning_rate * t.predict(x);
            }
        }
    }
}

impl PixelClassifier for GbtModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba_into(&self, x: &[f64], out: &mut [f64]) {
        self.raw_scores(x, out);
        softmax_in_place(out);
    }
}

/// Up to `max_bins - 1` strictly ascending edges: midpoints between distinct values
/// when few, otherwise deduplicated quantile values.
pub fn bin_edges(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut uniq = sorted.clone();
    uniq.dedup();
    if uniq.len() <= max_bins {
        return uniq.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..max_bins).map(|k| sorted[k * n / max_bins]).collect();
    edges.dedup();
    // the top edge must leave something to its right
    if edges.last() == uniq.last() {
        edges.pop();
    }
    edges
}

#[inline]
fn bin_of(edges: &[f64], x: f64) -> u8 {
    edges.partition_point(|&e| e < x) as u8
}

struct Cand {
    gain: f64,
    feature: usize,
    bin: u8,
}

struct Leaf {
    node: usize,
    rows: Vec<u32>,
    g: f64,
    h: f64,
    best: Option<Cand>,
}

struct TreeFit<'a> {
    binned: &'a [Vec<u8>],
    n_bins: &'a [usize],
    edges: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbtConfig,
}

impl TreeFit<'_> {
    fn score(&self, g: f64, h: f64) -> Option<f64> {
        let denom = h + self.cfg.l2;
        (denom > 0.0).then(|| g * g / denom)
    }

    fn best_split(&self, rows: &[u32], g: f64, h: f64) -> Option<Cand> {
        let parent = self.score(g, h)?;
        let mut best: Option<Cand> = None;
        for (f, col) in self.binned.iter().enumerate() {
            let nb = self.n_bins[f];
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hn = vec![0u32; nb];
            for &r in rows {
                let b = col[r as usize] as usize;
                hg[b] += self.grad[r as usize];
                hh[b] += self.hess[r as usize];
                hn[b] += 1;
            }
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0u32);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                nl += hn[b];
                let nr = rows.len() as u32 - nl;
                if nl == 0 || nr == 0 {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.cfg.min_hessian || hr < self.cfg.min_hessian {
                    continue;
                }
                let (Some(sl), Some(sr)) = (self.score(gl, hl), self.score(gr, hr)) else {
                    continue;
                };
                let gain = sl + sr - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|c| gain > c.gain) {
                    best = Some(Cand {
                        gain,
                        feature: f,
                        bin: b as u8,
                    });
                }
            }
        }
        best
    }

    fn leaf(&self, node: usize, rows: Vec<u32>) -> Leaf {
        let g: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r as usize]).sum();
        let best = self.best_split(&rows, g, h);
        Leaf { node, rows, g, h, best }
    }

    /// Grows one tree; also returns the leaf output for every training row.
    fn grow(&self, n_rows: usize) -> (RegTree, Vec<f64>) {
        let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
        let mut leaves = vec![self.leaf(0, (0..n_rows as u32).collect())];
        while leaves.len() < self.cfg.max_leaves {
            let mut pick: Option<usize> = None;
            for (i, l) in leaves.iter().enumerate() {
                if let Some(c) = &l.best {
                    if pick.is_none_or(|p| c.gain > leaves[p].best.as_ref().expect("picked").gain) {
                        pick = Some(i);
                    }
                }
            }
            let Some(i) = pick else { break };
            let leaf = leaves.swap_remove(i);
            let cand = leaf.best.expect("picked leaf has a split");
            let col = &self.binned[cand.feature];
            let (l, r): (Vec<u32>, Vec<u32>) = leaf.rows.iter().partition(|&&row| col[row as usize] <= cand.bin);
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(RegNode::Leaf { value: 0.0 });
            nodes.push(RegNode::Leaf { value: 0.0 });
            nodes[leaf.node] = RegNode::Split {
                feature: cand.feature,
                split_bin: cand.bin,
                threshold: self.edges[cand.feature][cand.bin as usize],
                left: li,
                right: ri,
            };
            leaves.push(self.leaf(li, l));
            leaves.push(self.leaf(ri, r));
            // keep creation order so gain ties resolve to the older leaf
            leaves.sort_by_key(|l| l.node);
        }
        let mut out = vec![0.0; n_rows];
        for l in &leaves {
            let denom = l.h + self.cfg.l2;
            let value = if denom > 0.0 { -l.g / denom } else { 0.0 };
            nodes[l.node] = RegNode::Leaf { value };
            for &r in &l.rows {
                out[r as usize] = value;
            }
        }
        (RegTree { nodes }, out)
    }
}

fn mean_log_loss(scores: &[f64], targets: &[u16], c: usize) -> f64 {
    let mut z = vec![0.0; c];
    let mut total = 0.0;
    for (i, &y) in targets.iter().enumerate() {
        z.copy_from_slice(&scores[i * c..(i + 1) * c]);
        let zy = z[y as usize];
        total += softmax_in_place(&mut z) - zy;
    }
    total / targets.len() as f64
}

// smallest prior used for classes absent from the training rows
const MIN_PRIOR: f64 = 1e-12;
// a round whose full step raises the loss is retried at half scale this many times
const MAX_SHRINK: usize = 40;

pub fn fit_gbt(ds: &PixelDataset, cfg: &GbtConfig) -> Result<GbtModel> {
    super::logreg::check_trainable(ds)?;
    if cfg.bins < 2 || cfg.bins > 255 {
        return Err(Error::Config(format!("bins must lie in [2, 255], got {}", cfg.bins)));
    }
    if cfg.max_leaves < 2 {
        return Err(Error::Config("max_leaves must be ≥ 2".into()));
    }
    let ds = ds.canonical();
    let (n, d, c) = (ds.len(), ds.n_features, ds.n_classes);

    let edges: Vec<Vec<f64>> = (0..d)
        .map(|f| {
            let col: Vec<f64> = (0..n).map(|i| ds.row(i)[f]).collect();
            bin_edges(&col, cfg.bins)
        })
        .collect();
    let binned: Vec<Vec<u8>> = (0..d)
        .map(|f| (0..n).map(|i| bin_of(&edges[f], ds.row(i)[f])).collect())
        .collect();
    let n_bins: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();

    let base_score: Vec<f64> = ds
        .class_counts()
        .iter()
        .map(|&k| (k as f64 / n as f64).max(MIN_PRIOR).ln())
        .collect();
    let mut scores: Vec<f64> = (0..n).flat_map(|_| base_score.iter().copied()).collect();
    let mut loss = mean_log_loss(&scores, &ds.targets, c);
    let mut round_losses = vec![loss];
    let mut rounds = Vec::with_capacity(cfg.n_rounds);

    for _ in 0..cfg.n_rounds {
        let mut probs = scores.clone();
        for row in probs.chunks_mut(c) {
            softmax_in_place(row);
        }
        let fitted: Vec<(RegTree, Vec<f64>)> = (0..c)
            .into_par_iter()
            .map(|k| {
                let grad: Vec<f64> = (0..n)
                    .map(|i| probs[i * c + k] - if ds.targets[i] as usize == k { 1.0 } else { 0.0 })
                    .collect();
                let hess: Vec<f64> = (0..n)
                    .map(|i| {
                        let p = probs[i * c + k];
                        p * (1.0 - p)
                    })
                    .collect();
                TreeFit {
                    binned: &binned,
                    n_bins: &n_bins,
                    edges: &edges,
                    grad: &grad,
                    hess: &hess,
                    cfg,
                }
                .grow(n)
            })
            .collect();

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_SHRINK {
            let trial: Vec<f64> = scores
                .iter()
                .enumerate()
                .map(|(j, s)| s + cfg.learning_rate * scale * fitted[j % c].1[j / c])
                .collect();
            let trial_loss = mean_log_loss(&trial, &ds.targets, c);
            if trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            scale *= 0.5;
        }
        let (trees, new_loss) = match accepted {
            Some((trial, trial_loss)) => {
                scores = trial;
                let trees = fitted
                    .into_iter()
                    .map(|(mut t, _)| {
                        if scale != 1.0 {
                            t.scale(scale);
                        }
                        t
                    })
                    .collect();
                (trees, trial_loss)
            }
            None => {
                // no descent along this round's trees; keep the round as a no-op
                let trees = fitted
                    .into_iter()
                    .map(|(mut t, _)| {
                        t.scale(0.0);
                        t
                    })
                    .collect();
                (trees, loss)
            }
        };
        loss = new_loss;
        round_losses.push(loss);
        rounds.push(trees);
    }

    Ok(GbtModel {
        n_classes: c,
        n_features: d,
        learning_rate: cfg.learning_rate,
        base_score,
        bins: edges,
        rounds,
        round_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{accuracy_on, log_loss_on};

    fn separable_1d() -> PixelDataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            x.push(-1.0);
            y.push(0);
            x.push(1.0);
            y.push(1);
        }
        PixelDataset::new(x, 1, y).unwrap()
    }

    #[test]
    fn zero_learning_rate_predicts_priors() {
        let ds = PixelDataset::new(vec![0., 1., 2., 3.], 1, vec![0, 1, 1, 1]).unwrap();
        let m = fit_gbt(
            &ds,
            &GbtConfig {
                learning_rate: 0.0,
                n_rounds: 5,
                ..Default::default()
            },
        )
        .unwrap();
        for x in [-10.0, 0.5, 3.0] {
            let p = m.predict_proba(&[x]);
            assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn separable_fit_drives_log_loss_down() {
        let ds = separable_1d();
        let m = fit_gbt(
            &ds,
            &GbtConfig {
                n_rounds: 50,
                ..Default::default()
            },
        )
        .unwrap();
        let final_loss = *m.round_losses.last().unwrap();
        assert!(final_loss < 0.1, "{final_loss}");
        assert!((log_loss_on(&m, &ds) - final_loss).abs() < 1e-9);
        assert_eq!(accuracy_on(&m, &ds), 1.0);
        for w in m.round_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn leaves_capped() {
        let x: Vec<f64> = (0..300).map(|i| (i % 97) as f64).collect();
        let y: Vec<u16> = (0..300).map(|i| ((i * 7) % 3) as u16).collect();
        let ds = PixelDataset::new(x, 1, y).unwrap();
        let m = fit_gbt(
            &ds,
            &GbtConfig {
                n_rounds: 3,
                max_leaves: 4,
                ..Default::default()
            },
        )
        .unwrap();
        for round in &m.rounds {
            assert_eq!(round.len(), 3);
            for t in round {
                assert!(t.n_leaves() <= 4);
            }
        }
    }

    #[test]
    fn bin_edges_bounded_and_ascending() {
        let v: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 10_007) as f64).collect();
        let e = bin_edges(&v, 255);
        assert!(e.len() < 255);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        let e = bin_edges(&[1.0, 1.0, 3.0], 255);
        assert_eq!(e, vec![2.0]);
        assert_eq!(bin_of(&e, 1.0), 0);
        assert_eq!(bin_of(&e, 2.0), 0);
        assert_eq!(bin_of(&e, 2.5), 1);
        assert!(bin_edges(&[4.0; 8], 255).is_empty());
    }

    #[test]
    fn single_class_rejected() {
        let ds = PixelDataset::new(vec![1.0, 2.0], 1, vec![1, 1]).unwrap();
        assert!(fit_gbt(&ds, &GbtConfig::default()).is_err());
    }
}
