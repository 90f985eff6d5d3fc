//! CART classification tree with Gini impurity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForestConfig, PixelClassifier};
use crate::error::{Error, Result};
use crate::prep::PixelDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u64>,
    },
}

/// Flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_classes: usize,
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_counts(&self, x: &[f64]) -> &[u64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

impl PixelClassifier for DecisionTree {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba_into(&self, x: &[f64], out: &mut [f64]) {
        let counts = self.leaf_counts(x);
        let total: u64 = counts.iter().sum();
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = c as f64 / total as f64;
        }
    }
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Higher score wins; ties go to the lower feature, then the lower threshold.
    fn beats(&self, other: &Candidate) -> bool {
        if self.score != other.score {
            return self.score > other.score;
        }
        (self.feature, self.threshold) < (other.feature, other.threshold)
    }
}

/// Σ_k n_k² / n, the part of n·(1 − gini) that depends on the split.
fn purity(counts: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

pub(crate) struct TreeBuilder<'a> {
    ds: &'a PixelDataset,
    max_depth: Option<usize>,
    min_leaf: usize,
    mtry: usize,
    rng: ChaCha8Rng,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(ds: &'a PixelDataset, cfg: &ForestConfig, mtry: usize, rng: ChaCha8Rng) -> Self {
        Self {
            ds,
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_samples_leaf.max(1),
            mtry,
            rng,
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn counts(&self, rows: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.ds.n_classes];
        for &r in rows {
            c[self.ds.targets[r] as usize] += 1;
        }
        c
    }

    /// Best split over features visited in random order, stopping once `mtry`
    /// non-constant features have been examined.
    fn best_split(&mut self, rows: &[usize], parent: &[u64]) -> Option<Candidate> {
        let d = self.ds.n_features;
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut self.rng);
        let n = rows.len() as u64;
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        let mut pairs: Vec<(f64, u16)> = Vec::with_capacity(rows.len());
        for f in order {
            if visited == self.mtry {
                break;
            }
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.ds.row(r)[f], self.ds.targets[r])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            visited += 1;
            let mut left = vec![0u64; parent.len()];
            let mut right = parent.to_vec();
            for i in 0..pairs.len() - 1 {
                let y = pairs[i].1 as usize;
                left[y] += 1;
                right[y] -= 1;
                if pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                let nl = (i + 1) as u64;
                let nr = n - nl;
                if (nl as usize) < self.min_leaf || (nr as usize) < self.min_leaf {
                    continue;
                }
                let cand = Candidate {
                    score: purity(&left, nl) + purity(&right, nr),
                    feature: f,
                    threshold: midpoint(pairs[i].0, pairs[i + 1].0),
                };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    pub fn build(mut self, rows: Vec<usize>) -> DecisionTree {
        let mut nodes: Vec<Node> = Vec::new();
        // (node slot, rows, depth)
        let mut stack = vec![(0usize, rows, 0usize)];
        nodes.push(Node::Leaf { counts: Vec::new() });
        while let Some((slot, rows, depth)) = stack.pop() {
            let counts = self.counts(&rows);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = self.max_depth.is_some_and(|m| depth >= m);
            let split = if pure || depth_capped || rows.len() < 2 * self.min_leaf {
                None
            } else {
                self.best_split(&rows, &counts)
            };
            match split {
                None => nodes[slot] = Node::Leaf { counts },
                Some(c) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| self.ds.row(i)[c.feature] <= c.threshold);
                    let (li, ri) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: li,
                        right: ri,
                    };
                    stack.push((ri, r, depth + 1));
                    stack.push((li, l, depth + 1));
                }
            }
        }
        DecisionTree {
            n_classes: self.ds.n_classes,
            n_features: self.ds.n_features,
            nodes,
        }
    }
}

/// Midpoint that is guaranteed to separate `lo < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Fits one CART tree on every row of `ds`, examining `cfg.mtry` features per split.
pub fn fit_tree(ds: &PixelDataset, cfg: &ForestConfig, seed: u64) -> Result<DecisionTree> {
    if ds.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let mtry = cfg.mtry_for(ds.n_features);
    let rows = (0..ds.len()).collect();
    Ok(TreeBuilder::new(ds, cfg, mtry, ChaCha8Rng::seed_from_u64(seed)).build(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::accuracy_on;

    fn all_features() -> ForestConfig {
        ForestConfig {
            mtry: Some(usize::MAX),
            ..Default::default()
        }
    }

    #[test]
    fn pure_dataset_is_single_leaf() {
        let ds = PixelDataset::new(vec![1.0, 2.0, 3.0], 1, vec![2, 2, 2]).unwrap();
        let t = fit_tree(&ds, &all_features(), 0).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0], Node::Leaf { counts: vec![0, 0, 3] });
    }

    #[test]
    fn xor_needs_depth_two() {
        let ds = PixelDataset::new(vec![0., 0., 0., 1., 1., 0., 1., 1.], 2, vec![0, 1, 1, 0]).unwrap();
        let t = fit_tree(&ds, &all_features(), 0).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(accuracy_on(&t, &ds), 1.0);
        // zero-gain root split: ties resolve to feature 0 at the midpoint
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 0.5));
    }

    #[test]
    fn constant_features_give_majority_leaf() {
        let ds = PixelDataset::new(vec![1.0; 5], 1, vec![0, 1, 1, 0, 1]).unwrap();
        let t = fit_tree(&ds, &all_features(), 0).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { counts: vec![2, 3] }]);
        assert_eq!(t.predict(&[1.0]), 1);
    }

    #[test]
    fn depth_and_leaf_size_limits() {
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let y: Vec<u16> = (0..64).map(|i| (i % 2) as u16).collect();
        let ds = PixelDataset::new(x, 1, y).unwrap();
        let t = fit_tree(
            &ds,
            &ForestConfig {
                max_depth: Some(3),
                ..all_features()
            },
            0,
        )
        .unwrap();
        assert!(t.depth() <= 3);
        let t = fit_tree(
            &ds,
            &ForestConfig {
                min_samples_leaf: 5,
                ..all_features()
            },
            0,
        )
        .unwrap();
        for n in &t.nodes {
            if let Node::Leaf { counts } = n {
                assert!(counts.iter().sum::<u64>() >= 5);
            }
        }
        let t = fit_tree(&ds, &all_features(), 0).unwrap();
        assert_eq!(accuracy_on(&t, &ds), 1.0);
    }

    #[test]
    fn every_internal_node_has_two_children() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let y: Vec<u16> = (0..100).map(|i| (i % 3) as u16).collect();
        let ds = PixelDataset::new(x, 2, y).unwrap();
        let t = fit_tree(&ds, &ForestConfig::default(), 4).unwrap();
        for n in &t.nodes {
            match n {
                Node::Split { left, right, .. } => {
                    assert!(left != right && *left < t.nodes.len() && *right < t.nodes.len())
                }
                Node::Leaf { counts } => assert!(counts.iter().sum::<u64>() > 0),
            }
        }
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
    }
}
