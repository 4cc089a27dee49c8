//! Base learner and bagged ensemble.
//!
//! The per-cluster model is a bag of CART trees trained on bootstrap
//! resamples of the labeled set (a random forest without feature subsampling
//! by default, so the committee vote stays interpretable). The same ensemble
//! doubles as the committee behind the bootstrap uncertainty measure.

mod format;

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::er::FeatureVector;
use crate::error::{Error, Result};
use crate::num::{real, Real};
use crate::rng;
use crate::Value;

/// Feature vectors with labels attached, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    arity: usize,
    vectors: Vec<FeatureVector>,
}

impl LabeledSet {
    pub fn new(vectors: Vec<FeatureVector>, arity: usize) -> Result<Self> {
        for v in &vectors {
            if v.label.is_none() {
                return Err(Error::InvalidValue {
                    reason: format!("unlabeled vector ({}, {})", v.left, v.right),
                });
            }
            if v.arity() != arity {
                return Err(Error::ArityMismatch {
                    context: "labeled set".into(),
                    expected: arity,
                    got: v.arity(),
                });
            }
        }
        Ok(LabeledSet { arity, vectors })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn push(&mut self, v: FeatureVector) -> Result<()> {
        if v.label.is_none() {
            return Err(Error::InvalidValue {
                reason: "unlabeled vector".into(),
            });
        }
        if v.arity() != self.arity {
            return Err(Error::ArityMismatch {
                context: "labeled set".into(),
                expected: self.arity,
                got: v.arity(),
            });
        }
        self.vectors.push(v);
        Ok(())
    }

    /// `(matches, non_matches)`
    pub fn class_counts(&self) -> (usize, usize) {
        let matches = self
            .vectors
            .iter()
            .filter(|v| v.label == Some(true))
            .count();
        (matches, self.vectors.len() - matches)
    }

    pub fn has_both_classes(&self) -> bool {
        let (m, n) = self.class_counts();
        m > 0 && n > 0
    }
}

/// Tree growth limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per split; `None` means all of them.
    pub feature_subsample: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_depth: 12,
            min_leaf: 2,
            feature_subsample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<R: Real> {
    Split {
        feature: usize,
        threshold: R,
        left: u32,
        right: u32,
    },
    Leaf {
        p_match: R,
    },
}

/// One CART tree over similarity features, Gini-grown, thresholds at the
/// midpoints of consecutive distinct feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel<R: Real> {
    nodes: Vec<Node<R>>,
    pub seed: u64,
}

impl<R: Real> TreeModel<R> {
    pub fn nodes(&self) -> &[Node<R>] {
        &self.nodes
    }

    pub(crate) fn from_nodes(nodes: Vec<Node<R>>, seed: u64) -> Self {
        TreeModel { nodes, seed }
    }

    /// Match probability at the leaf `x` lands in. Node 0 is the root.
    pub fn predict_prob(&self, x: &[R]) -> R {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { p_match } => return *p_match,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Hard vote; a leaf probability of exactly 0.5 counts as a match.
    pub fn predict(&self, x: &[R]) -> bool {
        self.predict_prob(x) >= real::<R>(0.5)
    }
}

type Pcg = rand_pcg::Pcg64;

struct TreeBuilder<'a, R: Real> {
    xs: &'a [Vec<R>],
    ys: &'a [bool],
    cfg: TrainConfig,
    rng: Pcg,
    nodes: Vec<Node<R>>,
    arity: usize,
}

fn gini(matches: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = matches as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

impl<R: Real> TreeBuilder<'_, R> {
    fn build(&mut self, indices: &[usize], depth: usize) -> u32 {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { p_match: R::zero() });

        let total = indices.len();
        let matches = indices.iter().filter(|i| self.ys[**i]).count();
        let p_match = real::<R>(matches as f64 / total as f64);

        let splittable = depth < self.cfg.max_depth
            && total >= 2 * self.cfg.min_leaf
            && matches != 0
            && matches != total;
        let split = if splittable {
            self.best_split(indices, matches)
        } else {
            None
        };

        match split {
            None => {
                self.nodes[idx as usize] = Node::Leaf { p_match };
            }
            Some((feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|i| self.xs[**i][feature] <= threshold);
                let left = self.build(&left_rows, depth + 1);
                let right = self.build(&right_rows, depth + 1);
                self.nodes[idx as usize] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        idx
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.cfg.feature_subsample {
            None => (0..self.arity).collect(),
            Some(m) => {
                let m = m.clamp(1, self.arity);
                let mut all: Vec<usize> = (0..self.arity).collect();
                // partial Fisher-Yates, deterministic per node
                for i in 0..m {
                    let j = self.rng.random_range(i..all.len());
                    all.swap(i, j);
                }
                let mut chosen = all[..m].to_vec();
                chosen.sort_unstable();
                chosen
            }
        }
    }

    /// Best Gini split: features ascending, thresholds ascending, so equal
    /// gains resolve to the smallest (feature, threshold).
    fn best_split(&mut self, indices: &[usize], matches: usize) -> Option<(usize, R)> {
        let total = indices.len();
        let parent = gini(matches, total);
        let mut best: Option<(f64, usize, R)> = None;
        let mut column: Vec<(R, bool)> = Vec::with_capacity(total);
        for feature in self.candidate_features() {
            column.clear();
            column.extend(indices.iter().map(|i| (self.xs[*i][feature], self.ys[*i])));
            column.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));

            let mut left_matches = 0usize;
            for i in 1..total {
                if column[i - 1].1 {
                    left_matches += 1;
                }
                if column[i].0 <= column[i - 1].0 {
                    continue; // no boundary between equal values
                }
                let left_n = i;
                let right_n = total - i;
                if left_n < self.cfg.min_leaf || right_n < self.cfg.min_leaf {
                    continue;
                }
                let right_matches = matches - left_matches;
                let weighted = (left_n as f64 * gini(left_matches, left_n)
                    + right_n as f64 * gini(right_matches, right_n))
                    / total as f64;
                let gain = parent - weighted;
                if gain > 1e-12 && best.as_ref().is_none_or(|(bg, _, _)| gain > *bg + 1e-12) {
                    let two = real::<R>(2.0);
                    let threshold = (column[i - 1].0 + column[i].0) / two;
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Grow one CART tree on the full labeled set.
pub fn train_tree(data: &LabeledSet, cfg: &TrainConfig, seed: u64) -> Result<TreeModel<Value>> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let xs: Vec<Vec<Value>> = data.vectors().iter().map(|v| v.values.clone()).collect();
    let ys: Vec<bool> = data
        .vectors()
        .iter()
        .map(|v| v.label.expect("labeled set"))
        .collect();
    Ok(fit_tree(&xs, &ys, data.arity(), cfg, seed))
}

fn fit_tree<R: Real>(
    xs: &[Vec<R>],
    ys: &[bool],
    arity: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> TreeModel<R> {
    let mut builder = TreeBuilder {
        xs,
        ys,
        cfg: *cfg,
        rng: rng::stream(seed, "tree", 0),
        nodes: Vec::new(),
        arity,
    };
    let indices: Vec<usize> = (0..xs.len()).collect();
    builder.build(&indices, 0);
    TreeModel {
        nodes: builder.nodes,
        seed,
    }
}

/// Bag of `k` trees, each grown on an n-sized bootstrap resample.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel<R: Real> {
    trees: Vec<TreeModel<R>>,
    pub seed: u64,
    pub arity: usize,
    pub cfg: TrainConfig,
}

impl<R: Real> EnsembleModel<R> {
    pub fn k(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[TreeModel<R>] {
        &self.trees
    }

    pub fn from_trees(
        trees: Vec<TreeModel<R>>,
        seed: u64,
        arity: usize,
        cfg: TrainConfig,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidValue {
                reason: "ensemble needs at least one tree".into(),
            });
        }
        Ok(EnsembleModel {
            trees,
            seed,
            arity,
            cfg,
        })
    }

    /// Number of trees voting match.
    pub fn match_votes(&self, x: &[R]) -> usize {
        self.trees.iter().filter(|t| t.predict(x)).count()
    }

    pub fn match_fraction_of(&self, x: &[R]) -> R {
        real::<R>(self.match_votes(x) as f64 / self.k() as f64)
    }
}

impl EnsembleModel<Value> {
    /// Committee vote fraction for one feature vector; the pair classifies
    /// as a match when the fraction reaches 0.5.
    pub fn predict_match_fraction(&self, w: &FeatureVector) -> Result<Value> {
        if w.arity() != self.arity {
            return Err(Error::ArityMismatch {
                context: format!("predicting ({}, {})", w.left, w.right),
                expected: self.arity,
                got: w.arity(),
            });
        }
        if w.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                reason: format!("non-finite feature in ({}, {})", w.left, w.right),
            });
        }
        Ok(self.match_fraction_of(&w.values))
    }

    pub fn classify(&self, w: &FeatureVector) -> Result<(bool, Value)> {
        let fraction = self.predict_match_fraction(w)?;
        Ok((fraction >= 0.5, fraction))
    }
}

/// Train the bagged ensemble. Tree seeds derive deterministically from
/// `(seed, tree index)`; trees grow in parallel.
pub fn train_ensemble(
    data: &LabeledSet,
    k: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<EnsembleModel<Value>> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if !data.has_both_classes() {
        return Err(Error::SingleClassTrainingSet);
    }
    if k == 0 {
        return Err(Error::InvalidValue {
            reason: "ensemble size k must be at least 1".into(),
        });
    }
    let xs: Vec<Vec<Value>> = data.vectors().iter().map(|v| v.values.clone()).collect();
    let ys: Vec<bool> = data
        .vectors()
        .iter()
        .map(|v| v.label.expect("labeled set"))
        .collect();
    let n = xs.len();
    let trees: Vec<TreeModel<Value>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let tree_seed = rng::split_seed(seed, "bootstrap-tree", i as u64);
            let mut resample_rng = rng::stream(tree_seed, "resample", 0);
            let mut bx = Vec::with_capacity(n);
            let mut by = Vec::with_capacity(n);
            for _ in 0..n {
                let j = resample_rng.random_range(0..n);
                bx.push(xs[j].clone());
                by.push(ys[j]);
            }
            fit_tree(&bx, &by, data.arity(), cfg, tree_seed)
        })
        .collect();
    Ok(EnsembleModel {
        trees,
        seed,
        arity: data.arity(),
        cfg: *cfg,
    })
}

#[cfg(test)]
mod tests;
