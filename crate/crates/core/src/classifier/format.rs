//! Line-oriented text format for ensembles, bit-exact under round-trip.
//!
//! ```text
//! k 100
//! seed 42
//! arity 14
//! max_depth 12
//! min_leaf 2
//! mtry none
//! tree 7 9356446918002869   <- node count, tree seed
//! N 3 0.45 1 4              <- split: feature threshold left right
//! L 1                       <- leaf: match probability
//! ```
//!
//! Floats print in the shortest decimal form that parses back to the same
//! bits, so `write -> parse -> write` is byte-stable.

use crate::error::{Error, Result};
use crate::Value;

use super::{EnsembleModel, Node, TrainConfig, TreeModel};

fn corrupt(section: &str, detail: impl std::fmt::Display) -> Error {
    Error::CorruptManifest {
        section: format!("{section}: {detail}"),
    }
}

impl EnsembleModel<Value> {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("k {}\n", self.k()));
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("arity {}\n", self.arity));
        out.push_str(&format!("max_depth {}\n", self.cfg.max_depth));
        out.push_str(&format!("min_leaf {}\n", self.cfg.min_leaf));
        match self.cfg.feature_subsample {
            None => out.push_str("mtry none\n"),
            Some(m) => out.push_str(&format!("mtry {m}\n")),
        }
        for tree in self.trees() {
            out.push_str(&format!("tree {} {}\n", tree.nodes().len(), tree.seed));
            for node in tree.nodes() {
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => out.push_str(&format!("N {feature} {threshold} {left} {right}\n")),
                    Node::Leaf { p_match } => out.push_str(&format!("L {p_match}\n")),
                }
            }
        }
        out
    }

    pub fn from_text(text: &str, section: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| corrupt(section, format!("missing {key} line")))?;
            let rest = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| corrupt(section, format!("expected {key} line, got {line:?}")))?;
            Ok(rest.to_string())
        };
        let k: usize = header("k")?
            .parse()
            .map_err(|e| corrupt(section, format!("k: {e}")))?;
        let seed: u64 = header("seed")?
            .parse()
            .map_err(|e| corrupt(section, format!("seed: {e}")))?;
        let arity: usize = header("arity")?
            .parse()
            .map_err(|e| corrupt(section, format!("arity: {e}")))?;
        let max_depth: usize = header("max_depth")?
            .parse()
            .map_err(|e| corrupt(section, format!("max_depth: {e}")))?;
        let min_leaf: usize = header("min_leaf")?
            .parse()
            .map_err(|e| corrupt(section, format!("min_leaf: {e}")))?;
        let mtry_raw = header("mtry")?;
        let feature_subsample = if mtry_raw == "none" {
            None
        } else {
            Some(
                mtry_raw
                    .parse()
                    .map_err(|e| corrupt(section, format!("mtry: {e}")))?,
            )
        };
        let cfg = TrainConfig {
            max_depth,
            min_leaf,
            feature_subsample,
        };

        let mut trees = Vec::with_capacity(k);
        for t in 0..k {
            let head = lines
                .next()
                .ok_or_else(|| corrupt(section, format!("missing tree {t}")))?;
            let mut parts = head.split_whitespace();
            if parts.next() != Some("tree") {
                return Err(corrupt(
                    section,
                    format!("expected tree header, got {head:?}"),
                ));
            }
            let n_nodes: usize = parts
                .next()
                .ok_or_else(|| corrupt(section, "tree header missing node count"))?
                .parse()
                .map_err(|e| corrupt(section, format!("tree {t} node count: {e}")))?;
            let tree_seed: u64 = parts
                .next()
                .ok_or_else(|| corrupt(section, "tree header missing seed"))?
                .parse()
                .map_err(|e| corrupt(section, format!("tree {t} seed: {e}")))?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for i in 0..n_nodes {
                let line = lines
                    .next()
                    .ok_or_else(|| corrupt(section, format!("tree {t} truncated at node {i}")))?;
                let mut parts = line.split_whitespace();
                match parts.next() {
                    Some("N") => {
                        let mut field = |name: &str| -> Result<String> {
                            parts
                                .next()
                                .map(str::to_string)
                                .ok_or_else(|| corrupt(section, format!("split missing {name}")))
                        };
                        let feature: usize = field("feature")?
                            .parse()
                            .map_err(|e| corrupt(section, format!("feature: {e}")))?;
                        let threshold: Value = field("threshold")?
                            .parse()
                            .map_err(|e| corrupt(section, format!("threshold: {e}")))?;
                        let left: u32 = field("left")?
                            .parse()
                            .map_err(|e| corrupt(section, format!("left: {e}")))?;
                        let right: u32 = field("right")?
                            .parse()
                            .map_err(|e| corrupt(section, format!("right: {e}")))?;
                        if left as usize >= n_nodes || right as usize >= n_nodes {
                            return Err(corrupt(section, "child index out of bounds"));
                        }
                        nodes.push(Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        });
                    }
                    Some("L") => {
                        let p: Value = parts
                            .next()
                            .ok_or_else(|| corrupt(section, "leaf missing probability"))?
                            .parse()
                            .map_err(|e| corrupt(section, format!("leaf: {e}")))?;
                        nodes.push(Node::Leaf { p_match: p });
                    }
                    other => {
                        return Err(corrupt(section, format!("unknown node tag {other:?}")));
                    }
                }
            }
            trees.push(TreeModel::from_nodes(nodes, tree_seed));
        }
        if lines.next().is_some() {
            return Err(corrupt(section, "trailing content after last tree"));
        }
        EnsembleModel::from_trees(trees, seed, arity, cfg)
    }
}
