//! The weighted ER-problem graph and its Leiden partition.
//!
//! Nodes are ER problems (carrying their per-feature distribution profiles),
//! edges are the aggregated distribution similarities `sim_p`. The graph is
//! undirected, has no self-loops, and can grow incrementally as new problems
//! arrive.

mod leiden;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{profile_similarity, AnalysisConfig, ProblemProfile};
use crate::er::{ERProblem, ProblemId};
use crate::error::{Error, Result};
use crate::Value;

pub use leiden::{leiden_cluster, modularity_of};

/// Stable cluster label. Within one clustering, ids are assigned by the
/// smallest member problem id, so labels do not depend on traversal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A total partition of the graph's problems.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignment: BTreeMap<ProblemId, ClusterId>,
    pub clusters: BTreeMap<ClusterId, Vec<ProblemId>>,
    /// Weighted modularity of the partition at the resolution it was built
    /// with.
    pub quality: f64,
}

impl Clustering {
    pub fn cluster_of(&self, id: &ProblemId) -> Option<ClusterId> {
        self.assignment.get(id).copied()
    }

    pub fn members(&self, cluster: ClusterId) -> &[ProblemId] {
        self.clusters
            .get(&cluster)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// Weighted undirected graph over ER problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemGraph {
    nodes: BTreeMap<ProblemId, ProblemProfile<Value>>,
    /// Edge keys normalized so `key.0 < key.1`.
    edges: BTreeMap<(ProblemId, ProblemId), Value>,
    min_edge_sim: Value,
}

impl ProblemGraph {
    pub fn new(min_edge_sim: Value) -> Self {
        ProblemGraph {
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            min_edge_sim,
        }
    }

    /// Assemble a graph from parts. Used by archive loading and by graph
    /// fixtures; `insert_problem` needs real profiles on every node.
    pub fn from_parts(
        nodes: BTreeMap<ProblemId, ProblemProfile<Value>>,
        edges: BTreeMap<(ProblemId, ProblemId), Value>,
        min_edge_sim: Value,
    ) -> Result<Self> {
        for ((a, b), w) in &edges {
            if a >= b {
                return Err(Error::InvalidValue {
                    reason: format!("edge key ({a}, {b}) not normalized"),
                });
            }
            if !nodes.contains_key(a) || !nodes.contains_key(b) {
                return Err(Error::InvalidValue {
                    reason: format!("edge ({a}, {b}) references a missing node"),
                });
            }
            if !w.is_finite() || *w < 0.0 || *w > 1.0 {
                return Err(Error::InvalidValue {
                    reason: format!("edge ({a}, {b}) weight {w} outside [0, 1]"),
                });
            }
        }
        Ok(ProblemGraph {
            nodes,
            edges,
            min_edge_sim,
        })
    }

    /// Fixture constructor: nodes with empty profiles plus explicit weighted
    /// edges. Such graphs support clustering but not `insert_problem`.
    pub fn from_weighted_edges(
        ids: Vec<ProblemId>,
        edges: Vec<(ProblemId, ProblemId, Value)>,
    ) -> Result<Self> {
        let nodes: BTreeMap<_, _> = ids
            .into_iter()
            .map(|id| {
                (
                    id,
                    ProblemProfile {
                        n_vectors: 0,
                        features: Vec::new(),
                    },
                )
            })
            .collect();
        let mut normalized = BTreeMap::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::InvalidValue {
                    reason: format!("self-loop on {a}"),
                });
            }
            let key = if a < b { (a, b) } else { (b, a) };
            normalized.insert(key, w);
        }
        Self::from_parts(nodes, normalized, 0.0)
    }

    pub fn min_edge_sim(&self) -> Value {
        self.min_edge_sim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, id: &ProblemId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &ProblemId> {
        self.nodes.keys()
    }

    pub fn profile(&self, id: &ProblemId) -> Option<&ProblemProfile<Value>> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&(ProblemId, ProblemId), &Value)> {
        self.edges.iter()
    }

    pub fn weight(&self, a: &ProblemId, b: &ProblemId) -> Option<Value> {
        let key = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        self.edges.get(&key).copied()
    }

    /// Mean similarity from `id` to a set of nodes, treating absent edges as
    /// zero. Used for the singleton-merge rule of the budget allocator.
    pub fn mean_similarity_to(&self, id: &ProblemId, others: &[ProblemId]) -> Value {
        if others.is_empty() {
            return 0.0;
        }
        let sum: Value = others
            .iter()
            .map(|o| self.weight(id, o).unwrap_or(0.0))
            .sum();
        sum / others.len() as Value
    }

    /// Add a node by profile, connecting it to every existing node whose
    /// similarity clears the edge threshold. Existing edges are untouched.
    pub fn insert_profile(
        &mut self,
        id: ProblemId,
        profile: ProblemProfile<Value>,
        cfg: &AnalysisConfig,
    ) -> Result<()> {
        if self.nodes.contains_key(&id) {
            return Err(Error::DuplicateProblem { id: id.0 });
        }
        if let Some((other_id, other)) = self.nodes.iter().next() {
            if other.arity() != profile.arity() {
                return Err(Error::ArityMismatch {
                    context: format!("inserting {id} next to {other_id}"),
                    expected: other.arity(),
                    got: profile.arity(),
                });
            }
        }
        let sims: Vec<((ProblemId, ProblemId), Value)> = self
            .nodes
            .par_iter()
            .map(|(other_id, other)| {
                let sim = profile_similarity(&profile, other, cfg)?.sim_p;
                let key = if *other_id < id {
                    (other_id.clone(), id.clone())
                } else {
                    (id.clone(), other_id.clone())
                };
                Ok((key, sim))
            })
            .collect::<Result<Vec<_>>>()?;
        for (key, sim) in sims {
            if sim >= self.min_edge_sim {
                self.edges.insert(key, sim);
            }
        }
        self.nodes.insert(id, profile);
        Ok(())
    }

    /// Copy of the graph without `id` and its incident edges.
    pub fn remove_problem(&self, id: &ProblemId) -> ProblemGraph {
        let nodes = self
            .nodes
            .iter()
            .filter(|(k, _)| *k != id)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|((a, b), _)| a != id && b != id)
            .map(|(k, w)| (k.clone(), *w))
            .collect();
        ProblemGraph {
            nodes,
            edges,
            min_edge_sim: self.min_edge_sim,
        }
    }

    /// Edge list in `id_a<TAB>id_b<TAB>weight` form, sorted, one per line.
    pub fn export_edge_list(&self) -> String {
        let mut out = String::new();
        for ((a, b), w) in &self.edges {
            out.push_str(&format!("{a}\t{b}\t{w}\n"));
        }
        out
    }

    /// Parse an exported edge list against a known node set.
    pub fn parse_edge_list(
        text: &str,
        nodes: BTreeMap<ProblemId, ProblemProfile<Value>>,
        min_edge_sim: Value,
    ) -> Result<Self> {
        let mut edges = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (a, b, w) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), Some(w), None) => (a, b, w),
                _ => {
                    return Err(Error::CorruptManifest {
                        section: format!("graph.tsv line {}", i + 1),
                    })
                }
            };
            let w: Value = w.parse().map_err(|_| Error::CorruptManifest {
                section: format!("graph.tsv line {}: bad weight {w:?}", i + 1),
            })?;
            edges.insert((ProblemId(a.to_string()), ProblemId(b.to_string())), w);
        }
        Self::from_parts(nodes, edges, min_edge_sim).map_err(|e| Error::CorruptManifest {
            section: format!("graph.tsv: {e}"),
        })
    }
}

/// Build the all-pairs similarity graph over a problem set. Pair
/// similarities compute in parallel; edges below `min_edge_sim` are dropped.
pub fn build_graph(
    problems: &[ERProblem],
    cfg: &AnalysisConfig,
    min_edge_sim: Value,
) -> Result<ProblemGraph> {
    if problems.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let profiles: Vec<(ProblemId, ProblemProfile<Value>)> = problems
        .par_iter()
        .map(|p| Ok((p.id(), ProblemProfile::from_problem(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut nodes = BTreeMap::new();
    for (id, profile) in &profiles {
        if nodes.insert(id.clone(), profile.clone()).is_some() {
            return Err(Error::DuplicateProblem { id: id.0.clone() });
        }
    }
    let n = profiles.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let computed: Vec<((ProblemId, ProblemId), Value)> = pairs
        .par_iter()
        .map(|(i, j)| {
            let (ida, pa) = &profiles[*i];
            let (idb, pb) = &profiles[*j];
            let sim = profile_similarity(pa, pb, cfg)?.sim_p;
            let key = if ida < idb {
                (ida.clone(), idb.clone())
            } else {
                (idb.clone(), ida.clone())
            };
            Ok((key, sim))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut edges = BTreeMap::new();
    for (key, sim) in computed {
        if sim >= min_edge_sim {
            edges.insert(key, sim);
        }
    }
    Ok(ProblemGraph {
        nodes,
        edges,
        min_edge_sim,
    })
}

/// Extend a graph with a new problem: its node and its edges to every
/// existing node, computed with the same test, config, and threshold.
pub fn insert_problem(
    graph: &ProblemGraph,
    p_new: &ERProblem,
    cfg: &AnalysisConfig,
) -> Result<ProblemGraph> {
    let mut next = graph.clone();
    next.insert_profile(p_new.id(), ProblemProfile::from_problem(p_new)?, cfg)?;
    Ok(next)
}

#[cfg(test)]
mod tests;
