//! Core domain types: records, feature vectors, and ER problems.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Value;

/// Reference to one record of one data source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordRef {
    pub source_id: String,
    pub record_id: String,
}

impl RecordRef {
    pub fn new(source_id: impl Into<String>, record_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        let record_id = record_id.into();
        if source_id.is_empty() || record_id.is_empty() {
            return Err(Error::InvalidValue {
                reason: format!("empty record reference ({source_id:?}, {record_id:?})"),
            });
        }
        Ok(RecordRef {
            source_id,
            record_id,
        })
    }
}

impl fmt::Display for RecordRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.source_id, self.record_id)
    }
}

/// Ordered pair of data sources naming one ER problem. Always normalized so
/// `a <= b` lexicographically; self-pairs (`a == b`) are allowed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourcePair {
    pub a: String,
    pub b: String,
}

impl SourcePair {
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Self {
        let x = x.into();
        let y = y.into();
        if x <= y {
            SourcePair { a: x, b: y }
        } else {
            SourcePair { a: y, b: x }
        }
    }

    pub fn is_self_pair(&self) -> bool {
        self.a == self.b
    }

    pub fn id(&self) -> ProblemId {
        ProblemId(format!("{}|{}", self.a, self.b))
    }
}

impl fmt::Display for SourcePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Stable identifier of an ER problem, derived from its source pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProblemId(pub String);

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl ProblemId {
    /// Filesystem-safe rendering used for archive file names.
    pub fn file_stem(&self) -> String {
        self.0
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }
}

/// Per-feature similarities of one record pair, each in `[0, 1]`.
///
/// The optional label is only ever populated from oracle files; feature CSVs
/// are label-free.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub left: RecordRef,
    pub right: RecordRef,
    pub values: Vec<Value>,
    pub label: Option<bool>,
}

impl FeatureVector {
    pub fn new(left: RecordRef, right: RecordRef, values: Vec<Value>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(Error::ValueOutOfRange {
                    row: 0,
                    column: format!("f_{}", i + 1),
                    value: *v,
                });
            }
        }
        Ok(FeatureVector {
            left,
            right,
            values,
            label: None,
        })
    }

    pub fn arity(&self) -> usize {
        self.values.len()
    }

    /// Record pair in canonical order, independent of left/right orientation.
    pub fn pair_key(&self) -> (RecordRef, RecordRef) {
        if self.left <= self.right {
            (self.left.clone(), self.right.clone())
        } else {
            (self.right.clone(), self.left.clone())
        }
    }

    pub fn with_label(mut self, label: bool) -> Self {
        self.label = Some(label);
        self
    }
}

/// All similarity feature vectors between one pair of data sources.
#[derive(Debug, Clone, PartialEq)]
pub struct ERProblem {
    pair: SourcePair,
    feature_names: Vec<String>,
    vectors: Vec<FeatureVector>,
}

impl ERProblem {
    /// Build a problem from vectors that already sit in `pair` orientation
    /// (`left.source_id == pair.a`, `right.source_id == pair.b`).
    ///
    /// Vectors are sorted by `(left.record_id, right.record_id)`. Reflexive
    /// pairs in self-pair problems and duplicate record pairs are rejected.
    pub fn new(
        pair: SourcePair,
        feature_names: Vec<String>,
        mut vectors: Vec<FeatureVector>,
    ) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidValue {
                reason: format!("problem {} has no vectors", pair.id()),
            });
        }
        let arity = feature_names.len();
        let mut seen: HashSet<(RecordRef, RecordRef)> = HashSet::with_capacity(vectors.len());
        for v in &vectors {
            if v.arity() != arity {
                return Err(Error::ArityMismatch {
                    context: format!("problem {}", pair.id()),
                    expected: arity,
                    got: v.arity(),
                });
            }
            if v.left.source_id != pair.a || v.right.source_id != pair.b {
                return Err(Error::InvalidValue {
                    reason: format!(
                        "vector ({}, {}) does not belong to problem {}",
                        v.left,
                        v.right,
                        pair.id()
                    ),
                });
            }
            if pair.is_self_pair() && v.left.record_id == v.right.record_id {
                return Err(Error::InvalidValue {
                    reason: format!(
                        "reflexive pair {} in self-pair problem {}",
                        v.left,
                        pair.id()
                    ),
                });
            }
            if !seen.insert(v.pair_key()) {
                return Err(Error::DuplicatePair {
                    problem: pair.id().0,
                    left: v.left.to_string(),
                    right: v.right.to_string(),
                });
            }
        }
        vectors.sort_by(|x, y| {
            (&x.left.record_id, &x.right.record_id).cmp(&(&y.left.record_id, &y.right.record_id))
        });
        Ok(ERProblem {
            pair,
            feature_names,
            vectors,
        })
    }

    pub fn id(&self) -> ProblemId {
        self.pair.id()
    }

    pub fn pair(&self) -> &SourcePair {
        &self.pair
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn arity(&self) -> usize {
        self.feature_names.len()
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
}
