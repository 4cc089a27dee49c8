//! Budget allocation across clusters and the bootstrap-uncertainty active
//! learning loop.
//!
//! A global labeling budget `b_tot` is split over clusters: every cluster is
//! guaranteed `b_min` labels, singleton clusters are merged away when the
//! guarantee is infeasible, and the remainder is distributed proportionally
//! to cluster vector counts within the non-singleton and singleton groups.
//!
//! Inside one cluster, labels are spent iteratively: a committee of `k`
//! bootstrap-trained trees scores each unlabeled vector by vote disagreement
//! `p(1-p)`, boosted by a record-uniqueness score, and the top `batch`
//! vectors go to the oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::classifier::{train_ensemble, EnsembleModel, LabeledSet, TrainConfig};
use crate::er::{ERProblem, FeatureVector, ProblemId, RecordRef};
use crate::error::{Error, Result};
use crate::graph::{ClusterId, ProblemGraph};
use crate::Value;

/// How training data for a cluster model is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    /// Bootstrap-uncertainty active learning under the labeling budget.
    #[default]
    Bootstrap,
    /// Label the entire pool (no budget).
    Supervised,
}

impl std::str::FromStr for GenerationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bootstrap" => Ok(GenerationMode::Bootstrap),
            "supervised" => Ok(GenerationMode::Supervised),
            other => Err(Error::InvalidValue {
                reason: format!("unknown generation mode {other:?}"),
            }),
        }
    }
}

impl std::fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GenerationMode::Bootstrap => "bootstrap",
            GenerationMode::Supervised => "supervised",
        })
    }
}

/// Ground-truth labels standing in for the human labeler. Lookup is
/// symmetric in the record pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Oracle {
    labels: BTreeMap<(RecordRef, RecordRef), bool>,
}

fn canonical(a: &RecordRef, b: &RecordRef) -> (RecordRef, RecordRef) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl Oracle {
    pub fn new() -> Self {
        Oracle::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = ((RecordRef, RecordRef), bool)>) -> Self {
        let mut labels = BTreeMap::new();
        for ((a, b), label) in pairs {
            labels.insert(canonical(&a, &b), label);
        }
        Oracle { labels }
    }

    /// Read a ground-truth CSV: `left_source,left_id,right_source,right_id,label`
    /// with a header row; labels `0/1/true/false`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let mut labels = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: format!("row {row}: {e}"),
            })?;
            if record.len() != 5 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!("row {row}: expected 5 columns, got {}", record.len()),
                });
            }
            let left = RecordRef::new(&record[0], &record[1])?;
            let right = RecordRef::new(&record[2], &record[3])?;
            let label = match record[4].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        message: format!("row {row}: bad label {other:?}"),
                    })
                }
            };
            labels.insert(canonical(&left, &right), label);
        }
        Ok(Oracle { labels })
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        writer
            .write_record([
                "left_source",
                "left_id",
                "right_source",
                "right_id",
                "label",
            ])
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        for ((a, b), label) in &self.labels {
            writer
                .write_record([
                    a.source_id.as_str(),
                    a.record_id.as_str(),
                    b.source_id.as_str(),
                    b.record_id.as_str(),
                    if *label { "1" } else { "0" },
                ])
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn lookup(&self, a: &RecordRef, b: &RecordRef) -> Option<bool> {
        self.labels.get(&canonical(a, b)).copied()
    }

    /// Label for a feature vector's pair, or `OracleMiss`.
    pub fn label_of(&self, w: &FeatureVector) -> Result<bool> {
        self.lookup(&w.left, &w.right)
            .ok_or_else(|| Error::OracleMiss {
                left: w.left.to_string(),
                right: w.right.to_string(),
            })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn match_count(&self) -> usize {
        self.labels.values().filter(|l| **l).count()
    }

    pub fn insert(&mut self, a: RecordRef, b: RecordRef, label: bool) {
        self.labels.insert(canonical(&a, &b), label);
    }
}

/// Bootstrap-committee disagreement `p(1-p)` with `p = votes/k`. Maximal
/// (0.25) when the committee splits evenly.
pub fn uncertainty(votes_match: usize, k: usize) -> Result<f64> {
    if k == 0 || votes_match > k {
        return Err(Error::VoteOutOfRange {
            votes: votes_match,
            k,
        });
    }
    let p = votes_match as f64 / k as f64;
    Ok(p * (1.0 - p))
}

/// Record-uniqueness scores: how few clusters a record occurs in, in the
/// inverse-document-frequency orientation. A vector's score is the mean of
/// its two records' scores.
#[derive(Debug, Clone)]
pub struct UniquenessIndex {
    occurrences: BTreeMap<RecordRef, usize>,
    total_clusters: usize,
    literal: bool,
}

impl UniquenessIndex {
    /// Count, for every record, the number of clusters it occurs in.
    /// `literal` flips to the as-printed orientation `ln(|C_r| / |C|)`
    /// (non-positive) instead of the IDF orientation `ln(|C| / |C_r|)`.
    pub fn build<'a>(
        clusters: impl IntoIterator<Item = (ClusterId, &'a [ProblemId])>,
        problems: &BTreeMap<ProblemId, &ERProblem>,
        literal: bool,
    ) -> Self {
        let mut per_record: BTreeMap<RecordRef, BTreeSet<ClusterId>> = BTreeMap::new();
        let mut total_clusters = 0usize;
        for (cid, members) in clusters {
            total_clusters += 1;
            for pid in members {
                if let Some(problem) = problems.get(pid) {
                    for v in problem.vectors() {
                        per_record.entry(v.left.clone()).or_default().insert(cid);
                        per_record.entry(v.right.clone()).or_default().insert(cid);
                    }
                }
            }
        }
        UniquenessIndex {
            occurrences: per_record.into_iter().map(|(r, s)| (r, s.len())).collect(),
            total_clusters: total_clusters.max(1),
            literal,
        }
    }

    pub fn record_score(&self, r: &RecordRef) -> f64 {
        let occurs = self.occurrences.get(r).copied().unwrap_or(0).max(1);
        if self.literal {
            (occurs as f64 / self.total_clusters as f64).ln()
        } else {
            (self.total_clusters as f64 / occurs as f64).ln()
        }
    }

    pub fn vector_score(&self, w: &FeatureVector) -> f64 {
        (self.record_score(&w.left) + self.record_score(&w.right)) / 2.0
    }
}

/// Labeling budgets per surviving cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetPlan {
    pub b_tot: usize,
    pub b_min: usize,
    pub per_cluster: BTreeMap<ClusterId, usize>,
    /// Singletons folded into a host cluster, in merge order.
    pub merged_singletons: Vec<(ClusterId, ClusterId)>,
    /// Whether the infeasibility inequality `|C| * b_min > b_tot` held for
    /// the input clustering.
    pub merge_triggered: bool,
}

impl BudgetPlan {
    pub fn total_allocated(&self) -> usize {
        self.per_cluster.values().sum()
    }
}

/// Distribute `b_tot` over clusters.
///
/// While `|C| * b_min > b_tot`, singletons are folded into the non-singleton
/// cluster with the highest mean edge similarity (largest singleton first).
/// Each surviving cluster gets `b_min` plus a share of the remainder,
/// proportional to its vector count within its group (non-singletons and
/// singletons are budgeted separately, weighted by their problem-count
/// ratios). Fractional shares are floored; the flooring dust stays
/// unallocated, keeping the total within `b_tot`.
pub fn allocate_budget(
    clusters: &BTreeMap<ClusterId, Vec<ProblemId>>,
    sizes: &BTreeMap<ClusterId, usize>,
    graph: &ProblemGraph,
    b_tot: usize,
    b_min: usize,
) -> Result<BudgetPlan> {
    if b_tot == 0 || b_min == 0 {
        return Err(Error::InvalidValue {
            reason: format!("budgets must be positive (b_tot={b_tot}, b_min={b_min})"),
        });
    }
    let mut members: BTreeMap<ClusterId, Vec<ProblemId>> = clusters.clone();
    let mut vectors: BTreeMap<ClusterId, usize> = sizes.clone();
    let merge_triggered = members.len() * b_min > b_tot;
    let mut merged_singletons = Vec::new();

    if merge_triggered {
        // largest singleton first, ties by cluster id
        let mut singleton_queue: Vec<ClusterId> = members
            .iter()
            .filter(|(_, m)| m.len() == 1)
            .map(|(c, _)| *c)
            .collect();
        singleton_queue.sort_by_key(|c| (std::cmp::Reverse(vectors[c]), *c));

        for singleton in singleton_queue {
            if members.len() * b_min <= b_tot {
                break;
            }
            let lone = members[&singleton][0].clone();
            let host = members
                .iter()
                .filter(|(c, m)| **c != singleton && m.len() > 1)
                .map(|(c, m)| (*c, graph.mean_similarity_to(&lone, m)))
                .max_by(|(ca, sa), (cb, sb)| {
                    sa.partial_cmp(sb).unwrap().then_with(|| cb.cmp(ca)) // ties to the lower id
                })
                .map(|(c, _)| c);
            let Some(host) = host else {
                break; // no non-singleton cluster left to merge into
            };
            let moved = members.remove(&singleton).unwrap();
            let moved_size = vectors.remove(&singleton).unwrap();
            members.get_mut(&host).unwrap().extend(moved);
            *vectors.get_mut(&host).unwrap() += moved_size;
            merged_singletons.push((singleton, host));
        }
    }

    if members.len() * b_min > b_tot {
        return Err(Error::InfeasibleBudget {
            clusters: members.len(),
            b_min,
            b_tot,
        });
    }

    let total_problems: usize = members.values().map(|m| m.len()).sum();
    let b_rem = b_tot - b_min * members.len();

    let singleton_ids: BTreeSet<ClusterId> = members
        .iter()
        .filter(|(_, m)| m.len() == 1)
        .map(|(c, _)| *c)
        .collect();
    let ns_problems: usize = members
        .iter()
        .filter(|(c, _)| !singleton_ids.contains(c))
        .map(|(_, m)| m.len())
        .sum();
    let s_problems = total_problems - ns_problems;
    let ratio_ns = ns_problems as f64 / total_problems as f64;
    let ratio_s = s_problems as f64 / total_problems as f64;

    let ns_vectors: usize = vectors
        .iter()
        .filter(|(c, _)| !singleton_ids.contains(c))
        .map(|(_, v)| *v)
        .sum();
    let s_vectors: usize = vectors
        .iter()
        .filter(|(c, _)| singleton_ids.contains(c))
        .map(|(_, v)| *v)
        .sum();

    let mut per_cluster = BTreeMap::new();
    for c in members.keys() {
        let (group_vectors, ratio) = if singleton_ids.contains(c) {
            (s_vectors, ratio_s)
        } else {
            (ns_vectors, ratio_ns)
        };
        let share = if group_vectors == 0 {
            0.0
        } else {
            vectors[c] as f64 / group_vectors as f64 * b_rem as f64 * ratio
        };
        per_cluster.insert(*c, b_min + share.floor() as usize);
    }

    Ok(BudgetPlan {
        b_tot,
        b_min,
        per_cluster,
        merged_singletons,
        merge_triggered,
    })
}

/// Inputs for one cluster's active-learning run.
#[derive(Debug, Clone)]
pub struct AlParams {
    pub budget: usize,
    pub batch: usize,
    pub k: usize,
    pub seed: u64,
    pub tree: TrainConfig,
}

/// Result of one AL run: the acquired labels, the final model trained on all
/// of them, and the retained vectors used later for routing.
#[derive(Debug, Clone)]
pub struct AlOutcome {
    pub labeled: LabeledSet,
    pub model: EnsembleModel<Value>,
    pub retained: Vec<FeatureVector>,
    pub spent: usize,
    pub rounds: usize,
}

fn euclidean(a: &[Value], b: &[Value]) -> Value {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<Value>()
        .sqrt()
}

fn mean(values: &[Value]) -> Value {
    values.iter().sum::<Value>() / values.len() as Value
}

/// Label the whole pool and train on it. The "supervised" generation mode.
pub fn run_supervised(
    pool: &[FeatureVector],
    oracle: &Oracle,
    k: usize,
    seed: u64,
    tree: &TrainConfig,
) -> Result<AlOutcome> {
    if pool.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let arity = pool[0].arity();
    let mut labeled = LabeledSet::new(Vec::new(), arity)?;
    for w in pool {
        labeled.push(w.clone().with_label(oracle.label_of(w)?))?;
    }
    let model = train_ensemble(&labeled, k, seed, tree)?;
    let retained = labeled.vectors().to_vec();
    let spent = labeled.len();
    Ok(AlOutcome {
        labeled,
        model,
        retained,
        spent,
        rounds: 1,
    })
}

/// Bootstrap-uncertainty active learning over one cluster's pool.
///
/// Seeding takes `2*batch` vectors by farthest-point sampling; if that set is
/// single-class, the max- and min-mean-similarity vectors are labeled
/// alternately until both classes appear or `4*batch` labels are spent. Each
/// round then trains the k-committee, scores the remaining pool by
/// `unc(w) * (1 + s_norm(w))` (uniqueness min-max-normalized over the
/// remaining pool), and labels the top `batch`. Stops when the budget is
/// spent or the pool is exhausted; the final model retrains on everything
/// acquired.
pub fn run_bootstrap_al(
    pool: &[FeatureVector],
    uniqueness: &UniquenessIndex,
    oracle: &Oracle,
    params: &AlParams,
) -> Result<AlOutcome> {
    if pool.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if params.batch == 0 {
        return Err(Error::InvalidValue {
            reason: "batch must be positive".into(),
        });
    }
    let arity = pool[0].arity();

    // Budget covers the pool: exhaustive labeling, no selection needed.
    if params.budget >= pool.len() {
        let mut outcome = run_supervised(pool, oracle, params.k, params.seed, &params.tree)?;
        outcome.rounds = 0;
        return Ok(outcome);
    }

    // Non-exhaustive path needs room for the seed set plus one batch.
    if params.budget < 3 * params.batch {
        return Err(Error::BudgetExhaustedAtSeed {
            budget: params.budget,
        });
    }

    let mut unlabeled: Vec<usize> = (0..pool.len()).collect();
    let mut labeled = LabeledSet::new(Vec::new(), arity)?;
    let mut spent = 0usize;
    let acquire = |idx: usize,
                   unlabeled: &mut Vec<usize>,
                   labeled: &mut LabeledSet,
                   spent: &mut usize|
     -> Result<()> {
        let position = unlabeled
            .iter()
            .position(|i| *i == idx)
            .expect("index still unlabeled");
        unlabeled.remove(position);
        let w = &pool[idx];
        labeled.push(w.clone().with_label(oracle.label_of(w)?))?;
        *spent += 1;
        Ok(())
    };

    // --- seed phase: farthest-point sampling from the max-mean vector
    let mean_sim: Vec<Value> = pool.iter().map(|w| mean(&w.values)).collect();
    let start = (0..pool.len())
        .max_by(|a, b| mean_sim[*a].partial_cmp(&mean_sim[*b]).unwrap())
        .expect("non-empty pool");
    let mut selected = vec![start];
    let mut min_dist: Vec<Value> = pool
        .iter()
        .map(|w| euclidean(&w.values, &pool[start].values))
        .collect();
    while selected.len() < 2 * params.batch {
        let next = (0..pool.len())
            .filter(|i| !selected.contains(i))
            .max_by(|a, b| min_dist[*a].partial_cmp(&min_dist[*b]).unwrap())
            .expect("pool larger than seed set");
        selected.push(next);
        for (i, d) in min_dist.iter_mut().enumerate() {
            let nd = euclidean(&pool[i].values, &pool[next].values);
            if nd < *d {
                *d = nd;
            }
        }
    }
    for idx in selected {
        acquire(idx, &mut unlabeled, &mut labeled, &mut spent)?;
    }

    // --- class repair: alternate max- and min-mean-similarity lookups
    let class_cap = (4 * params.batch).min(params.budget);
    let mut take_max = true;
    while !labeled.has_both_classes() && spent < class_cap && !unlabeled.is_empty() {
        let pick = if take_max {
            *unlabeled
                .iter()
                .max_by(|a, b| mean_sim[**a].partial_cmp(&mean_sim[**b]).unwrap())
                .unwrap()
        } else {
            *unlabeled
                .iter()
                .min_by(|a, b| mean_sim[**a].partial_cmp(&mean_sim[**b]).unwrap())
                .unwrap()
        };
        take_max = !take_max;
        acquire(pick, &mut unlabeled, &mut labeled, &mut spent)?;
    }
    if !labeled.has_both_classes() {
        if spent >= params.budget {
            return Err(Error::BudgetExhaustedAtSeed {
                budget: params.budget,
            });
        }
        return Err(Error::SingleClassTrainingSet);
    }

    // --- uncertainty rounds
    let raw_uniq: Vec<f64> = pool.iter().map(|w| uniqueness.vector_score(w)).collect();
    let mut rounds = 0usize;
    while spent < params.budget && !unlabeled.is_empty() {
        rounds += 1;
        let committee = train_ensemble(
            &labeled,
            params.k,
            crate::rng::split_seed(params.seed, "al-round", rounds as u64),
            &params.tree,
        )?;
        let lo = unlabeled
            .iter()
            .map(|i| raw_uniq[*i])
            .fold(f64::INFINITY, f64::min);
        let hi = unlabeled
            .iter()
            .map(|i| raw_uniq[*i])
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let mut scored: Vec<(f64, usize)> = unlabeled
            .iter()
            .map(|i| {
                let votes = committee.match_votes(&pool[*i].values);
                let unc = uncertainty(votes, params.k).expect("votes <= k");
                let s_norm = if span > 0.0 {
                    (raw_uniq[*i] - lo) / span
                } else {
                    0.0
                };
                (unc * (1.0 + s_norm), *i)
            })
            .collect();
        // highest score first, pool order breaking ties
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let take = params.batch.min(params.budget - spent).min(scored.len());
        for (_, idx) in scored.into_iter().take(take) {
            acquire(idx, &mut unlabeled, &mut labeled, &mut spent)?;
        }
    }

    let model = train_ensemble(
        &labeled,
        params.k,
        crate::rng::split_seed(params.seed, "al-final", 0),
        &params.tree,
    )?;
    let retained = labeled.vectors().to_vec();
    Ok(AlOutcome {
        labeled,
        model,
        retained,
        spent,
        rounds,
    })
}
