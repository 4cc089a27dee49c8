//! Synthetic multi-source corpus generator.
//!
//! Each regime defines per-feature truncated-normal parameters for matches
//! and non-matches; sources within a regime share them, so within-regime
//! problem pairs are distribution-similar and cross-regime pairs are not.
//! Every problem draws from its own RNG stream, so the corpus is stable
//! under any generation order.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngExt;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::active::Oracle;
use crate::dist::{ks_statistic, ProblemProfile};
use crate::er::{ERProblem, FeatureVector, ProblemId, RecordRef, SourcePair};
use crate::error::{Error, Result};
use crate::rng;
use crate::Value;

/// Per-feature truncated-normal parameters for one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub match_mean: Vec<f64>,
    pub match_std: Vec<f64>,
    pub non_match_mean: Vec<f64>,
    pub non_match_std: Vec<f64>,
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub regimes: Vec<RegimeSpec>,
    pub sources_per_regime: usize,
    pub vectors_per_problem: usize,
    pub match_ratio: f64,
    pub feature_names: Vec<String>,
    /// Required separation: mean per-feature KS distance must be `>= this`
    /// across regimes and `< this / 2` within one.
    pub separation: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// The two-regime corpus used throughout the test suites: regime 1's
    /// match distribution coincides with regime 0's non-match distribution,
    /// so a single pooled model faces contradictory labels while per-regime
    /// models stay cleanly separable.
    pub fn two_regime_default(seed: u64) -> Self {
        SynthSpec {
            regimes: vec![
                RegimeSpec {
                    match_mean: vec![0.88, 0.9, 0.85, 0.92],
                    match_std: vec![0.05; 4],
                    non_match_mean: vec![0.58, 0.6, 0.55, 0.62],
                    non_match_std: vec![0.07; 4],
                },
                RegimeSpec {
                    match_mean: vec![0.58, 0.6, 0.55, 0.62],
                    match_std: vec![0.07; 4],
                    non_match_mean: vec![0.25, 0.28, 0.22, 0.3],
                    non_match_std: vec![0.07; 4],
                },
            ],
            sources_per_regime: 4,
            vectors_per_problem: 500,
            match_ratio: 0.2,
            feature_names: (1..=4).map(|i| format!("f{i}")).collect(),
            separation: 0.2,
            seed,
        }
    }

    pub fn arity(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Err(Error::InvalidSpec { reason });
        if self.regimes.is_empty() {
            return invalid("at least one regime required".into());
        }
        if self.sources_per_regime < 2 {
            return invalid("need at least 2 sources per regime".into());
        }
        if self.vectors_per_problem == 0 {
            return invalid("vectors_per_problem must be positive".into());
        }
        if !(self.match_ratio > 0.0 && self.match_ratio < 1.0) {
            return invalid(format!(
                "match_ratio must be in (0, 1), got {}",
                self.match_ratio
            ));
        }
        if self.feature_names.is_empty() {
            return invalid("at least one feature required".into());
        }
        for (r, regime) in self.regimes.iter().enumerate() {
            for params in [
                &regime.match_mean,
                &regime.match_std,
                &regime.non_match_mean,
                &regime.non_match_std,
            ] {
                if params.len() != self.arity() {
                    return invalid(format!(
                        "regime {r} parameter arity {} != feature arity {}",
                        params.len(),
                        self.arity()
                    ));
                }
            }
            for mean in regime.match_mean.iter().chain(&regime.non_match_mean) {
                if !(0.0..=1.0).contains(mean) {
                    return invalid(format!("regime {r} mean {mean} outside [0, 1]"));
                }
            }
            for std in regime.match_std.iter().chain(&regime.non_match_std) {
                if !(*std > 0.0 && *std <= 0.5) {
                    return invalid(format!("regime {r} std {std} outside (0, 0.5]"));
                }
            }
        }
        Ok(())
    }

    fn source_name(&self, regime: usize, index: usize) -> String {
        format!("r{regime}s{index}")
    }
}

/// A generated corpus: the problems, a complete oracle over their pairs, and
/// each problem's true regime (for clustering-recovery checks).
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub problems: Vec<ERProblem>,
    pub oracle: Oracle,
    pub regime_of: BTreeMap<ProblemId, usize>,
}

/// Standard normal via the Marsaglia polar method; spare value discarded to
/// keep the stream layout simple.
fn standard_normal(rng: &mut Pcg64) -> f64 {
    loop {
        let u = 2.0 * rng.random::<f64>() - 1.0;
        let v = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Normal rejection-sampled into `[0, 1]`.
fn truncated_normal(rng: &mut Pcg64, mean: f64, std: f64) -> Result<f64> {
    for _ in 0..100_000 {
        let x = mean + std * standard_normal(rng);
        if (0.0..=1.0).contains(&x) {
            return Ok(x);
        }
    }
    Err(Error::InvalidSpec {
        reason: format!("truncated normal ({mean}, {std}) rejected every sample"),
    })
}

/// Generate the corpus: one problem per within-regime source pair, a fixed
/// match ratio, and a complete ground-truth oracle.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let n = spec.vectors_per_problem;
    let n_match = ((spec.match_ratio * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let n_non = n - n_match;
    // shared per-source record universe, sized so non-match pairs can be
    // sampled without collisions
    let universe = n_match.max((n_non as f64).sqrt().ceil() as usize + 2);

    let mut problems = Vec::new();
    let mut oracle = Oracle::new();
    let mut regime_of = BTreeMap::new();
    let mut problem_index = 0u64;

    for (r, regime) in spec.regimes.iter().enumerate() {
        for i in 0..spec.sources_per_regime {
            for j in (i + 1)..spec.sources_per_regime {
                let pair = SourcePair::new(spec.source_name(r, i), spec.source_name(r, j));
                let mut rng = rng::stream(spec.seed, "synth-problem", problem_index);
                problem_index += 1;

                let mut vectors = Vec::with_capacity(n);
                // matches: entity e of one source pairs with entity e of the other
                for e in 0..n_match {
                    let left = RecordRef::new(pair.a.clone(), format!("x{e}"))?;
                    let right = RecordRef::new(pair.b.clone(), format!("x{e}"))?;
                    let values = (0..spec.arity())
                        .map(|f| {
                            truncated_normal(&mut rng, regime.match_mean[f], regime.match_std[f])
                        })
                        .collect::<Result<Vec<Value>>>()?;
                    oracle.insert(left.clone(), right.clone(), true);
                    vectors.push(FeatureVector {
                        left,
                        right,
                        values,
                        label: None,
                    });
                }
                // non-matches: distinct entity indices, no duplicate pairs
                let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
                while used.len() < n_non {
                    let a = rng.random_range(0..universe);
                    let b = rng.random_range(0..universe);
                    if a == b || !used.insert((a, b)) {
                        continue;
                    }
                    let left = RecordRef::new(pair.a.clone(), format!("x{a}"))?;
                    let right = RecordRef::new(pair.b.clone(), format!("x{b}"))?;
                    let values = (0..spec.arity())
                        .map(|f| {
                            truncated_normal(
                                &mut rng,
                                regime.non_match_mean[f],
                                regime.non_match_std[f],
                            )
                        })
                        .collect::<Result<Vec<Value>>>()?;
                    oracle.insert(left.clone(), right.clone(), false);
                    vectors.push(FeatureVector {
                        left,
                        right,
                        values,
                        label: None,
                    });
                }
                let problem = ERProblem::new(pair, spec.feature_names.clone(), vectors)?;
                regime_of.insert(problem.id(), r);
                problems.push(problem);
            }
        }
    }
    problems.sort_by_key(|p| p.id());

    verify_separation(&problems, &regime_of, spec.separation)?;
    Ok(GeneratedCorpus {
        problems,
        oracle,
        regime_of,
    })
}

/// Mean per-feature KS distance between two problems.
fn mean_ks(a: &ProblemProfile<Value>, b: &ProblemProfile<Value>) -> Result<Value> {
    let mut total = 0.0;
    for f in 0..a.arity() {
        total += ks_statistic(&a.features[f], &b.features[f])?;
    }
    Ok(total / a.arity() as Value)
}

/// Check the generated corpus separates: cross-regime mean KS at least
/// `delta`, within-regime below `delta / 2`.
fn verify_separation(
    problems: &[ERProblem],
    regime_of: &BTreeMap<ProblemId, usize>,
    delta: f64,
) -> Result<()> {
    let profiles: Vec<(usize, ProblemProfile<Value>)> = problems
        .iter()
        .map(|p| Ok((regime_of[&p.id()], ProblemProfile::from_problem(p)?)))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..profiles.len() {
        for j in (i + 1)..profiles.len() {
            let ks = mean_ks(&profiles[i].1, &profiles[j].1)?;
            let same = profiles[i].0 == profiles[j].0;
            if same && ks >= delta / 2.0 {
                return Err(Error::InvalidSpec {
                    reason: format!(
                        "within-regime KS {ks:.4} >= {:.4} between {} and {}",
                        delta / 2.0,
                        problems[i].id(),
                        problems[j].id()
                    ),
                });
            }
            if !same && ks < delta {
                return Err(Error::InvalidSpec {
                    reason: format!(
                        "cross-regime KS {ks:.4} < {delta:.4} between {} and {}",
                        problems[i].id(),
                        problems[j].id()
                    ),
                });
            }
        }
    }
    Ok(())
}
