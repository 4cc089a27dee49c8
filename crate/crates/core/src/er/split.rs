//! Whole-problem train/serve split and arity validation.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

use super::types::ERProblem;

/// Shared feature arity of a problem set, or the first offender.
pub fn validate_arity(problems: &[ERProblem]) -> Result<usize> {
    let first = problems.first().ok_or(Error::EmptyTrainingSet)?;
    let arity = first.arity();
    for p in problems {
        if p.arity() != arity {
            return Err(Error::ArityMismatch {
                context: format!("problem {}", p.id()),
                expected: arity,
                got: p.arity(),
            });
        }
    }
    Ok(arity)
}

/// Split problems into an initial set and an unsolved set by a seeded uniform
/// shuffle of whole problems. `|initial| = round(ratio_init * total)`, with at
/// least one problem on each side. Both sides come back sorted by problem id.
pub fn split_by_source_pair(
    problems: Vec<ERProblem>,
    ratio_init: f64,
    seed: u64,
) -> Result<(Vec<ERProblem>, Vec<ERProblem>)> {
    if problems.len() < 2 {
        return Err(Error::TooFewProblems {
            got: problems.len(),
        });
    }
    if !(ratio_init > 0.0 && ratio_init < 1.0) {
        return Err(Error::InvalidValue {
            reason: format!("ratio_init must be in (0, 1), got {ratio_init}"),
        });
    }
    let total = problems.len();
    let n_init = ((ratio_init * total as f64).round() as usize).clamp(1, total - 1);

    let mut ordered = problems;
    ordered.sort_by_key(|p| p.id());
    let mut rng = rng::stream(seed, "split", 0);
    ordered.shuffle(&mut rng);

    let unsolved = ordered.split_off(n_init);
    let mut initial = ordered;
    initial.sort_by_key(|p| p.id());
    let mut unsolved = unsolved;
    unsolved.sort_by_key(|p| p.id());
    Ok((initial, unsolved))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::er::{FeatureVector, RecordRef, SourcePair};

    fn problem(a: &str, b: &str) -> ERProblem {
        let pair = SourcePair::new(a, b);
        let v = FeatureVector::new(
            RecordRef::new(pair.a.clone(), "r1").unwrap(),
            RecordRef::new(pair.b.clone(), "x1").unwrap(),
            vec![0.5],
        )
        .unwrap();
        ERProblem::new(pair, vec!["f1".into()], vec![v]).unwrap()
    }

    fn corpus(n: usize) -> Vec<ERProblem> {
        (0..n).map(|i| problem(&format!("s{i:03}"), "z")).collect()
    }

    #[test]
    fn split_sizes_follow_rounding() {
        let (i, u) = split_by_source_pair(corpus(10), 0.3, 7).unwrap();
        assert_eq!(i.len(), 3);
        assert_eq!(u.len(), 7);
        // an even corpus halves exactly
        let (i, u) = split_by_source_pair(corpus(276), 0.5, 7).unwrap();
        assert_eq!(i.len(), 138);
        assert_eq!(u.len(), 138);
    }

    #[test]
    fn split_guarantees_one_per_side() {
        let (i, u) = split_by_source_pair(corpus(2), 0.01, 7).unwrap();
        assert_eq!(i.len(), 1);
        assert_eq!(u.len(), 1);
        let (i, u) = split_by_source_pair(corpus(2), 0.99, 7).unwrap();
        assert_eq!(i.len(), 1);
        assert_eq!(u.len(), 1);
    }

    #[test]
    fn split_is_a_partition_and_deterministic() {
        let all: BTreeSet<_> = corpus(9).iter().map(|p| p.id()).collect();
        let (i1, u1) = split_by_source_pair(corpus(9), 0.5, 42).unwrap();
        let (i2, u2) = split_by_source_pair(corpus(9), 0.5, 42).unwrap();
        let ids = |v: &[ERProblem]| v.iter().map(|p| p.id()).collect::<BTreeSet<_>>();
        assert_eq!(ids(&i1), ids(&i2));
        assert_eq!(ids(&u1), ids(&u2));
        let mut union = ids(&i1);
        union.extend(ids(&u1));
        assert_eq!(union, all);
        assert!(ids(&i1).is_disjoint(&ids(&u1)));
        // a different seed reshuffles
        let (i3, _) = split_by_source_pair(corpus(9), 0.5, 43).unwrap();
        assert!(ids(&i1) != ids(&i3) || i1.len() == 9);
    }

    #[test]
    fn split_rejects_degenerate_input() {
        assert!(matches!(
            split_by_source_pair(corpus(1), 0.5, 1),
            Err(Error::TooFewProblems { got: 1 })
        ));
        assert!(split_by_source_pair(corpus(3), 0.0, 1).is_err());
        assert!(split_by_source_pair(corpus(3), 1.0, 1).is_err());
    }

    #[test]
    fn arity_validation() {
        let mut ps = corpus(3);
        assert_eq!(validate_arity(&ps).unwrap(), 1);
        assert_eq!(validate_arity(&corpus(1)).unwrap(), 1);
        let pair = SourcePair::new("weird", "zz");
        let v = FeatureVector::new(
            RecordRef::new("weird", "r1").unwrap(),
            RecordRef::new("zz", "x1").unwrap(),
            vec![0.5, 0.6],
        )
        .unwrap();
        ps.push(ERProblem::new(pair, vec!["f1".into(), "f2".into()], vec![v]).unwrap());
        assert!(matches!(
            validate_arity(&ps),
            Err(Error::ArityMismatch { .. })
        ));
    }
}
