//! Knob sensitivity: the pipeline's qualitative behavior (regime recovery,
//! high served F1) must hold across every distribution test, both uniqueness
//! orientations, and both generation modes — not just the defaults.

use std::collections::BTreeSet;

use er_repo::active::GenerationMode;
use er_repo::dist::DistTest;
use er_repo::eval::{compute_metrics, generate_synthetic, SynthSpec};
use er_repo::repository::{init_repository, RepoConfig};

fn corpus() -> er_repo::eval::GeneratedCorpus {
    let mut spec = SynthSpec::two_regime_default(77);
    spec.vectors_per_problem = 100;
    spec.separation = 0.5;
    generate_synthetic(&spec).unwrap()
}

fn check(config: RepoConfig, label: &str) {
    let corpus = corpus();
    let mut problems = corpus.problems.clone();
    // hold out one problem per regime for serving
    let held_b = problems.remove(7);
    let held_a = problems.remove(0);

    let repo = init_repository(problems, config, &corpus.oracle).unwrap();
    assert_eq!(repo.clustering().len(), 2, "{label}: cluster count");
    for members in repo.clustering().clusters.values() {
        let regimes: BTreeSet<usize> = members.iter().map(|m| corpus.regime_of[m]).collect();
        assert_eq!(regimes.len(), 1, "{label}: cluster mixes regimes");
    }
    for held in [&held_a, &held_b] {
        let report = repo.sel_base(held).unwrap();
        let chosen_regime = corpus.regime_of[&repo.models()[&report.chosen_cluster].members[0]];
        assert_eq!(
            chosen_regime, corpus.regime_of[&held.id()],
            "{label}: routed to the wrong regime"
        );
        let f1 = compute_metrics(&report.predictions, &corpus.oracle)
            .unwrap()
            .f1;
        assert!(f1 >= 0.9, "{label}: served F1 {f1}");
    }
}

#[test]
fn every_distribution_test_recovers_regimes() {
    for test in [DistTest::Ks, DistTest::Wd, DistTest::Psi] {
        let mut config = RepoConfig {
            b_tot: 300,
            k: 25,
            ..RepoConfig::default()
        };
        config.analysis.test = test;
        check(config, &format!("test={test}"));
    }
}

#[test]
fn both_uniqueness_orientations_work() {
    for literal in [false, true] {
        let config = RepoConfig {
            b_tot: 300,
            k: 25,
            uniqueness_literal: literal,
            ..RepoConfig::default()
        };
        check(config, &format!("uniqueness_literal={literal}"));
    }
}

#[test]
fn supervised_generation_matches_bootstrap_quality() {
    let config = RepoConfig {
        generation: GenerationMode::Supervised,
        k: 25,
        ..RepoConfig::default()
    };
    check(config, "generation=supervised");
}

#[test]
fn pruned_graphs_still_cluster() {
    // dropping weak cross-regime edges must not break regime recovery
    let config = RepoConfig {
        b_tot: 300,
        k: 25,
        min_edge_sim: 0.5,
        ..RepoConfig::default()
    };
    check(config, "min_edge_sim=0.5");
}
