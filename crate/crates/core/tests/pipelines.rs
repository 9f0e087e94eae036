use std::collections::BTreeMap;

use adaptive_gt::adaptive::{
    budgets_noiseless, run_noiseless_two_stage, PipelineKind, PipelineOptions, StagedStrategy,
};
use adaptive_gt::harness::{resolve_budgets, run_experiment, ExperimentConfig, PipelineSpec};
use adaptive_gt::rng::{Stream, TrialStreams};
use adaptive_gt::{CardinalitySpec, Channel, DefectiveSet, ProblemInstance, TestPool};

const FIXTURES: &str = include_str!("fixtures/multipliers.json");

fn fixture(name: &str) -> ExperimentConfig {
    let all: BTreeMap<String, serde_json::Value> = serde_json::from_str(FIXTURES).unwrap();
    serde_json::from_value(all[name].clone()).unwrap()
}

fn strategy(cfg: &ExperimentConfig, trial: u64) -> (StagedStrategy, ProblemInstance) {
    let (kind, options) = match &cfg.pipeline {
        PipelineSpec::Alg1 { options, .. } => (PipelineKind::Alg1, *options),
        PipelineSpec::Alg2 { options, .. } => (PipelineKind::Alg2, *options),
        PipelineSpec::Noiseless { options, .. } => (PipelineKind::Noiseless, *options),
        PipelineSpec::ZChannel { options, .. } => (PipelineKind::ZChannel, *options),
        other => panic!("not a staged pipeline: {other:?}"),
    };
    let streams = TrialStreams::new(cfg.master_seed, trial);
    let inst = ProblemInstance::sample(cfg.p, cfg.cardinality, cfg.channel, &mut streams.stream(Stream::Truth))
        .unwrap();
    let s = StagedStrategy::new(kind, &inst, resolve_budgets(cfg).unwrap(), options, streams).unwrap();
    (s, inst)
}

const STAGED: [&str; 4] = ["alg1_small", "alg2_small", "noiseless_threshold_small", "zchannel"];

#[test]
fn rounds_replay_from_truncated_transcripts() {
    for name in STAGED {
        let cfg = fixture(name);
        for trial in 0..5 {
            let (s, inst) = strategy(&cfg, trial);
            let run = s.execute(&inst.truth).unwrap();
            let t = &run.transcript;
            for round in 0..s.rounds() {
                let planned: Vec<TestPool> = s
                    .plan_round(round, &t.truncated(round))
                    .unwrap()
                    .into_iter()
                    .flat_map(|(_, pools)| pools)
                    .collect();
                let done: Vec<TestPool> = t.stage(round).iter().map(|e| e.pool.clone()).collect();
                assert_eq!(planned, done, "{name} trial {trial} round {round}");
            }
            assert_eq!(s.estimate(t).unwrap(), run.estimate);
        }
    }
}

#[test]
fn stage_counts_and_totals() {
    for (name, rounds) in [("alg1_small", 2), ("alg2_small", 3), ("noiseless_threshold_small", 2), ("zchannel", 3)] {
        let cfg = fixture(name);
        let (s, inst) = strategy(&cfg, 1);
        assert_eq!(s.rounds(), rounds);
        let t = s.execute(&inst.truth).unwrap().transcript;
        assert_eq!(t.stage_count(), rounds, "{name}");
        let names: Vec<&str> = t.stage_marks().iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["stage1", "stage2", "stage3"][..rounds]);
        let sum: usize = (0..rounds).map(|r| t.stage(r).len()).sum();
        assert_eq!(sum, t.len());
        let b = resolve_budgets(&cfg).unwrap();
        assert_eq!(t.stage(0).len(), b.n1, "{name}");
    }
}

#[test]
fn harness_counts_every_test() {
    let mut cfg = fixture("alg2_small");
    cfg.trials = 20;
    let res = run_experiment(&cfg).unwrap();
    for (i, tr) in res.trials.iter().enumerate() {
        let (s, inst) = strategy(&cfg, i as u64);
        let t = s.execute(&inst.truth).unwrap().transcript;
        assert_eq!(tr.tests_used, t.len());
    }
}

#[test]
fn small_fixtures_recover_exactly() {
    for name in ["alg1_small", "alg2_small", "noiseless_threshold_small"] {
        let s = run_experiment(&fixture(name)).unwrap().summary;
        assert_eq!(s.trials, 100);
        assert!(1.0 - s.pe_hat >= 0.99, "{name}: pe {}", s.pe_hat);
    }
}

#[test]
fn zchannel_pipeline_succeeds() {
    let s = run_experiment(&fixture("zchannel")).unwrap().summary;
    assert!(1.0 - s.pe_hat >= 0.9, "pe {}", s.pe_hat);
}

#[test]
fn noiseless_with_no_defectives() {
    let p = 64;
    let b = budgets_noiseless(p, 0, 2.0, 2.0, 0.5).unwrap();
    let inst = ProblemInstance::with_truth(Channel::noiseless(), DefectiveSet::empty(p));
    assert_eq!(inst.cardinality, CardinalitySpec::Exact(0));
    let run = run_noiseless_two_stage(&inst, b, PipelineOptions::default(), TrialStreams::new(3, 0)).unwrap();
    assert!(run.estimate.is_empty());
    assert_eq!(run.transcript.len(), b.n1);
}

fn losses(cfg: &ExperimentConfig) -> Vec<usize> {
    run_experiment(cfg)
        .unwrap()
        .trials
        .iter()
        .map(|t| t.distance.unwrap_or(cfg.p))
        .collect()
}

fn sign_test_p(dec: usize, m: usize) -> f64 {
    let mut total = 0.0;
    for j in dec..=m {
        let mut c = 1.0;
        for i in 0..j {
            c = c * (m - i) as f64 / (i + 1) as f64;
        }
        total += c;
    }
    total / 2f64.powi(m as i32)
}

/// Paired comparison on common random numbers: more budget should not hurt.
fn assert_budget_helps(low: &ExperimentConfig, high: &ExperimentConfig) {
    let (a, b) = (losses(low), losses(high));
    let better = a.iter().zip(&b).filter(|(x, y)| y < x).count();
    let worse = a.iter().zip(&b).filter(|(x, y)| y > x).count();
    let pval = sign_test_p(better, better + worse);
    assert!(better + worse > 0 && pval <= 0.05, "{better} better, {worse} worse, p = {pval}");
}

fn monotone_base() -> ExperimentConfig {
    let mut cfg = fixture("alg1");
    cfg.p = 500;
    cfg.cardinality = CardinalitySpec::Exact(10);
    cfg.trials = 500;
    cfg.master_seed = 99;
    cfg
}

fn set_c1(cfg: &mut ExperimentConfig, v: f64) {
    match &mut cfg.pipeline {
        PipelineSpec::Alg1 { c1, .. } | PipelineSpec::Alg2 { c1, .. } => *c1 = v,
        _ => unreachable!(),
    }
}

fn set_c2a(cfg: &mut ExperimentConfig, v: f64) {
    match &mut cfg.pipeline {
        PipelineSpec::Alg1 { c2a, .. } | PipelineSpec::Alg2 { c2a, .. } => *c2a = v,
        _ => unreachable!(),
    }
}

#[test]
fn more_stage_one_tests_help() {
    let mut low = monotone_base();
    let mut high = low.clone();
    set_c1(&mut low, 0.8);
    set_c1(&mut high, 2.0);
    assert_budget_helps(&low, &high);
}

#[test]
fn more_cleanup_tests_help() {
    let mut low = monotone_base();
    let mut high = low.clone();
    set_c2a(&mut low, 3.0);
    set_c2a(&mut high, 25.0);
    assert_budget_helps(&low, &high);
}

#[test]
fn three_stage_budget_helps() {
    let mut low = fixture("alg2");
    low.p = 500;
    low.cardinality = CardinalitySpec::Exact(10);
    low.trials = 500;
    low.master_seed = 98;
    if let PipelineSpec::Alg2 { params, .. } = &mut low.pipeline {
        params.alpha2 = 0.4;
    }
    let mut high = low.clone();
    set_c1(&mut low, 0.6);
    set_c1(&mut high, 1.5);
    assert_budget_helps(&low, &high);
}
