//! Monte Carlo experiments: error-probability estimates, sweeps and output
//! tables.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{
    budgets_alg1, budgets_alg2, budgets_noiseless, budgets_zchannel, run_alg1, run_alg2,
    run_noiseless_two_stage, run_zchannel_three_stage, Alg2Params, PipelineOptions, PipelineRun,
    StageBudgets,
};
use crate::decoders::{
    default_thresholds, default_thresholds_unknown_k, majority_vote, threshold_decode,
    threshold_decode_unknown_k, ItemScoreBoard, Multiplicity, ThresholdParams,
};
use crate::design::{bernoulli_matrix, individual_plan, DesignSpec};
use crate::error::{invalid, Error, Result};
use crate::infotheory::d2;
use crate::model::{
    distance, run_test, CardinalitySpec, Channel, DefectiveSet, ProblemInstance,
};
use crate::rng::{Block, Stream, TrialStreams};

fn one() -> usize {
    1
}

fn default_delta1() -> f64 {
    0.1
}

/// The algorithm a trial runs, with its budget multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PipelineSpec {
    Alg1 {
        c1: f64,
        c2a: f64,
        alpha1: f64,
        eta: f64,
        #[serde(default)]
        options: PipelineOptions,
    },
    Alg2 {
        c1: f64,
        c2a: f64,
        #[serde(default)]
        params: Alg2Params,
        #[serde(default)]
        options: PipelineOptions,
    },
    Noiseless {
        c1: f64,
        c2a: f64,
        alpha1: f64,
        #[serde(default)]
        options: PipelineOptions,
    },
    ZChannel {
        c1: f64,
        c2a: f64,
        alpha1: f64,
        c3: f64,
        #[serde(default)]
        options: PipelineOptions,
    },
    /// Every item tested `reps` times, majority vote.
    Individual {
        #[serde(default = "one")]
        reps: usize,
    },
    /// One non-adaptive Bernoulli design read by the threshold decoder.
    Threshold {
        n: usize,
        #[serde(default)]
        nu: Option<f64>,
        #[serde(default = "default_delta1")]
        delta1: f64,
        #[serde(default)]
        first_lexicographic: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: usize,
    pub cardinality: CardinalitySpec,
    pub channel: Channel,
    pub pipeline: PipelineSpec,
    pub trials: usize,
    pub master_seed: u64,
    /// Partial-recovery radius; 0 asks for exact recovery.
    #[serde(default)]
    pub dmax: usize,
    /// Worker cap; results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| invalid(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        self.cardinality.validate(self.p)
    }

    fn budgets(&self) -> Result<StageBudgets> {
        let (p, k, rho) = (self.p, self.cardinality.max(), self.channel.rho());
        match &self.pipeline {
            PipelineSpec::Alg1 { c1, c2a, alpha1, eta, .. } => {
                budgets_alg1(p, k, rho, *eta, *c1, *c2a, *alpha1)
            }
            PipelineSpec::Alg2 { c1, c2a, params, .. } => budgets_alg2(p, k, rho, params, *c1, *c2a),
            PipelineSpec::Noiseless { c1, c2a, alpha1, .. } => budgets_noiseless(p, k, *c1, *c2a, *alpha1),
            PipelineSpec::ZChannel { c1, c2a, alpha1, c3, .. } => {
                budgets_zchannel(p, k, rho, *c1, *c2a, *alpha1, *c3)
            }
            PipelineSpec::Individual { .. } | PipelineSpec::Threshold { .. } => Ok(StageBudgets::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: u64,
    pub true_k: usize,
    pub tests_used: usize,
    /// `None` when the run ended in an error.
    pub distance: Option<usize>,
    #[serde(skip)]
    pub elapsed: Duration,
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn is_error(&self, dmax: usize) -> bool {
        self.distance.is_none_or(|d| d > dmax)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub errors: usize,
    pub dmax: usize,
    pub pe_hat: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_tests: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub trials: Vec<TrialResult>,
}

const Z95: f64 = 1.959_963_984_540_054;

/// Two-sided 95% Wilson score interval for `x` events in `n` trials.
pub fn wilson_interval(x: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (x, n, z2) = (x as f64, n as f64, Z95 * Z95);
    let center = (x + z2 / 2.0) / (n + z2);
    let half = Z95 / (n + z2) * (x * (n - x) / n + z2 / 4.0).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Error fraction and interval when success means distance `<= dmax`.
pub fn summarize(trials: &[TrialResult], dmax: usize) -> Summary {
    let n = trials.len();
    let errors = trials.iter().filter(|t| t.is_error(dmax)).count();
    let (wilson_low, wilson_high) = wilson_interval(errors, n);
    let total: usize = trials.iter().map(|t| t.tests_used).sum();
    Summary {
        trials: n,
        errors,
        dmax,
        pe_hat: if n == 0 { 0.0 } else { errors as f64 / n as f64 },
        wilson_low,
        wilson_high,
        mean_tests: if n == 0 { 0.0 } else { total as f64 / n as f64 },
    }
}

fn outcome(
    truth: &DefectiveSet,
    res: std::result::Result<(DefectiveSet, usize), (Error, usize)>,
) -> (usize, Option<usize>, Option<String>) {
    match res {
        Ok((est, n)) => (n, Some(distance(truth, &est)), None),
        Err((e, n)) => (n, None, Some(e.to_string())),
    }
}

fn staged(res: std::result::Result<PipelineRun, crate::adaptive::PipelineFailure>) -> std::result::Result<(DefectiveSet, usize), (Error, usize)> {
    match res {
        Ok(run) => Ok((run.estimate, run.transcript.len())),
        Err(f) => Err((f.error, f.transcript.len())),
    }
}

fn run_individual(inst: &ProblemInstance, reps: usize, streams: &TrialStreams) -> Result<(DefectiveSet, usize)> {
    let items: Vec<usize> = (0..inst.p).collect();
    let plan = individual_plan(&items, reps, inst.p)?;
    let mut noise = streams.stream(Stream::Noise(Block::Final));
    let mut labels = Vec::with_capacity(plan.len());
    let mut outcomes = Vec::with_capacity(plan.len());
    for (j, pool) in &plan {
        outcomes.push(run_test(pool, &inst.truth, &inst.channel, &mut noise)?);
        labels.push(*j);
    }
    let board = ItemScoreBoard::from_individual(&labels, &outcomes, inst.p)?;
    Ok((majority_vote(&board, reps)?, plan.len()))
}

fn run_threshold(
    cfg: &ExperimentConfig,
    inst: &ProblemInstance,
    n: usize,
    nu: Option<f64>,
    delta1: f64,
    first_lex: bool,
    streams: &TrialStreams,
) -> Result<(DefectiveSet, usize)> {
    let kmax = cfg.cardinality.max();
    if kmax == 0 {
        return Err(invalid("threshold pipeline needs k >= 1"));
    }
    let nu = nu.unwrap_or(2f64.ln());
    let spec = DesignSpec {
        n,
        population: (0..cfg.p).collect(),
        q_one: nu / kmax as f64,
    };
    let pools = bernoulli_matrix(&spec, cfg.p, &mut streams.stream(Stream::Design(Block::Stage1)))?;
    let mut noise = streams.stream(Stream::Noise(Block::Stage1));
    let outcomes = pools
        .iter()
        .map(|pool| run_test(pool, &inst.truth, &inst.channel, &mut noise))
        .collect::<Result<Vec<_>>>()?;
    let mut params = ThresholdParams::new(nu, cfg.channel);
    if first_lex {
        params.multiplicity = Multiplicity::FirstLexicographic;
    }
    let est = match cfg.cardinality {
        CardinalitySpec::Exact(k) => {
            let table = default_thresholds(cfg.p, k, cfg.dmax, delta1)?;
            threshold_decode(&pools, &outcomes, cfg.p, k, cfg.dmax, &table, &params)?
        }
        CardinalitySpec::Range { min, max } => {
            let table = default_thresholds_unknown_k(cfg.p, min, max, delta1)?;
            threshold_decode_unknown_k(&pools, &outcomes, cfg.p, cfg.cardinality, cfg.dmax, &table, &params)?
        }
    };
    Ok((est, n))
}

/// One trial of `cfg`, using the streams keyed by `(master_seed, index)`.
pub fn run_trial(cfg: &ExperimentConfig, budgets: &Result<StageBudgets>, index: u64) -> TrialResult {
    let start = Instant::now();
    let streams = TrialStreams::new(cfg.master_seed, index);
    let inst = match ProblemInstance::sample(cfg.p, cfg.cardinality, cfg.channel, &mut streams.stream(Stream::Truth)) {
        Ok(inst) => inst,
        Err(e) => {
            return TrialResult {
                trial_index: index,
                true_k: 0,
                tests_used: 0,
                distance: None,
                elapsed: start.elapsed(),
                failure: Some(e.to_string()),
            }
        }
    };
    let res = match (&cfg.pipeline, budgets) {
        (PipelineSpec::Individual { reps }, _) => run_individual(&inst, *reps, &streams).map_err(|e| (e, 0)),
        (PipelineSpec::Threshold { n, nu, delta1, first_lexicographic }, _) => {
            run_threshold(cfg, &inst, *n, *nu, *delta1, *first_lexicographic, &streams).map_err(|e| (e, 0))
        }
        (_, Err(e)) => Err((e.clone(), 0)),
        (PipelineSpec::Alg1 { options, .. }, Ok(b)) => staged(run_alg1(&inst, *b, *options, streams)),
        (PipelineSpec::Alg2 { options, .. }, Ok(b)) => staged(run_alg2(&inst, *b, *options, streams)),
        (PipelineSpec::Noiseless { options, .. }, Ok(b)) => {
            staged(run_noiseless_two_stage(&inst, *b, *options, streams))
        }
        (PipelineSpec::ZChannel { options, .. }, Ok(b)) => {
            staged(run_zchannel_three_stage(&inst, *b, *options, streams))
        }
    };
    let (tests_used, distance, failure) = outcome(&inst.truth, res);
    TrialResult {
        trial_index: index,
        true_k: inst.truth.len(),
        tests_used,
        distance,
        elapsed: start.elapsed(),
        failure,
    }
}

/// Run every trial of `cfg`; the result is sorted by trial index and does
/// not depend on the number of worker threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let budgets = cfg.budgets();
    let work = || -> Vec<TrialResult> {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|i| run_trial(cfg, &budgets, i))
            .collect()
    };
    let trials = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(ExperimentResult {
        summary: summarize(&trials, cfg.dmax),
        trials,
    })
}

/// The stage budgets `cfg` resolves to, or the error each trial reports.
pub fn resolve_budgets(cfg: &ExperimentConfig) -> Result<StageBudgets> {
    cfg.budgets()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub trials: usize,
    pub errors: usize,
    pub pe_hat: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_tests: f64,
}

fn set_knob(cfg: &ExperimentConfig, knob: &str, value: f64) -> Result<ExperimentConfig> {
    let mut json = serde_json::to_value(cfg).map_err(|e| invalid(e.to_string()))?;
    let mut slot = json
        .get_mut("pipeline")
        .ok_or_else(|| invalid("config has no pipeline"))?;
    let parts: Vec<&str> = knob.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    for part in path {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| invalid(format!("knob '{knob}' does not name a budget field")))?;
        slot = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    let obj = slot
        .as_object_mut()
        .ok_or_else(|| invalid(format!("knob '{knob}' does not name a budget field")))?;
    if let Some(old) = obj.get(*last) {
        if !(old.is_number() || old.is_null()) {
            return Err(invalid(format!("knob '{knob}' is not numeric")));
        }
    }
    let number = if value.fract() == 0.0 && value >= 0.0 && value < 9.0e15 {
        serde_json::Value::from(value as u64)
    } else {
        serde_json::Number::from_f64(value)
            .map(serde_json::Value::Number)
            .ok_or_else(|| invalid(format!("knob value {value} is not finite")))?
    };
    obj.insert(last.to_string(), number);
    serde_json::from_value(json).map_err(|e| invalid(format!("knob '{knob}': {e}")))
}

/// One experiment per knob value, all sharing the configured master seed so
/// the values are compared on common random numbers. Rows are sorted by
/// value.
pub fn sweep(cfg: &ExperimentConfig, knob: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    let mut values = values.to_vec();
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("sweep values must not be NaN"));
    }
    values.sort_by(f64::total_cmp);
    values
        .into_iter()
        .map(|value| {
            let res = run_experiment(&set_knob(cfg, knob, value)?)?;
            let s = res.summary;
            Ok(SweepRow {
                value,
                trials: s.trials,
                errors: s.errors,
                pe_hat: s.pe_hat,
                wilson_low: s.wilson_low,
                wilson_high: s.wilson_high,
                mean_tests: s.mean_tests,
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    invalid(format!("csv write failed: {e}"))
}

fn lf_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Columns: `trial_index,true_k,tests_used,distance,error,failure`.
/// `distance` is empty for failed runs; `error` is judged at `dmax`.
pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialResult], dmax: usize) -> Result<()> {
    let mut w = lf_writer(out);
    w.write_record(["trial_index", "true_k", "tests_used", "distance", "error", "failure"])
        .map_err(csv_err)?;
    for t in trials {
        w.write_record([
            t.trial_index.to_string(),
            t.true_k.to_string(),
            t.tests_used.to_string(),
            t.distance.map_or(String::new(), |d| d.to_string()),
            u8::from(t.is_error(dmax)).to_string(),
            t.failure.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| invalid(format!("csv flush failed: {e}")))
}

pub fn write_summary_csv<W: Write>(out: W, summary: &Summary) -> Result<()> {
    let mut w = lf_writer(out);
    w.serialize(summary).map_err(csv_err)?;
    w.flush().map_err(|e| invalid(format!("csv flush failed: {e}")))
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = lf_writer(out);
    if rows.is_empty() {
        w.write_record(["value", "trials", "errors", "pe_hat", "wilson_low", "wilson_high", "mean_tests"])
            .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| invalid(format!("csv flush failed: {e}")))
}

pub fn trials_csv_string(trials: &[TrialResult], dmax: usize) -> Result<String> {
    let mut buf = Vec::new();
    write_trials_csv(&mut buf, trials, dmax)?;
    String::from_utf8(buf).map_err(|e| invalid(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffReport {
    pub n: u64,
    pub q: f64,
    pub qprime: f64,
    pub samples: usize,
    /// `exp(-N D(q' || q))`.
    pub bound: f64,
    /// Fraction of draws with `Z <= N q'`.
    pub empirical: f64,
    pub sigma: f64,
}

impl ChernoffReport {
    pub fn passed(&self) -> bool {
        self.empirical <= self.bound + 3.0 * self.sigma
    }
}

/// Sample `Z ~ Bin(N, q)` and compare `P[Z <= N q']` with the Chernoff
/// bound. `sigma` is the binomial standard error at the bound.
pub fn empirical_chernoff_check(n: u64, q: f64, qprime: f64, samples: usize, seed: u64) -> Result<ChernoffReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("q must lie in (0, 1), got {q}")));
    }
    if !(qprime >= 0.0 && qprime < q) {
        return Err(invalid(format!("need 0 <= q' < q, got q' = {qprime}, q = {q}")));
    }
    if samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    let bin = Binomial::new(n, q).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cut = n as f64 * qprime;
    let hits = (0..samples).filter(|_| bin.sample(&mut rng) as f64 <= cut).count();
    let bound = (-(n as f64) * d2(qprime, q)).exp();
    Ok(ChernoffReport {
        n,
        q,
        qprime,
        samples,
        bound,
        empirical: hits as f64 / samples as f64,
        sigma: (bound * (1.0 - bound) / samples as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless_cfg() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"p": 16, "cardinality": {"exact": 2}, "channel": {"kind": "noiseless"},
                "pipeline": {"kind": "individual"}, "trials": 5, "master_seed": 3}"#,
        )
        .unwrap()
    }

    #[test]
    fn individual_noiseless_is_errorless() {
        let res = run_experiment(&noiseless_cfg()).unwrap();
        assert_eq!(res.summary.pe_hat, 0.0);
        assert_eq!(res.trials.len(), 5);
        assert!(res.trials.iter().all(|t| t.tests_used == 16 && t.distance == Some(0)));
    }

    #[test]
    fn wilson_single_trial() {
        let (lo, hi) = wilson_interval(0, 1);
        let z2 = Z95 * Z95;
        assert!(lo.abs() < 1e-15);
        assert!((hi - z2 / (1.0 + z2)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(1, 1);
        assert!((lo - 1.0 / (1.0 + z2)).abs() < 1e-12);
        assert!((hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dmax_nests() {
        let mut cfg = noiseless_cfg();
        cfg.channel = Channel::symmetric(0.2).unwrap();
        cfg.pipeline = PipelineSpec::Individual { reps: 1 };
        cfg.trials = 50;
        let res = run_experiment(&cfg).unwrap();
        let pes: Vec<f64> = (0..4).map(|d| summarize(&res.trials, d).pe_hat).collect();
        assert!(pes.windows(2).all(|w| w[1] <= w[0]));
        assert!(pes[0] > 0.0);
    }

    #[test]
    fn sweep_sorts_and_matches_single_run() {
        let mut cfg = noiseless_cfg();
        cfg.channel = Channel::symmetric(0.2).unwrap();
        let rows = sweep(&cfg, "reps", &[5.0, 1.0, 3.0]).unwrap();
        assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![1.0, 3.0, 5.0]);
        cfg.pipeline = PipelineSpec::Individual { reps: 3 };
        let single = run_experiment(&cfg).unwrap().summary;
        assert_eq!(rows[1].pe_hat, single.pe_hat);
        assert!(sweep(&cfg, "reps", &[]).unwrap().is_empty());
        assert!(sweep(&cfg, "bogus", &[1.0]).is_err());
    }

    #[test]
    fn misconfigured_pipeline_fails_per_trial() {
        let mut cfg = noiseless_cfg();
        cfg.pipeline = PipelineSpec::Alg1 {
            c1: 1.0,
            c2a: 1.0,
            alpha1: 0.5,
            eta: 0.5,
            options: PipelineOptions::default(),
        };
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.summary.errors, 5);
        assert!(res.trials.iter().all(|t| t.failure.is_some()));
    }

    #[test]
    fn chernoff_single_coin() {
        let r = empirical_chernoff_check(1, 0.5, 0.0, 100_000, 9).unwrap();
        assert!((r.bound - 0.5).abs() < 1e-12);
        assert!((r.empirical - r.bound).abs() < 3.0 * r.sigma);
        assert!(empirical_chernoff_check(10, 0.3, 0.3, 10, 1).is_err());
    }

    #[test]
    fn config_rejects_zero_trials() {
        let mut cfg = noiseless_cfg();
        cfg.trials = 0;
        assert!(run_experiment(&cfg).is_err());
        assert!(ExperimentConfig::from_json(r#"{"p": 4}"#).is_err());
    }
}
