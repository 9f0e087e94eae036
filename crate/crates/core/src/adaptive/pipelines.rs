use serde::{Deserialize, Serialize};

use super::budgets::StageBudgets;
use crate::decoders::{
    any_positive, default_thresholds, majority_vote, ncomp_decode, separate_decode,
    threshold_decode, top_m_by_positives, ItemScoreBoard, Multiplicity, NcompParams,
    ThresholdParams,
};
use crate::design::{bernoulli_matrix, individual_plan, DesignSpec};
use crate::error::{invalid, Error, Result};
use crate::infotheory::{channel_capacity, BinaryChannelLaw};
use crate::model::{
    run_test, split_entries, Channel, ChannelKind, DefectiveSet, ProblemInstance, TestPool,
    Transcript, TranscriptEntry,
};
use crate::rng::{Block, Stream, TrialStreams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Decoder {
    ThresholdDecoder,
    #[default]
    SeparateDecoding,
}

/// Decoder choices and design intensities shared by every pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub stage1: Stage1Decoder,
    /// Stage-one intensity; `ln 2` by default, or the capacity-achieving
    /// value for the Z-channel.
    pub nu: Option<f64>,
    /// Separate-decoding threshold in nats; `ln(p/k)` by default.
    pub separate_threshold: Option<f64>,
    pub delta1: f64,
    /// Partial-recovery radius of the stage-one threshold decoder.
    pub stage1_dmax: Option<usize>,
    pub cleanup_nu: f64,
    pub ncomp_delta: Option<f64>,
    pub first_lexicographic: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            stage1: Stage1Decoder::SeparateDecoding,
            nu: None,
            separate_threshold: None,
            delta1: 0.1,
            stage1_dmax: None,
            cleanup_nu: 2f64.ln(),
            ncomp_delta: None,
            first_lexicographic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Alg1,
    Alg2,
    Noiseless,
    ZChannel,
}

impl PipelineKind {
    pub fn rounds(self) -> usize {
        match self {
            PipelineKind::Alg1 | PipelineKind::Noiseless => 2,
            PipelineKind::Alg2 | PipelineKind::ZChannel => 3,
        }
    }
}

const STAGE_NAMES: [&str; 3] = ["stage1", "stage2", "stage3"];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub estimate: DefectiveSet,
    pub transcript: Transcript,
}

/// A failed run and every test performed before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct PipelineFailure {
    pub error: Error,
    pub transcript: Transcript,
}

/// The pools planned for one round, grouped by block.
pub type RoundPlan = Vec<(Block, Vec<TestPool>)>;

/// Round-by-round test planner for one pipeline run.
///
/// The planner never sees the defective set: each round is computed from
/// the transcript of earlier rounds and the trial's design streams.
#[derive(Debug, Clone)]
pub struct StagedStrategy {
    kind: PipelineKind,
    p: usize,
    k: usize,
    channel: Channel,
    budgets: StageBudgets,
    options: PipelineOptions,
    streams: TrialStreams,
}

/// What the individual-testing step of round two looks like.
struct RoundTwo {
    s1: DefectiveSet,
    complement: Vec<usize>,
    cleanup: usize,
}

impl StagedStrategy {
    pub fn new(
        kind: PipelineKind,
        instance: &ProblemInstance,
        budgets: StageBudgets,
        options: PipelineOptions,
        streams: TrialStreams,
    ) -> Result<Self> {
        let ch = instance.channel;
        let ok = match kind {
            PipelineKind::Alg1 | PipelineKind::Alg2 => ch.kind() == ChannelKind::Symmetric,
            PipelineKind::Noiseless => ch.kind() == ChannelKind::Noiseless,
            PipelineKind::ZChannel => ch.kind() == ChannelKind::ZChannel,
        };
        if !ok {
            return Err(invalid(format!("{kind:?} pipeline cannot run on a {ch} channel")));
        }
        let k = instance.declared_k();
        if k == 0 && kind != PipelineKind::Noiseless {
            return Err(invalid(format!("{kind:?} pipeline needs k >= 1")));
        }
        Ok(Self {
            kind,
            p: instance.p,
            k,
            channel: ch,
            budgets,
            options,
            streams,
        })
    }

    pub fn kind(&self) -> PipelineKind {
        self.kind
    }

    pub fn rounds(&self) -> usize {
        self.kind.rounds()
    }

    fn k_hat(&self) -> f64 {
        self.k.max(1) as f64
    }

    /// Stage-one intensity `nu`.
    pub fn stage1_nu(&self) -> f64 {
        if let Some(nu) = self.options.nu {
            return nu;
        }
        match self.channel.kind() {
            ChannelKind::ZChannel => {
                let (_, pu) = channel_capacity(&BinaryChannelLaw::from(self.channel));
                let k = self.k_hat();
                // 1 - (1 - nu/k)^k = pu
                k * (1.0 - (1.0 - pu).powf(1.0 / k))
            }
            _ => 2f64.ln(),
        }
    }

    /// Defective-count bound assumed by the cleanup step.
    pub fn cleanup_kmax(&self) -> usize {
        let kf = self.k as f64;
        let bound = match self.kind {
            PipelineKind::Alg2 => kf.powf(self.budgets.gamma).ceil(),
            _ => (self.budgets.alpha1 * kf).ceil(),
        };
        (bound as usize).max(1)
    }

    fn stage1_dmax(&self) -> usize {
        let kf = self.k as f64;
        let d = self.options.stage1_dmax.unwrap_or_else(|| match self.kind {
            PipelineKind::Alg2 => kf.powf(self.budgets.gamma).floor() as usize,
            _ => (self.budgets.alpha1 * kf).floor() as usize,
        });
        d.min(self.k.saturating_sub(1))
    }

    fn decode_stage1(&self, entries: &[TranscriptEntry]) -> Result<DefectiveSet> {
        if self.k == 0 {
            return Ok(DefectiveSet::empty(self.p));
        }
        let (pools, y) = split_entries(entries);
        let nu = self.stage1_nu();
        match self.options.stage1 {
            Stage1Decoder::SeparateDecoding => {
                let thr = self
                    .options
                    .separate_threshold
                    .unwrap_or_else(|| (self.p as f64 / self.k as f64).ln());
                separate_decode(&pools, &y, self.p, self.k, nu, &self.channel, thr)
            }
            Stage1Decoder::ThresholdDecoder => {
                let dmax = self.stage1_dmax();
                let table = default_thresholds(self.p, self.k, dmax, self.options.delta1)?;
                let params = ThresholdParams {
                    nu,
                    channel: self.channel,
                    multiplicity: if self.options.first_lexicographic {
                        Multiplicity::FirstLexicographic
                    } else {
                        Multiplicity::Error
                    },
                };
                threshold_decode(&pools, &y, self.p, self.k, dmax, &table, &params)
            }
        }
    }

    fn round_two(&self, t: &Transcript) -> Result<RoundTwo> {
        let s1 = self.decode_stage1(t.stage(0))?;
        let complement = s1.complement();
        let cleanup = if complement.is_empty() { 0 } else { self.budgets.n2a };
        Ok(RoundTwo {
            s1,
            complement,
            cleanup,
        })
    }

    fn round_two_reps(&self) -> (Block, usize) {
        match self.kind {
            PipelineKind::Alg1 => (Block::Final, self.budgets.ntil),
            PipelineKind::Noiseless => (Block::Final, 1),
            PipelineKind::Alg2 | PipelineKind::ZChannel => (Block::Check, self.budgets.ncheck),
        }
    }

    fn individual(&self, items: &[usize], reps: usize) -> Result<Vec<TestPool>> {
        Ok(individual_plan(items, reps, self.p)?
            .into_iter()
            .map(|(_, pool)| pool)
            .collect())
    }

    fn board(&self, entries: &[TranscriptEntry]) -> Result<ItemScoreBoard> {
        let labels: Vec<usize> = entries
            .iter()
            .map(|e| e.pool.items().next().expect("individual pools are singletons"))
            .collect();
        let y: Vec<bool> = entries.iter().map(|e| e.outcome).collect();
        ItemScoreBoard::from_individual(&labels, &y, self.p)
    }

    /// Items kept by the check step and those passed on to round three.
    fn check_step(&self, r2: &RoundTwo, t: &Transcript) -> Result<(DefectiveSet, Vec<usize>)> {
        let board = self.board(&t.stage(1)[r2.cleanup..])?;
        let kept = match self.kind {
            PipelineKind::Alg2 => {
                let drop = (self.budgets.alpha2 * self.k as f64).ceil() as usize;
                top_m_by_positives(&board, r2.s1.len().saturating_sub(drop))?
            }
            _ => any_positive(&board),
        };
        let rest = r2.s1.difference(&kept).items().to_vec();
        if self.kind == PipelineKind::ZChannel {
            let cap = 2 * self.cleanup_kmax();
            if rest.len() > cap {
                return Err(Error::StageFailure(format!(
                    "{} items left unresolved after the check step, more than {cap}",
                    rest.len()
                )));
            }
        }
        Ok((kept, rest))
    }

    /// Pools for round `round`, planned from the earlier rounds of `t`.
    pub fn plan_round(&self, round: usize, t: &Transcript) -> Result<RoundPlan> {
        match round {
            0 => {
                if self.budgets.n1 == 0 {
                    return Ok(vec![(Block::Stage1, Vec::new())]);
                }
                let spec = DesignSpec {
                    n: self.budgets.n1,
                    population: (0..self.p).collect(),
                    q_one: self.stage1_nu() / self.k_hat(),
                };
                let mut rng = self.streams.stream(Stream::Design(Block::Stage1));
                Ok(vec![(Block::Stage1, bernoulli_matrix(&spec, self.p, &mut rng)?)])
            }
            1 => {
                let r2 = self.round_two(t)?;
                let cleanup = if r2.cleanup == 0 {
                    Vec::new()
                } else {
                    let spec = DesignSpec {
                        n: r2.cleanup,
                        population: r2.complement.clone(),
                        q_one: self.options.cleanup_nu / self.cleanup_kmax() as f64,
                    };
                    let mut rng = self.streams.stream(Stream::Design(Block::Cleanup));
                    bernoulli_matrix(&spec, self.p, &mut rng)?
                };
                let (block, reps) = self.round_two_reps();
                Ok(vec![
                    (Block::Cleanup, cleanup),
                    (block, self.individual(r2.s1.items(), reps)?),
                ])
            }
            2 if self.rounds() == 3 => {
                let r2 = self.round_two(t)?;
                let (_, rest) = self.check_step(&r2, t)?;
                Ok(vec![(Block::Final, self.individual(&rest, self.budgets.ntil)?)])
            }
            _ => Err(invalid(format!(
                "{:?} has {} rounds, asked for round {round}",
                self.kind,
                self.rounds()
            ))),
        }
    }

    /// Final estimate from a complete transcript.
    pub fn estimate(&self, t: &Transcript) -> Result<DefectiveSet> {
        if t.stage_count() != self.rounds() {
            return Err(invalid(format!(
                "transcript has {} stages, expected {}",
                t.stage_count(),
                self.rounds()
            )));
        }
        let r2 = self.round_two(t)?;
        let s2a = if r2.cleanup == 0 {
            DefectiveSet::empty(self.p)
        } else {
            let (pools, y) = split_entries(&t.stage(1)[..r2.cleanup]);
            let params = NcompParams {
                kmin: 1,
                kmax: self.cleanup_kmax(),
                nu: self.options.cleanup_nu,
                delta: self.options.ncomp_delta,
            };
            ncomp_decode(&pools, &y, &r2.complement, &params, &self.channel)?
        };
        let rest = match self.kind {
            PipelineKind::Alg1 => majority_vote(&self.board(&t.stage(1)[r2.cleanup..])?, self.budgets.ntil)?,
            PipelineKind::Noiseless => any_positive(&self.board(&t.stage(1)[r2.cleanup..])?),
            PipelineKind::Alg2 => {
                let (kept, _) = self.check_step(&r2, t)?;
                let s3 = majority_vote(&self.board(t.stage(2))?, self.budgets.ntil)?;
                kept.union(&s3)
            }
            PipelineKind::ZChannel => {
                let (kept, _) = self.check_step(&r2, t)?;
                kept.union(&any_positive(&self.board(t.stage(2))?))
            }
        };
        Ok(s2a.union(&rest))
    }

    /// Run every round against `truth`, drawing noise per block.
    pub fn execute(&self, truth: &DefectiveSet) -> Result<PipelineRun, PipelineFailure> {
        let mut t = Transcript::new();
        let fail = |error: Error, t: &Transcript| PipelineFailure {
            error,
            transcript: t.clone(),
        };
        for round in 0..self.rounds() {
            let plan = self.plan_round(round, &t).map_err(|e| fail(e, &t))?;
            t.begin_stage(STAGE_NAMES[round]);
            for (block, pools) in plan {
                let mut noise = self.streams.stream(Stream::Noise(block));
                for pool in pools {
                    let y = run_test(&pool, truth, &self.channel, &mut noise).map_err(|e| fail(e, &t))?;
                    t.push(pool, y);
                }
            }
        }
        match self.estimate(&t) {
            Ok(estimate) => Ok(PipelineRun {
                estimate,
                transcript: t,
            }),
            Err(e) => Err(fail(e, &t)),
        }
    }
}

fn run(
    kind: PipelineKind,
    instance: &ProblemInstance,
    budgets: StageBudgets,
    options: PipelineOptions,
    streams: TrialStreams,
) -> Result<PipelineRun, PipelineFailure> {
    let strategy =
        StagedStrategy::new(kind, instance, budgets, options, streams).map_err(|error| {
            PipelineFailure {
                error,
                transcript: Transcript::new(),
            }
        })?;
    strategy.execute(&instance.truth)
}

/// Two-stage pipeline for symmetric noise.
pub fn run_alg1(
    instance: &ProblemInstance,
    budgets: StageBudgets,
    options: PipelineOptions,
    streams: TrialStreams,
) -> Result<PipelineRun, PipelineFailure> {
    run(PipelineKind::Alg1, instance, budgets, options, streams)
}

/// Three-stage pipeline for symmetric noise.
pub fn run_alg2(
    instance: &ProblemInstance,
    budgets: StageBudgets,
    options: PipelineOptions,
    streams: TrialStreams,
) -> Result<PipelineRun, PipelineFailure> {
    run(PipelineKind::Alg2, instance, budgets, options, streams)
}

pub fn run_noiseless_two_stage(
    instance: &ProblemInstance,
    budgets: StageBudgets,
    options: PipelineOptions,
    streams: TrialStreams,
) -> Result<PipelineRun, PipelineFailure> {
    run(PipelineKind::Noiseless, instance, budgets, options, streams)
}

pub fn run_zchannel_three_stage(
    instance: &ProblemInstance,
    budgets: StageBudgets,
    options: PipelineOptions,
    streams: TrialStreams,
) -> Result<PipelineRun, PipelineFailure> {
    run(PipelineKind::ZChannel, instance, budgets, options, streams)
}
