//! Staged adaptive pipelines and their test budgets.

mod budgets;
mod pipelines;

pub use budgets::{
    budgets_alg1, budgets_alg2, budgets_noiseless, budgets_zchannel, majority_reps, Alg2Params,
    StageBudgets, StageOneTerms,
};
pub use pipelines::{
    run_alg1, run_alg2, run_noiseless_two_stage, run_zchannel_three_stage, PipelineFailure,
    PipelineKind, PipelineOptions, PipelineRun, RoundPlan, Stage1Decoder, StagedStrategy,
};
