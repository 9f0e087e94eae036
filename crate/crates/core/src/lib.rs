//! Noisy adaptive group testing.
//!
//! Channels and ground truth live in [`model`], information measures in
//! [`infotheory`], test designs in [`design`], decoding rules in
//! [`decoders`], the staged pipelines in [`adaptive`], asymptotic rate
//! formulas in [`bounds`] and the Monte Carlo runner in [`harness`].

pub mod adaptive;
pub mod bounds;
pub mod cli;
pub mod decoders;
pub mod design;
pub mod error;
pub mod harness;
pub mod infotheory;
pub mod model;
pub mod rng;
pub mod verify;

pub use error::{DecodeError, Error, Result};
pub use model::{
    distance, run_test, sample_defective_set, CardinalitySpec, Channel, ChannelKind, DefectiveSet,
    ProblemInstance, TestPool, Transcript,
};
