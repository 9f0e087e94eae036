//! Counter-based seeding.
//!
//! Every random draw in a run is determined by `(master_seed, trial_index,
//! stream)`. Each triple keys its own ChaCha8 stream, so trials can execute
//! on any thread in any order and a stage's randomness does not shift when
//! another stage's budget changes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used inside one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Ground-truth defective set.
    Truth,
    /// Test design of a pipeline block.
    Design(Block),
    /// Channel noise applied to a pipeline block.
    Noise(Block),
    /// Anything else a caller wants to keep separate, keyed by a free label.
    Aux(u32),
}

/// The sub-steps of the staged pipelines; each gets its own design and
/// noise streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Stage1,
    Cleanup,
    Check,
    Final,
}

impl Block {
    fn code(self) -> u64 {
        match self {
            Block::Stage1 => 1,
            Block::Cleanup => 2,
            Block::Check => 3,
            Block::Final => 4,
        }
    }
}

impl Stream {
    fn code(self) -> u64 {
        match self {
            Stream::Truth => 0x10,
            Stream::Design(b) => 0x100 | b.code(),
            Stream::Noise(b) => 0x200 | b.code(),
            Stream::Aux(label) => 0x1_0000_0000 | u64::from(label),
        }
    }
}

/// Seed source for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialStreams {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl TrialStreams {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }

    pub fn stream(&self, stream: Stream) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.trial_index.to_le_bytes());
        seed[16..24].copy_from_slice(&stream.code().to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }
}
