//! Decoding rules.

mod ncomp;
mod separate;
mod stage;
mod threshold;

pub use ncomp::{ncomp_decode, ncomp_decode_zchannel, ncomp_gap, NcompParams};
pub use separate::{separate_decode, separate_scores};
pub use stage::{any_positive, majority_vote, top_m_by_positives, ItemScore, ItemScoreBoard};
pub use threshold::{
    default_thresholds, default_thresholds_unknown_k, threshold_decode, threshold_decode_unknown_k,
    Multiplicity, ThresholdParams, ThresholdTable, ENUMERATION_LIMIT,
};

use crate::error::{Error, Result};
use crate::model::TestPool;

fn check_lengths(pools: &[TestPool], outcomes: &[bool], p: usize) -> Result<()> {
    if pools.len() != outcomes.len() {
        return Err(Error::SizeMismatch {
            expected: pools.len(),
            got: outcomes.len(),
        });
    }
    if let Some(pool) = pools.iter().find(|pool| pool.len() != p) {
        return Err(Error::SizeMismatch {
            expected: p,
            got: pool.len(),
        });
    }
    Ok(())
}

/// Test-indexed bit columns, one per item, plus the outcome vector.
pub(crate) struct Columns {
    words: usize,
    cols: Vec<Vec<u64>>,
    y: Vec<u64>,
    full: Vec<u64>,
}

impl Columns {
    pub(crate) fn new(pools: &[TestPool], outcomes: &[bool], p: usize) -> Self {
        let n = pools.len();
        let words = n.div_ceil(64);
        let mut cols = vec![vec![0u64; words]; p];
        let mut y = vec![0u64; words];
        for (i, (pool, &out)) in pools.iter().zip(outcomes).enumerate() {
            let bit = 1u64 << (i % 64);
            for j in pool.items() {
                cols[j][i / 64] |= bit;
            }
            if out {
                y[i / 64] |= bit;
            }
        }
        let mut full = vec![u64::MAX; words];
        if n % 64 != 0 {
            full[words - 1] = (1u64 << (n % 64)) - 1;
        }
        Self {
            words,
            cols,
            y,
            full,
        }
    }

    pub(crate) fn or_of(&self, items: impl IntoIterator<Item = usize>, out: &mut [u64]) {
        out.fill(0);
        for j in items {
            for (o, c) in out.iter_mut().zip(&self.cols[j]) {
                *o |= c;
            }
        }
    }

    pub(crate) fn scratch(&self) -> Vec<u64> {
        vec![0; self.words]
    }

    /// Summed density over tests with no `S_eq` item, given the OR columns of
    /// `S_dif` and `S_eq` and a `[or_dif][y]` term table.
    pub(crate) fn density(&self, dif: &[u64], eq: &[u64], table: &[[f64; 2]; 2]) -> f64 {
        let mut c = [[0u64; 2]; 2];
        for w in 0..self.words {
            let clear = self.full[w] & !eq[w];
            let d = clear & dif[w];
            let nd = clear & !dif[w];
            let y = self.y[w];
            c[1][1] += u64::from((d & y).count_ones());
            c[1][0] += u64::from((d & !y).count_ones());
            c[0][1] += u64::from((nd & y).count_ones());
            c[0][0] += u64::from((nd & !y).count_ones());
        }
        let mut total = 0.0;
        for d in 0..2 {
            for y in 0..2 {
                if c[d][y] > 0 {
                    total += c[d][y] as f64 * table[d][y];
                }
            }
        }
        total
    }
}
