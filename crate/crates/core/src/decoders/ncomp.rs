use super::stage::ItemScoreBoard;
use crate::error::{invalid, Result};
use crate::model::{Channel, ChannelKind, DefectiveSet, TestPool};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcompParams {
    pub kmin: usize,
    pub kmax: usize,
    pub nu: f64,
    /// Margin below `P[Y=1 | U=1]`; `None` picks a third of the gap.
    pub delta: Option<f64>,
}

impl NcompParams {
    pub fn c0(&self) -> f64 {
        self.kmin as f64 / self.kmax as f64
    }
}

/// Distance between `P[Y=1 | U=1]` and the positive rate of a test
/// containing only non-defectives, at intensity `nu` and load `c0`.
pub fn ncomp_gap(channel: &Channel, nu: f64, c0: f64) -> f64 {
    let p0 = channel.p_positive(false);
    let p1 = channel.p_positive(true);
    let clear = (-c0 * nu).exp();
    let rate = p1 * (1.0 - clear) + p0 * clear;
    p1 - rate
}

/// Declare `j` defective iff it sits in at least one test and at least a
/// `p1 - delta` fraction of its tests are positive.
pub fn ncomp_decode(
    pools: &[TestPool],
    outcomes: &[bool],
    population: &[usize],
    params: &NcompParams,
    channel: &Channel,
) -> Result<DefectiveSet> {
    if params.kmin == 0 || params.kmin > params.kmax {
        return Err(invalid(format!(
            "need 1 <= kmin <= kmax, got [{}, {}]",
            params.kmin, params.kmax
        )));
    }
    let gap = ncomp_gap(channel, params.nu, params.c0());
    let delta = params.delta.unwrap_or(gap / 3.0);
    if !(gap > 0.0 && delta > 0.0 && delta < gap / 2.0) {
        return Err(invalid(format!(
            "margin {delta} outside the feasible interval (0, {})",
            (gap / 2.0).max(0.0)
        )));
    }
    let p = pools.first().map_or_else(
        || population.iter().max().map_or(0, |&j| j + 1),
        TestPool::len,
    );
    let board = ItemScoreBoard::from_pools(pools, outcomes, population, p)?;
    let level = channel.p_positive(true) - delta;
    let items = board
        .scores()
        .iter()
        .filter(|s| s.tests > 0 && s.positives as f64 >= level * s.tests as f64)
        .map(|s| s.item)
        .collect();
    DefectiveSet::new(board.p(), items)
}

/// The Z-channel instance of [`ncomp_decode`].
pub fn ncomp_decode_zchannel(
    pools: &[TestPool],
    outcomes: &[bool],
    population: &[usize],
    params: &NcompParams,
    rho: f64,
) -> Result<DefectiveSet> {
    let ch = Channel::new(ChannelKind::ZChannel, rho)?;
    ncomp_decode(pools, outcomes, population, params, &ch)
}
