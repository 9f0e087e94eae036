use super::check_lengths;
use crate::error::{invalid, Result};
use crate::model::{Channel, DefectiveSet, TestPool};

fn log_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        f64::NEG_INFINITY
    } else {
        (num / den).ln()
    }
}

/// Per-item sums of `ln P(y | x_j) / P(y)` under the single-item marginals
/// induced by `k` defectives and inclusion probability `nu / k`.
pub fn separate_scores(
    pools: &[TestPool],
    outcomes: &[bool],
    p: usize,
    k: usize,
    nu: f64,
    channel: &Channel,
) -> Result<Vec<f64>> {
    check_lengths(pools, outcomes, p)?;
    if k == 0 {
        return Ok(vec![f64::NEG_INFINITY; p]);
    }
    let q = nu / k as f64;
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("nu / k must lie in (0, 1), got {q}")));
    }
    let u_without = 1.0 - (1.0 - q).powi(k as i32 - 1);
    let u_any = 1.0 - (1.0 - q).powi(k as i32);
    let py = |y: bool, pu: f64| {
        let one = pu * channel.p_positive(true) + (1.0 - pu) * channel.p_positive(false);
        if y {
            one
        } else {
            1.0 - one
        }
    };
    // [y] terms for tests that include / exclude the item
    let inc = [false, true].map(|y| log_ratio(py(y, 1.0), py(y, u_any)));
    let exc = [false, true].map(|y| log_ratio(py(y, u_without), py(y, u_any)));

    let total = [
        outcomes.iter().filter(|&&y| !y).count(),
        outcomes.iter().filter(|&&y| y).count(),
    ];
    let mut counts = vec![[0usize; 2]; p];
    for (pool, &y) in pools.iter().zip(outcomes) {
        for j in pool.items() {
            counts[j][usize::from(y)] += 1;
        }
    }
    let term = |c: usize, v: f64| if c == 0 { 0.0 } else { c as f64 * v };
    Ok(counts
        .iter()
        .map(|c| {
            (0..2)
                .map(|y| term(c[y], inc[y]) + term(total[y] - c[y], exc[y]))
                .sum()
        })
        .collect())
}

/// Items whose score reaches `threshold_nats`.
pub fn separate_decode(
    pools: &[TestPool],
    outcomes: &[bool],
    p: usize,
    k: usize,
    nu: f64,
    channel: &Channel,
    threshold_nats: f64,
) -> Result<DefectiveSet> {
    if !threshold_nats.is_finite() {
        return Err(invalid("separate decoding threshold must be finite"));
    }
    let scores = separate_scores(pools, outcomes, p, k, nu, channel)?;
    let items = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold_nats)
        .map(|(j, _)| j)
        .collect();
    DefectiveSet::new(p, items)
}
