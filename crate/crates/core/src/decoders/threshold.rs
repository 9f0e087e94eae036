use std::collections::BTreeMap;

use itertools::Itertools;

use super::{check_lengths, Columns};
use crate::error::{invalid, DecodeError, Result};
use crate::infotheory::{ln_binomial, BinaryChannelLaw, DensityContext};
use crate::model::{CardinalitySpec, Channel, DefectiveSet, TestPool};

/// Largest number of candidate sets the threshold decoders will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// What to do when several candidates pass every check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Multiplicity {
    #[default]
    Error,
    FirstLexicographic,
}

/// Thresholds `gamma[(k', ell)]` in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub gamma: BTreeMap<(usize, usize), f64>,
    pub delta1: f64,
}

impl ThresholdTable {
    pub fn get(&self, k: usize, ell: usize) -> Option<f64> {
        self.gamma.get(&(k, ell)).copied()
    }
}

fn gamma(p: usize, k: usize, ell: usize, delta1: f64) -> f64 {
    ln_binomial(p - k, ell) + (k as f64 / delta1).ln() + ln_binomial(k, ell)
}

fn check_delta1(delta1: f64) -> Result<()> {
    if delta1 > 0.0 && delta1 < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("delta1 must lie in (0, 1), got {delta1}")))
    }
}

/// `gamma_ell = ln C(p-k, ell) + ln((k/delta1) C(k, ell))` for `dmax < ell <= k`.
pub fn default_thresholds(p: usize, k: usize, dmax: usize, delta1: f64) -> Result<ThresholdTable> {
    check_delta1(delta1)?;
    if !(dmax < k && k <= p) {
        return Err(invalid(format!("need dmax < k <= p, got dmax = {dmax}, k = {k}, p = {p}")));
    }
    let gamma = (dmax + 1..=k)
        .map(|ell| ((k, ell), gamma(p, k, ell, delta1)))
        .collect();
    Ok(ThresholdTable { gamma, delta1 })
}

/// The same expression for every `(k', ell)` with `k'` in `[kmin, kmax]`
/// and `1 <= ell <= k'`.
pub fn default_thresholds_unknown_k(
    p: usize,
    kmin: usize,
    kmax: usize,
    delta1: f64,
) -> Result<ThresholdTable> {
    check_delta1(delta1)?;
    CardinalitySpec::Range {
        min: kmin,
        max: kmax,
    }
    .validate(p)?;
    let gamma = (kmin..=kmax)
        .flat_map(|kp| (1..=kp).map(move |ell| ((kp, ell), gamma(p, kp, ell, delta1))))
        .collect();
    Ok(ThresholdTable { gamma, delta1 })
}

/// Design intensity, channel and tie policy shared by both decoders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub nu: f64,
    pub channel: Channel,
    pub multiplicity: Multiplicity,
}

impl ThresholdParams {
    pub fn new(nu: f64, channel: Channel) -> Self {
        Self {
            nu,
            channel,
            multiplicity: Multiplicity::Error,
        }
    }
}

fn guard(count: f64) -> Result<()> {
    if count > ENUMERATION_LIMIT {
        return Err(DecodeError::TooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        }
        .into());
    }
    Ok(())
}

/// One density check: split sizes, the term table and the threshold.
struct Check {
    k: usize,
    ell: usize,
    table: [[f64; 2]; 2],
    gamma: f64,
}

fn make_check(
    table: &ThresholdTable,
    k: usize,
    ell: usize,
    nu: f64,
    law: BinaryChannelLaw,
    q_one: f64,
) -> Result<Check> {
    let gamma = table
        .get(k, ell)
        .ok_or_else(|| invalid(format!("threshold table has no entry for (k = {k}, ell = {ell})")))?;
    let ctx = DensityContext::new(k, ell, nu, law, q_one)?;
    Ok(Check {
        k,
        ell,
        table: ctx.term_table(),
        gamma,
    })
}

fn resolve(mut passing: Vec<Vec<usize>>, p: usize, multiplicity: Multiplicity) -> Result<DefectiveSet> {
    match (passing.len(), multiplicity) {
        (0, _) => Err(DecodeError::NoValidSet.into()),
        (1, _) | (_, Multiplicity::FirstLexicographic) => {
            DefectiveSet::new(p, passing.swap_remove(0))
        }
        (count, Multiplicity::Error) => Err(DecodeError::Ambiguous { count }.into()),
    }
}

/// Search all `k`-sets for those whose every split `(S_dif, S_eq)` with
/// `|S_dif| > dmax` has information density at least `gamma_{|S_dif|}`.
pub fn threshold_decode(
    pools: &[TestPool],
    outcomes: &[bool],
    p: usize,
    k: usize,
    dmax: usize,
    table: &ThresholdTable,
    params: &ThresholdParams,
) -> Result<DefectiveSet> {
    check_lengths(pools, outcomes, p)?;
    if k > p {
        return Err(invalid(format!("k = {k} exceeds p = {p}")));
    }
    guard(ln_binomial(p, k).exp())?;
    if k == 0 {
        return Ok(DefectiveSet::empty(p));
    }
    let law = BinaryChannelLaw::from(params.channel);
    let q_one = params.nu / k as f64;
    let checks: Vec<Check> = (dmax + 1..=k)
        .map(|ell| make_check(table, k, ell, params.nu, law, q_one))
        .collect::<Result<_>>()?;
    let cols = Columns::new(pools, outcomes, p);
    let (mut dif, mut eq) = (cols.scratch(), cols.scratch());
    let mut passing = Vec::new();
    for cand in (0..p).combinations(k) {
        let ok = (1u64..1 << k).all(|mask| {
            let ell = mask.count_ones() as usize;
            if ell <= dmax {
                return true;
            }
            let check = &checks[ell - dmax - 1];
            cols.or_of(members(&cand, mask, true), &mut dif);
            cols.or_of(members(&cand, mask, false), &mut eq);
            cols.density(&dif, &eq, &check.table) >= check.gamma
        });
        if ok {
            passing.push(cand);
            if params.multiplicity == Multiplicity::FirstLexicographic {
                break;
            }
        }
    }
    resolve(passing, p, params.multiplicity)
}

fn members(cand: &[usize], mask: u64, inside: bool) -> impl Iterator<Item = usize> + '_ {
    cand.iter()
        .enumerate()
        .filter(move |(i, _)| (mask >> i & 1 == 1) == inside)
        .map(|(_, &j)| j)
}

/// Unknown-cardinality variant: candidates range over every size in
/// `range`, splits may leave part of the candidate out, and densities are
/// evaluated for the hypothesis `S_dif ∪ S_eq` under the design
/// intensity `nu / kmax`. The smallest passing cardinality wins.
pub fn threshold_decode_unknown_k(
    pools: &[TestPool],
    outcomes: &[bool],
    p: usize,
    range: CardinalitySpec,
    dmax: usize,
    table: &ThresholdTable,
    params: &ThresholdParams,
) -> Result<DefectiveSet> {
    check_lengths(pools, outcomes, p)?;
    range.validate(p)?;
    let (kmin, kmax) = (range.min(), range.max());
    guard((kmin..=kmax).map(|c| ln_binomial(p, c).exp()).sum())?;
    let law = BinaryChannelLaw::from(params.channel);
    let q_one = params.nu / kmax as f64;
    let mut checks = BTreeMap::new();
    for kp in kmin.max(1)..=kmax {
        for ell in 1..=kp {
            checks.insert((kp, ell), make_check(table, kp, ell, params.nu, law, q_one)?);
        }
    }
    let cols = Columns::new(pools, outcomes, p);
    let (mut dif, mut eq) = (cols.scratch(), cols.scratch());
    for k in kmin..=kmax {
        let mut passing = Vec::new();
        for cand in (0..p).combinations(k) {
            if passes_unknown(&cand, dmax, &checks, &cols, &mut dif, &mut eq) {
                passing.push(cand);
                if params.multiplicity == Multiplicity::FirstLexicographic {
                    break;
                }
            }
        }
        if !passing.is_empty() {
            return resolve(passing, p, params.multiplicity);
        }
    }
    Err(DecodeError::NoValidSet.into())
}

fn passes_unknown(
    cand: &[usize],
    dmax: usize,
    checks: &BTreeMap<(usize, usize), Check>,
    cols: &Columns,
    dif: &mut [u64],
    eq: &mut [u64],
) -> bool {
    let k = cand.len();
    // each member is in S_dif (1), S_eq (2) or neither (0)
    let mut labels = vec![0u8; k];
    loop {
        let ell = labels.iter().filter(|&&l| l == 1).count();
        let kp = ell + labels.iter().filter(|&&l| l == 2).count();
        if ell >= 1 && ell + k - kp > dmax {
            if let Some(check) = checks.get(&(kp, ell)) {
                debug_assert_eq!((check.k, check.ell), (kp, ell));
                let pick = |want: u8| {
                    cand.iter()
                        .zip(&labels)
                        .filter(move |(_, &l)| l == want)
                        .map(|(&j, _)| j)
                };
                cols.or_of(pick(1), dif);
                cols.or_of(pick(2), eq);
                if !(cols.density(dif, eq, &check.table) >= check.gamma) {
                    return false;
                }
            }
        }
        // base-3 increment
        let mut i = 0;
        loop {
            if i == k {
                return true;
            }
            labels[i] += 1;
            if labels[i] < 3 {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}
