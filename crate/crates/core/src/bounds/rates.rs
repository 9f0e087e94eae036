use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::infotheory::{channel_capacity, d2, h2, BinaryChannelLaw};
use crate::model::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    ConverseSym,
    AchSimple,
    AchPractical,
    AchRefined,
    CapacityConverse,
    ZAch,
    ReverseZConverse,
    Noiseless,
}

impl RateSource {
    pub const ALL: [RateSource; 8] = [
        RateSource::ConverseSym,
        RateSource::AchSimple,
        RateSource::AchPractical,
        RateSource::AchRefined,
        RateSource::CapacityConverse,
        RateSource::ZAch,
        RateSource::ReverseZConverse,
        RateSource::Noiseless,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RateSource::ConverseSym => "converse_sym",
            RateSource::AchSimple => "ach_simple",
            RateSource::AchPractical => "ach_practical",
            RateSource::AchRefined => "ach_refined",
            RateSource::CapacityConverse => "capacity_converse",
            RateSource::ZAch => "z_ach",
            RateSource::ReverseZConverse => "reverse_z_converse",
            RateSource::Noiseless => "noiseless",
        }
    }

    pub fn is_converse(self) -> bool {
        matches!(
            self,
            RateSource::ConverseSym | RateSource::CapacityConverse | RateSource::ReverseZConverse
        )
    }
}

impl fmt::Display for RateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RateSource::ALL
            .into_iter()
            .find(|src| src.name() == s)
            .ok_or_else(|| invalid(format!("unknown rate source '{s}'")))
    }
}

/// A normalized rate: tests divided by `k log2(p/k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub theta: f64,
    pub rho: f64,
    pub source: RateSource,
    pub rate: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("theta must lie in (0, 1), got {theta}")))
    }
}

fn check_rho(rho: f64, upper: f64) -> Result<()> {
    if rho > 0.0 && rho < upper {
        Ok(())
    } else {
        Err(invalid(format!("rho must lie in (0, {upper}), got {rho}")))
    }
}

/// `k log k` over `k log(p/k)` when `k = p^theta`.
fn ratio(theta: f64) -> f64 {
    theta / (1.0 - theta)
}

fn point(theta: f64, rho: f64, source: RateSource, rate: f64) -> RatePoint {
    RatePoint {
        theta,
        rho,
        source,
        rate,
    }
}

fn mi_term(rho: f64) -> f64 {
    let ln2 = 2f64.ln();
    ln2 / (ln2 - h2(rho))
}

pub fn converse_rate_symmetric(theta: f64, rho: f64) -> Result<RatePoint> {
    check_theta(theta)?;
    check_rho(rho, 0.5)?;
    let second = ratio(theta) * 2f64.ln() / ((1.0 - rho) / rho).ln();
    Ok(point(theta, rho, RateSource::ConverseSym, mi_term(rho).max(second)))
}

fn simple_second(theta: f64, rho: f64) -> f64 {
    ratio(theta) * 2f64.ln() / (0.5 * (1.0 / (4.0 * rho * (1.0 - rho))).ln())
}

pub fn ach_rate_simple(theta: f64, rho: f64) -> Result<RatePoint> {
    check_theta(theta)?;
    check_rho(rho, 0.5)?;
    let rate = mi_term(rho) + simple_second(theta, rho);
    Ok(point(theta, rho, RateSource::AchSimple, rate))
}

pub fn ach_rate_practical(theta: f64, rho: f64) -> Result<RatePoint> {
    check_theta(theta)?;
    check_rho(rho, 0.5)?;
    let rate = mi_term(rho) / 2f64.ln() + simple_second(theta, rho);
    Ok(point(theta, rho, RateSource::AchPractical, rate))
}

/// The normalized three-stage objective at `(gamma, delta2)`.
#[derive(Debug, Clone, Copy)]
pub struct RefinedObjective {
    mi1: f64,
    t: f64,
    a: f64,
    l: f64,
    d_indiv: f64,
}

impl RefinedObjective {
    pub fn new(theta: f64, rho: f64) -> Self {
        Self {
            mi1: mi_term(rho),
            t: ratio(theta),
            a: 1.0 - 2.0 * rho,
            l: ((1.0 - rho) / rho).ln(),
            d_indiv: d2(rho, 1.0 - rho),
        }
    }

    pub fn mi2(&self, gamma: f64, delta: f64) -> f64 {
        2.0 * (1.0 + 2.0 * (1.0 - gamma) * self.t) / (self.a * self.l * (1.0 - delta))
    }

    pub fn conc(&self, gamma: f64, delta: f64) -> f64 {
        4.0 * (1.0 + delta * self.a / 3.0) * (1.0 - gamma) * self.t
            / (delta * delta * self.a * self.a)
    }

    pub fn indiv(&self, gamma: f64) -> f64 {
        gamma * self.t * 2f64.ln() / self.d_indiv
    }

    pub fn eval(&self, gamma: f64, delta: f64) -> f64 {
        self.mi1.max(self.mi2(gamma, delta)).max(self.conc(gamma, delta)) + self.indiv(gamma)
    }

    /// Limit as `gamma -> 1` and `delta -> 0` with `(1-gamma)/delta^2 -> 0`.
    pub fn corner(&self) -> f64 {
        self.mi1.max(2.0 / (self.a * self.l)) + self.indiv(1.0)
    }
}

const GRID: usize = 400;

/// Infimum of the three-stage objective over `gamma` in `[0, 1]` and
/// `delta2` in `(0, 1)`, by grid search and compass refinement.
pub fn refined_infimum(theta: f64, rho: f64) -> (f64, f64, f64) {
    let obj = RefinedObjective::new(theta, rho);
    let mut best = (obj.corner(), 1.0, 0.0);
    for i in 0..=GRID {
        let gamma = i as f64 / GRID as f64;
        for j in 0..GRID {
            let delta = (j as f64 + 0.5) / GRID as f64;
            let v = obj.eval(gamma, delta);
            if v < best.0 {
                best = (v, gamma, delta);
            }
        }
    }
    if best.2 == 0.0 {
        return best;
    }
    let (mut v, mut g, mut d) = best;
    let mut step = 1.0 / GRID as f64;
    let dirs = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
    while step > 1e-12 {
        let mut moved = false;
        for (dg, dd) in dirs {
            let ng = (g + dg * step).clamp(0.0, 1.0);
            let nd = (d + dd * step).clamp(1e-15, 1.0 - 1e-15);
            let nv = obj.eval(ng, nd);
            if nv < v {
                (v, g, d) = (nv, ng, nd);
                moved = true;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    (v.min(obj.corner()), g, d)
}

pub fn ach_rate_refined(theta: f64, rho: f64) -> Result<RatePoint> {
    check_theta(theta)?;
    check_rho(rho, 0.5)?;
    let (rate, _, _) = refined_infimum(theta, rho);
    Ok(point(theta, rho, RateSource::AchRefined, rate))
}

fn capacity(channel: &Channel) -> f64 {
    channel_capacity(&BinaryChannelLaw::from(*channel)).0
}

/// `ln 2 / C` for any of the supported channels.
pub fn capacity_converse_rate(theta: f64, channel: &Channel) -> Result<RatePoint> {
    check_theta(theta)?;
    Ok(point(
        theta,
        channel.rho(),
        RateSource::CapacityConverse,
        2f64.ln() / capacity(channel),
    ))
}

pub fn reverse_z_converse_rate(theta: f64, rho: f64) -> Result<RatePoint> {
    check_theta(theta)?;
    let ch = Channel::reverse_z(rho)?;
    let first = 2f64.ln() / capacity(&ch);
    let second = ratio(theta) * 2f64.ln() / (1.0 / rho).ln();
    Ok(point(theta, rho, RateSource::ReverseZConverse, first.max(second)))
}

pub fn z_achievability_rate(theta: f64, rho: f64) -> Result<RatePoint> {
    check_theta(theta)?;
    let ch = Channel::z_channel(rho)?;
    Ok(point(theta, rho, RateSource::ZAch, 2f64.ln() / capacity(&ch)))
}

pub fn noiseless_rate(theta: f64) -> Result<RatePoint> {
    check_theta(theta)?;
    Ok(point(theta, 0.0, RateSource::Noiseless, 1.0))
}

/// Evaluate one source at `(theta, rho)`. Capacity rows use the symmetric
/// channel with crossover `rho`.
pub fn rate(source: RateSource, theta: f64, rho: f64) -> Result<RatePoint> {
    match source {
        RateSource::ConverseSym => converse_rate_symmetric(theta, rho),
        RateSource::AchSimple => ach_rate_simple(theta, rho),
        RateSource::AchPractical => ach_rate_practical(theta, rho),
        RateSource::AchRefined => ach_rate_refined(theta, rho),
        RateSource::CapacityConverse => capacity_converse_rate(theta, &Channel::symmetric(rho)?),
        RateSource::ZAch => z_achievability_rate(theta, rho),
        RateSource::ReverseZConverse => reverse_z_converse_rate(theta, rho),
        RateSource::Noiseless => noiseless_rate(theta).map(|pt| RatePoint { rho, ..pt }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(r: f64) -> f64 {
        -r * r.ln() - (1.0 - r) * (1.0 - r).ln()
    }

    #[test]
    fn converse_limits_and_value() {
        let r = converse_rate_symmetric(0.5, 1e-12).unwrap().rate;
        assert!((r - 1.0).abs() < 1e-9);
        let r = converse_rate_symmetric(1e-9, 0.11).unwrap().rate;
        assert!((r - 2f64.ln() / (2f64.ln() - h(0.11))).abs() < 1e-12);
        let (rho, ln2) = (0.11f64, 2f64.ln());
        let want = (ln2 / (ln2 - h(rho))).max(ln2 / ((1.0 - rho) / rho).ln());
        assert!((converse_rate_symmetric(0.5, rho).unwrap().rate - want).abs() < 1e-12);
    }

    #[test]
    fn simple_and_practical() {
        let (theta, rho, ln2) = (0.5f64, 0.11f64, 2f64.ln());
        let first = ln2 / (ln2 - h(rho));
        let second = ln2 / (0.5 * (1.0 / (4.0 * rho * (1.0 - rho))).ln());
        let s = ach_rate_simple(theta, rho).unwrap().rate;
        assert!((s - (first + second)).abs() < 1e-12);
        let p = ach_rate_practical(theta, rho).unwrap().rate;
        assert!((p - (s + (1.0 / ln2 - 1.0) * first)).abs() < 1e-12);
        let small = ach_rate_practical(1e-9, 1e-12).unwrap().rate;
        assert!((small - 1.0 / ln2).abs() < 1e-6);
        assert!((ach_rate_simple(1e-12, 0.11).unwrap().rate - first).abs() < 1e-9);
    }

    #[test]
    fn refined_sits_between() {
        for &rho in &[0.11, 1e-4, 0.3] {
            for i in 1..20 {
                let theta = i as f64 / 20.0;
                let c = converse_rate_symmetric(theta, rho).unwrap().rate;
                let r = ach_rate_refined(theta, rho).unwrap().rate;
                let s = ach_rate_simple(theta, rho).unwrap().rate;
                assert!(c <= r + 1e-9, "theta {theta} rho {rho}: {c} > {r}");
                assert!(r <= s + 1e-6, "theta {theta} rho {rho}: {r} > {s}");
            }
        }
    }

    #[test]
    fn refined_small_gamma_matches_exact_recovery_term() {
        let (theta, rho) = (0.3, 0.11);
        let obj = RefinedObjective::new(theta, rho);
        let exact = (1..1000)
            .map(|j| {
                let d = j as f64 / 1000.0;
                obj.eval(0.0, d)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(ach_rate_refined(theta, rho).unwrap().rate <= exact + 1e-9);
    }

    #[test]
    fn capacity_rates() {
        let c = capacity_converse_rate(0.5, &Channel::symmetric(0.11).unwrap()).unwrap().rate;
        let want = 2f64.ln() / (2f64.ln() - h(0.11));
        assert!((c - want).abs() < 1e-8);
        let z = capacity_converse_rate(0.5, &Channel::z_channel(0.3).unwrap()).unwrap().rate;
        let rz = capacity_converse_rate(0.5, &Channel::reverse_z(0.3).unwrap()).unwrap().rate;
        assert!((z - rz).abs() < 1e-8);
        let za = z_achievability_rate(0.1, 0.3).unwrap().rate;
        assert_eq!(za, z_achievability_rate(0.9, 0.3).unwrap().rate);
        assert!((za - z).abs() < 1e-12);
        let closed = 2f64.ln() / (1.0 + 0.7 * 0.3f64.powf(0.3 / 0.7)).ln();
        assert!((za - closed).abs() < 1e-8);
    }

    #[test]
    fn reverse_z_rates() {
        assert!((reverse_z_converse_rate(0.5, 1e-12).unwrap().rate - 1.0).abs() < 1e-6);
        let a = reverse_z_converse_rate(0.99, 0.3).unwrap().rate;
        let b = reverse_z_converse_rate(0.999, 0.3).unwrap().rate;
        assert!(b > 5.0 * a / 2.0);
        let ch = Channel::z_channel(0.3).unwrap();
        let cap = channel_capacity(&BinaryChannelLaw::from(ch)).0;
        let want = (2f64.ln() / cap).max(2f64.ln() / (1.0f64 / 0.3).ln());
        assert!((reverse_z_converse_rate(0.5, 0.3).unwrap().rate - want).abs() < 1e-8);
    }

    #[test]
    fn sources_round_trip() {
        for s in RateSource::ALL {
            assert_eq!(s.name().parse::<RateSource>().unwrap(), s);
        }
        assert!("bogus".parse::<RateSource>().is_err());
    }
}
