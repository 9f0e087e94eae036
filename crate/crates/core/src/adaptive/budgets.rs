use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::infotheory::{channel_capacity, d2, h2, BinaryChannelLaw};
use crate::model::Channel;

/// Test counts and tuning constants for the staged pipelines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageBudgets {
    /// Non-adaptive stage-one tests.
    pub n1: usize,
    /// Cleanup tests over the items stage one rejected.
    pub n2a: usize,
    /// Repetitions per item in the check step.
    pub ncheck: usize,
    /// Repetitions per item in the final individual step.
    pub ntil: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub eta: f64,
    pub delta3: f64,
}

fn ceil(x: f64) -> usize {
    x.ceil().max(0.0) as usize
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {x}")))
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {x}")))
    }
}

fn check_symmetric_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 0.5 {
        Ok(())
    } else {
        Err(invalid(format!("rho must lie in (0, 1/2), got {rho}")))
    }
}

/// `ceil(c2a * m * ln(p / m))` cleanup tests for `m` expected leftovers.
fn cleanup_tests(p: usize, m: f64, c2a: f64) -> usize {
    if m <= 0.0 {
        return 0;
    }
    ceil(c2a * m * (p as f64 / m).ln())
}

/// `ceil(ln k / D(1/2 || rho) * (1 + eta))`.
pub fn majority_reps(k: f64, rho: f64, eta: f64) -> usize {
    ceil(k.ln() / d2(0.5, rho) * (1.0 + eta))
}

/// Budgets for the two-stage symmetric-noise pipeline.
pub fn budgets_alg1(
    p: usize,
    k: usize,
    rho: f64,
    eta: f64,
    c1: f64,
    c2a: f64,
    alpha1: f64,
) -> Result<StageBudgets> {
    if k < 2 || k > p {
        return Err(invalid(format!("need 2 <= k <= p, got k = {k}, p = {p}")));
    }
    check_symmetric_rho(rho)?;
    check_positive("eta", eta)?;
    check_positive("c1", c1)?;
    check_positive("c2a", c2a)?;
    check_unit("alpha1", alpha1)?;
    let (pf, kf) = (p as f64, k as f64);
    Ok(StageBudgets {
        n1: ceil(c1 * kf * (pf / kf).ln() / (2f64.ln() - h2(rho))),
        n2a: cleanup_tests(p, alpha1 * kf, c2a),
        ncheck: 0,
        ntil: majority_reps(kf, rho, eta),
        alpha1,
        eta,
        ..StageBudgets::default()
    })
}

/// Free parameters of the three-stage symmetric-noise pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Alg2Params {
    pub gamma: f64,
    pub delta2: f64,
    pub alpha2: f64,
    /// Defaults to `rho + 0.9 (1 - 2 rho)`.
    pub zeta: Option<f64>,
    pub eta: f64,
    pub delta3: f64,
}

impl Default for Alg2Params {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            delta2: 0.5,
            alpha2: 0.3,
            zeta: None,
            eta: 0.5,
            delta3: 0.01,
        }
    }
}

/// Stage-one sizing terms, in tests, for `k = p^theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageOneTerms {
    pub mi1: f64,
    pub mi2: f64,
    pub conc: f64,
    pub indiv: f64,
}

impl StageOneTerms {
    pub fn new(p: f64, k: f64, rho: f64, gamma: f64, delta2: f64) -> Self {
        let theta = k.ln() / p.ln();
        let (ln2, a) = (2f64.ln(), 1.0 - 2.0 * rho);
        let l = ((1.0 - rho) / rho).ln();
        let klogk = k * k.ln();
        Self {
            mi1: k * (p / k).ln() / (ln2 - h2(rho)),
            mi2: 2.0 / (ln2 * a * l) / (1.0 - delta2)
                * ((1.0 - theta) * k * p.ln() + 2.0 * (1.0 - gamma) * klogk),
            conc: 4.0 * (1.0 + delta2 * a / 3.0) / (ln2 * delta2 * delta2 * a * a)
                * (1.0 - gamma)
                * klogk,
            indiv: gamma * klogk / d2(rho, 1.0 - rho),
        }
    }

    pub fn stage_one(&self) -> f64 {
        self.mi1.max(self.mi2).max(self.conc)
    }
}

/// Budgets for the three-stage symmetric-noise pipeline.
pub fn budgets_alg2(
    p: usize,
    k: usize,
    rho: f64,
    params: &Alg2Params,
    c1: f64,
    c2a: f64,
) -> Result<StageBudgets> {
    if k < 2 || k > p {
        return Err(invalid(format!("need 2 <= k <= p, got k = {k}, p = {p}")));
    }
    check_symmetric_rho(rho)?;
    check_unit("gamma", params.gamma)?;
    check_unit("delta2", params.delta2)?;
    check_unit("alpha2", params.alpha2)?;
    check_unit("delta3", params.delta3)?;
    check_positive("eta", params.eta)?;
    check_positive("c1", c1)?;
    check_positive("c2a", c2a)?;
    let zeta = params.zeta.unwrap_or(rho + 0.9 * (1.0 - 2.0 * rho));
    if !(zeta > rho && zeta < 1.0 - rho) {
        return Err(invalid(format!(
            "zeta must lie in ({rho}, {}), got {zeta}",
            1.0 - rho
        )));
    }
    let (pf, kf) = (p as f64, k as f64);
    let kg = kf.powf(params.gamma);
    if kg >= params.alpha2 * kf {
        return Err(invalid(format!(
            "need k^gamma < alpha2 k, got {kg} >= {}",
            params.alpha2 * kf
        )));
    }
    let terms = StageOneTerms::new(pf, kf, rho, params.gamma, params.delta2);
    Ok(StageBudgets {
        n1: ceil(c1 * terms.stage_one()),
        n2a: cleanup_tests(p, kg, c2a),
        ncheck: ceil((kg / params.delta3).ln() / d2(zeta, rho)),
        ntil: majority_reps(kf, rho, params.eta),
        alpha1: 0.0,
        alpha2: params.alpha2,
        gamma: params.gamma,
        zeta,
        eta: params.eta,
        delta3: params.delta3,
    })
}

/// Budgets for the noiseless two-stage pipeline; `k = 0` is allowed.
pub fn budgets_noiseless(p: usize, k: usize, c1: f64, c2a: f64, alpha1: f64) -> Result<StageBudgets> {
    if k > p {
        return Err(invalid(format!("k = {k} exceeds p = {p}")));
    }
    check_positive("c1", c1)?;
    check_positive("c2a", c2a)?;
    check_unit("alpha1", alpha1)?;
    let (pf, kf) = (p as f64, k as f64);
    let n1 = if k == 0 { 0 } else { ceil(c1 * kf * (pf / kf).log2()) };
    Ok(StageBudgets {
        n1,
        n2a: cleanup_tests(p, alpha1 * kf, c2a),
        ncheck: 0,
        ntil: 1,
        alpha1,
        ..StageBudgets::default()
    })
}

/// Budgets for the Z-channel three-stage pipeline.
pub fn budgets_zchannel(
    p: usize,
    k: usize,
    rho: f64,
    c1: f64,
    c2a: f64,
    alpha1: f64,
    c3: f64,
) -> Result<StageBudgets> {
    if k == 0 || k > p {
        return Err(invalid(format!("need 1 <= k <= p, got k = {k}, p = {p}")));
    }
    let law = BinaryChannelLaw::from(Channel::z_channel(rho)?);
    check_positive("c1", c1)?;
    check_positive("c2a", c2a)?;
    check_positive("c3", c3)?;
    check_unit("alpha1", alpha1)?;
    let (pf, kf) = (p as f64, k as f64);
    let cap = channel_capacity(&law).0;
    Ok(StageBudgets {
        n1: ceil(c1 * kf * (pf / kf).ln() / cap),
        n2a: cleanup_tests(p, alpha1 * kf, c2a),
        ncheck: ceil(kf.ln().ln().max(1.0)),
        ntil: ceil(c3 * kf.ln().max(1.0)),
        alpha1,
        ..StageBudgets::default()
    })
}
