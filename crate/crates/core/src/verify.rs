//! Invariant batteries behind `agt verify`.

use std::fmt;

use crate::bounds::{strategy_corpus, verify_change_of_measure, MeasureCheck, MeasureNoise};
use crate::error::{invalid, Result};
use crate::harness::empirical_chernoff_check;
use crate::infotheory::{
    asymptotic_mi, channel_capacity, exact_conditional_mi, h2, BinaryChannelLaw, DensityContext,
    MiRegime,
};
use crate::model::Channel;

pub const BATTERIES: [&str; 4] = ["change-of-measure", "chernoff", "mutual-information", "capacity"];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryReport {
    pub name: &'static str,
    pub checks: Vec<CheckLine>,
}

impl BatteryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for BatteryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} [{}] {}: {}", self.name, c.label, c.detail)?;
        }
        Ok(())
    }
}

fn line(label: impl Into<String>, pass: bool, detail: impl Into<String>) -> CheckLine {
    CheckLine {
        label: label.into(),
        pass,
        detail: detail.into(),
    }
}

/// Every strategy in the corpus at `p = 6`, `k = 2`, `n = 14`.
pub fn change_of_measure_battery(negate: bool) -> Result<BatteryReport> {
    let noises = [
        MeasureNoise::Symmetric(0.1),
        MeasureNoise::Symmetric(0.3),
        MeasureNoise::ReverseZ(0.1),
        MeasureNoise::ReverseZ(0.3),
    ];
    let mut checks = Vec::new();
    for noise in noises {
        for mut strategy in strategy_corpus() {
            let cfg = MeasureCheck {
                p: 6,
                k: 2,
                n: 14,
                noise,
                epsilon: 0.1,
                negate,
            };
            let r = verify_change_of_measure(cfg, strategy.as_mut())?;
            checks.push(line(
                format!("{} {noise:?}", r.strategy),
                r.passed(),
                format!("{} sequences, {} checks, {} violations", r.sequences, r.checks, r.violations),
            ));
        }
    }
    Ok(BatteryReport {
        name: "change-of-measure",
        checks,
    })
}

pub fn chernoff_battery() -> Result<BatteryReport> {
    let cases = [(100u64, 0.3, 0.2), (50, 0.89, 0.5), (200, 0.11, 0.05)];
    let mut checks = Vec::new();
    for (i, (n, q, qp)) in cases.into_iter().enumerate() {
        let r = empirical_chernoff_check(n, q, qp, 100_000, 0xc4e7 + i as u64)?;
        checks.push(line(
            format!("N={n} q={q} q'={qp}"),
            r.passed(),
            format!("empirical {:.6} vs bound {:.6} (sigma {:.2e})", r.empirical, r.bound, r.sigma),
        ));
    }
    Ok(BatteryReport {
        name: "chernoff",
        checks,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn mutual_information_battery() -> Result<BatteryReport> {
    let (rho, nu) = (0.11, 2f64.ln());
    let law = BinaryChannelLaw::from(Channel::symmetric(rho)?);
    let mut checks = Vec::new();

    let ctx = DensityContext::with_default_q(100_000, 100, nu, law)?;
    let (exact, approx) = (exact_conditional_mi(&ctx), asymptotic_mi(&ctx, MiRegime::SmallFraction)?);
    let e = rel(exact, approx);
    checks.push(line("small fraction k=1e5 ell=100", e <= 0.02, format!("relative gap {e:.3e}")));

    let ctx = DensityContext::with_default_q(500, 500, nu, law)?;
    let (exact, approx) = (exact_conditional_mi(&ctx), asymptotic_mi(&ctx, MiRegime::ConstantFraction(1.0))?);
    let e = rel(exact, approx);
    checks.push(line("full split k=ell=500", e <= 0.01, format!("relative gap {e:.3e}")));

    let e = (approx - (2f64.ln() - h2(rho))).abs();
    checks.push(line("full split identity", e <= 1e-10, format!("absolute gap {e:.3e}")));

    Ok(BatteryReport {
        name: "mutual-information",
        checks,
    })
}

pub fn capacity_battery() -> Result<BatteryReport> {
    let mut checks = Vec::new();
    for rho in [0.01, 0.11, 0.3, 0.45] {
        let c = channel_capacity(&BinaryChannelLaw::from(Channel::symmetric(rho)?)).0;
        let e = (c - (2f64.ln() - h2(rho))).abs();
        checks.push(line(format!("symmetric rho={rho}"), e <= 1e-8, format!("gap {e:.3e}")));
    }
    for rho in [0.1, 0.3, 0.6] {
        let z = channel_capacity(&BinaryChannelLaw::from(Channel::z_channel(rho)?)).0;
        let rz = channel_capacity(&BinaryChannelLaw::from(Channel::reverse_z(rho)?)).0;
        let closed = (1.0 + (1.0 - rho) * rho.powf(rho / (1.0 - rho))).ln();
        let e = (z - closed).abs().max((z - rz).abs());
        checks.push(line(format!("z / reverse-z rho={rho}"), e <= 1e-8, format!("gap {e:.3e}")));
    }
    Ok(BatteryReport {
        name: "capacity",
        checks,
    })
}

/// Run one named battery, or all of them. `inject_fault` negates the
/// change-of-measure inequality so that battery must fail.
pub fn run_batteries(only: Option<&str>, inject_fault: bool) -> Result<Vec<BatteryReport>> {
    let names: Vec<&str> = match only {
        Some(name) if BATTERIES.contains(&name) => vec![name],
        Some(name) => return Err(invalid(format!("unknown battery '{name}'; expected one of {BATTERIES:?}"))),
        None => BATTERIES.to_vec(),
    };
    names
        .into_iter()
        .map(|name| match name {
            "change-of-measure" => change_of_measure_battery(inject_fault),
            "chernoff" => chernoff_battery(),
            "mutual-information" => mutual_information_battery(),
            _ => capacity_battery(),
        })
        .collect()
}
