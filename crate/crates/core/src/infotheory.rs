//! Binary information measures in nats.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::Channel;

/// `P[Y = 1 | U = 0]` and `P[Y = 1 | U = 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryChannelLaw {
    pub p_y1_given_u0: f64,
    pub p_y1_given_u1: f64,
}

impl BinaryChannelLaw {
    pub fn new(p_y1_given_u0: f64, p_y1_given_u1: f64) -> Result<Self> {
        let ok = |x: f64| (0.0..=1.0).contains(&x);
        if !ok(p_y1_given_u0) || !ok(p_y1_given_u1) {
            return Err(invalid("channel law entries must lie in [0, 1]"));
        }
        Ok(Self {
            p_y1_given_u0,
            p_y1_given_u1,
        })
    }

    /// `P[Y = y | U = u]`.
    pub fn prob(&self, y: bool, u: bool) -> f64 {
        let one = if u { self.p_y1_given_u1 } else { self.p_y1_given_u0 };
        if y {
            one
        } else {
            1.0 - one
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.p_y1_given_u0 == self.p_y1_given_u1
    }

    /// `I(U; Y)` for `U ~ Bernoulli(pi)`.
    pub fn mutual_information(&self, pi: f64) -> f64 {
        let py1 = pi * self.p_y1_given_u1 + (1.0 - pi) * self.p_y1_given_u0;
        let mi = h2(py1) - (pi * h2(self.p_y1_given_u1) + (1.0 - pi) * h2(self.p_y1_given_u0));
        mi.max(0.0)
    }

    /// The noise level of a symmetric law, if it is one.
    fn symmetric_rho(&self) -> Option<f64> {
        let rho = self.p_y1_given_u0;
        let sym = (self.p_y1_given_u1 - (1.0 - rho)).abs() < 1e-15 && rho > 0.0 && rho < 0.5;
        sym.then_some(rho)
    }
}

impl From<Channel> for BinaryChannelLaw {
    fn from(ch: Channel) -> Self {
        Self {
            p_y1_given_u0: ch.p_positive(false),
            p_y1_given_u1: ch.p_positive(true),
        }
    }
}

/// `x ln(1/x)` with the `0 ln(1/0) = 0` convention.
fn xlog_inv(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

pub(crate) fn h2(rho: f64) -> f64 {
    if rho <= 0.0 || rho >= 1.0 {
        0.0
    } else {
        xlog_inv(rho) + xlog_inv(1.0 - rho)
    }
}

pub fn binary_entropy(rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid(format!("probability out of range: {rho}")));
    }
    Ok(h2(rho))
}

fn kl_term(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln()
    }
}

/// `D(Bern(qp) || Bern(q))`.
///
/// Returns `+inf` when `q` is 0 or 1 and `qp` puts mass where `q` has none.
pub fn binary_kl(qp: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&qp) || !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("probability out of range: ({qp}, {q})")));
    }
    Ok((kl_term(qp, q) + kl_term(1.0 - qp, 1.0 - q)).max(0.0))
}

pub(crate) fn d2(qp: f64, q: f64) -> f64 {
    kl_term(qp, q) + kl_term(1.0 - qp, 1.0 - q)
}

pub fn binary_convolution(a: f64, b: f64) -> f64 {
    a * (1.0 - b) + (1.0 - a) * b
}

/// `ln C(n, r)`, or `-inf` when `r > n`.
pub fn ln_binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return f64::NEG_INFINITY;
    }
    if r == 0 || r == n {
        return 0.0;
    }
    let (n, r) = (n as f64, r as f64);
    libm::lgamma(n + 1.0) - libm::lgamma(r + 1.0) - libm::lgamma(n - r + 1.0)
}

/// Capacity in nats and the maximizing `P[U = 1]`.
pub fn channel_capacity(law: &BinaryChannelLaw) -> (f64, f64) {
    if law.is_degenerate() {
        return (0.0, 0.5);
    }
    let f = |pi: f64| law.mutual_information(pi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let pi = 0.5 * (a + b);
    (f(pi), pi)
}

/// Parameters of the i.i.d. Bernoulli design seen by a split `(S_dif, S_eq)`
/// of a candidate set of size `k` with `|S_dif| = ell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityContext {
    pub k: usize,
    pub ell: usize,
    pub nu: f64,
    pub law: BinaryChannelLaw,
    pub q_one: f64,
}

impl DensityContext {
    pub fn new(k: usize, ell: usize, nu: f64, law: BinaryChannelLaw, q_one: f64) -> Result<Self> {
        if ell == 0 || ell > k {
            return Err(invalid(format!("need 1 <= ell <= k, got ell = {ell}, k = {k}")));
        }
        if !(nu > 0.0) {
            return Err(invalid(format!("nu must be positive, got {nu}")));
        }
        if !(q_one > 0.0 && q_one < 1.0) {
            return Err(invalid(format!("q_one must lie in (0, 1), got {q_one}")));
        }
        Ok(Self {
            k,
            ell,
            nu,
            law,
            q_one,
        })
    }

    /// The usual `q_one = nu / k`.
    pub fn with_default_q(k: usize, ell: usize, nu: f64, law: BinaryChannelLaw) -> Result<Self> {
        Self::new(k, ell, nu, law, nu / k as f64)
    }

    /// Probability that some item of `S_dif` is in a test.
    pub fn q_dif(&self) -> f64 {
        1.0 - (1.0 - self.q_one).powi(self.ell as i32)
    }

    /// Probability that no item of `S_eq` is in a test.
    pub fn p_eq_clear(&self) -> f64 {
        (1.0 - self.q_one).powi((self.k - self.ell) as i32)
    }

    /// Per-test densities for a test whose `S_eq` part is empty,
    /// indexed `[or_dif][y]`.
    pub fn term_table(&self) -> [[f64; 2]; 2] {
        let q1 = self.q_dif();
        let mut t = [[0.0; 2]; 2];
        for (d, row) in t.iter_mut().enumerate() {
            for (y, cell) in row.iter_mut().enumerate() {
                let y = y == 1;
                let num = self.law.prob(y, d == 1);
                let den = (1.0 - q1) * self.law.prob(y, false) + q1 * self.law.prob(y, true);
                *cell = log_ratio(num, den);
            }
        }
        t
    }
}

fn log_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        f64::NEG_INFINITY
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        (num / den).ln()
    }
}

/// `I(X_dif; Y | X_eq)` under the i.i.d. design.
pub fn exact_conditional_mi(ctx: &DensityContext) -> f64 {
    ctx.p_eq_clear() * ctx.law.mutual_information(ctx.q_dif())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MiRegime {
    /// `ell / k` vanishing.
    SmallFraction,
    /// `ell / k` tending to `alpha` in `(0, 1]`.
    ConstantFraction(f64),
}

/// Leading-order asymptotics of the conditional mutual information for
/// symmetric noise.
pub fn asymptotic_mi(ctx: &DensityContext, regime: MiRegime) -> Result<f64> {
    let rho = ctx
        .law
        .symmetric_rho()
        .ok_or_else(|| Error::Unsupported("asymptotic formulas need symmetric noise".into()))?;
    let nu = ctx.nu;
    match regime {
        MiRegime::SmallFraction => {
            let frac = ctx.ell as f64 / ctx.k as f64;
            Ok((-nu).exp() * nu * frac * (1.0 - 2.0 * rho) * ((1.0 - rho) / rho).ln())
        }
        MiRegime::ConstantFraction(alpha) => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
            }
            let inner = binary_convolution((-alpha * nu).exp(), rho);
            Ok((-(1.0 - alpha) * nu).exp() * (h2(inner) - h2(rho)))
        }
    }
}

/// Summed information density of `y` given the split rows.
///
/// `x_dif[i]` and `x_eq[i]` hold the entries of test `i` restricted to
/// `S_dif` and `S_eq`. A zero-probability outcome yields `-inf`.
pub fn information_density(
    x_dif: &[Vec<bool>],
    x_eq: &[Vec<bool>],
    y: &[bool],
    ctx: &DensityContext,
) -> Result<f64> {
    if x_dif.len() != y.len() {
        return Err(Error::SizeMismatch {
            expected: y.len(),
            got: x_dif.len(),
        });
    }
    if x_eq.len() != y.len() {
        return Err(Error::SizeMismatch {
            expected: y.len(),
            got: x_eq.len(),
        });
    }
    let table = ctx.term_table();
    let mut total = 0.0;
    for ((dif, eq), &yi) in x_dif.iter().zip(x_eq).zip(y) {
        if eq.iter().any(|&b| b) {
            continue;
        }
        let d = usize::from(dif.iter().any(|&b| b));
        total += table[d][usize::from(yi)];
    }
    Ok(total)
}
