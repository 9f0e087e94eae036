use itertools::Itertools;

use crate::error::{invalid, Result};
use crate::model::{TestPool, TranscriptEntry};

/// A test-design rule that picks the next pool from the outcomes so far.
///
/// Implementations must be deterministic functions of `history`; the
/// verifier calls `next_test` twice per node and rejects mismatches.
pub trait AdaptiveStrategy {
    fn name(&self) -> &str;
    fn next_test(&mut self, p: usize, history: &[TranscriptEntry]) -> TestPool;
}

/// Item `i mod p` at step `i`, ignoring outcomes.
#[derive(Debug, Clone, Default)]
pub struct IndividualCycle;

impl AdaptiveStrategy for IndividualCycle {
    fn name(&self) -> &str {
        "individual_cycle"
    }

    fn next_test(&mut self, p: usize, history: &[TranscriptEntry]) -> TestPool {
        TestPool::singleton(p, history.len() % p)
    }
}

/// Binary splitting: a positive pool is split in halves, which are tested
/// next; once nothing is pending the whole population is tested again.
#[derive(Debug, Clone, Default)]
pub struct BinarySplitting;

impl AdaptiveStrategy for BinarySplitting {
    fn name(&self) -> &str {
        "binary_splitting"
    }

    fn next_test(&mut self, p: usize, history: &[TranscriptEntry]) -> TestPool {
        let full: Vec<usize> = (0..p).collect();
        let mut stack: Vec<Vec<usize>> = Vec::new();
        for entry in history {
            let pool = stack.pop().unwrap_or_else(|| full.clone());
            if entry.outcome && pool.len() > 1 {
                let (a, b) = pool.split_at(pool.len() / 2);
                stack.push(b.to_vec());
                stack.push(a.to_vec());
            }
        }
        TestPool::from_items(p, stack.pop().unwrap_or(full))
    }
}

/// Pairs `{2i, 2i+1}` in turn; a positive pair is followed by individual
/// tests of its two members.
#[derive(Debug, Clone, Default)]
pub struct PairFollowUp;

impl AdaptiveStrategy for PairFollowUp {
    fn name(&self) -> &str {
        "pair_follow_up"
    }

    fn next_test(&mut self, p: usize, history: &[TranscriptEntry]) -> TestPool {
        let pairs = p.div_ceil(2);
        let mut next_pair = 0usize;
        let mut pending: Vec<usize> = Vec::new();
        for entry in history {
            if pending.pop().is_some() {
                continue;
            }
            let lo = 2 * (next_pair % pairs);
            next_pair += 1;
            if entry.outcome {
                pending = (lo..(lo + 2).min(p)).rev().collect();
            }
        }
        match pending.last() {
            Some(&j) => TestPool::singleton(p, j),
            None => {
                let lo = 2 * (next_pair % pairs);
                TestPool::from_items(p, lo..(lo + 2).min(p))
            }
        }
    }
}

/// Non-adaptive pseudo-random design from a fixed hash of `(step, item)`.
#[derive(Debug, Clone)]
pub struct HashedDesign {
    pub salt: u64,
}

impl AdaptiveStrategy for HashedDesign {
    fn name(&self) -> &str {
        "hashed_design"
    }

    fn next_test(&mut self, p: usize, history: &[TranscriptEntry]) -> TestPool {
        let step = history.len() as u64;
        TestPool::from_items(
            p,
            (0..p).filter(|&j| splitmix(self.salt ^ (step << 16) ^ j as u64) & 3 == 0),
        )
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Noise models covered by the verifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureNoise {
    /// Flip with probability `rho`; ratio `rho / (1 - rho)`.
    Symmetric(f64),
    /// Negative outcomes flip with probability `rho`; ratio `rho`.
    ReverseZ(f64),
}

impl MeasureNoise {
    fn p_positive(self, u: bool) -> f64 {
        match (self, u) {
            (MeasureNoise::Symmetric(r), false) => r,
            (MeasureNoise::Symmetric(r), true) => 1.0 - r,
            (MeasureNoise::ReverseZ(r), false) => r,
            (MeasureNoise::ReverseZ(_), true) => 1.0,
        }
    }

    fn ln_prob(self, y: bool, u: bool) -> f64 {
        let one = self.p_positive(u);
        if y { one } else { 1.0 - one }.ln()
    }

    pub fn ratio(self) -> f64 {
        match self {
            MeasureNoise::Symmetric(r) => r / (1.0 - r),
            MeasureNoise::ReverseZ(r) => r,
        }
    }

    fn rho(self) -> f64 {
        match self {
            MeasureNoise::Symmetric(r) | MeasureNoise::ReverseZ(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureCheck {
    pub p: usize,
    pub k: usize,
    /// Number of tests; all `2^n` outcome sequences are enumerated.
    pub n: usize,
    pub noise: MeasureNoise,
    pub epsilon: f64,
    /// Check the reversed inequality instead; used to exercise failure paths.
    pub negate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub strategy: String,
    pub sequences: u64,
    /// `(S, j, y)` triples where `n_j(y)` is within the cap.
    pub checks: u64,
    pub violations: u64,
    /// Smallest `ln P_{S\j}[y] - ln(P_S[y] r^cap)` over finite checks.
    pub min_log_margin: f64,
}

impl MeasureReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

const MAX_TESTS: usize = 20;
const LOG_SLACK: f64 = 1e-9;

struct Walk<'a> {
    cfg: MeasureCheck,
    strategy: &'a mut dyn AdaptiveStrategy,
    big: Vec<Vec<usize>>,
    small: Vec<Vec<usize>>,
    // for each big set, index into `small` of S \ {S[m]}
    drop_index: Vec<Vec<usize>>,
    cap: f64,
    ln_bound: f64,
    history: Vec<TranscriptEntry>,
    report: MeasureReport,
}

impl Walk<'_> {
    fn recurse(&mut self, ln_big: &[f64], ln_small: &[f64], unique: &[Vec<u32>]) -> Result<()> {
        if self.history.len() == self.cfg.n {
            self.leaf(ln_big, ln_small, unique);
            return Ok(());
        }
        let pool = self.strategy.next_test(self.cfg.p, &self.history);
        let again = self.strategy.next_test(self.cfg.p, &self.history);
        if pool != again || pool.len() != self.cfg.p {
            return Err(invalid(format!(
                "strategy '{}' is not a deterministic function of past outcomes",
                self.strategy.name()
            )));
        }
        let hits_big: Vec<bool> = self.big.iter().map(|s| s.iter().any(|&j| pool.contains(j))).collect();
        let hits_small: Vec<bool> = self.small.iter().map(|s| s.iter().any(|&j| pool.contains(j))).collect();
        let mut next_unique = unique.to_vec();
        for (si, s) in self.big.iter().enumerate() {
            let inside: Vec<usize> = (0..s.len()).filter(|&m| pool.contains(s[m])).collect();
            if let [m] = inside[..] {
                next_unique[si][m] += 1;
            }
        }
        for y in [false, true] {
            let nb: Vec<f64> = ln_big
                .iter()
                .zip(&hits_big)
                .map(|(&l, &u)| l + self.cfg.noise.ln_prob(y, u))
                .collect();
            let ns: Vec<f64> = ln_small
                .iter()
                .zip(&hits_small)
                .map(|(&l, &u)| l + self.cfg.noise.ln_prob(y, u))
                .collect();
            self.history.push(TranscriptEntry {
                pool: pool.clone(),
                outcome: y,
            });
            let res = self.recurse(&nb, &ns, &next_unique);
            self.history.pop();
            res?;
        }
        Ok(())
    }

    fn leaf(&mut self, ln_big: &[f64], ln_small: &[f64], unique: &[Vec<u32>]) {
        self.report.sequences += 1;
        for (si, counts) in unique.iter().enumerate() {
            for (m, &nj) in counts.iter().enumerate() {
                if f64::from(nj) > self.cap {
                    continue;
                }
                self.report.checks += 1;
                let lhs = ln_small[self.drop_index[si][m]];
                let rhs = ln_big[si] + self.ln_bound;
                let holds = if rhs == f64::NEG_INFINITY {
                    true
                } else {
                    let margin = lhs - rhs;
                    self.report.min_log_margin = self.report.min_log_margin.min(margin);
                    margin >= -LOG_SLACK
                };
                let ok = if self.cfg.negate {
                    rhs != f64::NEG_INFINITY && lhs < rhs
                } else {
                    holds
                };
                if !ok {
                    self.report.violations += 1;
                }
            }
        }
    }
}

/// Exhaustively compare `P_{S\j}[y]` against `P_S[y] r^cap` with
/// `cap = (1 + 2 eps) n / k` for every `k`-subset `S` of `0..p`, every
/// `j` in `S` and every outcome sequence `y` with `n_j(y) <= cap`.
pub fn verify_change_of_measure(
    cfg: MeasureCheck,
    strategy: &mut dyn AdaptiveStrategy,
) -> Result<MeasureReport> {
    let rho = cfg.noise.rho();
    if !(rho > 0.0 && rho < 0.5) {
        return Err(invalid(format!("rho must lie in (0, 1/2), got {rho}")));
    }
    if cfg.k == 0 || cfg.k > cfg.p {
        return Err(invalid(format!("need 1 <= k <= p, got k = {}, p = {}", cfg.k, cfg.p)));
    }
    if cfg.n > MAX_TESTS {
        return Err(invalid(format!("at most {MAX_TESTS} tests can be enumerated, got {}", cfg.n)));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 0.5) {
        return Err(invalid(format!("epsilon must lie in (0, 1/2), got {}", cfg.epsilon)));
    }
    let big: Vec<Vec<usize>> = (0..cfg.p).combinations(cfg.k).collect();
    let small: Vec<Vec<usize>> = (0..cfg.p).combinations(cfg.k - 1).collect();
    let drop_index = big
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|m| {
                    let rest: Vec<usize> = s.iter().enumerate().filter(|&(i, _)| i != m).map(|(_, &j)| j).collect();
                    small.iter().position(|t| *t == rest).expect("subset present")
                })
                .collect()
        })
        .collect();
    let cap = (1.0 + 2.0 * cfg.epsilon) * cfg.n as f64 / cfg.k as f64;
    let name = strategy.name().to_string();
    let mut walk = Walk {
        cfg,
        strategy,
        big,
        small,
        drop_index,
        cap,
        ln_bound: cap * cfg.noise.ratio().ln(),
        history: Vec::with_capacity(cfg.n),
        report: MeasureReport {
            strategy: name,
            sequences: 0,
            checks: 0,
            violations: 0,
            min_log_margin: f64::INFINITY,
        },
    };
    let ln_big = vec![0.0; walk.big.len()];
    let ln_small = vec![0.0; walk.small.len()];
    let unique = vec![vec![0u32; cfg.k]; walk.big.len()];
    walk.recurse(&ln_big, &ln_small, &unique)?;
    Ok(walk.report)
}

/// The strategies exercised by the verification battery.
pub fn strategy_corpus() -> Vec<Box<dyn AdaptiveStrategy + Send>> {
    vec![
        Box::new(IndividualCycle),
        Box::new(BinarySplitting),
        Box::new(PairFollowUp),
        Box::new(HashedDesign { salt: 0x5eed }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(n: usize, noise: MeasureNoise) -> MeasureCheck {
        MeasureCheck {
            p: 6,
            k: 2,
            n,
            noise,
            epsilon: 0.1,
            negate: false,
        }
    }

    fn entry(p: usize, items: &[usize], y: bool) -> TranscriptEntry {
        TranscriptEntry {
            pool: TestPool::from_items(p, items.iter().copied()),
            outcome: y,
        }
    }

    #[test]
    fn zero_tests_is_vacuous() {
        let r = verify_change_of_measure(cfg(0, MeasureNoise::Symmetric(0.3)), &mut IndividualCycle).unwrap();
        assert_eq!(r.sequences, 1);
        assert!(r.passed());
    }

    #[test]
    fn individual_testing_passes() {
        let r = verify_change_of_measure(cfg(12, MeasureNoise::Symmetric(0.3)), &mut IndividualCycle).unwrap();
        assert_eq!(r.sequences, 1 << 12);
        assert!(r.checks > 0);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn reverse_z_passes() {
        for mut s in strategy_corpus() {
            let r = verify_change_of_measure(cfg(10, MeasureNoise::ReverseZ(0.2)), s.as_mut()).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn negated_check_fails() {
        let mut c = cfg(8, MeasureNoise::Symmetric(0.1));
        c.negate = true;
        let r = verify_change_of_measure(c, &mut PairFollowUp).unwrap();
        assert!(r.violations > 0);
    }

    #[test]
    fn single_item_population() {
        let c = MeasureCheck {
            p: 2,
            k: 1,
            n: 2,
            noise: MeasureNoise::Symmetric(0.25),
            epsilon: 0.01,
            negate: false,
        };
        let r = verify_change_of_measure(c, &mut IndividualCycle).unwrap();
        assert!(r.passed());
        assert!(r.min_log_margin.is_finite());
    }

    struct Coin(ChaCha8Rng);

    impl AdaptiveStrategy for Coin {
        fn name(&self) -> &str {
            "coin"
        }
        fn next_test(&mut self, p: usize, _: &[TranscriptEntry]) -> TestPool {
            TestPool::from_items(p, (0..p).filter(|_| self.0.random_bool(0.5)))
        }
    }

    #[test]
    fn randomized_strategy_rejected() {
        let mut s = Coin(ChaCha8Rng::seed_from_u64(1));
        assert!(verify_change_of_measure(cfg(4, MeasureNoise::Symmetric(0.1)), &mut s).is_err());
    }

    #[test]
    fn splitting_replays_history() {
        let mut s = BinarySplitting;
        assert_eq!(s.next_test(4, &[]).items().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let h = vec![entry(4, &[0, 1, 2, 3], true)];
        assert_eq!(s.next_test(4, &h).items().collect::<Vec<_>>(), vec![0, 1]);
        let h2 = vec![h[0].clone(), entry(4, &[0, 1], false)];
        assert_eq!(s.next_test(4, &h2).items().collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn pair_follow_up_order() {
        let mut s = PairFollowUp;
        let h = vec![entry(6, &[0, 1], true)];
        assert_eq!(s.next_test(6, &h).items().collect::<Vec<_>>(), vec![0]);
        let h2 = vec![h[0].clone(), entry(6, &[0], false)];
        assert_eq!(s.next_test(6, &h2).items().collect::<Vec<_>>(), vec![1]);
        let h3 = vec![h2[0].clone(), h2[1].clone(), entry(6, &[1], true)];
        assert_eq!(s.next_test(6, &h3).items().collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn bad_arguments() {
        let mut c = cfg(21, MeasureNoise::Symmetric(0.1));
        assert!(verify_change_of_measure(c, &mut IndividualCycle).is_err());
        c.n = 2;
        c.noise = MeasureNoise::Symmetric(0.5);
        assert!(verify_change_of_measure(c, &mut IndividualCycle).is_err());
    }
}
