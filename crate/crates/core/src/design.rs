//! Non-adaptive test designs used inside each stage.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::model::TestPool;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub n: usize,
    pub population: Vec<usize>,
    pub q_one: f64,
}

impl DesignSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.q_one > 0.0 && self.q_one < 1.0) {
            return Err(invalid(format!("q_one must lie in (0, 1), got {}", self.q_one)));
        }
        if self.population.is_empty() {
            return Err(invalid("design population is empty"));
        }
        if let Some(&j) = self.population.iter().find(|&&j| j >= p) {
            return Err(invalid(format!("population item {j} out of range for p = {p}")));
        }
        Ok(())
    }
}

/// `n` pools over `p` items; each population item joins each pool
/// independently with probability `q_one`.
pub fn bernoulli_matrix<R: Rng + ?Sized>(
    spec: &DesignSpec,
    p: usize,
    rng: &mut R,
) -> Result<Vec<TestPool>> {
    spec.validate(p)?;
    let pools = (0..spec.n)
        .map(|_| {
            let mut pool = TestPool::new(p);
            for &j in &spec.population {
                if rng.random::<f64>() < spec.q_one {
                    pool.insert(j);
                }
            }
            pool
        })
        .collect();
    Ok(pools)
}

/// `reps` singleton pools per item, ascending by item then repetition.
pub fn individual_plan(items: &[usize], reps: usize, p: usize) -> Result<Vec<(usize, TestPool)>> {
    if reps == 0 {
        return Err(invalid("individual testing needs reps >= 1"));
    }
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    if let Some(&j) = sorted.iter().find(|&&j| j >= p) {
        return Err(invalid(format!("item {j} out of range for p = {p}")));
    }
    Ok(sorted
        .into_iter()
        .flat_map(|j| (0..reps).map(move |_| (j, TestPool::singleton(p, j))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Block, Stream, TrialStreams};

    fn rng() -> rand_chacha::ChaCha8Rng {
        TrialStreams::new(4, 0).stream(Stream::Design(Block::Stage1))
    }

    #[test]
    fn empty_design() {
        let spec = DesignSpec {
            n: 0,
            population: vec![0, 1],
            q_one: 0.3,
        };
        assert!(bernoulli_matrix(&spec, 4, &mut rng()).unwrap().is_empty());
    }

    #[test]
    fn near_full_inclusion() {
        let spec = DesignSpec {
            n: 20,
            population: (0..50).collect(),
            q_one: 0.999_999,
        };
        for pool in bernoulli_matrix(&spec, 50, &mut rng()).unwrap() {
            assert!(pool.weight() >= 49);
        }
    }

    #[test]
    fn mean_row_weight() {
        let q = 2f64.ln() / 10.0;
        let spec = DesignSpec {
            n: 10_000,
            population: (0..100).collect(),
            q_one: q,
        };
        let pools = bernoulli_matrix(&spec, 100, &mut rng()).unwrap();
        let total: usize = pools.iter().map(TestPool::weight).sum();
        let mean = total as f64 / 10_000.0;
        let sigma = (100.0 * q * (1.0 - q) / 10_000.0).sqrt();
        assert!((mean - 100.0 * q).abs() < 3.0 * sigma);
    }

    #[test]
    fn stays_inside_population_and_is_reproducible() {
        let spec = DesignSpec {
            n: 500,
            population: vec![1, 4, 7, 60, 99],
            q_one: 0.5,
        };
        let a = bernoulli_matrix(&spec, 100, &mut rng()).unwrap();
        let b = bernoulli_matrix(&spec, 100, &mut rng()).unwrap();
        assert_eq!(a, b);
        for pool in &a {
            assert!(pool.items().all(|j| spec.population.contains(&j)));
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = DesignSpec {
            n: 1,
            population: vec![],
            q_one: 0.5,
        };
        assert!(bernoulli_matrix(&spec, 4, &mut rng()).is_err());
        spec.population = vec![1];
        spec.q_one = 1.0;
        assert!(bernoulli_matrix(&spec, 4, &mut rng()).is_err());
    }

    #[test]
    fn individual_plans() {
        let plan = individual_plan(&[5], 3, 8).unwrap();
        assert_eq!(plan.len(), 3);
        assert!(plan.iter().all(|(j, pool)| *j == 5 && pool.items().eq([5])));
        assert!(individual_plan(&[], 7, 8).unwrap().is_empty());
        let plan = individual_plan(&[9, 2], 2, 10).unwrap();
        let order: Vec<usize> = plan.iter().map(|(j, _)| *j).collect();
        assert_eq!(order, vec![2, 2, 9, 9]);
        assert!(individual_plan(&[1], 0, 4).is_err());
    }
}
