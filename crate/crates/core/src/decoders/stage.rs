use crate::error::{invalid, Error, Result};
use crate::model::{DefectiveSet, TestPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemScore {
    pub item: usize,
    pub tests: usize,
    pub positives: usize,
}

/// Per-item test and positive counts, ascending by item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemScoreBoard {
    p: usize,
    scores: Vec<ItemScore>,
}

impl ItemScoreBoard {
    pub fn new(p: usize, mut scores: Vec<ItemScore>) -> Result<Self> {
        scores.sort_unstable_by_key(|s| s.item);
        if scores.windows(2).any(|w| w[0].item == w[1].item) {
            return Err(invalid("duplicate item on score board"));
        }
        for s in &scores {
            if s.item >= p || s.positives > s.tests {
                return Err(invalid(format!("bad score entry {s:?} for p = {p}")));
            }
        }
        Ok(Self { p, scores })
    }

    /// Count, for each population item, the tests containing it and how
    /// many of those were positive.
    pub fn from_pools(
        pools: &[TestPool],
        outcomes: &[bool],
        population: &[usize],
        p: usize,
    ) -> Result<Self> {
        super::check_lengths(pools, outcomes, p)?;
        let mut index = vec![usize::MAX; p];
        let mut scores = Vec::with_capacity(population.len());
        let mut sorted = population.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &j in &sorted {
            if j >= p {
                return Err(invalid(format!("population item {j} out of range for p = {p}")));
            }
            index[j] = scores.len();
            scores.push(ItemScore {
                item: j,
                tests: 0,
                positives: 0,
            });
        }
        for (pool, &y) in pools.iter().zip(outcomes) {
            for j in pool.items() {
                if let Some(s) = scores.get_mut(index[j]) {
                    s.tests += 1;
                    s.positives += usize::from(y);
                }
            }
        }
        Ok(Self { p, scores })
    }

    /// Board for singleton tests labelled by the item they examine.
    pub fn from_individual(labels: &[usize], outcomes: &[bool], p: usize) -> Result<Self> {
        if labels.len() != outcomes.len() {
            return Err(Error::SizeMismatch {
                expected: labels.len(),
                got: outcomes.len(),
            });
        }
        let mut scores: Vec<ItemScore> = Vec::new();
        let mut order: Vec<(usize, bool)> = labels.iter().copied().zip(outcomes.iter().copied()).collect();
        order.sort_by_key(|&(j, _)| j);
        for (j, y) in order {
            if j >= p {
                return Err(invalid(format!("item {j} out of range for p = {p}")));
            }
            match scores.last_mut() {
                Some(s) if s.item == j => {
                    s.tests += 1;
                    s.positives += usize::from(y);
                }
                _ => scores.push(ItemScore {
                    item: j,
                    tests: 1,
                    positives: usize::from(y),
                }),
            }
        }
        Ok(Self { p, scores })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn scores(&self) -> &[ItemScore] {
        &self.scores
    }

    fn select(&self, keep: impl Fn(&ItemScore) -> bool) -> DefectiveSet {
        let items = self.scores.iter().filter(|s| keep(s)).map(|s| s.item).collect();
        DefectiveSet::new(self.p, items).expect("board items are valid")
    }
}

/// Items positive in at least half of their `reps` tests.
pub fn majority_vote(board: &ItemScoreBoard, reps: usize) -> Result<DefectiveSet> {
    if let Some(s) = board.scores().iter().find(|s| s.tests != reps) {
        return Err(invalid(format!(
            "item {} was tested {} times, expected {reps}",
            s.item, s.tests
        )));
    }
    Ok(board.select(|s| 2 * s.positives >= reps))
}

/// The `m` items with the most positives; ties go to the smaller index.
pub fn top_m_by_positives(board: &ItemScoreBoard, m: usize) -> Result<DefectiveSet> {
    let scores = board.scores();
    if m > scores.len() {
        return Err(invalid(format!("m = {m} exceeds the {} scored items", scores.len())));
    }
    let mut ranked: Vec<&ItemScore> = scores.iter().collect();
    ranked.sort_by_key(|s| (std::cmp::Reverse(s.positives), s.item));
    let items = ranked[..m].iter().map(|s| s.item).collect();
    DefectiveSet::new(board.p(), items)
}

pub fn any_positive(board: &ItemScoreBoard) -> DefectiveSet {
    board.select(|s| s.positives >= 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::d2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn board(entries: &[(usize, usize, usize)]) -> ItemScoreBoard {
        let scores = entries
            .iter()
            .map(|&(item, tests, positives)| ItemScore {
                item,
                tests,
                positives,
            })
            .collect();
        ItemScoreBoard::new(10, scores).unwrap()
    }

    #[test]
    fn majority_vote_ties_count_as_positive() {
        assert_eq!(majority_vote(&board(&[(1, 2, 1)]), 2).unwrap().items(), &[1]);
        assert!(majority_vote(&board(&[(1, 2, 0)]), 2).unwrap().is_empty());
        assert!(majority_vote(&board(&[(1, 3, 0)]), 2).is_err());
    }

    #[test]
    fn majority_vote_matches_chernoff_bound() {
        let (reps, rho) = (15usize, 0.11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let items = 100_000;
        let kept = (0..items)
            .filter(|_| {
                let pos = (0..reps).filter(|_| rng.random::<f64>() < 1.0 - rho).count();
                let b = board(&[(0, reps, pos)]);
                !majority_vote(&b, reps).unwrap().is_empty()
            })
            .count();
        let bound = 1.0 - (-(reps as f64) * d2(0.5, rho)).exp();
        let rate = kept as f64 / items as f64;
        let sigma = (bound * (1.0 - bound) / items as f64).sqrt();
        assert!(rate >= bound - 3.0 * sigma, "rate {rate}, bound {bound}");
    }

    #[test]
    fn top_m_rules() {
        let b = board(&[(2, 5, 5), (0, 5, 1), (1, 5, 5)]);
        assert!(top_m_by_positives(&b, 0).unwrap().is_empty());
        assert_eq!(top_m_by_positives(&b, 3).unwrap().items(), &[0, 1, 2]);
        assert_eq!(top_m_by_positives(&b, 1).unwrap().items(), &[1]);
        assert!(top_m_by_positives(&b, 4).is_err());
    }

    #[test]
    fn any_positive_rules() {
        assert!(any_positive(&board(&[(0, 3, 0), (4, 2, 0)])).is_empty());
        assert_eq!(any_positive(&board(&[(0, 10, 1), (4, 2, 0)])).items(), &[0]);
    }

    #[test]
    fn boards_from_tests() {
        let b = ItemScoreBoard::from_individual(&[3, 1, 3], &[true, false, false], 5).unwrap();
        assert_eq!(
            b.scores(),
            &[
                ItemScore { item: 1, tests: 1, positives: 0 },
                ItemScore { item: 3, tests: 2, positives: 1 }
            ]
        );
        let pools = vec![TestPool::from_items(5, [0, 1]), TestPool::from_items(5, [1, 4])];
        let b = ItemScoreBoard::from_pools(&pools, &[true, false], &[1, 4], 5).unwrap();
        assert_eq!(b.scores()[0], ItemScore { item: 1, tests: 2, positives: 1 });
        assert_eq!(b.scores()[1], ItemScore { item: 4, tests: 1, positives: 0 });
    }
}
