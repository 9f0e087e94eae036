//! Problem model: channels, defective sets, test pools and transcripts.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::infotheory::ln_binomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Noiseless,
    Symmetric,
    ZChannel,
    ReverseZ,
}

/// Observation law applied to the noiseless OR of a test.
///
/// `rho` is ignored (and stored as 0) for the noiseless channel. Symmetric
/// noise requires `0 < rho < 1/2`; the Z and reverse-Z channels accept any
/// `0 < rho < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel", into = "RawChannel")]
pub struct Channel {
    kind: ChannelKind,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
struct RawChannel {
    kind: ChannelKind,
    #[serde(default)]
    rho: f64,
}

impl TryFrom<RawChannel> for Channel {
    type Error = Error;

    fn try_from(raw: RawChannel) -> Result<Self> {
        Channel::new(raw.kind, raw.rho)
    }
}

impl From<Channel> for RawChannel {
    fn from(c: Channel) -> Self {
        RawChannel {
            kind: c.kind,
            rho: c.rho,
        }
    }
}

impl Channel {
    pub fn new(kind: ChannelKind, rho: f64) -> Result<Self> {
        match kind {
            ChannelKind::Noiseless => Ok(Self { kind, rho: 0.0 }),
            ChannelKind::Symmetric => {
                if rho > 0.0 && rho < 0.5 {
                    Ok(Self { kind, rho })
                } else {
                    Err(invalid(format!("symmetric noise needs 0 < rho < 1/2, got {rho}")))
                }
            }
            ChannelKind::ZChannel | ChannelKind::ReverseZ => {
                if rho > 0.0 && rho < 1.0 {
                    Ok(Self { kind, rho })
                } else {
                    Err(invalid(format!("{kind:?} needs 0 < rho < 1, got {rho}")))
                }
            }
        }
    }

    pub fn noiseless() -> Self {
        Self {
            kind: ChannelKind::Noiseless,
            rho: 0.0,
        }
    }

    pub fn symmetric(rho: f64) -> Result<Self> {
        Self::new(ChannelKind::Symmetric, rho)
    }

    pub fn z_channel(rho: f64) -> Result<Self> {
        Self::new(ChannelKind::ZChannel, rho)
    }

    pub fn reverse_z(rho: f64) -> Result<Self> {
        Self::new(ChannelKind::ReverseZ, rho)
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `P[Y = 1 | U = u]`.
    pub fn p_positive(&self, u: bool) -> f64 {
        match (self.kind, u) {
            (ChannelKind::Noiseless, u) => f64::from(u8::from(u)),
            (ChannelKind::Symmetric, false) => self.rho,
            (ChannelKind::Symmetric, true) => 1.0 - self.rho,
            (ChannelKind::ZChannel, false) => 0.0,
            (ChannelKind::ZChannel, true) => 1.0 - self.rho,
            (ChannelKind::ReverseZ, false) => self.rho,
            (ChannelKind::ReverseZ, true) => 1.0,
        }
    }

    /// Pass the noiseless outcome `u` through the channel.
    ///
    /// Exactly one uniform draw is consumed per call, whatever the channel,
    /// so the noise stream stays aligned with the test index.
    pub fn transmit<R: Rng + ?Sized>(&self, u: bool, rng: &mut R) -> bool {
        let draw: f64 = rng.random();
        draw < self.p_positive(u)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ChannelKind::Noiseless => write!(f, "noiseless"),
            ChannelKind::Symmetric => write!(f, "symmetric({})", self.rho),
            ChannelKind::ZChannel => write!(f, "z({})", self.rho),
            ChannelKind::ReverseZ => write!(f, "reverse_z({})", self.rho),
        }
    }
}

/// Sorted, duplicate-free set of item indices in `[0, p)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DefectiveSet {
    p: usize,
    items: Vec<usize>,
}

impl DefectiveSet {
    pub fn new(p: usize, mut items: Vec<usize>) -> Result<Self> {
        items.sort_unstable();
        if items.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate item in defective set"));
        }
        if let Some(&last) = items.last() {
            if last >= p {
                return Err(invalid(format!("item {last} out of range for p = {p}")));
            }
        }
        Ok(Self { p, items })
    }

    pub fn empty(p: usize) -> Self {
        Self { p, items: Vec::new() }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    pub fn union(&self, other: &DefectiveSet) -> DefectiveSet {
        let mut items: Vec<usize> = self.items.iter().chain(&other.items).copied().collect();
        items.sort_unstable();
        items.dedup();
        DefectiveSet { p: self.p, items }
    }

    pub fn difference(&self, other: &DefectiveSet) -> DefectiveSet {
        let items = self
            .items
            .iter()
            .copied()
            .filter(|&j| !other.contains(j))
            .collect();
        DefectiveSet { p: self.p, items }
    }

    /// Items of `[0, p)` not in the set.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| !self.contains(j)).collect()
    }
}

/// Declared prior on `|S|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardinalitySpec {
    Exact(usize),
    /// Uniform over the union of all sets with `min <= |S| <= max`.
    Range { min: usize, max: usize },
}

impl CardinalitySpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        match *self {
            CardinalitySpec::Exact(k) if k <= p => Ok(()),
            CardinalitySpec::Exact(k) => Err(invalid(format!("k = {k} exceeds p = {p}"))),
            CardinalitySpec::Range { min, max } if 1 <= min && min <= max && max <= p => Ok(()),
            CardinalitySpec::Range { min, max } => Err(invalid(format!(
                "cardinality range [{min}, {max}] must satisfy 1 <= min <= max <= p = {p}"
            ))),
        }
    }

    pub fn min(&self) -> usize {
        match *self {
            CardinalitySpec::Exact(k) => k,
            CardinalitySpec::Range { min, .. } => min,
        }
    }

    /// Largest admissible cardinality; this is the `k` the algorithms are told.
    pub fn max(&self) -> usize {
        match *self {
            CardinalitySpec::Exact(k) => k,
            CardinalitySpec::Range { max, .. } => max,
        }
    }
}

/// Draw `S` uniformly from every set admitted by `spec`.
///
/// For a range, each cardinality is weighted by its number of sets before a
/// uniform subset of that size is drawn, which is uniform over the union.
pub fn sample_defective_set<R: Rng + ?Sized>(
    p: usize,
    spec: CardinalitySpec,
    rng: &mut R,
) -> Result<DefectiveSet> {
    spec.validate(p)?;
    let k = match spec {
        CardinalitySpec::Exact(k) => k,
        CardinalitySpec::Range { min, max } => {
            let logs: Vec<f64> = (min..=max).map(|c| ln_binomial(p, c)).collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut chosen = max;
            for (c, w) in (min..=max).zip(&weights) {
                if u < *w {
                    chosen = c;
                    break;
                }
                u -= w;
            }
            chosen
        }
    };
    let items = rand::seq::index::sample(rng, p, k).into_vec();
    DefectiveSet::new(p, items)
}

/// Bit mask over the `p` items: which items are pooled into one test.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TestPool {
    len: usize,
    words: Vec<u64>,
}

impl TestPool {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn singleton(len: usize, item: usize) -> Self {
        let mut pool = Self::new(len);
        pool.insert(item);
        pool
    }

    pub fn from_items(len: usize, items: impl IntoIterator<Item = usize>) -> Self {
        let mut pool = Self::new(len);
        for j in items {
            pool.insert(j);
        }
        pool
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, item: usize) {
        assert!(item < self.len, "item {item} out of range {}", self.len);
        self.words[item / 64] |= 1 << (item % 64);
    }

    pub fn contains(&self, item: usize) -> bool {
        item < self.len && self.words[item / 64] >> (item % 64) & 1 == 1
    }

    /// Number of items in the pool.
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Pooled items in ascending order.
    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &bits)| {
            let mut bits = bits;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + t)
            })
        })
    }

    /// Noiseless outcome: does the pool contain any item of `s`?
    pub fn intersects(&self, s: &DefectiveSet) -> bool {
        s.items().iter().any(|&j| self.contains(j))
    }
}

/// Run one test: OR over the pooled defectives, then the channel.
pub fn run_test<R: Rng + ?Sized>(
    pool: &TestPool,
    s: &DefectiveSet,
    channel: &Channel,
    rng: &mut R,
) -> Result<bool> {
    if pool.len() != s.p() {
        return Err(Error::SizeMismatch {
            expected: s.p(),
            got: pool.len(),
        });
    }
    Ok(channel.transmit(pool.intersects(s), rng))
}

/// `max{|S \ Ŝ|, |Ŝ \ S|}`.
pub fn distance(s: &DefectiveSet, shat: &DefectiveSet) -> usize {
    let missed = s.items().iter().filter(|&&j| !shat.contains(j)).count();
    let extra = shat.items().iter().filter(|&&j| !s.contains(j)).count();
    missed.max(extra)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub pool: TestPool,
    pub outcome: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageMark {
    pub name: String,
    pub start: usize,
}

/// Ordered record of an adaptive run, split into stages.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    stage_marks: Vec<StageMark>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin_stage(&mut self, name: impl Into<String>) {
        self.stage_marks.push(StageMark {
            name: name.into(),
            start: self.entries.len(),
        });
    }

    pub fn push(&mut self, pool: TestPool, outcome: bool) {
        self.entries.push(TranscriptEntry { pool, outcome });
    }

    /// Total number of tests, `n`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn stage_marks(&self) -> &[StageMark] {
        &self.stage_marks
    }

    pub fn stage_count(&self) -> usize {
        self.stage_marks.len()
    }

    /// Entries recorded in stage `index`.
    pub fn stage(&self, index: usize) -> &[TranscriptEntry] {
        let Some(mark) = self.stage_marks.get(index) else {
            return &[];
        };
        let end = self
            .stage_marks
            .get(index + 1)
            .map_or(self.entries.len(), |m| m.start);
        &self.entries[mark.start..end]
    }

    /// Copy holding only the stages before `stages`.
    pub fn truncated(&self, stages: usize) -> Transcript {
        let end = self
            .stage_marks
            .get(stages)
            .map_or(self.entries.len(), |m| m.start);
        Transcript {
            entries: self.entries[..end].to_vec(),
            stage_marks: self.stage_marks.iter().take(stages).cloned().collect(),
        }
    }
}

/// Split entries into parallel pool and outcome slices.
pub fn split_entries(entries: &[TranscriptEntry]) -> (Vec<TestPool>, Vec<bool>) {
    entries
        .iter()
        .map(|e| (e.pool.clone(), e.outcome))
        .unzip()
}

/// A sampled problem: population, prior, channel and hidden truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub p: usize,
    pub cardinality: CardinalitySpec,
    pub channel: Channel,
    pub truth: DefectiveSet,
}

impl ProblemInstance {
    pub fn sample<R: Rng + ?Sized>(
        p: usize,
        cardinality: CardinalitySpec,
        channel: Channel,
        rng: &mut R,
    ) -> Result<Self> {
        let truth = sample_defective_set(p, cardinality, rng)?;
        Ok(Self {
            p,
            cardinality,
            channel,
            truth,
        })
    }

    pub fn with_truth(channel: Channel, truth: DefectiveSet) -> Self {
        Self {
            p: truth.p(),
            cardinality: CardinalitySpec::Exact(truth.len()),
            channel,
            truth,
        }
    }

    /// The defective count the algorithms are allowed to know.
    pub fn declared_k(&self) -> usize {
        self.cardinality.max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, TrialStreams};
    use proptest::prelude::*;
    use rand::Rng;

    fn set(p: usize, items: &[usize]) -> DefectiveSet {
        DefectiveSet::new(p, items.to_vec()).unwrap()
    }

    #[test]
    fn full_cardinality_has_one_admissible_set() {
        let mut rng = TrialStreams::new(1, 0).stream(Stream::Truth);
        let s = sample_defective_set(4, CardinalitySpec::Exact(4), &mut rng).unwrap();
        assert_eq!(s.items(), &[0, 1, 2, 3]);
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let draw = || {
            let mut rng = TrialStreams::new(99, 5).stream(Stream::Truth);
            sample_defective_set(10, CardinalitySpec::Exact(3), &mut rng).unwrap()
        };
        assert_eq!(draw(), draw());
        assert_eq!(draw().len(), 3);
    }

    #[test]
    fn range_sampling_is_uniform_over_the_union() {
        // C(6,2) / (C(6,2) + C(6,1)) = 15/21
        let mut rng = TrialStreams::new(3, 0).stream(Stream::Aux(0));
        let trials = 100_000;
        let twos = (0..trials)
            .filter(|_| {
                sample_defective_set(6, CardinalitySpec::Range { min: 1, max: 2 }, &mut rng)
                    .unwrap()
                    .len()
                    == 2
            })
            .count();
        let expect = 15.0 / 21.0;
        let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
        let got = twos as f64 / trials as f64;
        assert!((got - expect).abs() < 3.0 * sigma, "got {got}, expected {expect}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut rng = TrialStreams::new(1, 0).stream(Stream::Truth);
        assert!(sample_defective_set(3, CardinalitySpec::Exact(4), &mut rng).is_err());
        assert!(
            sample_defective_set(3, CardinalitySpec::Range { min: 0, max: 2 }, &mut rng).is_err()
        );
        assert!(
            sample_defective_set(3, CardinalitySpec::Range { min: 2, max: 1 }, &mut rng).is_err()
        );
    }

    #[test]
    fn channel_parameter_ranges() {
        assert!(Channel::symmetric(0.5).is_err());
        assert!(Channel::symmetric(0.0).is_err());
        assert!(Channel::symmetric(0.11).is_ok());
        assert!(Channel::z_channel(0.9).is_ok());
        assert!(Channel::reverse_z(1.0).is_err());
        let json = serde_json::to_string(&Channel::symmetric(0.11).unwrap()).unwrap();
        assert_eq!(json, r#"{"kind":"symmetric","rho":0.11}"#);
        let back: Channel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Channel::symmetric(0.11).unwrap());
        assert!(serde_json::from_str::<Channel>(r#"{"kind":"symmetric","rho":0.7}"#).is_err());
        let nl: Channel = serde_json::from_str(r#"{"kind":"noiseless"}"#).unwrap();
        assert_eq!(nl, Channel::noiseless());
    }

    #[test]
    fn noiseless_positive_pool_is_positive() {
        let s = set(8, &[2, 5]);
        let pool = TestPool::from_items(8, [1, 5]);
        let mut rng = TrialStreams::new(1, 0).stream(Stream::Aux(1));
        assert!(run_test(&pool, &s, &Channel::noiseless(), &mut rng).unwrap());
    }

    #[test]
    fn z_channel_never_flips_negative_tests() {
        let s = set(8, &[2]);
        let pool = TestPool::from_items(8, [0, 1]);
        let ch = Channel::z_channel(0.7).unwrap();
        let mut rng = TrialStreams::new(1, 0).stream(Stream::Aux(2));
        for _ in 0..10_000 {
            assert!(!run_test(&pool, &s, &ch, &mut rng).unwrap());
        }
    }

    #[test]
    fn outcome_laws_match_channel_rows() {
        let trials = 100_000;
        let s = set(4, &[0]);
        let hit = TestPool::from_items(4, [0, 1]);
        let miss = TestPool::from_items(4, [2, 3]);
        let channels = [
            Channel::noiseless(),
            Channel::symmetric(0.11).unwrap(),
            Channel::z_channel(0.3).unwrap(),
            Channel::reverse_z(0.3).unwrap(),
        ];
        for (c, ch) in channels.iter().enumerate() {
            for (u, pool) in [(true, &hit), (false, &miss)] {
                let mut rng = TrialStreams::new(11, c as u64).stream(Stream::Aux(u as u32));
                let ones = (0..trials)
                    .filter(|_| run_test(pool, &s, ch, &mut rng).unwrap())
                    .count();
                let expect = ch.p_positive(u);
                let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
                let got = ones as f64 / trials as f64;
                assert!(
                    (got - expect).abs() <= 3.0 * sigma + 1e-12,
                    "{ch} u={u}: got {got}, expected {expect}"
                );
            }
        }
    }

    #[test]
    fn tiny_symmetric_noise_agrees_with_noiseless() {
        let s = set(16, &[3, 9]);
        let noisy = Channel::symmetric(1e-9).unwrap();
        let streams = TrialStreams::new(5, 0);
        let mut a = streams.stream(Stream::Aux(9));
        let mut b = streams.stream(Stream::Aux(9));
        let mut pool_rng = streams.stream(Stream::Aux(10));
        for _ in 0..10_000 {
            let pool = TestPool::from_items(16, (0..16).filter(|_| pool_rng.random_bool(0.2)));
            let x = run_test(&pool, &s, &noisy, &mut a).unwrap();
            let y = run_test(&pool, &s, &Channel::noiseless(), &mut b).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn pool_size_mismatch_is_an_error() {
        let s = set(8, &[1]);
        let mut rng = TrialStreams::new(1, 0).stream(Stream::Aux(0));
        let err = run_test(&TestPool::new(7), &s, &Channel::noiseless(), &mut rng).unwrap_err();
        assert_eq!(err, Error::SizeMismatch { expected: 8, got: 7 });
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&set(8, &[1, 2]), &set(8, &[1, 2])), 0);
        assert_eq!(distance(&set(8, &[1, 2]), &set(8, &[1, 3])), 1);
        assert_eq!(distance(&set(8, &[1, 2, 3]), &set(8, &[1])), 2);
    }

    #[test]
    fn transcript_stage_slicing() {
        let mut t = Transcript::new();
        t.begin_stage("one");
        t.push(TestPool::singleton(4, 0), true);
        t.push(TestPool::singleton(4, 1), false);
        t.begin_stage("two");
        t.push(TestPool::singleton(4, 2), true);
        assert_eq!(t.len(), 3);
        assert_eq!(t.stage(0).len(), 2);
        assert_eq!(t.stage(1).len(), 1);
        assert!(t.stage(2).is_empty());
        let head = t.truncated(1);
        assert_eq!(head.len(), 2);
        assert_eq!(head.stage_count(), 1);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in proptest::collection::btree_set(0usize..20, 0..8),
                                 b in proptest::collection::btree_set(0usize..20, 0..8)) {
            let s = DefectiveSet::new(20, a.into_iter().collect()).unwrap();
            let t = DefectiveSet::new(20, b.into_iter().collect()).unwrap();
            prop_assert_eq!(distance(&s, &t), distance(&t, &s));
            prop_assert_eq!(distance(&s, &s), 0);
            prop_assert_eq!(distance(&s, &t) == 0, s == t);
        }

        #[test]
        fn pool_items_round_trip(items in proptest::collection::btree_set(0usize..200, 0..40)) {
            let pool = TestPool::from_items(200, items.iter().copied());
            prop_assert_eq!(pool.items().collect::<Vec<_>>(), items.iter().copied().collect::<Vec<_>>());
            prop_assert_eq!(pool.weight(), items.len());
        }
    }
}
