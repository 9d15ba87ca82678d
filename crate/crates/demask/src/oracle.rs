//! Exact mask predictor: conditional marginals and conditional joints of an
//! explicit joint distribution given any unmasked context.
//!
//! Joint outcomes over a target set are indexed in mixed radix over the
//! targets in ascending position order, first target most significant —
//! the same convention as the full table.
//!
//! Conditioning on an event of probability zero is an error ([`Error::ZeroContext`]),
//! never a uniform fallback: in exact evaluation it indicates a logic bug and a
//! silent fallback would corrupt downstream KL values.
//!
//! Queries are cached (LRU, keyed by target set plus canonical context) because
//! trajectory replay issues many repeated lookups. The cache sits behind a
//! mutex; concurrent queries return identical values regardless of interleaving
//! since every entry is a pure function of its key.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use lru::LruCache;
use rand::Rng;
use rustc_hash::FxBuildHasher;

use crate::dist::{ExplicitJoint, PartialAssignment, Token};
use crate::error::{Error, Result};

/// Default bound on cached query results.
pub const DEFAULT_CACHE_CAPACITY: usize = 1 << 20;

/// A probability vector over `K` outcomes. The entropy is computed on first
/// use and kept with the vector, since cached conditionals get scored many
/// times per run.
#[derive(Debug)]
pub struct CategoricalDist {
    probs: Vec<f64>,
    entropy: OnceLock<f64>,
}

impl Clone for CategoricalDist {
    fn clone(&self) -> Self {
        Self {
            probs: self.probs.clone(),
            entropy: self.entropy.clone(),
        }
    }
}

impl PartialEq for CategoricalDist {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

impl CategoricalDist {
    /// Validates nonnegativity and normalization (sum within 1e-12 of one).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "probability {p} is not a finite nonnegative real"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > crate::dist::NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            probs,
            entropy: OnceLock::new(),
        })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        Self {
            probs,
            entropy: OnceLock::new(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> f64 {
        *self
            .entropy
            .get_or_init(|| crate::info::entropy(&self.probs))
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct QueryKey {
    targets: Box<[usize]>,
    context: Box<[(usize, Token)]>,
}

/// Exact conditional-distribution queries against one [`ExplicitJoint`].
#[derive(Debug)]
pub struct Oracle {
    dist: Arc<ExplicitJoint>,
    cache: Mutex<LruCache<QueryKey, Arc<CategoricalDist>, FxBuildHasher>>,
}

impl Oracle {
    pub fn new(dist: Arc<ExplicitJoint>) -> Self {
        Self::with_cache_capacity(dist, DEFAULT_CACHE_CAPACITY)
    }

    pub fn with_cache_capacity(dist: Arc<ExplicitJoint>, capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(capacity.max(1)).expect("nonzero");
        Self {
            dist,
            cache: Mutex::new(LruCache::with_hasher(capacity, FxBuildHasher)),
        }
    }

    pub fn dist(&self) -> &ExplicitJoint {
        &self.dist
    }

    pub fn dist_arc(&self) -> Arc<ExplicitJoint> {
        Arc::clone(&self.dist)
    }

    /// `P{X_i = . | context}` over the vocabulary.
    pub fn conditional_marginal(
        &self,
        pos: usize,
        context: &PartialAssignment,
    ) -> Result<Arc<CategoricalDist>> {
        self.conditional_joint(&[pos], context)
    }

    /// Joint conditional over `targets` (strictly ascending positions),
    /// flattened in mixed radix with the first target most significant.
    pub fn conditional_joint(
        &self,
        targets: &[usize],
        context: &PartialAssignment,
    ) -> Result<Arc<CategoricalDist>> {
        self.validate_query(targets, context)?;
        let key = QueryKey {
            targets: targets.into(),
            context: context.entries().into(),
        };
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let (mut buckets, total) = self.scan(targets, context);
        if total <= 0.0 {
            return Err(Error::ZeroContext {
                context: context.to_string(),
            });
        }
        for b in buckets.iter_mut() {
            *b /= total;
        }
        let value = Arc::new(CategoricalDist::from_normalized(buckets));
        self.cache.lock().unwrap().put(key, Arc::clone(&value));
        Ok(value)
    }

    /// `P{X_S = context}`.
    pub fn context_mass(&self, context: &PartialAssignment) -> Result<f64> {
        self.validate_query(&[], context)?;
        let (_, total) = self.scan(&[], context);
        Ok(total)
    }

    fn validate_query(&self, targets: &[usize], context: &PartialAssignment) -> Result<()> {
        let len = self.dist.seq_len();
        let vocab = self.dist.vocab();
        for w in targets.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidArgument(
                    "targets must be strictly ascending".into(),
                ));
            }
        }
        for &t in targets {
            if t >= len {
                return Err(Error::InvalidArgument(format!("target {t} out of range")));
            }
            if context.contains(t) {
                return Err(Error::InvalidArgument(format!(
                    "target {t} overlaps the context"
                )));
            }
        }
        for &(pos, tok) in context.entries() {
            if pos >= len {
                return Err(Error::InvalidArgument(format!(
                    "context position {pos} out of range"
                )));
            }
            if tok >= vocab {
                return Err(Error::InvalidArgument(format!(
                    "context token {tok} out of range for vocab {vocab}"
                )));
            }
        }
        Ok(())
    }

    /// Sums the table over every sequence consistent with `context`, grouped
    /// by the digits at `targets`. Returns the per-group weights and the total
    /// consistent mass. One pass over the `V^(free positions)` consistent
    /// cells, walking the table with an odometer so each step is O(1).
    fn scan(&self, targets: &[usize], context: &PartialAssignment) -> (Vec<f64>, f64) {
        let dist = &self.dist;
        let len = dist.seq_len();
        let vocab = dist.vocab();
        let probs = dist.probs();
        let strides = dist.strides();

        let free: Vec<usize> = (0..len).filter(|p| !context.contains(*p)).collect();
        let base: usize = context
            .entries()
            .iter()
            .map(|&(pos, tok)| tok * strides[pos])
            .sum();

        let bucket_count = vocab.pow(targets.len() as u32);
        let mut buckets = vec![0.0; bucket_count];
        let mut total = 0.0;

        if free.is_empty() {
            let p = probs[base];
            total = p;
            buckets[0] = p;
            return (buckets, total);
        }

        // Table stride and bucket stride contributed by each free position.
        let table_stride: Vec<usize> = free.iter().map(|&p| strides[p]).collect();
        let bucket_stride: Vec<usize> = free
            .iter()
            .map(|&p| {
                targets
                    .iter()
                    .position(|&t| t == p)
                    .map(|ti| vocab.pow((targets.len() - 1 - ti) as u32))
                    .unwrap_or(0)
            })
            .collect();

        let digits_len = free.len();
        let mut digits = vec![0usize; digits_len];
        let mut idx = base;
        let mut bucket = 0usize;
        loop {
            let p = probs[idx];
            if p > 0.0 {
                total += p;
                buckets[bucket] += p;
            }
            // Odometer increment over the free digits, least significant last.
            let mut d = digits_len;
            loop {
                if d == 0 {
                    return (buckets, total);
                }
                d -= 1;
                digits[d] += 1;
                if digits[d] < vocab {
                    idx += table_stride[d];
                    bucket += bucket_stride[d];
                    break;
                }
                digits[d] = 0;
                idx -= (vocab - 1) * table_stride[d];
                bucket -= (vocab - 1) * bucket_stride[d];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caps::Caps;

    fn correlated_pair() -> Arc<ExplicitJoint> {
        Arc::new(
            ExplicitJoint::from_weights(2, 2, vec![1.0, 0.0, 0.0, 1.0], &Caps::default()).unwrap(),
        )
    }

    fn markov3() -> Arc<ExplicitJoint> {
        let init = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let rows = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        Arc::new(ExplicitJoint::markov_chain(&init, &rows, 3, &Caps::default()).unwrap())
    }

    fn ctx(pairs: &[(usize, Token)]) -> PartialAssignment {
        PartialAssignment::from_pairs(pairs).unwrap()
    }

    #[test]
    fn perfect_correlation_pins_partner() {
        let oracle = Oracle::new(correlated_pair());
        let m = oracle.conditional_marginal(1, &ctx(&[(0, 1)])).unwrap();
        assert_eq!(m.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn independence_gives_marginal() {
        let fair = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let dist = Arc::new(
            ExplicitJoint::product(&[fair.clone(), fair], &Caps::default()).unwrap(),
        );
        let oracle = Oracle::new(dist);
        let m = oracle.conditional_marginal(0, &ctx(&[])).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn markov_middle_given_endpoints() {
        let oracle = Oracle::new(markov3());
        let m = oracle
            .conditional_marginal(1, &ctx(&[(0, 0), (2, 0)]))
            .unwrap();
        assert!((m.probs()[0] - 0.81 / 0.82).abs() < 1e-12);
        assert!((m.probs()[1] - 0.01 / 0.82).abs() < 1e-12);
    }

    #[test]
    fn joint_of_all_positions_is_the_table() {
        let dist = correlated_pair();
        let oracle = Oracle::new(dist.clone());
        let j = oracle.conditional_joint(&[0, 1], &ctx(&[])).unwrap();
        assert_eq!(j.probs(), dist.probs());
    }

    #[test]
    fn markov_pair_given_head() {
        let oracle = Oracle::new(markov3());
        let j = oracle.conditional_joint(&[1, 2], &ctx(&[(0, 0)])).unwrap();
        let expect = [0.81, 0.09, 0.01, 0.09];
        for (a, b) in j.probs().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_joint_equals_marginal_exactly() {
        let oracle = Oracle::new(markov3());
        let context = ctx(&[(2, 1)]);
        let a = oracle.conditional_marginal(0, &context).unwrap();
        let b = oracle.conditional_joint(&[0], &context).unwrap();
        assert_eq!(a.probs(), b.probs());
    }

    #[test]
    fn context_mass_values() {
        let oracle = Oracle::new(correlated_pair());
        assert_eq!(oracle.context_mass(&ctx(&[])).unwrap(), 1.0);
        assert_eq!(oracle.context_mass(&ctx(&[(0, 0)])).unwrap(), 0.5);
        assert_eq!(oracle.context_mass(&ctx(&[(0, 0), (1, 1)])).unwrap(), 0.0);
    }

    #[test]
    fn zero_context_is_an_error() {
        // Three copied bits: only 000 and 111 carry mass.
        let three = Arc::new(
            ExplicitJoint::from_weights(
                3,
                2,
                vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                &Caps::default(),
            )
            .unwrap(),
        );
        let oracle = Oracle::new(three);
        let bad = ctx(&[(0, 0), (1, 1)]);
        assert_eq!(oracle.context_mass(&bad).unwrap(), 0.0);
        match oracle.conditional_marginal(2, &bad) {
            Err(Error::ZeroContext { .. }) => {}
            other => panic!("expected ZeroContext, got {other:?}"),
        }
    }

    #[test]
    fn rejects_overlapping_and_unsorted_targets() {
        let oracle = Oracle::new(markov3());
        assert!(oracle.conditional_joint(&[1, 0], &ctx(&[])).is_err());
        assert!(oracle.conditional_joint(&[1], &ctx(&[(1, 0)])).is_err());
        assert!(oracle.conditional_joint(&[9], &ctx(&[])).is_err());
    }

    #[test]
    fn cache_returns_identical_values() {
        let oracle = Oracle::with_cache_capacity(markov3(), 2);
        let c = ctx(&[(0, 1)]);
        let a = oracle.conditional_marginal(1, &c).unwrap();
        let b = oracle.conditional_marginal(1, &c).unwrap();
        assert_eq!(a.probs(), b.probs());
        // Evict by inserting other keys, then re-query.
        let _ = oracle.conditional_marginal(2, &c).unwrap();
        let _ = oracle.conditional_marginal(0, &ctx(&[(1, 1)])).unwrap();
        let again = oracle.conditional_marginal(1, &c).unwrap();
        assert_eq!(a.probs(), again.probs());
    }

    #[test]
    fn chain_rule_recovers_joint() {
        let dist = markov3();
        let oracle = Oracle::new(dist.clone());
        for (idx, p) in dist.support() {
            let x = dist.decode(idx);
            for order in [[0, 1, 2], [2, 0, 1], [1, 2, 0]] {
                let mut context = PartialAssignment::new();
                let mut prod = 1.0;
                for pos in order {
                    let m = oracle.conditional_marginal(pos, &context).unwrap();
                    prod *= m.probs()[x[pos]];
                    context.insert(pos, x[pos]).unwrap();
                }
                assert!((prod - p).abs() / p < 1e-10);
            }
        }
    }
}
