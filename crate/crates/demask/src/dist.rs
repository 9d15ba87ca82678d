//! Exact joint distributions over token sequences.
//!
//! A distribution over sequences of length `L` on a vocabulary of size `V` is
//! stored as an explicit table of `V^L` probabilities. Sequences are indexed
//! in mixed radix with **position 0 as the most significant digit**: the
//! sequence `(t_0, .., t_{L-1})` lives at index `sum_i t_i * V^(L-1-i)`. This
//! encoding is fixed so golden tables are portable.
//!
//! Tables are immutable after construction and safe to share read-only across
//! parallel workers. All probabilities are plain `f64`; log-domain arithmetic
//! happens only inside the entropy/KL kernels.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};

use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::oracle::CategoricalDist;

/// A token id, in `[0, V)`.
pub type Token = usize;

/// Sum tolerance for a normalized probability table.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A full assignment of tokens to all `L` positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<Token>,
}

impl TokenSequence {
    /// Validates every entry against the vocabulary size.
    pub fn new(tokens: Vec<Token>, vocab: usize) -> Result<Self> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab) {
            return Err(Error::InvalidArgument(format!(
                "token {bad} out of range for vocab {vocab}"
            )));
        }
        Ok(Self { tokens })
    }

    pub(crate) fn from_raw(tokens: Vec<Token>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, pos: usize) -> Token {
        self.tokens[pos]
    }

    pub fn as_slice(&self) -> &[Token] {
        &self.tokens
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

/// Tokens pinned at a subset of positions: the unmasked part of an iterate.
///
/// Entries are kept sorted by position, so equal assignments hash equally and
/// can key the oracle cache.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PartialAssignment {
    entries: Vec<(usize, Token)>,
}

impl PartialAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from `(position, token)` pairs; positions must be distinct.
    pub fn from_pairs(pairs: &[(usize, Token)]) -> Result<Self> {
        let mut ctx = Self::new();
        for &(pos, tok) in pairs {
            ctx.insert(pos, tok)?;
        }
        Ok(ctx)
    }

    /// Pins `pos` to `tok`. Errors if the position is already pinned.
    pub fn insert(&mut self, pos: usize, tok: Token) -> Result<()> {
        match self.entries.binary_search_by_key(&pos, |e| e.0) {
            Ok(_) => Err(Error::InvalidArgument(format!(
                "position {pos} already assigned"
            ))),
            Err(at) => {
                self.entries.insert(at, (pos, tok));
                Ok(())
            }
        }
    }

    /// Unpins `pos` if present.
    pub fn remove(&mut self, pos: usize) {
        if let Ok(at) = self.entries.binary_search_by_key(&pos, |e| e.0) {
            self.entries.remove(at);
        }
    }

    pub fn get(&self, pos: usize) -> Option<Token> {
        self.entries
            .binary_search_by_key(&pos, |e| e.0)
            .ok()
            .map(|at| self.entries[at].1)
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.get(pos).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by position.
    pub fn entries(&self) -> &[(usize, Token)] {
        &self.entries
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

impl fmt::Display for PartialAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (pos, tok)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{pos}->{tok}")?;
        }
        write!(f, "}}")
    }
}

/// An exact probability table over token sequences of length `L` on a
/// vocabulary of size `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitJoint {
    seq_len: usize,
    vocab: usize,
    probs: Vec<f64>,
    /// `strides[i] = V^(L-1-i)`, so `index = sum_i token_i * strides[i]`.
    strides: Vec<usize>,
}

impl ExplicitJoint {
    /// Normalizes nonnegative weights into a probability table.
    pub fn from_weights(seq_len: usize, vocab: usize, weights: Vec<f64>, caps: &Caps) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::InvalidArgument("sequence length must be positive".into()));
        }
        if vocab < 2 {
            return Err(Error::InvalidArgument("vocabulary size must be at least 2".into()));
        }
        let entries = caps.table_entries(vocab, seq_len)?;
        if weights.len() != entries {
            return Err(Error::DimensionMismatch(format!(
                "expected {entries} weights for V={vocab}, L={seq_len}, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!("weight {w} is not a finite nonnegative real")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let probs = weights.iter().map(|w| w / total).collect();
        Ok(Self::assemble(seq_len, vocab, probs))
    }

    /// Product distribution with one marginal per position; tokens independent.
    pub fn product(marginals: &[CategoricalDist], caps: &Caps) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::DimensionMismatch("need at least one marginal".into()));
        }
        let vocab = marginals[0].len();
        if marginals.iter().any(|m| m.len() != vocab) {
            return Err(Error::DimensionMismatch(
                "marginals must share one outcome count".into(),
            ));
        }
        let seq_len = marginals.len();
        let entries = caps.table_entries(vocab, seq_len)?;
        let mut probs = vec![1.0; entries];
        let mut stride = entries;
        for m in marginals {
            stride /= vocab;
            for (idx, p) in probs.iter_mut().enumerate() {
                *p *= m.probs()[(idx / stride) % vocab];
            }
        }
        Ok(Self::assemble(seq_len, vocab, probs))
    }

    /// First-order chain: `p(x) = init[x_0] * prod_i transition[x_{i-1}][x_i]`.
    pub fn markov_chain(
        init: &CategoricalDist,
        transition: &[Vec<f64>],
        seq_len: usize,
        caps: &Caps,
    ) -> Result<Self> {
        let vocab = init.len();
        if transition.len() != vocab || transition.iter().any(|r| r.len() != vocab) {
            return Err(Error::DimensionMismatch(format!(
                "transition matrix must be {vocab}x{vocab}"
            )));
        }
        for (row, r) in transition.iter().enumerate() {
            if r.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::NotStochastic {
                    row,
                    sum: f64::NAN,
                });
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        let entries = caps.table_entries(vocab, seq_len)?;
        if seq_len == 0 {
            return Err(Error::InvalidArgument("sequence length must be positive".into()));
        }
        let mut probs = vec![0.0; entries];
        let mut digits = vec![0usize; seq_len];
        for (idx, p) in probs.iter_mut().enumerate() {
            let mut rem = idx;
            for d in (0..seq_len).rev() {
                digits[d] = rem % vocab;
                rem /= vocab;
            }
            let mut prob = init.probs()[digits[0]];
            for d in 1..seq_len {
                prob *= transition[digits[d - 1]][digits[d]];
            }
            *p = prob;
        }
        // Rows sum to 1, so the table does too up to roundoff; renormalize the dust.
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(Self::assemble(seq_len, vocab, probs))
    }

    /// Binary sequences concentrated near `template`: each token independently
    /// disagrees with the template with probability `flip_prob`, so the table
    /// entropy is exactly `L * h(flip_prob)` nats (`h` = binary entropy).
    pub fn near_deterministic(template: &[Token], flip_prob: f64, caps: &Caps) -> Result<Self> {
        if !(0.0..0.5).contains(&flip_prob) {
            return Err(Error::InvalidArgument(format!(
                "flip_prob {flip_prob} must lie in [0, 0.5)"
            )));
        }
        if template.is_empty() {
            return Err(Error::InvalidArgument("template must be nonempty".into()));
        }
        let marginals: Vec<CategoricalDist> = template
            .iter()
            .map(|&t| {
                if t >= 2 {
                    return Err(Error::InvalidArgument(format!(
                        "template token {t} out of range for vocab 2"
                    )));
                }
                let mut probs = [flip_prob, flip_prob];
                probs[t] = 1.0 - flip_prob;
                CategoricalDist::new(probs.to_vec())
            })
            .collect::<Result<_>>()?;
        Self::product(&marginals, caps)
    }

    /// Table drawn from a symmetric Dirichlet; deterministic per seed.
    pub fn random_dirichlet(
        seq_len: usize,
        vocab: usize,
        concentration: f64,
        seed: u64,
        caps: &Caps,
    ) -> Result<Self> {
        if !(concentration > 0.0) || !concentration.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "concentration {concentration} must be a positive real"
            )));
        }
        let entries = caps.table_entries(vocab, seq_len)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let gamma = Gamma::new(concentration, 1.0)
            .map_err(|e| Error::InvalidArgument(format!("gamma: {e}")))?;
        let weights: Vec<f64> = (0..entries).map(|_| gamma.sample(&mut rng)).collect();
        Self::from_weights(seq_len, vocab, weights, caps)
    }

    fn assemble(seq_len: usize, vocab: usize, probs: Vec<f64>) -> Self {
        let mut strides = vec![1usize; seq_len];
        for i in (0..seq_len.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * vocab;
        }
        let joint = Self {
            seq_len,
            vocab,
            probs,
            strides,
        };
        debug_assert!(joint.normalization_residual() <= NORMALIZATION_TOL);
        joint
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn table_len(&self) -> usize {
        self.probs.len()
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// `|sum(probs) - 1|`.
    pub fn normalization_residual(&self) -> f64 {
        (self.probs.iter().sum::<f64>() - 1.0).abs()
    }

    /// Mixed-radix index of a full assignment.
    pub fn encode(&self, tokens: &[Token]) -> usize {
        debug_assert_eq!(tokens.len(), self.seq_len);
        tokens
            .iter()
            .zip(&self.strides)
            .map(|(&t, &s)| t * s)
            .sum()
    }

    /// Inverse of [`encode`](Self::encode).
    pub fn decode(&self, mut index: usize) -> Vec<Token> {
        let mut tokens = vec![0; self.seq_len];
        for d in (0..self.seq_len).rev() {
            tokens[d] = index % self.vocab;
            index /= self.vocab;
        }
        tokens
    }

    pub fn prob_of_index(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn prob(&self, x: &TokenSequence) -> f64 {
        self.probs[self.encode(x.as_slice())]
    }

    /// Indices with strictly positive probability.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i, p))
    }

    /// Table entropy in nats.
    pub fn entropy_nats(&self) -> f64 {
        crate::info::entropy(&self.probs)
    }

    /// Reindexes the table so coordinate `k` of the result is original
    /// coordinate `order[k]`. Used to compare against statistics of the
    /// scan-order view of the joint.
    pub fn permuted_probs(&self, order: &[usize]) -> Vec<f64> {
        debug_assert_eq!(order.len(), self.seq_len);
        let mut out = vec![0.0; self.probs.len()];
        for (idx, &p) in self.probs.iter().enumerate() {
            let digits = self.decode(idx);
            let mut new_idx = 0usize;
            for &pos in order {
                new_idx = new_idx * self.vocab + digits[pos];
            }
            out[new_idx] = p;
        }
        out
    }
}

/// Inverse-CDF sampler over the support of an [`ExplicitJoint`].
#[derive(Debug, Clone)]
pub struct JointSampler {
    dist: Arc<ExplicitJoint>,
    /// `(table index, cumulative probability)` over the support.
    cumulative: Vec<(usize, f64)>,
}

impl JointSampler {
    pub fn new(dist: Arc<ExplicitJoint>) -> Self {
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (idx, p) in dist.support() {
            acc += p;
            cumulative.push((idx, acc));
        }
        Self { dist, cumulative }
    }

    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let at = self
            .cumulative
            .partition_point(|&(_, c)| c <= u)
            .min(self.cumulative.len() - 1);
        self.cumulative[at].0
    }

    pub fn sample(&self, rng: &mut impl Rng) -> TokenSequence {
        TokenSequence::from_raw(self.dist.decode(self.sample_index(rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn from_weights_normalizes() {
        let d = ExplicitJoint::from_weights(1, 2, vec![1.0, 1.0], &caps()).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5]);

        let d = ExplicitJoint::from_weights(2, 2, vec![1.0, 0.0, 0.0, 1.0], &caps()).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.0, 0.0, 0.5]);

        let d = ExplicitJoint::from_weights(2, 2, vec![3.0, 1.0, 0.0, 0.0], &caps()).unwrap();
        assert_eq!(d.probs(), &[0.75, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn from_weights_rejects_zero_mass_and_cap() {
        assert!(matches!(
            ExplicitJoint::from_weights(1, 2, vec![0.0, 0.0], &caps()),
            Err(Error::ZeroMass)
        ));
        let tiny = Caps {
            max_table_entries: 2,
            max_perms: 1,
        };
        assert!(matches!(
            ExplicitJoint::from_weights(2, 2, vec![1.0; 4], &tiny),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn product_of_fair_bits() {
        let fair = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let d = ExplicitJoint::product(&[fair.clone(), fair], &caps()).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn product_single_marginal_is_identity() {
        let m = CategoricalDist::new(vec![0.2, 0.3, 0.5]).unwrap();
        let d = ExplicitJoint::product(std::slice::from_ref(&m), &caps()).unwrap();
        assert_eq!(d.probs(), m.probs());
    }

    #[test]
    fn product_with_point_mass() {
        let point = CategoricalDist::new(vec![1.0, 0.0]).unwrap();
        let fair = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let d = ExplicitJoint::product(&[point, fair], &caps()).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn markov_identity_transition_copies() {
        let init = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = ExplicitJoint::markov_chain(&init, &eye, 3, &caps()).unwrap();
        let support: Vec<usize> = d.support().map(|(i, _)| i).collect();
        assert_eq!(support, vec![0, 7]);
        assert_eq!(d.prob_of_index(0), 0.5);
        assert_eq!(d.prob_of_index(7), 0.5);
    }

    #[test]
    fn markov_two_step_factors() {
        let init = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let rows = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        let d = ExplicitJoint::markov_chain(&init, &rows, 2, &caps()).unwrap();
        assert!((d.prob_of_index(0) - 0.45).abs() < 1e-15); // 00
        assert!((d.prob_of_index(1) - 0.05).abs() < 1e-15); // 01
    }

    #[test]
    fn markov_degenerate_length_one() {
        let init = CategoricalDist::new(vec![1.0, 0.0]).unwrap();
        let rows = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let d = ExplicitJoint::markov_chain(&init, &rows, 1, &caps()).unwrap();
        assert_eq!(d.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn markov_rejects_non_stochastic() {
        let init = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let rows = vec![vec![0.9, 0.2], vec![0.1, 0.9]];
        assert!(matches!(
            ExplicitJoint::markov_chain(&init, &rows, 2, &caps()),
            Err(Error::NotStochastic { row: 0, .. })
        ));
    }

    #[test]
    fn near_deterministic_point_mass() {
        let d = ExplicitJoint::near_deterministic(&[0, 1, 0], 0.0, &caps()).unwrap();
        assert_eq!(d.prob_of_index(d.encode(&[0, 1, 0])), 1.0);
        assert_eq!(d.entropy_nats(), 0.0);
    }

    #[test]
    fn near_deterministic_rejects_half() {
        assert!(ExplicitJoint::near_deterministic(&[0, 0], 0.5, &caps()).is_err());
    }

    #[test]
    fn near_deterministic_entropy_formula() {
        // L = 12, flip = 0.01: entropy is L * h(0.01) nats.
        let d = ExplicitJoint::near_deterministic(&[0; 12], 0.01, &caps()).unwrap();
        let h = -(0.01f64.ln() * 0.01 + 0.99f64.ln() * 0.99);
        assert!((d.entropy_nats() - 12.0 * h).abs() < 1e-9);
        assert!((d.entropy_nats() - 0.672_018_4).abs() < 1e-6);
    }

    #[test]
    fn dirichlet_is_seed_deterministic() {
        let a = ExplicitJoint::random_dirichlet(2, 2, 1.0, 7, &caps()).unwrap();
        let b = ExplicitJoint::random_dirichlet(2, 2, 1.0, 7, &caps()).unwrap();
        assert_eq!(a.probs(), b.probs());
        assert!(a.normalization_residual() <= NORMALIZATION_TOL);
        let c = ExplicitJoint::random_dirichlet(2, 2, 1.0, 8, &caps()).unwrap();
        assert_ne!(a.probs(), c.probs());
    }

    #[test]
    fn encode_decode_roundtrip() {
        let d = ExplicitJoint::random_dirichlet(3, 3, 1.0, 1, &caps()).unwrap();
        for idx in 0..d.table_len() {
            assert_eq!(d.encode(&d.decode(idx)), idx);
        }
        // Position 0 is the most significant digit.
        assert_eq!(d.encode(&[1, 0, 0]), 9);
        assert_eq!(d.encode(&[0, 0, 1]), 1);
    }

    #[test]
    fn permuted_probs_relabels_coordinates() {
        let d = ExplicitJoint::from_weights(2, 2, vec![0.1, 0.2, 0.3, 0.4], &caps()).unwrap();
        let swapped = d.permuted_probs(&[1, 0]);
        // y = (x1, x0): entry for y=(1,0) is p(x=(0,1)).
        assert_eq!(swapped, vec![0.1, 0.3, 0.2, 0.4]);
        assert_eq!(d.permuted_probs(&[0, 1]), d.probs());
    }

    #[test]
    fn partial_assignment_ordering_and_duplicates() {
        let mut ctx = PartialAssignment::new();
        ctx.insert(3, 1).unwrap();
        ctx.insert(0, 2).unwrap();
        assert_eq!(ctx.entries(), &[(0, 2), (3, 1)]);
        assert!(ctx.insert(3, 0).is_err());
        assert_eq!(ctx.get(3), Some(1));
        ctx.remove(3);
        assert_eq!(ctx.get(3), None);
    }

    #[test]
    fn sampler_hits_only_support() {
        use rand::SeedableRng;
        let d = Arc::new(
            ExplicitJoint::from_weights(2, 2, vec![1.0, 0.0, 0.0, 3.0], &caps()).unwrap(),
        );
        let sampler = JointSampler::new(d.clone());
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            counts[sampler.sample_index(&mut rng)] += 1;
        }
        assert_eq!(counts[1] + counts[2], 0);
        assert!(counts[3] > counts[0]);
    }
}
