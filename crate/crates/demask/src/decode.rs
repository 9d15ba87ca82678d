//! Decoding strategies and trajectory machinery.
//!
//! A run unmasks all `L` positions of a sequence in batches, scanning them in
//! the order given by a permutation. Two semantics are pinned here because
//! they are the easiest to get wrong:
//!
//! * **Frozen context.** Within one iteration, every conditional distribution
//!   (both the entropy that drives the stopping rule and the distribution the
//!   token is sampled from) is evaluated against the previous iterate's
//!   context. Tokens revealed earlier in the same batch do not enter the
//!   conditioning until the iteration ends.
//! * **Strict comparisons.** A batch ends after the token that pushes the
//!   running entropy sum strictly above the threshold (entropy-sum rule), or
//!   after the first token whose own entropy strictly exceeds it (max-entropy
//!   rule). That token is part of the batch. Boundary equality continues the
//!   batch; no floating-point tolerance is applied at thresholds.
//!
//! Under the entropy-sum rule with threshold zero, zero-entropy tokens
//! accumulate a sum of exactly zero, which is not strictly above zero, so
//! deterministic tokens batch together until the first token with positive
//! entropy.
//!
//! Trajectories are deterministic functions of the emitted sequence and the
//! permutation, so a run can be replayed exactly from its output
//! ([`replay_trajectory`]).

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{PartialAssignment, Token, TokenSequence};
use crate::error::{Error, Result};
use crate::oracle::{CategoricalDist, Oracle};

/// A scan order over positions: `order[k]` is the position unmasked
/// `(k+1)`-th.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    /// Validates that `order` is a bijection on `[0, len)`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let len = order.len();
        let mut seen = vec![false; len];
        for &pos in &order {
            if pos >= len || seen[pos] {
                return Err(Error::InvalidArgument(format!(
                    "order is not a permutation of 0..{len}"
                )));
            }
            seen[pos] = true;
        }
        Ok(Self { order })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            order: (0..len).collect(),
        }
    }

    /// Uniform over all `len!` orders via an unbiased shuffle.
    pub fn uniform(len: usize, rng: &mut impl Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        Self { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// A decoding strategy: the rule deciding how many tokens each iteration
/// reveals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// One token per iteration; removes all factorization error.
    Ar,
    /// Fixed batch sizes, independent of what the predictor reports.
    Uniform { schedule: Vec<usize> },
    /// Keep unmasking until the running entropy sum of the batch strictly
    /// exceeds `eta`.
    EntropySum { eta: f64 },
    /// Stop at the first token whose entropy strictly exceeds `eta`, at batch
    /// size `s_max`, or at the end of the sequence.
    MaxEntropy { eta: f64, s_max: usize },
}

impl Strategy {
    /// Everything in a single iteration.
    pub fn one_shot() -> Self {
        Strategy::EntropySum { eta: f64::INFINITY }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ar => "ar",
            Strategy::Uniform { .. } => "uniform",
            Strategy::EntropySum { .. } => "entropy_sum",
            Strategy::MaxEntropy { .. } => "max_entropy",
        }
    }

    pub fn eta(&self) -> Option<f64> {
        match self {
            Strategy::EntropySum { eta } | Strategy::MaxEntropy { eta, .. } => Some(*eta),
            _ => None,
        }
    }

    pub fn s_max(&self) -> Option<usize> {
        match self {
            Strategy::MaxEntropy { s_max, .. } => Some(*s_max),
            _ => None,
        }
    }

    pub fn validate(&self, seq_len: usize) -> Result<()> {
        match self {
            Strategy::Ar => Ok(()),
            Strategy::Uniform { schedule } => {
                if schedule.iter().any(|&s| s == 0) {
                    return Err(Error::InvalidArgument(
                        "schedule steps must be positive".into(),
                    ));
                }
                let total: usize = schedule.iter().sum();
                if total != seq_len {
                    return Err(Error::InvalidArgument(format!(
                        "schedule sums to {total}, expected sequence length {seq_len}"
                    )));
                }
                Ok(())
            }
            Strategy::EntropySum { eta } => {
                if eta.is_nan() || *eta < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "eta {eta} must be a nonnegative real"
                    )));
                }
                Ok(())
            }
            Strategy::MaxEntropy { eta, s_max } => {
                if eta.is_nan() || *eta < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "eta {eta} must be a nonnegative real"
                    )));
                }
                if *s_max == 0 {
                    return Err(Error::InvalidArgument("s_max must be at least 1".into()));
                }
                Ok(())
            }
        }
    }
}

/// `iterations` batch sizes of `ceil(L/T)` and `floor(L/T)`, interleaved so
/// they sum to `seq_len`.
pub fn balanced_schedule(seq_len: usize, iterations: usize) -> Result<Vec<usize>> {
    if iterations == 0 || iterations > seq_len {
        return Err(Error::InvalidArgument(format!(
            "cannot split {seq_len} positions into {iterations} batches"
        )));
    }
    let q = seq_len / iterations;
    let r = seq_len % iterations;
    Ok((0..iterations)
        .map(|i| q + ((i + 1) * r / iterations - i * r / iterations))
        .collect())
}

/// One iteration's newly unmasked positions (in scan order) with the
/// pointwise conditional entropy each token was scored at.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub positions: Vec<usize>,
    pub entropies: Vec<f64>,
    pub entropy_sum: f64,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// The ordered record of unmasking batches for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    batches: Vec<Batch>,
    envelopes: Vec<u64>,
    crossings: usize,
}

impl Trajectory {
    pub(crate) fn from_batches(batches: Vec<Batch>) -> Self {
        let sizes: Vec<usize> = batches.iter().map(Batch::len).collect();
        let (envelopes, crossings) = size_envelopes(&sizes);
        Self {
            batches,
            envelopes,
            crossings,
        }
    }

    /// Total iteration count `T`.
    pub fn iterations(&self) -> usize {
        self.batches.len()
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batches.iter().map(Batch::len).collect()
    }

    /// Dyadic size envelope per iteration.
    pub fn envelopes(&self) -> &[u64] {
        &self.envelopes
    }

    /// Number of iterations whose batch size reached its envelope.
    pub fn crossings(&self) -> usize {
        self.crossings
    }

    /// Cumulative unmasked sets after each iteration, each sorted ascending.
    pub fn cumulative_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = Vec::with_capacity(self.batches.len());
        let mut acc: Vec<usize> = Vec::new();
        for b in &self.batches {
            acc.extend_from_slice(&b.positions);
            let mut sorted = acc.clone();
            sorted.sort_unstable();
            sets.push(sorted);
        }
        sets
    }
}

/// Dyadic size envelopes of a batch-size sequence and the number of
/// crossings. The envelope starts at 0 and doubles off the previous batch
/// whenever that batch reached it, else carries over; a crossing is an
/// iteration whose size is at least its envelope. For sizes summing to `L`
/// the crossing count never exceeds `floor(log2 L) + 1`.
pub fn size_envelopes(batch_sizes: &[usize]) -> (Vec<u64>, usize) {
    let mut envelopes = Vec::with_capacity(batch_sizes.len());
    let mut crossings = 0;
    let mut current = 0u64;
    for (t, &size) in batch_sizes.iter().enumerate() {
        if t > 0 {
            let prev = batch_sizes[t - 1] as u64;
            if prev >= envelopes[t - 1] {
                current = 2 * prev;
            }
        }
        envelopes.push(current);
        if size as u64 >= current {
            crossings += 1;
        }
    }
    (envelopes, crossings)
}

/// Test-only semantic faults, injectable to prove the verification suite
/// notices when either pinned reading above is broken. Not part of the
/// public contract.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultInjection {
    /// Replace the strict `>` threshold comparisons with `>=`.
    pub flip_threshold_comparison: bool,
    /// Update the conditioning context after every token instead of at
    /// iteration boundaries.
    pub unfreeze_context: bool,
}

fn exceeds(value: f64, eta: f64, flip: bool) -> bool {
    if flip {
        value >= eta
    } else {
        value > eta
    }
}

/// The one stopping-rule predicate: whether the batch ends after the token
/// just examined. `sum` is the running entropy sum including that token,
/// `last` its own entropy, `size` the batch size so far, `k` the number of
/// tokens examined overall.
#[allow(clippy::too_many_arguments)]
fn batch_stops(
    strategy: &Strategy,
    sum: f64,
    last: f64,
    size: usize,
    k: usize,
    len: usize,
    iter_idx: usize,
    flip: bool,
) -> bool {
    match strategy {
        Strategy::Ar => true,
        Strategy::Uniform { schedule } => size == schedule[iter_idx] || k == len,
        Strategy::EntropySum { eta } => exceeds(sum, *eta, flip) || k == len,
        Strategy::MaxEntropy { eta, s_max } => {
            exceeds(last, *eta, flip) || size == *s_max || k == len
        }
    }
}

pub(crate) struct BatchPlan {
    pub(crate) positions: Vec<usize>,
    pub(crate) marginals: Vec<Arc<CategoricalDist>>,
    pub(crate) entropies: Vec<f64>,
    pub(crate) entropy_sum: f64,
}

/// Determines one iteration's batch from the frozen context alone. This is
/// the single source of truth for the stopping rules; the sampler, the
/// replayer, and the exact iteration-count evaluator all go through it.
pub(crate) fn plan_batch(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    frozen: &PartialAssignment,
    k_start: usize,
    iter_idx: usize,
    flip: bool,
) -> Result<BatchPlan> {
    let len = perm.len();
    let mut plan = BatchPlan {
        positions: Vec::new(),
        marginals: Vec::new(),
        entropies: Vec::new(),
        entropy_sum: 0.0,
    };
    let mut k = k_start;
    let mut sum = 0.0;
    loop {
        let pos = perm.order()[k];
        k += 1;
        let marginal = oracle.conditional_marginal(pos, frozen)?;
        let h = marginal.entropy();
        sum += h;
        plan.positions.push(pos);
        plan.marginals.push(marginal);
        plan.entropies.push(h);
        if batch_stops(strategy, sum, h, plan.positions.len(), k, len, iter_idx, flip) {
            plan.entropy_sum = sum;
            return Ok(plan);
        }
    }
}

enum TokenSource<'a, R: Rng> {
    Sample(&'a mut R),
    Replay(&'a TokenSequence),
}

/// Full record of one run: the emitted tokens, the trajectory, and the log
/// probability of the tokens under the run's own per-token conditionals.
#[derive(Debug, Clone)]
pub(crate) struct RunRecord {
    pub tokens: TokenSequence,
    pub trajectory: Trajectory,
    pub log_prob: f64,
}

fn run_engine<R: Rng>(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    mut source: TokenSource<'_, R>,
    faults: FaultInjection,
) -> Result<RunRecord> {
    let len = oracle.dist().seq_len();
    if perm.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "permutation length {} vs sequence length {len}",
            perm.len()
        )));
    }
    strategy.validate(len)?;
    if let TokenSource::Replay(x) = &source {
        if x.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "sequence length {} vs distribution length {len}",
                x.len()
            )));
        }
    }

    if faults.unfreeze_context {
        return run_unfrozen(oracle, strategy, perm, source, faults);
    }

    let mut context = PartialAssignment::new();
    let mut tokens = vec![0 as Token; len];
    let mut batches = Vec::new();
    let mut log_prob = 0.0;
    let mut k = 0;
    while k < len {
        let plan = plan_batch(
            oracle,
            strategy,
            perm,
            &context,
            k,
            batches.len(),
            faults.flip_threshold_comparison,
        )?;
        for (i, &pos) in plan.positions.iter().enumerate() {
            let marginal = &plan.marginals[i];
            let tok = match &mut source {
                TokenSource::Sample(rng) => marginal.sample(rng),
                TokenSource::Replay(x) => x.get(pos),
            };
            let p = marginal.probs()[tok];
            if p <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "position {pos}: token {tok} has zero conditional probability given {context}"
                )));
            }
            log_prob += p.ln();
            tokens[pos] = tok;
        }
        k += plan.positions.len();
        for &pos in &plan.positions {
            context.insert(pos, tokens[pos])?;
        }
        batches.push(Batch {
            positions: plan.positions,
            entropies: plan.entropies,
            entropy_sum: plan.entropy_sum,
        });
    }
    Ok(RunRecord {
        tokens: TokenSequence::from_raw(tokens),
        trajectory: Trajectory::from_batches(batches),
        log_prob,
    })
}

/// Faulty variant: the context grows token by token. Kept separate so the
/// correct path stays a straight-line use of `plan_batch`.
fn run_unfrozen<R: Rng>(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    mut source: TokenSource<'_, R>,
    faults: FaultInjection,
) -> Result<RunRecord> {
    let len = oracle.dist().seq_len();
    let flip = faults.flip_threshold_comparison;
    let mut context = PartialAssignment::new();
    let mut tokens = vec![0 as Token; len];
    let mut batches = Vec::new();
    let mut log_prob = 0.0;
    let mut k = 0;
    while k < len {
        let iter_idx = batches.len();
        let mut positions = Vec::new();
        let mut entropies = Vec::new();
        let mut sum = 0.0;
        loop {
            let pos = perm.order()[k];
            k += 1;
            let marginal = oracle.conditional_marginal(pos, &context)?;
            let h = marginal.entropy();
            let tok = match &mut source {
                TokenSource::Sample(rng) => marginal.sample(rng),
                TokenSource::Replay(x) => x.get(pos),
            };
            let p = marginal.probs()[tok];
            if p <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "position {pos}: token {tok} has zero conditional probability given {context}"
                )));
            }
            log_prob += p.ln();
            tokens[pos] = tok;
            context.insert(pos, tok)?;
            positions.push(pos);
            entropies.push(h);
            sum += h;
            if batch_stops(strategy, sum, h, positions.len(), k, len, iter_idx, flip) {
                break;
            }
        }
        batches.push(Batch {
            positions,
            entropies,
            entropy_sum: sum,
        });
    }
    Ok(RunRecord {
        tokens: TokenSequence::from_raw(tokens),
        trajectory: Trajectory::from_batches(batches),
        log_prob,
    })
}

/// Runs the decoder once, drawing tokens from the exact conditionals.
pub fn sample_trajectory(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    rng: &mut impl Rng,
) -> Result<(TokenSequence, Trajectory)> {
    let record = run_engine(
        oracle,
        strategy,
        perm,
        TokenSource::Sample::<_>(rng),
        FaultInjection::default(),
    )?;
    Ok((record.tokens, record.trajectory))
}

/// Reconstructs the unique trajectory the sampler would record had it emitted
/// exactly `x` along `perm`. Errors with [`Error::ZeroContext`] or
/// [`Error::SupportViolation`] when `x` is off the support of the joint.
pub fn replay_trajectory(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    x: &TokenSequence,
) -> Result<Trajectory> {
    Ok(replay_record(oracle, strategy, perm, x, FaultInjection::default())?.trajectory)
}

#[doc(hidden)]
pub fn sample_trajectory_with_faults(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    rng: &mut impl Rng,
    faults: FaultInjection,
) -> Result<(TokenSequence, Trajectory)> {
    let record = run_engine(oracle, strategy, perm, TokenSource::Sample::<_>(rng), faults)?;
    Ok((record.tokens, record.trajectory))
}

#[doc(hidden)]
pub fn replay_trajectory_with_faults(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    x: &TokenSequence,
    faults: FaultInjection,
) -> Result<Trajectory> {
    Ok(replay_record(oracle, strategy, perm, x, faults)?.trajectory)
}

pub(crate) fn replay_record(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    x: &TokenSequence,
    faults: FaultInjection,
) -> Result<RunRecord> {
    run_engine(
        oracle,
        strategy,
        perm,
        TokenSource::Replay::<rand::rngs::ThreadRng>(x),
        faults,
    )
}

/// What the exact-KL and entropy-identity sweeps need from a replay, without
/// materializing the trajectory. Shares the stopping-rule predicate with the
/// full engine; a test pins the two paths to each other.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ReplaySummary {
    pub log_prob: f64,
    /// Sum over all tokens of the conditional entropy each was scored at.
    pub entropy_total: f64,
}

pub(crate) fn replay_summary(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    x: &TokenSequence,
    faults: FaultInjection,
) -> Result<ReplaySummary> {
    let len = oracle.dist().seq_len();
    if perm.len() != len || x.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "permutation length {} / sequence length {} vs distribution length {len}",
            perm.len(),
            x.len()
        )));
    }
    strategy.validate(len)?;
    let flip = faults.flip_threshold_comparison;
    let mut context = PartialAssignment::new();
    let mut staged: Vec<(usize, Token)> = Vec::with_capacity(len);
    let mut log_prob = 0.0;
    let mut entropy_total = 0.0;
    let mut k = 0;
    let mut iter_idx = 0;
    while k < len {
        let mut sum = 0.0;
        let mut size = 0;
        loop {
            let pos = perm.order()[k];
            k += 1;
            let marginal = oracle.conditional_marginal(pos, &context)?;
            let h = marginal.entropy();
            let tok = x.get(pos);
            let p = marginal.probs()[tok];
            if p <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "position {pos}: token {tok} has zero conditional probability given {context}"
                )));
            }
            log_prob += p.ln();
            entropy_total += h;
            sum += h;
            size += 1;
            if faults.unfreeze_context {
                context.insert(pos, tok)?;
            } else {
                staged.push((pos, tok));
            }
            if batch_stops(strategy, sum, h, size, k, len, iter_idx, flip) {
                break;
            }
        }
        for (pos, tok) in staged.drain(..) {
            context.insert(pos, tok)?;
        }
        iter_idx += 1;
    }
    Ok(ReplaySummary {
        log_prob,
        entropy_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caps::Caps;
    use crate::dist::ExplicitJoint;
    use crate::oracle::CategoricalDist;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::sync::Arc;

    const LN2: f64 = std::f64::consts::LN_2;

    fn pair_oracle() -> Oracle {
        Oracle::new(Arc::new(
            ExplicitJoint::from_weights(2, 2, vec![1.0, 0.0, 0.0, 1.0], &Caps::default()).unwrap(),
        ))
    }

    fn perm01() -> Permutation {
        Permutation::new(vec![0, 1]).unwrap()
    }

    #[test]
    fn entropy_sum_low_threshold_splits() {
        let oracle = pair_oracle();
        let strategy = Strategy::EntropySum { eta: 0.5 };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (_, traj) = sample_trajectory(&oracle, &strategy, &perm01(), &mut rng).unwrap();
        assert_eq!(traj.iterations(), 2);
        assert_eq!(traj.batches()[0].positions, vec![0]);
        assert!((traj.batches()[0].entropy_sum - LN2).abs() < 1e-15);
        assert_eq!(traj.batches()[1].positions, vec![1]);
        assert_eq!(traj.batches()[1].entropy_sum, 0.0);
    }

    #[test]
    fn entropy_sum_frozen_context_batches_both() {
        // eta = 1.0: the first token contributes ln 2 <= 1, and the second is
        // scored against the still-fully-masked context, so it also
        // contributes ln 2 and the sum 2 ln 2 > 1 ends a single batch.
        let oracle = pair_oracle();
        let strategy = Strategy::EntropySum { eta: 1.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let (_, traj) = sample_trajectory(&oracle, &strategy, &perm01(), &mut rng).unwrap();
        assert_eq!(traj.iterations(), 1);
        assert_eq!(traj.batches()[0].positions, vec![0, 1]);
        assert!((traj.batches()[0].entropies[0] - LN2).abs() < 1e-15);
        assert!((traj.batches()[0].entropies[1] - LN2).abs() < 1e-15);
    }

    #[test]
    fn max_entropy_runs_to_end_under_threshold() {
        let oracle = pair_oracle();
        let strategy = Strategy::MaxEntropy { eta: 0.8, s_max: 2 };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let (_, traj) = sample_trajectory(&oracle, &strategy, &perm01(), &mut rng).unwrap();
        assert_eq!(traj.iterations(), 1);
        assert_eq!(traj.batches()[0].positions, vec![0, 1]);
    }

    #[test]
    fn max_entropy_stops_on_high_entropy_token() {
        let oracle = pair_oracle();
        let strategy = Strategy::MaxEntropy { eta: 0.5, s_max: 2 };
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let (_, traj) = sample_trajectory(&oracle, &strategy, &perm01(), &mut rng).unwrap();
        // First token has entropy ln 2 > 0.5: it ends the batch but is in it.
        assert_eq!(traj.batch_sizes(), vec![1, 1]);
    }

    #[test]
    fn ar_is_singleton_batches() {
        let oracle = pair_oracle();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (_, traj) = sample_trajectory(&oracle, &Strategy::Ar, &perm01(), &mut rng).unwrap();
        assert_eq!(traj.iterations(), 2);
        assert!(traj.batches().iter().all(|b| b.len() == 1));
    }

    #[test]
    fn one_shot_is_single_batch() {
        let oracle = pair_oracle();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let (_, traj) =
            sample_trajectory(&oracle, &Strategy::one_shot(), &perm01(), &mut rng).unwrap();
        assert_eq!(traj.iterations(), 1);
    }

    #[test]
    fn eta_zero_batches_deterministic_tokens() {
        // Product of a point mass (position 0) and a fair coin (position 1).
        let point = CategoricalDist::new(vec![1.0, 0.0]).unwrap();
        let fair = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let oracle = Oracle::new(Arc::new(
            ExplicitJoint::product(&[point, fair], &Caps::default()).unwrap(),
        ));
        let strategy = Strategy::EntropySum { eta: 0.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(7);

        // Scanning the deterministic token first: sum stays at 0 (not > 0),
        // so it rides along with the fair token in one batch.
        let (_, traj) = sample_trajectory(&oracle, &strategy, &perm01(), &mut rng).unwrap();
        assert_eq!(traj.iterations(), 1);
        assert_eq!(traj.batches()[0].positions, vec![0, 1]);

        // Scanning the fair token first: it ends the first batch alone.
        let rev = Permutation::new(vec![1, 0]).unwrap();
        let (_, traj) = sample_trajectory(&oracle, &strategy, &rev, &mut rng).unwrap();
        assert_eq!(traj.iterations(), 2);
        assert_eq!(traj.batches()[0].positions, vec![1]);
    }

    #[test]
    fn replay_matches_recorded_run() {
        let caps = Caps::default();
        let dist = Arc::new(ExplicitJoint::random_dirichlet(5, 2, 0.8, 9, &caps).unwrap());
        let oracle = Oracle::new(dist);
        let strategies = [
            Strategy::Ar,
            Strategy::one_shot(),
            Strategy::EntropySum { eta: 0.4 },
            Strategy::MaxEntropy { eta: 0.5, s_max: 3 },
            Strategy::Uniform {
                schedule: vec![2, 2, 1],
            },
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for strategy in &strategies {
            for _ in 0..40 {
                let perm = Permutation::uniform(5, &mut rng);
                let (x, traj) = sample_trajectory(&oracle, strategy, &perm, &mut rng).unwrap();
                let replayed = replay_trajectory(&oracle, strategy, &perm, &x).unwrap();
                assert_eq!(traj, replayed);
            }
        }
    }

    #[test]
    fn replay_off_support_errors() {
        let oracle = pair_oracle();
        let x = TokenSequence::new(vec![0, 1], 2).unwrap();
        let err = replay_trajectory(&oracle, &Strategy::Ar, &perm01(), &x).unwrap_err();
        assert!(matches!(err, Error::SupportViolation(_)));
    }

    #[test]
    fn summary_matches_full_record() {
        let caps = Caps::default();
        let dist = Arc::new(ExplicitJoint::random_dirichlet(5, 2, 0.7, 21, &caps).unwrap());
        let oracle = Oracle::new(dist.clone());
        let strategies = [
            Strategy::Ar,
            Strategy::one_shot(),
            Strategy::EntropySum { eta: 0.4 },
            Strategy::EntropySum { eta: 0.0 },
            Strategy::MaxEntropy { eta: 0.3, s_max: 2 },
            Strategy::Uniform {
                schedule: vec![2, 1, 2],
            },
        ];
        let fault_modes = [
            FaultInjection::default(),
            FaultInjection {
                flip_threshold_comparison: true,
                unfreeze_context: false,
            },
            FaultInjection {
                flip_threshold_comparison: false,
                unfreeze_context: true,
            },
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for strategy in &strategies {
            for faults in fault_modes {
                for _ in 0..10 {
                    let perm = Permutation::uniform(5, &mut rng);
                    let idx = rng.random_range(0..dist.table_len());
                    let x = TokenSequence::new(dist.decode(idx), 2).unwrap();
                    let record = replay_record(&oracle, strategy, &perm, &x, faults).unwrap();
                    let summary = replay_summary(&oracle, strategy, &perm, &x, faults).unwrap();
                    assert_eq!(record.log_prob, summary.log_prob);
                    let full_entropy: f64 = record
                        .trajectory
                        .batches()
                        .iter()
                        .map(|b| b.entropy_sum)
                        .sum();
                    assert!((full_entropy - summary.entropy_total).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn envelope_recursion_examples() {
        let (env, crossings) = size_envelopes(&[1, 2, 4, 1]);
        assert_eq!(env, vec![0, 2, 4, 8]);
        assert_eq!(crossings, 3);

        let (env, crossings) = size_envelopes(&[1, 1, 1, 1]);
        assert_eq!(env, vec![0, 2, 2, 2]);
        assert_eq!(crossings, 1);

        let (env, crossings) = size_envelopes(&[8]);
        assert_eq!(env, vec![0]);
        assert_eq!(crossings, 1);
    }

    #[test]
    fn envelope_crossing_cap_on_random_partitions() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for seq_len in [4usize, 8, 16, 32] {
            let cap = (seq_len as f64).log2().floor() as usize + 1;
            for _ in 0..2000 {
                let mut remaining = seq_len;
                let mut sizes = Vec::new();
                while remaining > 0 {
                    let s = rng.random_range(1..=remaining);
                    sizes.push(s);
                    remaining -= s;
                }
                let (_, crossings) = size_envelopes(&sizes);
                assert!(crossings <= cap, "sizes {sizes:?} crossed {crossings} > {cap}");
            }
        }
    }

    #[test]
    fn balanced_schedule_interleaves() {
        assert_eq!(balanced_schedule(8, 3).unwrap(), vec![2, 3, 3]);
        assert_eq!(balanced_schedule(4, 2).unwrap(), vec![2, 2]);
        assert_eq!(balanced_schedule(5, 5).unwrap(), vec![1; 5]);
        assert!(balanced_schedule(3, 4).is_err());
        for (seq_len, iters) in [(9, 4), (17, 6), (12, 5)] {
            let s = balanced_schedule(seq_len, iters).unwrap();
            assert_eq!(s.iter().sum::<usize>(), seq_len);
            assert!(s.iter().all(|&x| x == seq_len / iters || x == seq_len / iters + 1));
        }
    }

    #[test]
    fn uniform_permutation_determinism_and_edge() {
        let mut a = ChaCha12Rng::seed_from_u64(12);
        let mut b = ChaCha12Rng::seed_from_u64(12);
        assert_eq!(
            Permutation::uniform(6, &mut a),
            Permutation::uniform(6, &mut b)
        );
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        assert_eq!(Permutation::uniform(1, &mut rng), Permutation::identity(1));
    }

    #[test]
    fn uniform_permutation_frequencies() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let draws = 100_000;
        let mut identity_count = 0usize;
        for _ in 0..draws {
            if Permutation::uniform(2, &mut rng).order() == [0, 1] {
                identity_count += 1;
            }
        }
        let freq = identity_count as f64 / draws as f64;
        let sigma = (0.25f64 / draws as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn schedule_validation() {
        let s = Strategy::Uniform {
            schedule: vec![2, 1],
        };
        assert!(s.validate(4).is_err());
        assert!(s.validate(3).is_ok());
        assert!(Strategy::EntropySum { eta: -0.1 }.validate(2).is_err());
        assert!(Strategy::EntropySum { eta: f64::INFINITY }.validate(2).is_ok());
        assert!(Strategy::MaxEntropy { eta: 0.1, s_max: 0 }.validate(2).is_err());
    }

    #[test]
    fn strategy_serde_names() {
        let s: Strategy = serde_json::from_str(r#"{"kind":"entropy_sum","eta":0.5}"#).unwrap();
        assert_eq!(s, Strategy::EntropySum { eta: 0.5 });
        let s: Strategy =
            serde_json::from_str(r#"{"kind":"max_entropy","eta":0.1,"s_max":3}"#).unwrap();
        assert_eq!(s.s_max(), Some(3));
        let s: Strategy = serde_json::from_str(r#"{"kind":"ar"}"#).unwrap();
        assert_eq!(s, Strategy::Ar);
        let s: Strategy = serde_json::from_str(r#"{"kind":"uniform","schedule":[2,2]}"#).unwrap();
        assert_eq!(s.name(), "uniform");
    }
}
