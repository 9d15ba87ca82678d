//! Exact and Monte Carlo evaluation: sampled-law log densities, KL sampling
//! error, expected iteration counts, entropy identities, and the certified
//! inequality checks.
//!
//! Exact KL for a fixed permutation sums `p(x) (log p(x) - log q(x))` over
//! the support of the data table, where `log q` comes from replaying `x` and
//! multiplying the per-token conditionals of its trajectory. The expectation
//! over scan orders is either an exact average over all `L!` permutations
//! (within [`Caps::max_perms`]) or an unbiased Monte Carlo average over
//! uniformly drawn permutations with its sample standard error.
//!
//! Expected iteration counts are weighted by the *sampled* law, not the data
//! law — the two coincide only when the KL error vanishes. The exact route
//! walks the decoder's outcome tree: batch membership depends only on the
//! frozen context, so each context node branches over the joint outcomes of
//! its batch under the product of conditionals.
//!
//! Inequality checks compare computed doubles with no tolerance on the
//! inequality side; equality-style identities are checked elsewhere at 1e-10.

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::caps::Caps;
use crate::decode::{
    plan_batch, replay_record, replay_summary, sample_trajectory, FaultInjection, Permutation,
    Strategy,
};
use crate::dist::{JointSampler, PartialAssignment, TokenSequence};
use crate::error::{Error, Result};
use crate::info::{self, Nats};
use crate::oracle::Oracle;

/// How to treat the expectation over scan permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermMode {
    /// Average over all `L!` permutations; requires `L! <= Caps::max_perms`.
    Enumerate,
    /// Unbiased average over `n` uniformly drawn permutations.
    Sample { n: usize, seed: u64 },
}

/// Log probability of `x` under the sampled law for a fixed permutation:
/// the sum of per-token conditional log marginals along the replayed
/// trajectory of `x`.
pub fn sampled_logprob(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    x: &TokenSequence,
) -> Result<f64> {
    Ok(replay_record(oracle, strategy, perm, x, FaultInjection::default())?.log_prob)
}

/// `KL(data || sampled law)` for a fixed permutation, by exact summation
/// over the support of the data table.
pub fn exact_kl_given_perm(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
) -> Result<Nats> {
    exact_kl_given_perm_with_faults(oracle, strategy, perm, FaultInjection::default())
}

#[doc(hidden)]
pub fn exact_kl_given_perm_with_faults(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    faults: FaultInjection,
) -> Result<Nats> {
    let dist = oracle.dist();
    let mut kl = 0.0;
    for (idx, p) in dist.support() {
        let x = TokenSequence::from_raw(dist.decode(idx));
        let summary = replay_summary(oracle, strategy, perm, &x, faults)?;
        kl += p * (p.ln() - summary.log_prob);
    }
    debug_assert!(kl > -1e-9, "density-route kl materially negative: {kl}");
    Ok(kl.max(0.0))
}

/// The same KL computed along the other route: for each data sequence,
/// replay its trajectory and add the divergence between each batch's true
/// conditional joint and the product of its conditional marginals, weighted
/// by the data law.
pub fn exact_kl_decomposition_given_perm(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
) -> Result<Nats> {
    exact_kl_decomposition_given_perm_with_faults(oracle, strategy, perm, FaultInjection::default())
}

#[doc(hidden)]
pub fn exact_kl_decomposition_given_perm_with_faults(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    faults: FaultInjection,
) -> Result<Nats> {
    let dist = oracle.dist();
    let mut kl = 0.0;
    for (idx, p) in dist.support() {
        let x = TokenSequence::new(dist.decode(idx), dist.vocab())?;
        kl += p * replayed_decomposition_sum(oracle, strategy, perm, &x, faults)?;
    }
    Ok(kl.max(0.0))
}

/// Sum over iterations of `KL(joint batch conditional || product of its
/// marginals)` along the replayed trajectory of one sequence.
fn replayed_decomposition_sum(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    x: &TokenSequence,
    faults: FaultInjection,
) -> Result<Nats> {
    let vocab = oracle.dist().vocab();
    let record = replay_record(oracle, strategy, perm, x, faults)?;
    let mut context = PartialAssignment::new();
    let mut total = 0.0;
    for batch in record.trajectory.batches() {
        if batch.len() > 1 {
            let mut targets = batch.positions.clone();
            targets.sort_unstable();
            let joint = oracle.conditional_joint(&targets, &context)?;
            total += info::kl_joint_vs_product(joint.probs(), &vec![vocab; targets.len()]);
        }
        for &pos in &batch.positions {
            context.insert(pos, x.get(pos))?;
        }
    }
    Ok(total)
}

/// Unbiased Monte Carlo estimate of the decomposition-route KL for a fixed
/// permutation, from sequences drawn from the data law. Returns
/// `(estimate, standard error)`.
pub fn kl_decomposition_estimator(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    n_samples: usize,
    seed: u64,
) -> Result<(Nats, f64)> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let sampler = JointSampler::new(oracle.dist_arc());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let draws: Vec<TokenSequence> = (0..n_samples).map(|_| sampler.sample(&mut rng)).collect();
    let values = draws
        .par_iter()
        .map(|x| replayed_decomposition_sum(oracle, strategy, perm, x, FaultInjection::default()))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_stderr(&values))
}

/// Fresh per-worker oracle view over the same table. Scan permutations share
/// almost no conditioning contexts, so a local cache keeps the hit rate while
/// avoiding lock contention on one shared cache.
fn local_oracle(oracle: &Oracle) -> Oracle {
    let capacity = (4 * oracle.dist().table_len()).max(1024);
    Oracle::with_cache_capacity(oracle.dist_arc(), capacity)
}

/// Exact expectation over scan permutations of the per-permutation KL.
/// Enumerate mode returns standard error 0; sample mode returns the Monte
/// Carlo standard error over permutations.
pub fn exact_kl_expected(
    oracle: &Oracle,
    strategy: &Strategy,
    mode: PermMode,
    caps: &Caps,
) -> Result<(Nats, f64)> {
    let perms = permutation_set(oracle.dist().seq_len(), mode, caps)?;
    let values = perms
        .par_iter()
        .map(|perm| exact_kl_given_perm(&local_oracle(oracle), strategy, perm))
        .collect::<Result<Vec<_>>>()?;
    match mode {
        PermMode::Enumerate => Ok((mean(&values), 0.0)),
        PermMode::Sample { .. } => Ok(mean_and_stderr(&values)),
    }
}

/// Exact expected iteration count for a fixed permutation, weighted by the
/// sampled law: walks the decoder's outcome tree, branching over each
/// batch's joint outcomes under the product of frozen-context conditionals.
pub fn expected_iterations_given_perm(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
) -> Result<f64> {
    strategy.validate(oracle.dist().seq_len())?;
    let mut context = PartialAssignment::new();
    let mut acc = 0.0;
    iteration_tree(oracle, strategy, perm, &mut context, 0, 0, 1.0, &mut acc)?;
    Ok(acc)
}

#[allow(clippy::too_many_arguments)]
fn iteration_tree(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    context: &mut PartialAssignment,
    k: usize,
    t: usize,
    prob: f64,
    acc: &mut f64,
) -> Result<()> {
    if k == perm.len() {
        *acc += prob * t as f64;
        return Ok(());
    }
    let plan = plan_batch(oracle, strategy, perm, context, k, t, false)?;
    let width = plan.positions.len();
    let vocab = oracle.dist().vocab();
    let mut combo = vec![0usize; width];
    loop {
        let mut branch = prob;
        for (i, &tok) in combo.iter().enumerate() {
            branch *= plan.marginals[i].probs()[tok];
        }
        if branch > 0.0 {
            for (i, &tok) in combo.iter().enumerate() {
                context.insert(plan.positions[i], tok)?;
            }
            iteration_tree(oracle, strategy, perm, context, k + width, t + 1, branch, acc)?;
            for &pos in &plan.positions {
                context.remove(pos);
            }
        }
        // Advance the outcome odometer.
        let mut d = width;
        loop {
            if d == 0 {
                return Ok(());
            }
            d -= 1;
            combo[d] += 1;
            if combo[d] < vocab {
                break;
            }
            combo[d] = 0;
        }
    }
}

/// Expected iteration count: exact over the sampled law per permutation and
/// averaged over permutations in enumerate mode, or Monte Carlo over full
/// runs (one trajectory per drawn permutation) in sample mode.
pub fn expected_iterations(
    oracle: &Oracle,
    strategy: &Strategy,
    mode: PermMode,
    caps: &Caps,
) -> Result<(f64, f64)> {
    match mode {
        PermMode::Enumerate => {
            let perms = permutation_set(oracle.dist().seq_len(), mode, caps)?;
            let values = perms
                .par_iter()
                .map(|perm| expected_iterations_given_perm(&local_oracle(oracle), strategy, perm))
                .collect::<Result<Vec<_>>>()?;
            Ok((mean(&values), 0.0))
        }
        PermMode::Sample { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidArgument("need at least one sample".into()));
            }
            let len = oracle.dist().seq_len();
            let chunk = 64;
            let values = (0..n.div_ceil(chunk))
                .into_par_iter()
                .map(|c| {
                    let local = local_oracle(oracle);
                    let mut out = Vec::with_capacity(chunk);
                    for i in c * chunk..(c * chunk + chunk).min(n) {
                        let mut rng = ChaCha12Rng::seed_from_u64(seed);
                        rng.set_stream(i as u64);
                        let perm = Permutation::uniform(len, &mut rng);
                        let (_, traj) = sample_trajectory(&local, strategy, &perm, &mut rng)?;
                        out.push(traj.iterations() as f64);
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let values: Vec<f64> = values.into_iter().flatten().collect();
            Ok(mean_and_stderr(&values))
        }
    }
}

/// Both sides of a trajectory identity plus their absolute difference.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl IdentityReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
        }
    }
}

/// Checks, for one permutation, that the table entropy equals the
/// replay-weighted sum of batch conditional entropies taken jointly.
pub fn verify_entropy_identity(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
) -> Result<IdentityReport> {
    verify_entropy_identity_with_faults(oracle, strategy, perm, FaultInjection::default())
}

#[doc(hidden)]
pub fn verify_entropy_identity_with_faults(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    faults: FaultInjection,
) -> Result<IdentityReport> {
    let dist = oracle.dist();
    let mut rhs = 0.0;
    for (idx, p) in dist.support() {
        let x = TokenSequence::new(dist.decode(idx), dist.vocab())?;
        let record = replay_record(oracle, strategy, perm, &x, faults)?;
        let mut context = PartialAssignment::new();
        for batch in record.trajectory.batches() {
            let mut targets = batch.positions.clone();
            targets.sort_unstable();
            let joint = oracle.conditional_joint(&targets, &context)?;
            rhs += p * joint.entropy();
            for &pos in &batch.positions {
                context.insert(pos, x.get(pos))?;
            }
        }
    }
    Ok(IdentityReport::new(dist.entropy_nats(), rhs))
}

/// Checks the marginal form of the same identity: table entropy equals the
/// replay-weighted sum of per-token entropies minus the density-route KL.
pub fn verify_marginal_entropy_identity(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
) -> Result<IdentityReport> {
    verify_marginal_entropy_identity_with_faults(oracle, strategy, perm, FaultInjection::default())
}

#[doc(hidden)]
pub fn verify_marginal_entropy_identity_with_faults(
    oracle: &Oracle,
    strategy: &Strategy,
    perm: &Permutation,
    faults: FaultInjection,
) -> Result<IdentityReport> {
    let dist = oracle.dist();
    let mut entropy_sum = 0.0;
    let mut kl = 0.0;
    for (idx, p) in dist.support() {
        let x = TokenSequence::from_raw(dist.decode(idx));
        let summary = replay_summary(oracle, strategy, perm, &x, faults)?;
        entropy_sum += p * summary.entropy_total;
        kl += p * (p.ln() - summary.log_prob);
    }
    Ok(IdentityReport::new(dist.entropy_nats(), entropy_sum - kl))
}

/// One certified inequality on computed values.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            bound,
            holds: value <= bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Exact,
    Mc,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMode::Exact => write!(f, "exact"),
            EvalMode::Mc => write!(f, "mc"),
        }
    }
}

/// One (distribution, strategy) evaluation row.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub strategy: String,
    pub eta: Option<f64>,
    pub s_max: Option<usize>,
    pub seq_len: usize,
    pub vocab: usize,
    pub data_entropy_nats: f64,
    pub epsilon: Option<f64>,
    pub kl_nats: f64,
    pub kl_stderr: f64,
    pub expected_iterations: f64,
    pub iterations_stderr: f64,
    /// Headline KL bound (epsilon) when a certified rule set the parameters.
    pub kl_bound_theorem: Option<f64>,
    /// Envelope-argument KL bound `4 eta (log2 L + 1)`; entropy-sum only.
    pub kl_bound_envelope: Option<f64>,
    /// Headline iteration bound when a certified rule set the parameters.
    pub iteration_bound: Option<f64>,
    pub bounds: Vec<BoundCheck>,
    pub mode: EvalMode,
    pub perms_evaluated: u64,
    pub samples_drawn: u64,
    pub seed: u64,
    pub pass: bool,
}

impl EvalReport {
    fn base(oracle: &Oracle, strategy: &Strategy, mode: EvalMode) -> Self {
        let dist = oracle.dist();
        Self {
            strategy: strategy.name().to_string(),
            eta: strategy.eta(),
            s_max: strategy.s_max(),
            seq_len: dist.seq_len(),
            vocab: dist.vocab(),
            data_entropy_nats: dist.entropy_nats(),
            epsilon: None,
            kl_nats: 0.0,
            kl_stderr: 0.0,
            expected_iterations: 0.0,
            iterations_stderr: 0.0,
            kl_bound_theorem: None,
            kl_bound_envelope: None,
            iteration_bound: None,
            bounds: Vec::new(),
            mode,
            perms_evaluated: 0,
            samples_drawn: 0,
            seed: 0,
            pass: true,
        }
    }

    fn finish_bounds(&mut self) {
        self.pass = self.bounds.iter().all(|b| b.holds);
    }

    fn first_violation(&self) -> Option<&BoundCheck> {
        self.bounds.iter().find(|b| !b.holds)
    }
}

/// `log2(L) + 1` as a dimensionless count; the envelope argument is
/// inherently base-2 while entropies stay in nats.
pub fn log2_len_plus_one(seq_len: usize) -> f64 {
    (seq_len as f64).log2() + 1.0
}

/// Certifies the entropy-sum rule at accuracy `epsilon`: sets
/// `eta = epsilon / (4 (log2 L + 1))`, evaluates KL and iterations exactly,
/// and asserts the three inequalities with zero tolerance. A violation comes
/// back as [`Error::BoundViolated`].
pub fn check_theorem1(oracle: &Oracle, epsilon: f64, caps: &Caps) -> Result<EvalReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    let dist = oracle.dist();
    let len = dist.seq_len();
    let log_term = log2_len_plus_one(len);
    let eta = epsilon / (4.0 * log_term);
    let strategy = Strategy::EntropySum { eta };

    let (kl, _) = exact_kl_expected(oracle, &strategy, PermMode::Enumerate, caps)?;
    let (iters, _) = expected_iterations(oracle, &strategy, PermMode::Enumerate, caps)?;

    let entropy = dist.entropy_nats();
    let envelope_bound = 4.0 * eta * log_term;
    let iter_bound = 4.0 * (entropy / epsilon + 1.0) * log_term + 1.0;

    let mut report = EvalReport::base(oracle, &strategy, EvalMode::Exact);
    report.epsilon = Some(epsilon);
    report.kl_nats = kl;
    report.expected_iterations = iters;
    report.kl_bound_theorem = Some(epsilon);
    report.kl_bound_envelope = Some(envelope_bound);
    report.iteration_bound = Some(iter_bound);
    report.perms_evaluated = caps.perm_count(len)?;
    report.bounds = vec![
        BoundCheck::new("kl_vs_epsilon", kl, epsilon),
        BoundCheck::new("kl_vs_envelope", kl, envelope_bound),
        BoundCheck::new("iterations_vs_rule", iters, iter_bound),
    ];
    report.finish_bounds();
    if let Some(v) = report.first_violation() {
        return Err(Error::BoundViolated {
            name: v.name.clone(),
            value: v.value,
            bound: v.bound,
        });
    }
    Ok(report)
}

/// Certifies the max-entropy rule at accuracy `epsilon`: sets
/// `eta = sqrt(epsilon H / L)` and `s_max = max(1, floor(sqrt(epsilon L / H)))`,
/// evaluates exactly, and asserts the four inequalities. A zero-entropy table
/// has no finite parameter rule; the report then runs the documented
/// deterministic limit `eta = 0`, `s_max = L`.
pub fn check_theorem2(oracle: &Oracle, epsilon: f64, caps: &Caps) -> Result<EvalReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    let dist = oracle.dist();
    let len = dist.seq_len();
    let entropy = dist.entropy_nats();
    let degenerate = entropy <= 0.0;
    let (eta, s_max) = if degenerate {
        (0.0, len)
    } else {
        let eta = (epsilon * entropy / len as f64).sqrt();
        let s_max = ((epsilon * len as f64 / entropy).sqrt().floor() as usize).max(1);
        (eta, s_max)
    };
    let strategy = Strategy::MaxEntropy { eta, s_max };

    let (kl, _) = exact_kl_expected(oracle, &strategy, PermMode::Enumerate, caps)?;
    let (iters, _) = expected_iterations(oracle, &strategy, PermMode::Enumerate, caps)?;

    let iter_bound = 2.0 * (entropy * len as f64 / epsilon).sqrt() + 1.0;
    let cap_bound = 2.0 * len as f64 / s_max as f64 + 1.0;

    let mut report = EvalReport::base(oracle, &strategy, EvalMode::Exact);
    report.epsilon = Some(epsilon);
    report.kl_nats = kl;
    report.expected_iterations = iters;
    report.kl_bound_theorem = Some(epsilon);
    report.iteration_bound = Some(iter_bound);
    report.perms_evaluated = caps.perm_count(len)?;
    report.bounds = vec![
        BoundCheck::new("kl_vs_epsilon", kl, epsilon),
        BoundCheck::new("kl_vs_smax_eta", kl, s_max as f64 * eta),
        BoundCheck::new("iterations_vs_rule", iters, iter_bound),
        BoundCheck::new("iterations_vs_cap", iters, cap_bound),
    ];
    report.finish_bounds();
    if let Some(v) = report.first_violation() {
        return Err(Error::BoundViolated {
            name: v.name.clone(),
            value: v.value,
            bound: v.bound,
        });
    }
    Ok(report)
}

/// Plain evaluation of one (distribution, strategy) cell. Exact mode
/// enumerates permutations and the sampled law; MC mode draws `n_perms`
/// permutations for the KL average and `n_samples` full runs for the
/// iteration count. Parameter-free bounds are attached where one is proven
/// for the strategy at any setting; in MC mode those checks allow a
/// three-standard-error guard band.
pub fn evaluate_strategy(
    oracle: &Oracle,
    strategy: &Strategy,
    mode: EvalMode,
    n_perms: usize,
    n_samples: usize,
    caps: &Caps,
    seed: u64,
) -> Result<EvalReport> {
    strategy.validate(oracle.dist().seq_len())?;
    let len = oracle.dist().seq_len();
    let (kl_mode, iter_mode, perms, samples) = match mode {
        EvalMode::Exact => {
            let count = caps.perm_count(len)?;
            (PermMode::Enumerate, PermMode::Enumerate, count, 0)
        }
        EvalMode::Mc => (
            PermMode::Sample { n: n_perms, seed },
            PermMode::Sample {
                n: n_samples,
                seed: seed ^ 0x9e37_79b9_7f4a_7c15,
            },
            n_perms as u64,
            n_samples as u64,
        ),
    };
    let (kl, kl_stderr) = exact_kl_expected(oracle, strategy, kl_mode, caps)?;
    let (iters, iters_stderr) = expected_iterations(oracle, strategy, iter_mode, caps)?;

    let mut report = EvalReport::base(oracle, strategy, mode);
    report.kl_nats = kl;
    report.kl_stderr = kl_stderr;
    report.expected_iterations = iters;
    report.iterations_stderr = iters_stderr;
    report.perms_evaluated = perms;
    report.samples_drawn = samples;
    report.seed = seed;

    let guard = match mode {
        EvalMode::Exact => 0.0,
        EvalMode::Mc => 3.0 * kl_stderr,
    };
    match strategy {
        Strategy::EntropySum { eta } if eta.is_finite() => {
            let envelope = 4.0 * eta * log2_len_plus_one(len);
            report.kl_bound_envelope = Some(envelope);
            report
                .bounds
                .push(BoundCheck::new("kl_vs_envelope", kl, envelope + guard));
        }
        Strategy::MaxEntropy { eta, s_max } => {
            report.bounds.push(BoundCheck::new(
                "kl_vs_smax_eta",
                kl,
                *s_max as f64 * eta + guard,
            ));
        }
        Strategy::Ar => {
            report
                .bounds
                .push(BoundCheck::new("kl_vs_zero", kl, 1e-12 + guard));
        }
        _ => {}
    }
    report.finish_bounds();
    Ok(report)
}

fn permutation_set(len: usize, mode: PermMode, caps: &Caps) -> Result<Vec<Permutation>> {
    match mode {
        PermMode::Enumerate => {
            caps.perm_count(len)?;
            (0..len)
                .permutations(len)
                .map(Permutation::new)
                .collect::<Result<Vec<_>>>()
        }
        PermMode::Sample { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidArgument(
                    "need at least one permutation".into(),
                ));
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            Ok((0..n)
                .map(|_| Permutation::uniform(len, &mut rng))
                .collect())
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (m, (var / values.len() as f64).sqrt())
}
