//! The verification battery: every identity, inequality, and trajectory
//! invariant the library certifies, packaged as named property groups with
//! residuals and bound slacks.
//!
//! `lemmas` covers the information-theoretic identities and trajectory
//! invariants; `theorems` covers the certified parameter rules, the
//! any-parameter bounds, and Monte Carlo / exact consistency.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::caps::Caps;
use crate::decode::{
    replay_trajectory_with_faults, sample_trajectory_with_faults, Batch, FaultInjection,
    Permutation, Strategy,
};
use crate::dist::{ExplicitJoint, PartialAssignment, TokenSequence};
use crate::error::Result;
use crate::eval::{self, PermMode};
use crate::info;
use crate::oracle::Oracle;
use crate::suite::{self, SuiteDist};

/// Outcome of one property group.
#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: String,
    pub cases: usize,
    /// Worst residual for identities; violation count for invariants;
    /// smallest slack deficit for bounds (0 when all hold).
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

impl PropertyResult {
    fn residual(name: &str, cases: usize, worst: f64, tolerance: f64, note: String) -> Self {
        Self {
            name: name.to_string(),
            cases,
            worst,
            tolerance,
            pass: worst <= tolerance,
            note,
        }
    }

    fn violations(name: &str, cases: usize, violations: usize, note: String) -> Self {
        Self {
            name: name.to_string(),
            cases,
            worst: violations as f64,
            tolerance: 0.0,
            pass: violations == 0,
            note,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemmas,
    Theorems,
    All,
}

impl std::str::FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemmas" => Ok(Suite::Lemmas),
            "theorems" => Ok(Suite::Theorems),
            "all" => Ok(Suite::All),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown suite {other:?}, expected lemmas|theorems|all"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Random joint tables for the decomposition identities.
// ---------------------------------------------------------------------------

/// Random flattened joint with `d` coordinates of arity 2..=3, occasionally
/// sparse so boundary support cases get exercised.
fn random_joint(rng: &mut ChaCha12Rng) -> (Vec<f64>, Vec<usize>) {
    let d = rng.random_range(2..=4usize);
    let arities: Vec<usize> = (0..d).map(|_| rng.random_range(2..=3usize)).collect();
    let len: usize = arities.iter().product();
    loop {
        let mut weights: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        if rng.random::<f64>() < 0.4 {
            for w in weights.iter_mut() {
                if rng.random::<f64>() < 0.3 {
                    *w = 0.0;
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            for w in weights.iter_mut() {
                *w /= total;
            }
            return (weights, arities);
        }
    }
}

/// KL between a joint and the product of its marginals equals the sum of the
/// tail mutual-information terms.
pub fn check_kl_tail_identity(seed: u64, n_joints: usize) -> PropertyResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_joints {
        let (joint, arities) = random_joint(&mut rng);
        let kl = info::kl_joint_vs_product(&joint, &arities);
        let sum: f64 = info::mi_tail_decomposition(&joint, &arities).iter().sum();
        worst = worst.max((kl - sum).abs());
    }
    PropertyResult::residual(
        "kl equals tail mutual-information sum",
        n_joints,
        worst,
        1e-10,
        String::new(),
    )
}

/// For every excluded coordinate, the leave-one-out mutual-information sum
/// upper-bounds the joint-vs-product KL.
pub fn check_leave_one_out_bound(seed: u64, n_joints: usize) -> PropertyResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..n_joints {
        let (joint, arities) = random_joint(&mut rng);
        let kl = info::kl_joint_vs_product(&joint, &arities);
        for excluded in 0..arities.len() {
            let sum: f64 = info::mi_leave_one_out(&joint, &arities, excluded).iter().sum();
            worst = worst.max(kl - sum);
            cases += 1;
        }
    }
    PropertyResult::residual(
        "leave-one-out sum dominates kl",
        cases,
        worst,
        1e-10,
        String::new(),
    )
}

fn chain_rule_residual(
    oracle: &Oracle,
    x: usize,
    y1: usize,
    y2: usize,
    context: &PartialAssignment,
) -> Result<f64> {
    let mut pair = [y1, y2];
    pair.sort_unstable();
    let lhs = info::pointwise_mi(oracle, &[x], &pair, context)?;
    let first = info::pointwise_mi(oracle, &[x], &[y1], context)?;
    let y1_dist = oracle.conditional_marginal(y1, context)?;
    let mut second = 0.0;
    for (v, &p) in y1_dist.probs().iter().enumerate() {
        if p > 0.0 {
            let mut extended = context.clone();
            extended.insert(y1, v)?;
            second += p * info::pointwise_mi(oracle, &[x], &[y2], &extended)?;
        }
    }
    Ok((lhs - (first + second)).abs())
}

/// Pointwise mutual-information chain rule over random tables, checked at the
/// empty context and at every on-support single-position context.
pub fn check_pointwise_chain_rule(seed: u64, n_joints: usize) -> PropertyResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for joint_idx in 0..n_joints {
        let len = if joint_idx % 2 == 0 { 3 } else { 4 };
        let vocab = if joint_idx % 3 == 0 { 3 } else { 2 };
        let conc = 0.4 + rng.random::<f64>();
        let dist = Arc::new(
            ExplicitJoint::random_dirichlet(len, vocab, conc, rng.random(), &Caps::default())
                .expect("within caps"),
        );
        let oracle = Oracle::new(dist.clone());
        // Every ordered triple of distinct positions.
        for x in 0..len {
            for y1 in 0..len {
                for y2 in 0..len {
                    if x == y1 || x == y2 || y1 == y2 {
                        continue;
                    }
                    let empty = PartialAssignment::new();
                    let r = chain_rule_residual(&oracle, x, y1, y2, &empty).expect("on-support");
                    worst = worst.max(r);
                    cases += 1;
                    for z in 0..len {
                        if z == x || z == y1 || z == y2 {
                            continue;
                        }
                        for v in 0..vocab {
                            let ctx = PartialAssignment::from_pairs(&[(z, v)]).expect("distinct");
                            if oracle.context_mass(&ctx).expect("valid") > 0.0 {
                                let r = chain_rule_residual(&oracle, x, y1, y2, &ctx)
                                    .expect("on-support");
                                worst = worst.max(r);
                                cases += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    PropertyResult::residual(
        "pointwise mutual-information chain rule",
        cases,
        worst,
        1e-10,
        String::new(),
    )
}

/// Pointwise MI never exceeds either pointwise conditional entropy.
pub fn check_mi_entropy_bound(seed: u64, n_joints: usize) -> PropertyResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..n_joints {
        let dist = Arc::new(
            ExplicitJoint::random_dirichlet(4, 2, 0.8, rng.random(), &Caps::default())
                .expect("within caps"),
        );
        let oracle = Oracle::new(dist);
        let empty = PartialAssignment::new();
        for a in 0..4usize {
            for b in 0..4usize {
                if a == b {
                    continue;
                }
                let mi = info::pointwise_mi(&oracle, &[a], &[b], &empty).expect("on-support");
                let ha = oracle.conditional_marginal(a, &empty).unwrap().entropy();
                let hb = oracle.conditional_marginal(b, &empty).unwrap().entropy();
                worst = worst.max(mi - ha.min(hb));
                cases += 1;
            }
        }
    }
    PropertyResult::residual(
        "mutual information below both entropies",
        cases,
        worst,
        1e-10,
        String::new(),
    )
}

// ---------------------------------------------------------------------------
// Identity triples: (distribution, strategy, permutation).
// ---------------------------------------------------------------------------

pub struct IdentityTriple {
    pub name: String,
    pub dist: Arc<ExplicitJoint>,
    pub strategy: Strategy,
    pub perm: Permutation,
}

/// Twenty (distribution, strategy, permutation) triples with `L <= 6`,
/// `V = 2`, mixing hard correlation, chains, low entropy, zero-entropy
/// tokens, and random tables across every strategy kind.
pub fn identity_triples(seed: u64) -> Vec<IdentityTriple> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let pair = suite::correlated_pair();
    let blocks = suite::correlated_blocks_l4();
    let markov = suite::sticky_markov(6, 0.9).expect("static");
    let near_det = suite::near_deterministic(6, 0.05).expect("static");
    let half_det = suite::half_deterministic_product(4);
    let dir4 = Arc::new(
        ExplicitJoint::random_dirichlet(4, 2, 0.9, seed.wrapping_add(1), &Caps::default())
            .expect("within caps"),
    );
    let dir5 = Arc::new(
        ExplicitJoint::random_dirichlet(5, 2, 0.6, seed.wrapping_add(2), &Caps::default())
            .expect("within caps"),
    );

    let mut triples: Vec<(&str, Arc<ExplicitJoint>, Strategy)> = vec![
        // The frozen-context detector: one batch holding both halves of a
        // correlated pair.
        ("pair/sum1.0", pair.clone(), Strategy::EntropySum { eta: 1.0 }),
        ("pair/sum0.5", pair.clone(), Strategy::EntropySum { eta: 0.5 }),
        ("pair/one_shot", pair.clone(), Strategy::one_shot()),
        ("pair/ar", pair, Strategy::Ar),
        ("blocks/sum0.0", blocks.clone(), Strategy::EntropySum { eta: 0.0 }),
        ("blocks/sum1.0", blocks.clone(), Strategy::EntropySum { eta: 1.0 }),
        ("blocks/one_shot", blocks.clone(), Strategy::one_shot()),
        (
            "blocks/max0.4x2",
            blocks.clone(),
            Strategy::MaxEntropy { eta: 0.4, s_max: 2 },
        ),
        (
            "blocks/uniform22",
            blocks,
            Strategy::Uniform { schedule: vec![2, 2] },
        ),
        ("markov/sum0.3", markov.clone(), Strategy::EntropySum { eta: 0.3 }),
        ("markov/sum1.5", markov.clone(), Strategy::EntropySum { eta: 1.5 }),
        (
            "markov/max0.5x3",
            markov.clone(),
            Strategy::MaxEntropy { eta: 0.5, s_max: 3 },
        ),
        (
            "markov/uniform",
            markov,
            Strategy::Uniform { schedule: vec![2, 2, 2] },
        ),
        ("near_det/sum0.25", near_det.clone(), Strategy::EntropySum { eta: 0.25 }),
        (
            "near_det/max0.05x3",
            near_det,
            Strategy::MaxEntropy { eta: 0.05, s_max: 3 },
        ),
        ("half_det/sum0.0", half_det.clone(), Strategy::EntropySum { eta: 0.0 }),
        (
            "half_det/max0.0x4",
            half_det,
            Strategy::MaxEntropy { eta: 0.0, s_max: 4 },
        ),
        ("dir4/sum0.4", dir4.clone(), Strategy::EntropySum { eta: 0.4 }),
        (
            "dir4/uniform13",
            dir4,
            Strategy::Uniform { schedule: vec![1, 3] },
        ),
        (
            "dir5/max0.45x2",
            dir5,
            Strategy::MaxEntropy { eta: 0.45, s_max: 2 },
        ),
    ];

    triples
        .drain(..)
        .map(|(name, dist, strategy)| {
            let perm = if name == "pair/sum1.0" {
                // Pin the frozen-context detector to the canonical order.
                Permutation::identity(2)
            } else {
                Permutation::uniform(dist.seq_len(), &mut rng)
            };
            IdentityTriple {
                name: name.to_string(),
                dist,
                strategy,
                perm,
            }
        })
        .collect()
}

fn identity_worst<F>(seed: u64, f: F) -> (usize, f64, String)
where
    F: Fn(&Oracle, &Strategy, &Permutation) -> Result<f64> + Sync,
{
    let triples = identity_triples(seed);
    let residuals: Vec<(String, f64)> = triples
        .par_iter()
        .map(|t| {
            let oracle = Oracle::new(t.dist.clone());
            let r = f(&oracle, &t.strategy, &t.perm).expect("triple evaluation");
            (t.name.clone(), r)
        })
        .collect();
    let (name, worst) = residuals
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |acc, (n, r)| {
            if r > acc.1 {
                (n, r)
            } else {
                acc
            }
        });
    let note = if worst > 0.0 {
        format!("worst at {name}")
    } else {
        String::new()
    };
    (residuals.len(), worst, note)
}

/// Joint-form trajectory entropy identity over the twenty triples.
pub fn check_entropy_identity_joint(seed: u64) -> PropertyResult {
    check_entropy_identity_joint_with_faults(seed, FaultInjection::default())
}

#[doc(hidden)]
pub fn check_entropy_identity_joint_with_faults(
    seed: u64,
    faults: FaultInjection,
) -> PropertyResult {
    let (cases, worst, note) = identity_worst(seed, |oracle, strategy, perm| {
        Ok(eval::verify_entropy_identity_with_faults(oracle, strategy, perm, faults)?.residual)
    });
    PropertyResult::residual("trajectory entropy identity (joint form)", cases, worst, 1e-10, note)
}

/// Marginal-form trajectory entropy identity over the twenty triples.
pub fn check_entropy_identity_marginal(seed: u64) -> PropertyResult {
    check_entropy_identity_marginal_with_faults(seed, FaultInjection::default())
}

#[doc(hidden)]
pub fn check_entropy_identity_marginal_with_faults(
    seed: u64,
    faults: FaultInjection,
) -> PropertyResult {
    let (cases, worst, note) = identity_worst(seed, |oracle, strategy, perm| {
        Ok(
            eval::verify_marginal_entropy_identity_with_faults(oracle, strategy, perm, faults)?
                .residual,
        )
    });
    PropertyResult::residual(
        "trajectory entropy identity (marginal form)",
        cases,
        worst,
        1e-10,
        note,
    )
}

/// Density-route KL equals decomposition-route KL over the twenty triples.
pub fn check_two_route_agreement(seed: u64) -> PropertyResult {
    check_two_route_agreement_with_faults(seed, FaultInjection::default())
}

#[doc(hidden)]
pub fn check_two_route_agreement_with_faults(seed: u64, faults: FaultInjection) -> PropertyResult {
    let (cases, worst, note) = identity_worst(seed, |oracle, strategy, perm| {
        let density = eval::exact_kl_given_perm_with_faults(oracle, strategy, perm, faults)?;
        let decomposition =
            eval::exact_kl_decomposition_given_perm_with_faults(oracle, strategy, perm, faults)?;
        Ok((density - decomposition).abs())
    });
    PropertyResult::residual("two-route kl agreement", cases, worst, 1e-10, note)
}

/// Sequential decoding is exact: KL at most 1e-12 and exactly `L` iterations
/// for every suite distribution and ten seeded permutations each.
pub fn check_ar_zero_error(seed: u64) -> PropertyResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut t_violations = 0usize;
    for member in suite::builtin_suite() {
        let oracle = Oracle::new(member.dist.clone());
        let len = member.dist.seq_len();
        for _ in 0..10 {
            let perm = Permutation::uniform(len, &mut rng);
            let kl = eval::exact_kl_given_perm(&oracle, &Strategy::Ar, &perm).expect("ar replay");
            worst = worst.max(kl);
            for (idx, _) in member.dist.support() {
                let x = TokenSequence::new(member.dist.decode(idx), member.dist.vocab())
                    .expect("valid");
                let traj = replay_trajectory_with_faults(
                    &oracle,
                    &Strategy::Ar,
                    &perm,
                    &x,
                    FaultInjection::default(),
                )
                .expect("ar replay");
                if traj.iterations() != len {
                    t_violations += 1;
                }
            }
            cases += 1;
        }
    }
    let mut result = PropertyResult::residual(
        "sequential decoding has zero error",
        cases,
        worst,
        1e-12,
        format!("iteration-count violations: {t_violations}"),
    );
    result.pass = result.pass && t_violations == 0;
    result
}

/// One-shot KL equals the tail mutual-information sum of the permuted table.
pub fn check_one_shot_identity(seed: u64) -> PropertyResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for member in suite::builtin_suite() {
        let oracle = Oracle::new(member.dist.clone());
        let len = member.dist.seq_len();
        for _ in 0..3 {
            let perm = Permutation::uniform(len, &mut rng);
            let kl = eval::exact_kl_given_perm(&oracle, &Strategy::one_shot(), &perm)
                .expect("one-shot replay");
            let permuted = member.dist.permuted_probs(perm.order());
            let arities = vec![member.dist.vocab(); len];
            let tail_sum: f64 = if len >= 2 {
                info::mi_tail_decomposition(&permuted, &arities).iter().sum()
            } else {
                0.0
            };
            worst = worst.max((kl - tail_sum).abs());
            cases += 1;
        }
    }
    PropertyResult::residual("one-shot kl equals tail sum", cases, worst, 1e-10, String::new())
}

// ---------------------------------------------------------------------------
// Trajectory grid: envelopes, batch semantics, replay coherence.
// ---------------------------------------------------------------------------

struct TrajectoryCell {
    name: &'static str,
    dist: Arc<ExplicitJoint>,
    strategy: Strategy,
    runs: usize,
}

/// Sampling grid over `L` in {4, 8, 16} and every strategy kind. Partial
/// support tables only carry strategies whose batches never hold two
/// dependent fresh tokens, so the exact sampler stays well-defined.
fn trajectory_grid() -> Vec<TrajectoryCell> {
    let fair4 = suite::fair_product(4);
    let blocks = suite::correlated_blocks_l4();
    let half_det = suite::half_deterministic_product(4);
    let markov8 = suite::sticky_markov(8, 0.9).expect("static");
    let near16 = suite::near_deterministic(16, 0.05).expect("static");
    let near16_noisy = suite::near_deterministic(16, 0.2).expect("static");

    vec![
        TrajectoryCell {
            name: "fair4/sum0.05",
            dist: fair4.clone(),
            strategy: Strategy::EntropySum { eta: 0.05 },
            runs: 700,
        },
        TrajectoryCell {
            name: "fair4/sum1.0",
            dist: fair4.clone(),
            strategy: Strategy::EntropySum { eta: 1.0 },
            runs: 700,
        },
        TrajectoryCell {
            name: "fair4/max0.3x3",
            dist: fair4.clone(),
            strategy: Strategy::MaxEntropy { eta: 0.3, s_max: 3 },
            runs: 700,
        },
        TrajectoryCell {
            name: "fair4/uniform",
            dist: fair4.clone(),
            strategy: Strategy::Uniform { schedule: vec![2, 2] },
            runs: 600,
        },
        TrajectoryCell {
            name: "fair4/ar",
            dist: fair4,
            strategy: Strategy::Ar,
            runs: 600,
        },
        TrajectoryCell {
            name: "blocks/ar",
            dist: blocks.clone(),
            strategy: Strategy::Ar,
            runs: 600,
        },
        TrajectoryCell {
            name: "blocks/sum0.01",
            dist: blocks.clone(),
            strategy: Strategy::EntropySum { eta: 0.01 },
            runs: 700,
        },
        TrajectoryCell {
            name: "blocks/max0.3x2",
            dist: blocks.clone(),
            strategy: Strategy::MaxEntropy { eta: 0.3, s_max: 2 },
            runs: 700,
        },
        TrajectoryCell {
            name: "blocks/one_shot",
            dist: blocks,
            strategy: Strategy::one_shot(),
            runs: 600,
        },
        // Zero-threshold cell over a table with deterministic tokens: the
        // boundary case for the strict comparison.
        TrajectoryCell {
            name: "half_det/sum0.0",
            dist: half_det.clone(),
            strategy: Strategy::EntropySum { eta: 0.0 },
            runs: 700,
        },
        TrajectoryCell {
            name: "half_det/max0.0x4",
            dist: half_det,
            strategy: Strategy::MaxEntropy { eta: 0.0, s_max: 4 },
            runs: 700,
        },
        TrajectoryCell {
            name: "markov8/sum0.1",
            dist: markov8.clone(),
            strategy: Strategy::EntropySum { eta: 0.1 },
            runs: 700,
        },
        TrajectoryCell {
            name: "markov8/sum1.5",
            dist: markov8.clone(),
            strategy: Strategy::EntropySum { eta: 1.5 },
            runs: 700,
        },
        TrajectoryCell {
            name: "markov8/max0.4x3",
            dist: markov8.clone(),
            strategy: Strategy::MaxEntropy { eta: 0.4, s_max: 3 },
            runs: 700,
        },
        TrajectoryCell {
            name: "markov8/uniform",
            dist: markov8,
            strategy: Strategy::Uniform {
                schedule: vec![3, 3, 2],
            },
            runs: 600,
        },
        TrajectoryCell {
            name: "near16/sum0.05",
            dist: near16.clone(),
            strategy: Strategy::EntropySum { eta: 0.05 },
            runs: 500,
        },
        TrajectoryCell {
            name: "near16/sum0.5",
            dist: near16.clone(),
            strategy: Strategy::EntropySum { eta: 0.5 },
            runs: 500,
        },
        TrajectoryCell {
            name: "near16/max0.3x4",
            dist: near16,
            strategy: Strategy::MaxEntropy { eta: 0.3, s_max: 4 },
            runs: 500,
        },
        TrajectoryCell {
            name: "near16noisy/sum1.0",
            dist: near16_noisy.clone(),
            strategy: Strategy::EntropySum { eta: 1.0 },
            runs: 500,
        },
        TrajectoryCell {
            name: "near16noisy/uniform",
            dist: near16_noisy,
            strategy: Strategy::Uniform {
                schedule: vec![4, 4, 4, 4],
            },
            runs: 500,
        },
    ]
}

/// Envelope, batch-semantics, and replay-coherence results from one shared
/// pass over the sampled trajectory grid.
pub struct TrajectoryChecks {
    pub total_runs: usize,
    pub envelope: PropertyResult,
    pub batch_semantics: PropertyResult,
    pub replay_coherence: PropertyResult,
}

pub fn check_trajectories(seed: u64) -> TrajectoryChecks {
    check_trajectories_with_faults(seed, FaultInjection::default())
}

fn batch_semantics_violations(
    strategy: &Strategy,
    batches: &[Batch],
    seq_len: usize,
) -> Vec<String> {
    let mut problems = Vec::new();
    // Partition of all positions.
    let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.positions.clone()).collect();
    seen.sort_unstable();
    if seen != (0..seq_len).collect::<Vec<_>>() {
        problems.push("batches do not partition the positions".to_string());
    }
    if batches.len() > seq_len {
        problems.push("more iterations than positions".to_string());
    }
    for (t, batch) in batches.iter().enumerate() {
        let non_final = t + 1 < batches.len();
        let sum: f64 = batch.entropies.iter().sum();
        if (sum - batch.entropy_sum).abs() > 1e-12 {
            problems.push(format!("iteration {t}: entropy sum mismatch"));
        }
        if batch.is_empty() {
            problems.push(format!("iteration {t}: empty batch"));
            continue;
        }
        match strategy {
            Strategy::Ar => {
                if batch.len() != 1 {
                    problems.push(format!("iteration {t}: sequential batch of {}", batch.len()));
                }
            }
            Strategy::Uniform { schedule } => {
                if batch.len() != schedule[t] {
                    problems.push(format!(
                        "iteration {t}: size {} differs from schedule {}",
                        batch.len(),
                        schedule[t]
                    ));
                }
            }
            Strategy::EntropySum { eta } => {
                let last = *batch.entropies.last().expect("nonempty");
                if batch.entropy_sum - last > eta + 1e-12 {
                    problems.push(format!(
                        "iteration {t}: all-but-last entropy {} above threshold {eta}",
                        batch.entropy_sum - last
                    ));
                }
                if non_final && !(batch.entropy_sum > *eta) {
                    problems.push(format!(
                        "iteration {t}: non-final batch sum {} not strictly above {eta}",
                        batch.entropy_sum
                    ));
                }
            }
            Strategy::MaxEntropy { eta, s_max } => {
                if batch.len() > *s_max {
                    problems.push(format!("iteration {t}: size {} above cap", batch.len()));
                }
                let over: Vec<usize> = batch
                    .entropies
                    .iter()
                    .enumerate()
                    .filter(|(_, &h)| h > *eta)
                    .map(|(i, _)| i)
                    .collect();
                if over.len() > 1 {
                    problems.push(format!(
                        "iteration {t}: {} tokens above threshold",
                        over.len()
                    ));
                }
                if let Some(&at) = over.first() {
                    if at + 1 != batch.len() {
                        problems.push(format!(
                            "iteration {t}: above-threshold token not last"
                        ));
                    }
                }
                let last = *batch.entropies.last().expect("nonempty");
                if non_final && !(last > *eta) && batch.len() != *s_max {
                    problems.push(format!(
                        "iteration {t}: non-final batch ended without cause"
                    ));
                }
            }
        }
    }
    problems
}

#[doc(hidden)]
pub fn check_trajectories_with_faults(seed: u64, faults: FaultInjection) -> TrajectoryChecks {
    let cells = trajectory_grid();
    let per_cell: Vec<(usize, usize, usize, usize, String)> = cells
        .par_iter()
        .enumerate()
        .map(|(cell_idx, cell)| {
            let oracle = Oracle::new(cell.dist.clone());
            let len = cell.dist.seq_len();
            let crossing_cap = (len as f64).log2().floor() as usize + 1;
            let mut envelope_violations = 0;
            let mut semantics_violations = 0;
            let mut replay_mismatches = 0;
            let mut first_problem = String::new();
            for run in 0..cell.runs {
                let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (cell_idx as u64).wrapping_shl(32));
                rng.set_stream(run as u64);
                let perm = Permutation::uniform(len, &mut rng);
                let (x, traj) =
                    sample_trajectory_with_faults(&oracle, &cell.strategy, &perm, &mut rng, faults)
                        .expect("grid cells keep the sampler well-defined");
                if traj.crossings() > crossing_cap {
                    envelope_violations += 1;
                }
                let problems = batch_semantics_violations(&cell.strategy, traj.batches(), len);
                if !problems.is_empty() {
                    semantics_violations += problems.len();
                    if first_problem.is_empty() {
                        first_problem = format!("{}: {}", cell.name, problems[0]);
                    }
                }
                let replayed =
                    replay_trajectory_with_faults(&oracle, &cell.strategy, &perm, &x, faults)
                        .expect("replay of a sampled run");
                if replayed != traj {
                    replay_mismatches += 1;
                }
            }
            (
                cell.runs,
                envelope_violations,
                semantics_violations,
                replay_mismatches,
                first_problem,
            )
        })
        .collect();

    let total_runs: usize = per_cell.iter().map(|c| c.0).sum();
    let envelope_violations: usize = per_cell.iter().map(|c| c.1).sum();
    let semantics_violations: usize = per_cell.iter().map(|c| c.2).sum();
    let replay_mismatches: usize = per_cell.iter().map(|c| c.3).sum();
    let note = per_cell
        .iter()
        .map(|c| c.4.clone())
        .find(|s| !s.is_empty())
        .unwrap_or_default();

    TrajectoryChecks {
        total_runs,
        envelope: PropertyResult::violations(
            "envelope crossing cap",
            total_runs,
            envelope_violations,
            String::new(),
        ),
        batch_semantics: PropertyResult::violations(
            "batch stopping-rule semantics",
            total_runs,
            semantics_violations,
            note,
        ),
        replay_coherence: PropertyResult::violations(
            "replay reproduces recorded trajectories",
            total_runs,
            replay_mismatches,
            String::new(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Theorem-grade checks.
// ---------------------------------------------------------------------------

fn certification_grid() -> Vec<SuiteDist> {
    vec![
        SuiteDist {
            name: "product_fair_l4",
            dist: suite::fair_product(4),
            full_support: true,
        },
        SuiteDist {
            name: "blocks_correlated_l4",
            dist: suite::correlated_blocks_l4(),
            full_support: false,
        },
        SuiteDist {
            name: "markov_sticky09_l6",
            dist: suite::sticky_markov(6, 0.9).expect("static"),
            full_support: true,
        },
        SuiteDist {
            name: "near_det_l6_f005",
            dist: suite::near_deterministic(6, 0.05).expect("static"),
            full_support: true,
        },
    ]
}

fn bound_slack_result(
    name: &str,
    outcomes: Vec<(String, Result<crate::eval::EvalReport>)>,
) -> PropertyResult {
    let mut cases = 0;
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    let mut note = String::new();
    for (label, outcome) in outcomes {
        cases += 1;
        match outcome {
            Ok(report) => {
                for b in &report.bounds {
                    min_slack = min_slack.min(b.bound - b.value);
                }
            }
            Err(e) => {
                violations += 1;
                if note.is_empty() {
                    note = format!("{label}: {e}");
                }
            }
        }
    }
    if note.is_empty() && min_slack.is_finite() {
        note = format!("smallest bound slack {min_slack:.3e}");
    }
    PropertyResult::violations(name, cases, violations, note)
}

/// Entropy-sum rule certification across the grid and both accuracy targets.
pub fn check_theorem1_grid(caps: &Caps) -> PropertyResult {
    let grid = certification_grid();
    let outcomes: Vec<(String, Result<crate::eval::EvalReport>)> = grid
        .par_iter()
        .flat_map(|member| {
            [0.05f64, 0.2]
                .into_par_iter()
                .map(move |epsilon| {
                    let oracle = Oracle::new(member.dist.clone());
                    (
                        format!("{}@eps={epsilon}", member.name),
                        eval::check_theorem1(&oracle, epsilon, caps),
                    )
                })
        })
        .collect();
    bound_slack_result("entropy-sum rule certification", outcomes)
}

/// Max-entropy rule certification across the same grid.
pub fn check_theorem2_grid(caps: &Caps) -> PropertyResult {
    let grid = certification_grid();
    let outcomes: Vec<(String, Result<crate::eval::EvalReport>)> = grid
        .par_iter()
        .flat_map(|member| {
            [0.05f64, 0.2]
                .into_par_iter()
                .map(move |epsilon| {
                    let oracle = Oracle::new(member.dist.clone());
                    (
                        format!("{}@eps={epsilon}", member.name),
                        eval::check_theorem2(&oracle, epsilon, caps),
                    )
                })
        })
        .collect();
    bound_slack_result("max-entropy rule certification", outcomes)
}

fn any_parameter_dists(seed: u64) -> Vec<(String, Arc<ExplicitJoint>)> {
    vec![
        (
            "dirichlet_l4".into(),
            Arc::new(
                ExplicitJoint::random_dirichlet(4, 2, 0.8, seed.wrapping_add(31), &Caps::default())
                    .expect("within caps"),
            ),
        ),
        (
            "markov_l5".into(),
            suite::sticky_markov(5, 0.85).expect("static"),
        ),
        (
            "near_det_l6".into(),
            suite::near_deterministic(6, 0.03).expect("static"),
        ),
    ]
}

/// Envelope KL bound `E[KL] <= 4 eta (log2 L + 1)` at arbitrary thresholds.
pub fn check_kl_envelope_any_eta(seed: u64, caps: &Caps) -> PropertyResult {
    let dists = any_parameter_dists(seed);
    let etas = [0.05f64, 0.2, 0.7, 1.5];
    let mut cases = 0;
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for (_, dist) in &dists {
        let oracle = Oracle::new(dist.clone());
        let log_term = eval::log2_len_plus_one(dist.seq_len());
        for &eta in &etas {
            let (kl, _) = eval::exact_kl_expected(
                &oracle,
                &Strategy::EntropySum { eta },
                PermMode::Enumerate,
                caps,
            )
            .expect("within caps");
            let bound = 4.0 * eta * log_term;
            if kl > bound {
                violations += 1;
            }
            min_slack = min_slack.min(bound - kl);
            cases += 1;
        }
    }
    PropertyResult::violations(
        "envelope kl bound at any threshold",
        cases,
        violations,
        format!("smallest slack {min_slack:.3e}"),
    )
}

/// Iteration bound `E[T] <= H/eta + 4 (log2 L + 1) + 1` at arbitrary
/// positive thresholds.
pub fn check_iterations_any_eta(seed: u64, caps: &Caps) -> PropertyResult {
    let dists = any_parameter_dists(seed);
    let etas = [0.05f64, 0.2, 0.7, 1.5];
    let mut cases = 0;
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for (_, dist) in &dists {
        let oracle = Oracle::new(dist.clone());
        let log_term = eval::log2_len_plus_one(dist.seq_len());
        let entropy = dist.entropy_nats();
        for &eta in &etas {
            let (iters, _) = eval::expected_iterations(
                &oracle,
                &Strategy::EntropySum { eta },
                PermMode::Enumerate,
                caps,
            )
            .expect("within caps");
            let bound = entropy / eta + 4.0 * log_term + 1.0;
            if iters > bound {
                violations += 1;
            }
            min_slack = min_slack.min(bound - iters);
            cases += 1;
        }
    }
    PropertyResult::violations(
        "entropy-sum iteration bound at any threshold",
        cases,
        violations,
        format!("smallest slack {min_slack:.3e}"),
    )
}

/// Max-entropy KL bound `E[KL] <= s_max eta` at arbitrary parameters.
pub fn check_smax_eta_any_params(seed: u64, caps: &Caps) -> PropertyResult {
    let dists = any_parameter_dists(seed);
    let params = [(0.1f64, 2usize), (0.4, 2), (0.8, 3)];
    let mut cases = 0;
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for (_, dist) in &dists {
        let oracle = Oracle::new(dist.clone());
        for &(eta, s_max) in &params {
            let (kl, _) = eval::exact_kl_expected(
                &oracle,
                &Strategy::MaxEntropy { eta, s_max },
                PermMode::Enumerate,
                caps,
            )
            .expect("within caps");
            let bound = s_max as f64 * eta;
            if kl > bound {
                violations += 1;
            }
            min_slack = min_slack.min(bound - kl);
            cases += 1;
        }
    }
    PropertyResult::violations(
        "max-entropy kl bound at any parameters",
        cases,
        violations,
        format!("smallest slack {min_slack:.3e}"),
    )
}

/// Monte Carlo estimates of KL and iteration count against enumerate-mode
/// exact values, three-standard-error criterion, pass when at least
/// `cases - 1` of the configurations agree.
pub fn check_mc_exact_consistency(seed: u64, n: usize, caps: &Caps) -> PropertyResult {
    let configs: Vec<(String, Arc<ExplicitJoint>, Strategy)> = vec![
        (
            "dirichlet_a/sum0.3".into(),
            Arc::new(
                ExplicitJoint::random_dirichlet(4, 2, 1.0, 101, &Caps::default()).expect("caps"),
            ),
            Strategy::EntropySum { eta: 0.3 },
        ),
        (
            "dirichlet_b/max0.35x2".into(),
            Arc::new(
                ExplicitJoint::random_dirichlet(4, 2, 0.7, 102, &Caps::default()).expect("caps"),
            ),
            Strategy::MaxEntropy {
                eta: 0.35,
                s_max: 2,
            },
        ),
        (
            "dirichlet_c/uniform22".into(),
            Arc::new(
                ExplicitJoint::random_dirichlet(4, 2, 1.3, 103, &Caps::default()).expect("caps"),
            ),
            Strategy::Uniform {
                schedule: vec![2, 2],
            },
        ),
        (
            "markov_l5/sum0.5".into(),
            suite::sticky_markov(5, 0.9).expect("static"),
            Strategy::EntropySum { eta: 0.5 },
        ),
        (
            "blocks/sum0.01".into(),
            suite::correlated_blocks_l4(),
            Strategy::EntropySum { eta: 0.01 },
        ),
    ];
    let outcomes: Vec<(String, bool)> = configs
        .par_iter()
        .enumerate()
        .map(|(i, (name, dist, strategy))| {
            let oracle = Oracle::new(dist.clone());
            let config_seed = seed.wrapping_add(i as u64);
            let (kl_exact, _) =
                eval::exact_kl_expected(&oracle, strategy, PermMode::Enumerate, caps)
                    .expect("within caps");
            let (kl_mc, kl_se) = eval::exact_kl_expected(
                &oracle,
                strategy,
                PermMode::Sample {
                    n,
                    seed: config_seed,
                },
                caps,
            )
            .expect("mc");
            let (t_exact, _) =
                eval::expected_iterations(&oracle, strategy, PermMode::Enumerate, caps)
                    .expect("within caps");
            let (t_mc, t_se) = eval::expected_iterations(
                &oracle,
                strategy,
                PermMode::Sample {
                    n,
                    seed: config_seed ^ 0x5bd1_e995,
                },
                caps,
            )
            .expect("mc");
            let kl_ok = (kl_mc - kl_exact).abs() <= 3.0 * kl_se + 1e-12;
            let t_ok = (t_mc - t_exact).abs() <= 3.0 * t_se + 1e-12;
            (name.clone(), kl_ok && t_ok)
        })
        .collect();
    let agreeing = outcomes.iter().filter(|(_, ok)| *ok).count();
    let cases = outcomes.len();
    let disagreeing: Vec<String> = outcomes
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name.clone())
        .collect();
    PropertyResult {
        name: "mc agrees with exact within 3 stderr".into(),
        cases,
        worst: (cases - agreeing) as f64,
        tolerance: 1.0,
        pass: agreeing + 1 >= cases,
        note: if disagreeing.is_empty() {
            format!("{agreeing}/{cases} configurations agree")
        } else {
            format!("disagreeing: {}", disagreeing.join(", "))
        },
    }
}

// ---------------------------------------------------------------------------
// Suite runner.
// ---------------------------------------------------------------------------

/// Runs the requested property groups. Group order is fixed; every group is
/// deterministic given `seed`.
pub fn run_suite(suite: Suite, seed: u64, caps: &Caps) -> Vec<PropertyResult> {
    let mut results = Vec::new();
    if suite != Suite::Theorems {
        results.push(check_kl_tail_identity(seed, 100));
        results.push(check_leave_one_out_bound(seed.wrapping_add(1), 100));
        results.push(check_pointwise_chain_rule(seed.wrapping_add(2), 50));
        results.push(check_mi_entropy_bound(seed.wrapping_add(3), 40));
        results.push(check_entropy_identity_joint(seed.wrapping_add(4)));
        results.push(check_entropy_identity_marginal(seed.wrapping_add(4)));
        results.push(check_two_route_agreement(seed.wrapping_add(4)));
        results.push(check_ar_zero_error(seed.wrapping_add(5)));
        results.push(check_one_shot_identity(seed.wrapping_add(6)));
        let trajectories = check_trajectories(seed.wrapping_add(7));
        results.push(trajectories.envelope);
        results.push(trajectories.batch_semantics);
        results.push(trajectories.replay_coherence);
    }
    if suite != Suite::Lemmas {
        results.push(check_theorem1_grid(caps));
        results.push(check_theorem2_grid(caps));
        results.push(check_kl_envelope_any_eta(seed.wrapping_add(8), caps));
        results.push(check_iterations_any_eta(seed.wrapping_add(8), caps));
        results.push(check_smax_eta_any_params(seed.wrapping_add(9), caps));
        results.push(check_mc_exact_consistency(seed.wrapping_add(10), 4000, caps));
    }
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_triples_are_twenty_small_binary() {
        let triples = identity_triples(0);
        assert_eq!(triples.len(), 20);
        for t in &triples {
            assert!(t.dist.seq_len() <= 6, "{}", t.name);
            assert_eq!(t.dist.vocab(), 2, "{}", t.name);
            assert!(t.strategy.validate(t.dist.seq_len()).is_ok(), "{}", t.name);
        }
    }

    #[test]
    fn trajectory_grid_covers_lengths_and_strategies() {
        let cells = trajectory_grid();
        let total: usize = cells.iter().map(|c| c.runs).sum();
        assert!(total >= 10_000, "grid only has {total} runs");
        let lens: std::collections::BTreeSet<usize> =
            cells.iter().map(|c| c.dist.seq_len()).collect();
        assert!(lens.contains(&4) && lens.contains(&8) && lens.contains(&16));
        let kinds: std::collections::BTreeSet<&str> =
            cells.iter().map(|c| c.strategy.name()).collect();
        assert_eq!(kinds.len(), 4);
    }

    #[test]
    fn small_battery_passes() {
        // Cut-down versions of the heavy groups; the full battery runs in the
        // acceptance tests.
        assert!(check_kl_tail_identity(1, 20).pass);
        assert!(check_leave_one_out_bound(2, 20).pass);
        assert!(check_mi_entropy_bound(3, 8).pass);
    }

    #[test]
    fn flipped_comparison_is_detected() {
        let faults = FaultInjection {
            flip_threshold_comparison: true,
            unfreeze_context: false,
        };
        let checks = check_trajectories_with_faults(40, faults);
        assert!(
            !checks.batch_semantics.pass,
            "flipped comparison slipped through: {:?}",
            checks.batch_semantics
        );
    }

    #[test]
    fn unfrozen_context_is_detected() {
        let faults = FaultInjection {
            flip_threshold_comparison: false,
            unfreeze_context: true,
        };
        let joint = check_entropy_identity_joint_with_faults(41, faults);
        let two_route = check_two_route_agreement_with_faults(41, faults);
        assert!(
            !joint.pass || !two_route.pass,
            "unfrozen context slipped through: {joint:?} {two_route:?}"
        );
    }
}
