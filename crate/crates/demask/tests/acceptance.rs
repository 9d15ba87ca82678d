//! Acceptance suite: the thirteen exit criteria, one test per criterion,
//! each printing a pass/fail line with the measured values (visible under
//! `cargo test --test acceptance -- --nocapture`).

use std::sync::Arc;
use std::time::{Duration, Instant};

use demask::caps::Caps;
use demask::decode::{FaultInjection, Strategy};
use demask::dist::ExplicitJoint;
use demask::eval::{self, PermMode};
use demask::oracle::Oracle;
use demask::suite;
use demask::verify;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

#[test]
fn criterion_01_kl_mutual_information_decomposition() {
    let start = Instant::now();
    let identity = verify::check_kl_tail_identity(0xD1CE, 100);
    let bound = verify::check_leave_one_out_bound(0xD1CF, 100);
    let elapsed = start.elapsed();
    let pass = identity.pass && bound.pass && elapsed < Duration::from_secs(10);
    report(
        "01 (kl decomposition identity and leave-one-out bound)",
        pass,
        &format!(
            "identity worst {:.3e} over {} joints, bound worst {:.3e} over {} exclusions, {:.2?}",
            identity.worst, identity.cases, bound.worst, bound.cases, elapsed
        ),
    );
    assert!(identity.pass, "{identity:?}");
    assert!(bound.pass, "{bound:?}");
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:.2?}");
}

#[test]
fn criterion_02_pointwise_chain_rule() {
    let start = Instant::now();
    let result = verify::check_pointwise_chain_rule(0xCAB1, 50);
    let elapsed = start.elapsed();
    let pass = result.pass && elapsed < Duration::from_secs(30);
    report(
        "02 (pointwise mutual-information chain rule)",
        pass,
        &format!(
            "worst residual {:.3e} over {} contexts, {:.2?}",
            result.worst, result.cases, elapsed
        ),
    );
    assert!(result.pass, "{result:?}");
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:.2?}");
}

#[test]
fn criterion_03_entropy_identities_both_forms() {
    let joint = verify::check_entropy_identity_joint(0xE11D);
    let marginal = verify::check_entropy_identity_marginal(0xE11D);
    let pass = joint.pass && marginal.pass;
    report(
        "03 (trajectory entropy identities, both forms)",
        pass,
        &format!(
            "joint worst {:.3e}, marginal worst {:.3e} over {} triples",
            joint.worst, marginal.worst, joint.cases
        ),
    );
    assert!(joint.pass, "{joint:?}");
    assert!(marginal.pass, "{marginal:?}");
    assert_eq!(joint.cases, 20);
}

#[test]
fn criterion_04_two_route_kl_agreement() {
    let result = verify::check_two_route_agreement(0xE11D);
    report(
        "04 (density route vs decomposition route)",
        result.pass,
        &format!(
            "worst disagreement {:.3e} over {} triples",
            result.worst, result.cases
        ),
    );
    assert!(result.pass, "{result:?}");
    assert_eq!(result.cases, 20);
}

#[test]
fn criterion_05_sequential_zero_error() {
    let result = verify::check_ar_zero_error(0xA2);
    report(
        "05 (sequential decoding zero error, T = L)",
        result.pass,
        &format!(
            "worst kl {:.3e} over {} (distribution, permutation) pairs; {}",
            result.worst, result.cases, result.note
        ),
    );
    assert!(result.pass, "{result:?}");
}

#[test]
fn criterion_06_one_shot_tail_sum_identity() {
    let result = verify::check_one_shot_identity(0x15);
    report(
        "06 (one-shot kl equals tail mutual-information sum)",
        result.pass,
        &format!("worst residual {:.3e} over {} cases", result.worst, result.cases),
    );
    assert!(result.pass, "{result:?}");
}

#[test]
fn criterion_07_envelope_crossing_bound() {
    let checks = verify::check_trajectories(0xE57);
    let pass = checks.envelope.pass && checks.total_runs >= 10_000;
    report(
        "07 (dyadic envelope crossing cap)",
        pass,
        &format!(
            "{} violations over {} trajectories (L in {{4, 8, 16}})",
            checks.envelope.worst, checks.total_runs
        ),
    );
    assert!(checks.total_runs >= 10_000);
    assert!(checks.envelope.pass, "{:?}", checks.envelope);
}

#[test]
fn criterion_08_batch_semantics() {
    let checks = verify::check_trajectories(0xE58);
    let pass = checks.batch_semantics.pass && checks.total_runs >= 10_000;
    report(
        "08 (stopping-rule batch semantics)",
        pass,
        &format!(
            "{} violations over {} trajectories; {}",
            checks.batch_semantics.worst, checks.total_runs, checks.batch_semantics.note
        ),
    );
    assert!(checks.total_runs >= 10_000);
    assert!(checks.batch_semantics.pass, "{:?}", checks.batch_semantics);
}

#[test]
fn criterion_09_entropy_sum_rule_certification() {
    let start = Instant::now();
    let result = verify::check_theorem1_grid(&Caps::default());
    let elapsed = start.elapsed();
    let pass = result.pass && elapsed < Duration::from_secs(300);
    report(
        "09 (entropy-sum rule certification)",
        pass,
        &format!(
            "{} violations over {} grid cells; {}; {:.2?}",
            result.worst, result.cases, result.note, elapsed
        ),
    );
    assert!(result.pass, "{result:?}");
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:.2?}");
}

#[test]
fn criterion_10_max_entropy_rule_certification() {
    let result = verify::check_theorem2_grid(&Caps::default());
    report(
        "10 (max-entropy rule certification)",
        result.pass,
        &format!(
            "{} violations over {} grid cells; {}",
            result.worst, result.cases, result.note
        ),
    );
    assert!(result.pass, "{result:?}");
}

#[test]
fn criterion_11_mc_exact_consistency() {
    let result = verify::check_mc_exact_consistency(0x3C, 10_000, &Caps::default());
    report(
        "11 (monte carlo within 3 stderr of exact)",
        result.pass,
        &format!("{} over {} configurations", result.note, result.cases),
    );
    assert!(result.pass, "{result:?}");
}

/// Adaptivity demonstration as specified: the all-zeros-template table at
/// L = 12 with per-token flip probability 0.01, accuracy target 0.25, and
/// the entropy-sum threshold set by the certified rule.
///
/// The KL clause holds. The iteration clause cannot: the rule yields
/// eta = 0.25 / (4 (log2 12 + 1)) ~ 0.0136, below the per-token entropy
/// h(0.01) ~ 0.0560, and the tokens are independent, so every batch stops at
/// its first token and T = L = 12 on every run. The assertion is kept as
/// stated rather than weakened; see the failure message for the arithmetic.
#[test]
fn criterion_12_adaptivity_demonstration() {
    let start = Instant::now();
    let dist = suite::near_deterministic(12, 0.01).expect("within caps");
    let oracle = Oracle::new(dist);
    let caps = Caps::default();
    let epsilon = 0.25;
    let eta = epsilon / (4.0 * eval::log2_len_plus_one(12));
    let strategy = Strategy::EntropySum { eta };

    let (kl, kl_se) = eval::exact_kl_expected(
        &oracle,
        &strategy,
        PermMode::Sample { n: 1200, seed: 0xADA1 },
        &caps,
    )
    .expect("mc kl");
    let (iters, _) = eval::expected_iterations(
        &oracle,
        &strategy,
        PermMode::Sample { n: 2500, seed: 0xADA2 },
        &caps,
    )
    .expect("mc iterations");
    let elapsed = start.elapsed();

    let kl_ok = kl <= epsilon + 3.0 * kl_se;
    let iters_ok = iters < 12.0;
    report(
        "12 (adaptivity demonstration)",
        kl_ok && iters_ok && elapsed < Duration::from_secs(120),
        &format!(
            "kl {kl:.3e} (+- {kl_se:.1e}) vs epsilon {epsilon}; measured E[T] = {iters} vs L = 12; eta {eta:.6}; {elapsed:.2?}"
        ),
    );
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:.2?}");
    assert!(kl_ok, "kl {kl} above {epsilon} + 3 x {kl_se}");
    let per_token_entropy = -(0.01f64.ln() * 0.01 + 0.99f64.ln() * 0.99);
    assert!(
        iters_ok,
        "measured E[T] = {iters} is not strictly below L = 12: the rule sets eta = {eta:.6}, \
         below the per-token entropy h(0.01) = {per_token_entropy:.6}, and the tokens are \
         independent, so every batch stops at its first token and T = L deterministically; \
         no Monte Carlo run can bring E[T] under L at these parameters"
    );
}

#[test]
fn criterion_13_mutation_sensitivity() {
    let flip = FaultInjection {
        flip_threshold_comparison: true,
        unfreeze_context: false,
    };
    let unfreeze = FaultInjection {
        flip_threshold_comparison: false,
        unfreeze_context: true,
    };

    // Flipped strict comparison: criteria 3, 4, or 8 must notice.
    let flip_detected = !verify::check_trajectories_with_faults(0xF11, flip)
        .batch_semantics
        .pass
        || !verify::check_entropy_identity_joint_with_faults(0xF11, flip).pass
        || !verify::check_two_route_agreement_with_faults(0xF11, flip).pass;

    // Unfrozen within-iteration context: likewise.
    let unfreeze_detected = !verify::check_trajectories_with_faults(0xF12, unfreeze)
        .batch_semantics
        .pass
        || !verify::check_entropy_identity_joint_with_faults(0xF12, unfreeze).pass
        || !verify::check_two_route_agreement_with_faults(0xF12, unfreeze).pass;

    report(
        "13 (mutation sensitivity)",
        flip_detected && unfreeze_detected,
        &format!(
            "flipped comparison detected: {flip_detected}; unfrozen context detected: {unfreeze_detected}"
        ),
    );
    assert!(flip_detected, "flipping the strict comparison went unnoticed");
    assert!(unfreeze_detected, "unfreezing the context went unnoticed");
}

/// The spec example from the max-entropy certification at a length past the
/// default permutation cap; the cap is overridable, so the certification is
/// still exact.
#[test]
fn max_entropy_certification_l8_with_raised_cap() {
    let caps = Caps {
        max_table_entries: 1_000_000,
        max_perms: 40_320,
    };
    let dist: Arc<ExplicitJoint> = suite::near_deterministic(8, 0.05).expect("within caps");
    let oracle = Oracle::new(dist);
    let result = eval::check_theorem2(&oracle, 0.4, &caps).expect("bounds hold");
    assert!(result.pass);
    assert_eq!(result.perms_evaluated, 40_320);
}
