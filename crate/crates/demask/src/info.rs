//! Entropy, KL divergence, and mutual information in natural-log units,
//! plus the pointwise conditional variants evaluated at a realized context.
//!
//! Exact identities produce round-off of order 1e-15; any KL result in
//! `(-1e-12, 0)` is clamped to zero. The unclamped value is kept for the
//! debug assertions inside this module.

use crate::dist::PartialAssignment;
use crate::error::{Error, Result};
use crate::oracle::Oracle;

/// Natural-log units. Entropy of a `K`-outcome distribution lies in
/// `[0, ln K]`; KL values are nonnegative after round-off clamping.
pub type Nats = f64;

/// Round-off slack allowed below zero before clamping a KL value.
pub const KL_ROUNDOFF: f64 = 1e-12;

fn clamp_kl(raw: f64) -> Nats {
    debug_assert!(
        raw > -1e-9,
        "kl came out materially negative: {raw}"
    );
    if raw < 0.0 {
        0.0
    } else {
        raw
    }
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> Nats {
    let h: f64 = probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum();
    h.max(0.0)
}

pub(crate) fn kl_unclamped(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "kl over {} vs {} outcomes",
            p.len(),
            q.len()
        )));
    }
    let mut acc = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "outcome {index}: p = {pi:e} but q = 0"
                )));
            }
            acc += pi * (pi / qi).ln();
        }
    }
    Ok(acc)
}

/// `sum p ln(p/q)`; terms with `p = 0` contribute nothing. Errors with
/// [`Error::SupportViolation`] when `p` puts mass outside the support of `q`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<Nats> {
    Ok(clamp_kl(kl_unclamped(p, q)?))
}

fn check_arities(joint: &[f64], arities: &[usize]) {
    let expect: usize = arities.iter().product();
    assert_eq!(
        joint.len(),
        expect,
        "joint table length {} does not match arities {:?}",
        joint.len(),
        arities
    );
}

/// Marginal of one coordinate of a flattened joint (first coordinate most
/// significant).
pub fn coordinate_marginal(joint: &[f64], arities: &[usize], coord: usize) -> Vec<f64> {
    check_arities(joint, arities);
    let inner: usize = arities[coord + 1..].iter().product();
    let arity = arities[coord];
    let mut out = vec![0.0; arity];
    for (idx, &p) in joint.iter().enumerate() {
        out[(idx / inner) % arity] += p;
    }
    out
}

/// KL between a joint and the product of its own per-coordinate marginals.
/// The support condition holds automatically: each marginal dominates the
/// joint on its support.
pub fn kl_joint_vs_product(joint: &[f64], arities: &[usize]) -> Nats {
    check_arities(joint, arities);
    let marginals: Vec<Vec<f64>> = (0..arities.len())
        .map(|c| coordinate_marginal(joint, arities, c))
        .collect();
    let mut acc = 0.0;
    for (idx, &p) in joint.iter().enumerate() {
        if p > 0.0 {
            let mut rem = idx;
            let mut prod = 1.0;
            for c in (0..arities.len()).rev() {
                prod *= marginals[c][rem % arities[c]];
                rem /= arities[c];
            }
            acc += p * (p / prod).ln();
        }
    }
    clamp_kl(acc)
}

/// Mutual information of a two-block table flattened as `rows x cols`.
pub fn mi_two_blocks(table: &[f64], rows: usize, cols: usize) -> Nats {
    assert_eq!(table.len(), rows * cols);
    let mut row_marg = vec![0.0; rows];
    let mut col_marg = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let p = table[r * cols + c];
            row_marg[r] += p;
            col_marg[c] += p;
        }
    }
    let mut acc = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = table[r * cols + c];
            if p > 0.0 {
                acc += p * (p / (row_marg[r] * col_marg[c])).ln();
            }
        }
    }
    clamp_kl(acc)
}

/// Sums a flattened joint over its first coordinate.
fn sum_over_first(table: &[f64], first_arity: usize) -> Vec<f64> {
    let rest = table.len() / first_arity;
    let mut out = vec![0.0; rest];
    for (idx, &p) in table.iter().enumerate() {
        out[idx % rest] += p;
    }
    out
}

/// The `d - 1` terms `I(Z_i; Z_{i+1}, .., Z_d)` whose sum equals
/// [`kl_joint_vs_product`] exactly.
pub fn mi_tail_decomposition(joint: &[f64], arities: &[usize]) -> Vec<Nats> {
    check_arities(joint, arities);
    let d = arities.len();
    assert!(d >= 2, "need at least two coordinates");
    let mut terms = Vec::with_capacity(d - 1);
    let mut suffix = joint.to_vec();
    for i in 0..d - 1 {
        let rest: usize = arities[i + 1..].iter().product();
        terms.push(mi_two_blocks(&suffix, arities[i], rest));
        suffix = sum_over_first(&suffix, arities[i]);
    }
    terms
}

/// Re-lays a flattened joint as `(coord, rest)` with the chosen coordinate as
/// the row index and all remaining coordinates flattened in original order.
fn split_coordinate(joint: &[f64], arities: &[usize], coord: usize) -> Vec<f64> {
    let arity = arities[coord];
    let inner: usize = arities[coord + 1..].iter().product();
    let rest = joint.len() / arity;
    let mut out = vec![0.0; joint.len()];
    for (idx, &p) in joint.iter().enumerate() {
        let digit = (idx / inner) % arity;
        let outer = idx / (inner * arity);
        let rest_idx = outer * inner + idx % inner;
        out[digit * rest + rest_idx] = p;
    }
    out
}

/// The terms `I(Z_i; Z_{\i})` for every `i != excluded`, in ascending `i`.
/// Their sum upper-bounds [`kl_joint_vs_product`].
pub fn mi_leave_one_out(joint: &[f64], arities: &[usize], excluded: usize) -> Vec<Nats> {
    check_arities(joint, arities);
    let d = arities.len();
    assert!(d >= 2, "need at least two coordinates");
    assert!(excluded < d, "excluded coordinate out of range");
    (0..d)
        .filter(|&i| i != excluded)
        .map(|i| {
            let table = split_coordinate(joint, arities, i);
            mi_two_blocks(&table, arities[i], joint.len() / arities[i])
        })
        .collect()
}

/// Merges two strictly ascending disjoint position lists.
fn merge_positions(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let mut merged = Vec::with_capacity(a.len() + b.len());
    merged.extend_from_slice(a);
    merged.extend_from_slice(b);
    merged.sort_unstable();
    for w in merged.windows(2) {
        if w[0] == w[1] {
            return Err(Error::InvalidArgument(format!(
                "position sets overlap at {}",
                w[0]
            )));
        }
    }
    Ok(merged)
}

/// Pointwise conditional mutual information
/// `KL( p(A, B | ctx) || p(A | ctx) p(B | ctx) )` evaluated at the realized
/// context, from one oracle joint query.
pub fn pointwise_mi(
    oracle: &Oracle,
    a: &[usize],
    b: &[usize],
    context: &PartialAssignment,
) -> Result<Nats> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "pointwise mi needs two nonempty position sets".into(),
        ));
    }
    let union = merge_positions(a, b)?;
    let joint = oracle.conditional_joint(&union, context)?;
    let vocab = oracle.dist().vocab();

    // Split each union outcome into its (a, b) sub-indices.
    let a_len = vocab.pow(a.len() as u32);
    let b_len = vocab.pow(b.len() as u32);
    let mut pa = vec![0.0; a_len];
    let mut pb = vec![0.0; b_len];
    let mut cells = Vec::with_capacity(joint.len());
    for (idx, &p) in joint.probs().iter().enumerate() {
        let mut rem = idx;
        let mut digits = vec![0usize; union.len()];
        for d in (0..union.len()).rev() {
            digits[d] = rem % vocab;
            rem /= vocab;
        }
        let mut ai = 0;
        for &pos in a {
            let d = union.iter().position(|&u| u == pos).unwrap();
            ai = ai * vocab + digits[d];
        }
        let mut bi = 0;
        for &pos in b {
            let d = union.iter().position(|&u| u == pos).unwrap();
            bi = bi * vocab + digits[d];
        }
        pa[ai] += p;
        pb[bi] += p;
        cells.push((ai, bi, p));
    }
    let mut acc = 0.0;
    for (ai, bi, p) in cells {
        if p > 0.0 {
            acc += p * (p / (pa[ai] * pb[bi])).ln();
        }
    }
    Ok(clamp_kl(acc))
}
