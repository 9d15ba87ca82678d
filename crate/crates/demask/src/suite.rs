//! Built-in distribution suite: small exactly-representable joints covering
//! the regimes the verification battery needs (independence, hard pairwise
//! correlation, chain structure, low entropy, dense random tables).

use std::sync::Arc;

use crate::caps::Caps;
use crate::dist::ExplicitJoint;
use crate::error::Result;
use crate::oracle::CategoricalDist;

#[derive(Debug, Clone)]
pub struct SuiteDist {
    pub name: &'static str,
    pub dist: Arc<ExplicitJoint>,
    /// Whether every table entry is strictly positive. Partial-support tables
    /// keep the exact sampler well-defined only for strategies that never
    /// batch two dependent fresh tokens, so aggressive batch strategies are
    /// exercised on full-support members.
    pub full_support: bool,
}

/// Two perfectly correlated fair bits.
pub fn correlated_pair() -> Arc<ExplicitJoint> {
    Arc::new(
        ExplicitJoint::from_weights(2, 2, vec![1.0, 0.0, 0.0, 1.0], &Caps::default())
            .expect("static table"),
    )
}

/// Two independent perfectly correlated fair pairs over four positions:
/// positions (0,1) copy each other and so do (2,3).
pub fn correlated_blocks_l4() -> Arc<ExplicitJoint> {
    let mut weights = vec![0.0; 16];
    for a in [0usize, 1] {
        for b in [0usize, 1] {
            weights[a * 8 + a * 4 + b * 2 + b] = 1.0;
        }
    }
    Arc::new(ExplicitJoint::from_weights(4, 2, weights, &Caps::default()).expect("static table"))
}

/// `len` independent fair bits.
pub fn fair_product(len: usize) -> Arc<ExplicitJoint> {
    let fair = CategoricalDist::new(vec![0.5, 0.5]).expect("fair coin");
    let marginals = vec![fair; len];
    Arc::new(ExplicitJoint::product(&marginals, &Caps::default()).expect("product"))
}

/// Sticky binary chain: stays in its state with probability `stay`.
pub fn sticky_markov(len: usize, stay: f64) -> Result<Arc<ExplicitJoint>> {
    let init = CategoricalDist::new(vec![0.5, 0.5])?;
    let rows = vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]];
    Ok(Arc::new(ExplicitJoint::markov_chain(
        &init,
        &rows,
        len,
        &Caps::default(),
    )?))
}

/// All-zeros template with independent per-token flips.
pub fn near_deterministic(len: usize, flip_prob: f64) -> Result<Arc<ExplicitJoint>> {
    Ok(Arc::new(ExplicitJoint::near_deterministic(
        &vec![0; len],
        flip_prob,
        &Caps::default(),
    )?))
}

/// Product of alternating point-mass and fair-coin marginals; half the
/// tokens are fully deterministic. Exercises zero-entropy batching.
pub fn half_deterministic_product(len: usize) -> Arc<ExplicitJoint> {
    let point = CategoricalDist::new(vec![1.0, 0.0]).expect("point mass");
    let fair = CategoricalDist::new(vec![0.5, 0.5]).expect("fair coin");
    let marginals: Vec<CategoricalDist> = (0..len)
        .map(|i| if i % 2 == 0 { point.clone() } else { fair.clone() })
        .collect();
    Arc::new(ExplicitJoint::product(&marginals, &Caps::default()).expect("product"))
}

/// The distributions every suite-wide property is checked on.
pub fn builtin_suite() -> Vec<SuiteDist> {
    vec![
        SuiteDist {
            name: "pair_correlated",
            dist: correlated_pair(),
            full_support: false,
        },
        SuiteDist {
            name: "product_fair_l4",
            dist: fair_product(4),
            full_support: true,
        },
        SuiteDist {
            name: "blocks_correlated_l4",
            dist: correlated_blocks_l4(),
            full_support: false,
        },
        SuiteDist {
            name: "markov_sticky09_l6",
            dist: sticky_markov(6, 0.9).expect("static table"),
            full_support: true,
        },
        SuiteDist {
            name: "near_det_l6_f005",
            dist: near_deterministic(6, 0.05).expect("static table"),
            full_support: true,
        },
        SuiteDist {
            name: "dirichlet_l3_v3",
            dist: Arc::new(
                ExplicitJoint::random_dirichlet(3, 3, 1.0, 11, &Caps::default())
                    .expect("static table"),
            ),
            full_support: true,
        },
        SuiteDist {
            name: "point_mass_l3",
            dist: Arc::new(
                ExplicitJoint::near_deterministic(&[0, 1, 0], 0.0, &Caps::default())
                    .expect("static table"),
            ),
            full_support: false,
        },
    ]
}
