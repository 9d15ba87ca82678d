//! Experiment configuration: one versioned JSON document.
//!
//! Schema (version 1):
//!
//! ```json
//! {
//!   "schema": 1,
//!   "seed": 42,
//!   "distributions": [
//!     {"family": "explicit", "len": 2, "vocab": 2, "weights": [1, 0, 0, 1]},
//!     {"family": "product", "marginals": [[0.5, 0.5], [0.9, 0.1]]},
//!     {"family": "markov", "init": [0.5, 0.5],
//!      "transition": [[0.9, 0.1], [0.1, 0.9]], "len": 6},
//!     {"family": "near_deterministic", "template": [0, 0, 0], "flip_prob": 0.05},
//!     {"family": "dirichlet", "len": 3, "vocab": 2, "concentration": 1.0, "seed": 7}
//!   ],
//!   "strategies": [
//!     {"kind": "ar"},
//!     {"kind": "uniform", "schedule": [2, 2]},
//!     {"kind": "entropy_sum", "eta": 0.5},
//!     {"kind": "max_entropy", "eta": 0.4, "s_max": 2}
//!   ],
//!   "eval": {"mode": "exact", "n_perms": 10000, "n_samples": 10000, "epsilon": 0.12},
//!   "output": {"path": "results.csv", "format": "csv"},
//!   "caps": {"max_table_entries": 1000000, "max_perms": 5040}
//! }
//! ```
//!
//! `eval.epsilon` is optional; when present, both certified parameter rules
//! are additionally run per distribution. Unknown keys are rejected
//! everywhere. `caps` is optional and defaults to the library caps.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::caps::Caps;
use crate::decode::Strategy;
use crate::dist::ExplicitJoint;
use crate::error::{Error, Result};
use crate::eval::EvalMode;
use crate::oracle::CategoricalDist;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u64,
    pub seed: u64,
    pub distributions: Vec<DistributionSpec>,
    pub strategies: Vec<Strategy>,
    pub eval: EvalSettings,
    pub output: OutputSettings,
    #[serde(default)]
    pub caps: CapsSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Explicit {
        len: usize,
        vocab: usize,
        weights: Vec<f64>,
    },
    Product {
        marginals: Vec<Vec<f64>>,
    },
    Markov {
        init: Vec<f64>,
        transition: Vec<Vec<f64>>,
        len: usize,
    },
    NearDeterministic {
        template: Vec<usize>,
        flip_prob: f64,
    },
    Dirichlet {
        len: usize,
        vocab: usize,
        concentration: f64,
        seed: u64,
    },
}

impl DistributionSpec {
    pub fn family(&self) -> &'static str {
        match self {
            DistributionSpec::Explicit { .. } => "explicit",
            DistributionSpec::Product { .. } => "product",
            DistributionSpec::Markov { .. } => "markov",
            DistributionSpec::NearDeterministic { .. } => "near_deterministic",
            DistributionSpec::Dirichlet { .. } => "dirichlet",
        }
    }

    /// Sequence length implied by the parameters.
    pub fn seq_len(&self) -> usize {
        match self {
            DistributionSpec::Explicit { len, .. } => *len,
            DistributionSpec::Product { marginals } => marginals.len(),
            DistributionSpec::Markov { len, .. } => *len,
            DistributionSpec::NearDeterministic { template, .. } => template.len(),
            DistributionSpec::Dirichlet { len, .. } => *len,
        }
    }

    pub fn build(&self, caps: &Caps) -> Result<ExplicitJoint> {
        match self {
            DistributionSpec::Explicit { len, vocab, weights } => {
                ExplicitJoint::from_weights(*len, *vocab, weights.clone(), caps)
            }
            DistributionSpec::Product { marginals } => {
                let marginals = marginals
                    .iter()
                    .map(|m| CategoricalDist::new(m.clone()))
                    .collect::<Result<Vec<_>>>()?;
                ExplicitJoint::product(&marginals, caps)
            }
            DistributionSpec::Markov {
                init,
                transition,
                len,
            } => {
                let init = CategoricalDist::new(init.clone())?;
                ExplicitJoint::markov_chain(&init, transition, *len, caps)
            }
            DistributionSpec::NearDeterministic { template, flip_prob } => {
                ExplicitJoint::near_deterministic(template, *flip_prob, caps)
            }
            DistributionSpec::Dirichlet {
                len,
                vocab,
                concentration,
                seed,
            } => ExplicitJoint::random_dirichlet(*len, *vocab, *concentration, *seed, caps),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    pub mode: EvalMode,
    #[serde(default = "default_n")]
    pub n_perms: usize,
    #[serde(default = "default_n")]
    pub n_samples: usize,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

fn default_n() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!(
                "unknown output format {other:?}, expected csv|json"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    pub path: String,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsSettings {
    pub max_table_entries: Option<u64>,
    pub max_perms: Option<u64>,
}

impl CapsSettings {
    pub fn resolve(&self) -> Caps {
        let default = Caps::default();
        Caps {
            max_table_entries: self.max_table_entries.unwrap_or(default.max_table_entries),
            max_perms: self.max_perms.unwrap_or(default.max_perms),
        }
    }
}

/// Allowed keys per tagged object; serde cannot reject unknown keys inside
/// internally tagged enums, so the raw document is checked first.
const DISTRIBUTION_KEYS: &[(&str, &[&str])] = &[
    ("explicit", &["family", "len", "vocab", "weights"]),
    ("product", &["family", "marginals"]),
    ("markov", &["family", "init", "transition", "len"]),
    ("near_deterministic", &["family", "template", "flip_prob"]),
    ("dirichlet", &["family", "len", "vocab", "concentration", "seed"]),
];

const STRATEGY_KEYS: &[(&str, &[&str])] = &[
    ("ar", &["kind"]),
    ("uniform", &["kind", "schedule"]),
    ("entropy_sum", &["kind", "eta"]),
    ("max_entropy", &["kind", "eta", "s_max"]),
];

fn check_tagged_keys(
    items: &Value,
    field: &str,
    tag: &str,
    table: &[(&str, &[&str])],
) -> Result<()> {
    let Some(array) = items.as_array() else {
        return Err(Error::Config(format!("{field} must be an array")));
    };
    for (i, item) in array.iter().enumerate() {
        let Some(object) = item.as_object() else {
            return Err(Error::Config(format!("{field}[{i}] must be an object")));
        };
        let Some(name) = object.get(tag).and_then(Value::as_str) else {
            return Err(Error::Config(format!(
                "{field}[{i}] is missing the {tag:?} field"
            )));
        };
        let Some((_, allowed)) = table.iter().find(|(n, _)| *n == name) else {
            let known: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
            return Err(Error::Config(format!(
                "{field}[{i}]: unknown {tag} {name:?}, expected one of {known:?}"
            )));
        };
        for key in object.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "{field}[{i}]: unknown key {key:?} for {tag} {name:?}"
                )));
            }
        }
        for key in *allowed {
            if !object.contains_key(*key) {
                return Err(Error::Config(format!(
                    "{field}[{i}]: missing key {key:?} for {tag} {name:?}"
                )));
            }
        }
    }
    Ok(())
}

/// Parses and fully validates a configuration document. Every precondition
/// checkable from the document alone is checked here, so a malformed config
/// never starts an experiment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid json: {e}")))?;
    if let Some(object) = raw.as_object() {
        if let Some(dists) = object.get("distributions") {
            check_tagged_keys(dists, "distributions", "family", DISTRIBUTION_KEYS)?;
        }
        if let Some(strategies) = object.get("strategies") {
            check_tagged_keys(strategies, "strategies", "kind", STRATEGY_KEYS)?;
        }
    }
    let config: ExperimentConfig =
        serde_json::from_value(raw).map_err(|e| Error::Config(e.to_string()))?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &ExperimentConfig) -> Result<()> {
    if config.schema != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "schema: unsupported version {}, expected {SCHEMA_VERSION}",
            config.schema
        )));
    }
    if config.distributions.is_empty() {
        return Err(Error::Config("distributions: must be nonempty".into()));
    }
    if config.strategies.is_empty() {
        return Err(Error::Config("strategies: must be nonempty".into()));
    }
    if let Some(eps) = config.eval.epsilon {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!(
                "eval.epsilon: {eps} must be a positive real"
            )));
        }
    }
    if config.eval.mode == EvalMode::Mc && (config.eval.n_perms == 0 || config.eval.n_samples == 0)
    {
        return Err(Error::Config(
            "eval.n_perms and eval.n_samples must be positive in mc mode".into(),
        ));
    }
    for (j, dist) in config.distributions.iter().enumerate() {
        let len = dist.seq_len();
        for (i, strategy) in config.strategies.iter().enumerate() {
            strategy.validate(len).map_err(|e| {
                Error::Config(format!(
                    "strategies[{i}] incompatible with distributions[{j}] ({}, L={len}): {e}",
                    dist.family()
                ))
            })?;
        }
    }
    Ok(())
}

/// Family names and parameter schemas for the `families` listing.
pub fn family_listing() -> Vec<(&'static str, Vec<(&'static str, &'static str)>)> {
    vec![
        (
            "explicit",
            vec![
                ("len", "positive integer"),
                ("vocab", "integer >= 2"),
                ("weights", "array of vocab^len nonnegative reals"),
            ],
        ),
        (
            "product",
            vec![(
                "marginals",
                "array of len probability vectors, one per position",
            )],
        ),
        (
            "markov",
            vec![
                ("init", "probability vector over vocab states"),
                ("transition", "row-stochastic vocab x vocab matrix"),
                ("len", "positive integer"),
            ],
        ),
        (
            "near_deterministic",
            vec![
                ("template", "array of tokens in {0, 1}"),
                ("flip_prob", "real in [0, 0.5)"),
            ],
        ),
        (
            "dirichlet",
            vec![
                ("len", "positive integer"),
                ("vocab", "integer >= 2"),
                ("concentration", "positive real"),
                ("seed", "64-bit integer"),
            ],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config() -> String {
        r#"{
            "schema": 1,
            "seed": 7,
            "distributions": [
                {"family": "explicit", "len": 2, "vocab": 2, "weights": [1, 0, 0, 1]}
            ],
            "strategies": [{"kind": "ar"}],
            "eval": {"mode": "exact"},
            "output": {"path": "out.csv", "format": "csv"}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses() {
        let config = parse_config(&minimal_config()).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.distributions.len(), 1);
        assert_eq!(config.eval.n_perms, 1000);
        let caps = config.caps.resolve();
        assert_eq!(caps.max_perms, 5040);
    }

    #[test]
    fn rejects_unknown_top_level_key() {
        let bad = minimal_config().replace("\"seed\": 7,", "\"seed\": 7, \"extra\": 1,");
        let err = parse_config(&bad).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn rejects_unknown_strategy_key() {
        let bad =
            minimal_config().replace(r#"{"kind": "ar"}"#, r#"{"kind": "ar", "bogus": true}"#);
        let err = parse_config(&bad).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn rejects_unknown_family() {
        let bad = minimal_config().replace("\"family\": \"explicit\"", "\"family\": \"mystery\"");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.to_string().contains("mystery"), "{err}");
    }

    #[test]
    fn rejects_schedule_sum_mismatch_naming_the_field() {
        let bad = minimal_config().replace(
            r#"[{"kind": "ar"}]"#,
            r#"[{"kind": "uniform", "schedule": [2, 2]}]"#,
        );
        let err = parse_config(&bad).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("strategies[0]"), "{message}");
        assert!(message.contains("schedule"), "{message}");
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let bad = minimal_config().replace("\"schema\": 1", "\"schema\": 2");
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn builds_each_family() {
        let caps = Caps::default();
        let specs = vec![
            DistributionSpec::Explicit {
                len: 2,
                vocab: 2,
                weights: vec![1.0, 1.0, 1.0, 1.0],
            },
            DistributionSpec::Product {
                marginals: vec![vec![0.5, 0.5], vec![0.9, 0.1]],
            },
            DistributionSpec::Markov {
                init: vec![0.5, 0.5],
                transition: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
                len: 3,
            },
            DistributionSpec::NearDeterministic {
                template: vec![0, 1, 0],
                flip_prob: 0.05,
            },
            DistributionSpec::Dirichlet {
                len: 3,
                vocab: 2,
                concentration: 1.0,
                seed: 5,
            },
        ];
        for spec in specs {
            let dist = spec.build(&caps).unwrap();
            assert_eq!(dist.seq_len(), spec.seq_len(), "{}", spec.family());
            assert!(dist.normalization_residual() <= 1e-12);
        }
    }
}
