//! Experiment orchestration: expands a config into a grid of evaluation
//! cells, dispatches them to the worker pool, and writes CSV or JSON rows.
//! Cells are assembled in a fixed order (distribution index, then strategy
//! index, then certification rows), so output is independent of worker count.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::caps::Caps;
use crate::config::{self, ExperimentConfig, OutputFormat};
use crate::decode::Strategy;
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::oracle::Oracle;
use crate::verify::{PropertyResult, Suite};

/// Command-line overrides; every field beats its config counterpart.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub threads: Option<usize>,
    pub cap_seqs: Option<u64>,
    pub cap_perms: Option<u64>,
}

/// Exit code contract: 0 success, 1 verification or bound failure,
/// 2 configuration error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BoundViolated { .. } | Error::SupportViolation(_) | Error::ZeroContext { .. } => 1,
        _ => 2,
    }
}

pub fn install_thread_pool(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore the error when a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

#[derive(Debug, Clone, Serialize)]
struct Provenance {
    tool_version: &'static str,
    config_sha256: String,
    wall_clock_unix: u64,
}

/// One experiment run: provenance plus every evaluation row.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub schema: u64,
    provenance: Provenance,
    pub rows: Vec<EvalReport>,
}

enum Cell {
    Plain { dist: usize, strategy: usize },
    Theorem1 { dist: usize },
    Theorem2 { dist: usize },
}

/// Executes the grid described by a config file and writes the results.
pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<RunResult> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let config = config::parse_config(&text)?;
    install_thread_pool(overrides.threads);

    let seed = overrides.seed.unwrap_or(config.seed);
    let mut caps = config.caps.resolve();
    if let Some(cap) = overrides.cap_seqs {
        caps.max_table_entries = cap;
    }
    if let Some(cap) = overrides.cap_perms {
        caps.max_perms = cap;
    }

    let result = execute_grid(&config, seed, &caps, &text)?;

    let out_path = overrides
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.path));
    let format = overrides.format.unwrap_or(config.output.format);
    write_rows(&out_path, format, &result)?;
    println!(
        "wrote {} rows to {} ({})",
        result.rows.len(),
        out_path.display(),
        match format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    );
    Ok(result)
}

fn execute_grid(
    config: &ExperimentConfig,
    seed: u64,
    caps: &Caps,
    raw_text: &str,
) -> Result<RunResult> {
    let oracles: Vec<Arc<Oracle>> = config
        .distributions
        .iter()
        .map(|spec| Ok(Arc::new(Oracle::new(Arc::new(spec.build(caps)?)))))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for d in 0..config.distributions.len() {
        for s in 0..config.strategies.len() {
            cells.push(Cell::Plain { dist: d, strategy: s });
        }
    }
    if config.eval.epsilon.is_some() {
        for d in 0..config.distributions.len() {
            cells.push(Cell::Theorem1 { dist: d });
            cells.push(Cell::Theorem2 { dist: d });
        }
    }

    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(idx, cell)| {
            let cell_seed = seed.wrapping_add(idx as u64);
            match cell {
                Cell::Plain { dist, strategy } => {
                    let strategy: &Strategy = &config.strategies[*strategy];
                    eval::evaluate_strategy(
                        &oracles[*dist],
                        strategy,
                        config.eval.mode,
                        config.eval.n_perms,
                        config.eval.n_samples,
                        caps,
                        cell_seed,
                    )
                }
                Cell::Theorem1 { dist } => {
                    let epsilon = config.eval.epsilon.expect("cell exists only with epsilon");
                    let mut report = eval::check_theorem1(&oracles[*dist], epsilon, caps)?;
                    report.seed = cell_seed;
                    Ok(report)
                }
                Cell::Theorem2 { dist } => {
                    let epsilon = config.eval.epsilon.expect("cell exists only with epsilon");
                    let mut report = eval::check_theorem2(&oracles[*dist], epsilon, caps)?;
                    report.seed = cell_seed;
                    Ok(report)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut hasher = Sha256::new();
    hasher.update(raw_text.as_bytes());
    let digest = hasher.finalize();
    let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();

    Ok(RunResult {
        schema: config::SCHEMA_VERSION,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION"),
            config_sha256,
            wall_clock_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
        rows,
    })
}

/// Fixed CSV column set.
pub const CSV_COLUMNS: &[&str] = &[
    "strategy",
    "eta",
    "s_max",
    "L",
    "V",
    "H_nats",
    "epsilon",
    "kl",
    "kl_stderr",
    "e_iters",
    "e_iters_stderr",
    "bound_kl_theorem",
    "bound_kl_envelope",
    "bound_iters",
    "mode",
    "perms",
    "samples",
    "seed",
    "pass",
];

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serializes rows; CSV carries the fixed column set, JSON carries the full
/// reports plus provenance.
pub fn write_rows(path: &Path, format: OutputFormat, result: &RunResult) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)
                .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
            writer
                .write_record(CSV_COLUMNS)
                .map_err(|e| Error::Io(e.to_string()))?;
            for row in &result.rows {
                writer
                    .write_record(&[
                        row.strategy.clone(),
                        opt_f64(row.eta),
                        row.s_max.map(|v| v.to_string()).unwrap_or_default(),
                        row.seq_len.to_string(),
                        row.vocab.to_string(),
                        row.data_entropy_nats.to_string(),
                        opt_f64(row.epsilon),
                        row.kl_nats.to_string(),
                        row.kl_stderr.to_string(),
                        row.expected_iterations.to_string(),
                        row.iterations_stderr.to_string(),
                        opt_f64(row.kl_bound_theorem),
                        opt_f64(row.kl_bound_envelope),
                        opt_f64(row.iteration_bound),
                        row.mode.to_string(),
                        row.perms_evaluated.to_string(),
                        row.samples_drawn.to_string(),
                        row.seed.to_string(),
                        row.pass.to_string(),
                    ])
                    .map_err(|e| Error::Io(e.to_string()))?;
            }
            writer.flush().map_err(|e| Error::Io(e.to_string()))?;
        }
        OutputFormat::Json => {
            let text =
                serde_json::to_string_pretty(result).map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(path, text)
                .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    Ok(())
}

/// Runs a verification suite and prints one line per property group.
/// Returns the results; the caller decides the exit code.
pub fn cmd_verify(suite: Suite, seed: u64, threads: Option<usize>) -> Vec<PropertyResult> {
    install_thread_pool(threads);
    let caps = Caps::default();
    let results = crate::verify::run_suite(suite, seed, &caps);
    println!(
        "{:<46} {:>7} {:>12} {:>9}  {:<6} note",
        "property group", "cases", "worst", "tol", "status"
    );
    for r in &results {
        println!(
            "{:<46} {:>7} {:>12.3e} {:>9.0e}  {:<6} {}",
            r.name,
            r.cases,
            r.worst,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" },
            r.note
        );
    }
    let failed: Vec<&PropertyResult> = results.iter().filter(|r| !r.pass).collect();
    if failed.is_empty() {
        println!("all {} property groups pass", results.len());
    } else {
        eprintln!("FAILED: {}", failed[0].name);
    }
    results
}

/// Prints distribution family names and parameter schemas.
pub fn cmd_families(json: bool) -> Result<()> {
    let listing = config::family_listing();
    if json {
        #[derive(Serialize)]
        struct Entry {
            family: &'static str,
            params: std::collections::BTreeMap<&'static str, &'static str>,
        }
        let entries: Vec<Entry> = listing
            .into_iter()
            .map(|(family, params)| Entry {
                family,
                params: params.into_iter().collect(),
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&entries).map_err(|e| Error::Io(e.to_string()))?
        );
    } else {
        for (family, params) in listing {
            println!("{family}");
            for (key, desc) in params {
                println!("    {key}: {desc}");
            }
        }
    }
    Ok(())
}
