//! Subcommand bodies. Each writes its files into an output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;

use robai::bounds::{
    eocp_regret_bound, eocpug_regret_bound, kl_eocp_regret_bound, regret_lower_bound,
    scc_lower_bound, scc_ug_bound, BoundReport, StoppingMode,
};
use robai::sim::{
    default_checkpoints, mc_concentration, run_batch, AggregateStats, BatchOptions, ConcLemma,
    ConcParams, ConcResult,
};
use robai::{Policy, RewardFamily};

use crate::config::{BoundsConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const REGRET_DEFINITION: &str = "pseudo-regret";

/// Fixed-width scientific notation, 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
    pub horizon: Option<u64>,
    pub threads: usize,
}

#[derive(Debug, Serialize)]
struct PolicyMeta {
    name: String,
    algorithm: String,
    exploration_rate: Option<f64>,
    stop_time: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    schema_version: u32,
    artifact_version: &'static str,
    regret_definition: &'static str,
    config: &'a ExperimentConfig,
    checkpoints: &'a [u64],
    policies: Vec<PolicyMeta>,
}

/// Apply overrides, validate, simulate and write regret.csv, commit.csv and
/// meta.json. Returns the aggregate for callers that inspect it.
pub fn cmd_run(
    config: &ExperimentConfig,
    out: &Path,
    overrides: &RunOverrides,
) -> CliResult<AggregateStats> {
    let mut config = config.clone();
    if let Some(s) = overrides.seed {
        config.master_seed = s;
    }
    if let Some(n) = overrides.iterations {
        config.iterations = n;
    }
    if let Some(t) = overrides.horizon {
        config.horizon = t;
    }
    config.validate()?;
    let instance = config.instance()?;
    let checkpoints = default_checkpoints(instance.num_arms(), config.horizon, config.checkpoints);
    let options = BatchOptions {
        paired: config.paired_streams,
        threads: overrides.threads,
    };
    let stats = run_batch(
        &config.policies,
        &instance,
        config.horizon,
        config.iterations,
        &checkpoints,
        config.master_seed,
        options,
    )?;

    prepare_dir(out)?;
    let regret_rows = stats.policies.iter().flat_map(|p| {
        stats.checkpoints.iter().enumerate().map(move |(i, t)| {
            vec![
                p.policy.clone(),
                t.to_string(),
                fmt_float(p.mean_regret[i]),
                fmt_float(p.stderr[i]),
                p.iterations.to_string(),
            ]
        })
    });
    write_csv(
        &out.join("regret.csv"),
        &[
            "policy",
            "checkpoint_t",
            "mean_regret",
            "stderr",
            "iterations",
        ],
        regret_rows,
    )?;
    let commit_rows = stats.policies.iter().map(|p| {
        vec![
            p.policy.clone(),
            fmt_float(p.tc_mean),
            fmt_float(p.tc_median),
            fmt_float(p.tc_p95),
            fmt_float(p.miscommit_rate),
            fmt_float(p.miscommit_stderr),
        ]
    });
    write_csv(
        &out.join("commit.csv"),
        &[
            "policy",
            "mean_tc",
            "median_tc",
            "p95_tc",
            "miscommit_rate",
            "miscommit_stderr",
        ],
        commit_rows,
    )?;

    let policies = config
        .policies
        .iter()
        .map(|spec| {
            let p = Policy::new(
                spec.clone(),
                config.family,
                instance.num_arms(),
                config.horizon,
            )?;
            Ok(PolicyMeta {
                name: spec.name().to_string(),
                algorithm: spec.algorithm.tag().to_string(),
                exploration_rate: p.exploration_rate(),
                stop_time: p.stop_time(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let meta = Meta {
        schema_version: SCHEMA_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION"),
        regret_definition: REGRET_DEFINITION,
        config: &config,
        checkpoints: &stats.checkpoints,
        policies,
    };
    let path = out.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).map_err(|e| CliError::io(&path, e))?;
    std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(stats)
}

/// Every applicable bound at horizon `t`.
pub fn bound_rows(config: &ExperimentConfig, t: u64, c: f64) -> CliResult<Vec<BoundReport>> {
    let instance = config.instance()?;
    let gaps = instance.suboptimal_gaps();
    let mut rows = Vec::new();
    if let Some(min_gap) = instance.min_gap() {
        if config.family == RewardFamily::GaussianUnitVariance {
            rows.push(eocp_regret_bound(t, &gaps)?);
            rows.push(eocpug_regret_bound(t, &gaps)?);
            rows.push(scc_ug_bound(t, &gaps, instance.num_arms())?);
            rows.push(scc_lower_bound(t, min_gap, StoppingMode::PreDetermined)?);
            rows.push(scc_lower_bound(t, min_gap, StoppingMode::Adaptive { c })?);
        }
        rows.push(kl_eocp_regret_bound(t, &instance)?);
    }
    rows.push(regret_lower_bound(t, &instance)?);
    Ok(rows)
}

pub fn cmd_bounds(config: &ExperimentConfig, out: &Path) -> CliResult<Vec<(u64, BoundReport)>> {
    config.validate()?;
    let section = config.bounds.clone().unwrap_or(BoundsConfig {
        t_grid: Vec::new(),
        c: 0.5,
    });
    let grid = if section.t_grid.is_empty() {
        vec![config.horizon]
    } else {
        section.t_grid.clone()
    };
    // Row order: bound-major, horizons ascending within a bound.
    let mut table: Vec<(u64, BoundReport)> = Vec::new();
    for &t in &grid {
        for r in bound_rows(config, t, section.c)? {
            table.push((t, r));
        }
    }
    let order: Vec<&str> = bound_rows(config, grid[0], section.c)?
        .iter()
        .map(|r| r.name)
        .collect();
    table.sort_by_key(|(t, r)| (order.iter().position(|n| *n == r.name), *t));

    prepare_dir(out)?;
    let rows = table.iter().map(|(t, r)| {
        vec![
            r.name.to_string(),
            t.to_string(),
            fmt_float(r.value),
            r.valid.to_string(),
            r.residual.label().to_string(),
            r.params_string(),
        ]
    });
    write_csv(
        &out.join("bounds.csv"),
        &["bound", "t", "value", "valid", "residual", "params"],
        rows,
    )?;
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct ConcRequest {
    pub lemma: String,
    pub params: ConcParams,
    pub family: RewardFamily,
    pub trials: u64,
    pub seed: u64,
}

pub fn cmd_conc_check(req: &ConcRequest, out: &Path) -> CliResult<ConcResult> {
    let lemma: ConcLemma = req.lemma.parse()?;
    if req.trials == 0 {
        return Err(CliError::Invalid("trials: must be at least 1".into()));
    }
    let result = mc_concentration(lemma, req.params, req.family, req.trials, req.seed)?;
    let p = &req.params;
    let mut params = format!("l={};T1={};T2={}", p.l, p.t1, p.t2);
    match lemma {
        ConcLemma::L3b | ConcLemma::L3c => params += &format!(";delta={}", p.delta),
        ConcLemma::L5 => params += &format!(";family={};mean={}", req.family.tag(), p.mean),
        ConcLemma::L3a => {}
    }
    params += &format!(";trials={};seed={}", req.trials, req.seed);
    prepare_dir(out)?;
    write_csv(
        &out.join("conc.csv"),
        &[
            "lemma",
            "params",
            "empirical",
            "stderr",
            "analytic",
            "dominated",
        ],
        [vec![
            lemma.tag().to_string(),
            params,
            fmt_float(result.empirical),
            fmt_float(result.stderr),
            fmt_float(result.analytic),
            result.dominated().to_string(),
        ]],
    )?;
    Ok(result)
}

/// Resolve a config path: checked-in configs may be named without a path.
pub fn resolve_config(arg: &Path) -> PathBuf {
    if arg.exists() {
        return arg.to_path_buf();
    }
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(arg)
        .with_extension("toml");
    if bundled.exists() {
        bundled
    } else {
        arg.to_path_buf()
    }
}
