//! Command-line front end: run configs, ablation and stability sweeps, gap
//! studies, attribution queries and trace export.
//!
//! Subcommands: `train`, `eval`, `shap`, `gap`, `sweep`, `export`. Every run
//! directory holds the fully resolved config (`config.json`), the epoch
//! records (`records.csv`), the attribution trace (`attributions.jsonl`, SHAP
//! arms only) and the final checkpoint (`checkpoint.json`), so any result is
//! re-runnable from its own artifacts.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{apply_override, parse_config_str, Arm, RunConfig};
use crate::envs::lqr::optimality_gap;
use crate::envs::ControlEnv;
use crate::error::{Error, Result};
use crate::shap::{shapley_exact, shapley_sampled, ImputationMode, EXACT_SHAPLEY_MAX_DIM};
use crate::trainer::{
    derive_rng, evaluate, record_from_csv_row, record_to_csv_row, AttributionTraceRecord,
    Checkpoint, EnvKind, EpochRecord, Trainer, RECORDS_CSV_HEADER,
};

/// Schema version stamped into exported trace documents.
pub const EXPORT_SCHEMA_VERSION: u32 = 1;

/// Sweep axis: one config dimension crossed with the seed list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NoiseVar,
    ShapMode,
    Seed,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::NoiseVar => "noise_var",
            SweepAxis::ShapMode => "shap.mode",
            SweepAxis::Seed => "seed",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise_var" => Ok(SweepAxis::NoiseVar),
            "shap.mode" => Ok(SweepAxis::ShapMode),
            "seed" => Ok(SweepAxis::Seed),
            other => Err(Error::invalid(format!(
                "unknown sweep axis '{other}' (expected noise_var|shap.mode|seed)"
            ))),
        }
    }
}

/// A parsed, validated CLI invocation.
#[derive(Debug, Clone)]
pub enum CliCommand {
    Train {
        config: RunConfig,
        seeds: Vec<u64>,
        out: PathBuf,
    },
    Eval {
        run: PathBuf,
        episodes: Option<usize>,
        seed: u64,
    },
    Shap {
        run: PathBuf,
        state: Option<Vec<f64>>,
        mode: Option<Arm>,
        seed: u64,
    },
    Gap {
        run: PathBuf,
        rollouts: Option<usize>,
        horizon: Option<usize>,
        seed: u64,
    },
    Sweep {
        config: RunConfig,
        axis: SweepAxis,
        values: Vec<String>,
        seeds: Vec<u64>,
        out: PathBuf,
    },
    Export {
        run: PathBuf,
        out: Option<PathBuf>,
    },
}

fn default_out_root() -> PathBuf {
    std::env::var_os("RSA2C_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn parse_seed_list(value: &str) -> Result<Vec<u64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("bad seed '{s}'")))
        })
        .collect()
}

fn parse_state_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad state component '{s}'")))
        })
        .collect()
}

/// Parse and validate a full command line (without the binary name).
/// Config files and overrides are resolved here, so invalid configurations
/// are rejected before any compute starts.
pub fn parse_and_validate(argv: &[String]) -> Result<CliCommand> {
    let sub = argv
        .first()
        .ok_or_else(|| Error::invalid("missing subcommand (train|eval|shap|gap|sweep|export)"))?;

    let mut env_name: Option<String> = None;
    let mut config_path: Option<PathBuf> = None;
    let mut epochs: Option<usize> = None;
    let mut seed: Option<u64> = None;
    let mut seeds: Option<Vec<u64>> = None;
    let mut mode: Option<Arm> = None;
    let mut out: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut run_dir: Option<PathBuf> = None;
    let mut episodes: Option<usize> = None;
    let mut state: Option<Vec<f64>> = None;
    let mut rollouts: Option<usize> = None;
    let mut horizon: Option<usize> = None;
    let mut axis: Option<SweepAxis> = None;
    let mut values: Option<Vec<String>> = None;
    let mut out_file: Option<PathBuf> = None;

    let mut i = 1;
    while i < argv.len() {
        let flag = argv[i].as_str();
        let value = argv
            .get(i + 1)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::invalid(format!("flag {flag} expects a value")));
        match flag {
            "--env" => env_name = Some(value?.to_string()),
            "--config" => config_path = Some(PathBuf::from(value?)),
            "--epochs" => {
                epochs = Some(value?.parse().map_err(|_| {
                    Error::invalid("--epochs expects a nonnegative integer")
                })?)
            }
            "--seed" => {
                seed = Some(
                    value?
                        .parse()
                        .map_err(|_| Error::invalid("--seed expects an integer"))?,
                )
            }
            "--seeds" => seeds = Some(parse_seed_list(value?)?),
            "--mode" => mode = Some(value?.parse()?),
            "--out" => out = Some(PathBuf::from(value?)),
            "--set" => {
                let kv = value?;
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::invalid("--set expects key=value"))?;
                overrides.push((k.trim().to_string(), v.trim().to_string()));
            }
            "--run" => run_dir = Some(PathBuf::from(value?)),
            "--episodes" => {
                episodes = Some(
                    value?
                        .parse()
                        .map_err(|_| Error::invalid("--episodes expects an integer"))?,
                )
            }
            "--state" => state = Some(parse_state_list(value?)?),
            "--rollouts" => {
                rollouts = Some(
                    value?
                        .parse()
                        .map_err(|_| Error::invalid("--rollouts expects an integer"))?,
                )
            }
            "--horizon" => {
                horizon = Some(
                    value?
                        .parse()
                        .map_err(|_| Error::invalid("--horizon expects an integer"))?,
                )
            }
            "--axis" => axis = Some(value?.parse()?),
            "--values" => {
                values = Some(value?.split(',').map(|s| s.trim().to_string()).collect())
            }
            "--out-file" => out_file = Some(PathBuf::from(value?)),
            other => {
                return Err(Error::invalid(format!("unknown flag '{other}'")));
            }
        }
        i += 2;
    }

    let build_config = || -> Result<RunConfig> {
        let mut cfg = match (&config_path, &env_name) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Data(format!("cannot read config {path:?}: {e}")))?;
                let mut cfg = parse_config_str(&text)?;
                if let Some(name) = &env_name {
                    if cfg.env.env_name() != name {
                        cfg = RunConfig::for_env(name)?;
                    }
                }
                cfg
            }
            (None, Some(name)) => RunConfig::for_env(name)?,
            (None, None) => RunConfig::pendulum_default(),
        };
        if let Some(e) = epochs {
            cfg.epochs = e;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(m) = mode {
            cfg.shap.mode = m;
        }
        for (k, v) in &overrides {
            apply_override(&mut cfg, k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    };
    let seed_list = |cfg: &RunConfig| -> Vec<u64> {
        seeds.clone().unwrap_or_else(|| vec![cfg.seed])
    };

    match sub.as_str() {
        "train" => {
            let config = build_config()?;
            let seeds = seed_list(&config);
            Ok(CliCommand::Train {
                seeds,
                out: out.unwrap_or_else(default_out_root),
                config,
            })
        }
        "eval" => Ok(CliCommand::Eval {
            run: run_dir.ok_or_else(|| Error::invalid("eval requires --run DIR"))?,
            episodes,
            seed: seed.unwrap_or(0),
        }),
        "shap" => Ok(CliCommand::Shap {
            run: run_dir.ok_or_else(|| Error::invalid("shap requires --run DIR"))?,
            state,
            mode,
            seed: seed.unwrap_or(0),
        }),
        "gap" => Ok(CliCommand::Gap {
            run: run_dir.ok_or_else(|| Error::invalid("gap requires --run DIR"))?,
            rollouts,
            horizon,
            seed: seed.unwrap_or(0),
        }),
        "sweep" => {
            let config = build_config()?;
            let axis = axis.ok_or_else(|| Error::invalid("sweep requires --axis"))?;
            let values =
                values.ok_or_else(|| Error::invalid("sweep requires --values v1,v2,..."))?;
            if values.is_empty() {
                return Err(Error::invalid("sweep requires at least one value"));
            }
            let seeds = seed_list(&config);
            Ok(CliCommand::Sweep {
                seeds,
                out: out.unwrap_or_else(default_out_root),
                config,
                axis,
                values,
            })
        }
        "export" => Ok(CliCommand::Export {
            run: run_dir.ok_or_else(|| Error::invalid("export requires --run DIR"))?,
            out: out_file.or(out),
        }),
        other => Err(Error::invalid(format!(
            "unknown subcommand '{other}' (expected train|eval|shap|gap|sweep|export)"
        ))),
    }
}

/// Aggregate statistic reported per run: mean of the evaluation returns over
/// the final 100 epochs (or all epochs for shorter runs).
pub fn final_window_mean(records: &[EpochRecord], window: usize) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    let tail = &records[records.len().saturating_sub(window)..];
    tail.iter().map(|r| r.eval_mean).sum::<f64>() / tail.len() as f64
}

/// Per-run summary written alongside the records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: String,
    pub mode: Arm,
    pub seed: u64,
    pub epochs: usize,
    pub final_100_eval_mean: f64,
    pub final_eval_mean: f64,
    pub final_gap: Option<f64>,
}

/// Execute a single training run and write its artifacts under `dir`.
pub fn run_to_dir(config: &RunConfig, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let resolved = serde_json::to_string_pretty(config)?;
    fs::write(dir.join("config.json"), &resolved)?;

    let mut trainer = Trainer::new(config.clone())?;
    let records = trainer.run_with(|rec| {
        if rec.epoch % 200 == 0 {
            eprintln!(
                "[seed {} epoch {}] train {:.1} eval {:.1} dicts {}/{}",
                config.seed, rec.epoch, rec.train_return, rec.eval_mean, rec.dict_value,
                rec.dict_actor
            );
        }
    })?;
    write_records(dir, config, &records)?;
    let checkpoint = trainer.checkpoint(records.len());
    fs::write(
        dir.join("checkpoint.json"),
        serde_json::to_string(&checkpoint)?,
    )?;

    let summary = RunSummary {
        env: config.env.env_name().to_string(),
        mode: config.shap.mode,
        seed: config.seed,
        epochs: records.len(),
        final_100_eval_mean: final_window_mean(&records, 100),
        final_eval_mean: records.last().map(|r| r.eval_mean).unwrap_or(f64::NAN),
        final_gap: records.iter().rev().find_map(|r| r.gap),
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

fn write_records(dir: &Path, config: &RunConfig, records: &[EpochRecord]) -> Result<()> {
    let mut csv = String::from(RECORDS_CSV_HEADER);
    csv.push('\n');
    for r in records {
        csv.push_str(&record_to_csv_row(r));
        csv.push('\n');
    }
    fs::write(dir.join("records.csv"), csv)?;

    if config.shap.mode.uses_shap() {
        let mut jsonl = String::new();
        for r in records {
            if let (Some(phi), Some(state)) = (&r.phi, &r.anchor_state) {
                let trace = AttributionTraceRecord {
                    epoch: r.epoch,
                    state: state.clone(),
                    phi: phi.clone(),
                    mode: match config.shap.mode {
                        Arm::Kme => "kme".into(),
                        Arm::Cme => "cme".into(),
                        _ => unreachable!("uses_shap checked above"),
                    },
                };
                jsonl.push_str(&serde_json::to_string(&trace)?);
                jsonl.push('\n');
            }
        }
        fs::write(dir.join("attributions.jsonl"), jsonl)?;
    }
    Ok(())
}

fn load_checkpoint(run: &Path) -> Result<Checkpoint> {
    let path = run.join("checkpoint.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Data(format!("cannot read {path:?}: {e}")))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load the run artifacts back from disk.
pub fn load_run_dir(
    run: &Path,
) -> Result<(RunConfig, Vec<EpochRecord>, Vec<AttributionTraceRecord>)> {
    let cfg_text = fs::read_to_string(run.join("config.json"))
        .map_err(|e| Error::Data(format!("missing config.json in {run:?}: {e}")))?;
    let config: RunConfig = serde_json::from_str(&cfg_text)?;
    let rec_text = fs::read_to_string(run.join("records.csv"))
        .map_err(|e| Error::Data(format!("missing records.csv in {run:?}: {e}")))?;
    let mut records = Vec::new();
    for (i, line) in rec_text.lines().enumerate() {
        if i == 0 {
            if line != RECORDS_CSV_HEADER {
                return Err(Error::Data(format!("unexpected records header '{line}'")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        records.push(record_from_csv_row(line)?);
    }
    let mut traces = Vec::new();
    let jsonl_path = run.join("attributions.jsonl");
    if jsonl_path.exists() {
        for line in fs::read_to_string(&jsonl_path)?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            traces.push(serde_json::from_str(line)?);
        }
    }
    Ok((config, records, traces))
}

/// Consolidated, self-describing export document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportDoc {
    pub schema_version: u32,
    pub config: RunConfig,
    pub records: Vec<EpochRecord>,
    pub attributions: Vec<AttributionTraceRecord>,
}

/// Consolidate a run directory into one JSON document. Attribution traces
/// are joined back onto the epoch records so the document reproduces the
/// in-memory records exactly.
pub fn export_traces(run: &Path) -> Result<ExportDoc> {
    let (config, mut records, traces) = load_run_dir(run)?;
    if records.is_empty() {
        return Err(Error::Data(format!("run dir {run:?} contains no records")));
    }
    for t in &traces {
        if let Some(r) = records.iter_mut().find(|r| r.epoch == t.epoch) {
            r.phi = Some(t.phi.clone());
            r.anchor_state = Some(t.state.clone());
        }
    }
    Ok(ExportDoc {
        schema_version: EXPORT_SCHEMA_VERSION,
        config,
        records,
        attributions: traces,
    })
}

/// Parse a consolidated export document.
pub fn ingest_export(text: &str) -> Result<ExportDoc> {
    let doc: ExportDoc = serde_json::from_str(text)?;
    if doc.schema_version != EXPORT_SCHEMA_VERSION {
        return Err(Error::Data(format!(
            "unsupported export schema version {}",
            doc.schema_version
        )));
    }
    Ok(doc)
}

/// One row of the sweep summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis: String,
    pub value: String,
    pub runs: usize,
    /// Mean over seeds of the per-run final-100-epoch eval means.
    pub mean: f64,
    /// Across-seed standard deviation of the same statistic.
    pub std: f64,
    pub status: String,
}

pub const SWEEP_CSV_HEADER: &str = "axis,value,runs,mean,std,status";

fn sweep_cell_csv(c: &SweepCell) -> String {
    format!(
        "{},{},{},{},{},{}",
        c.axis, c.value, c.runs, c.mean, c.std, c.status
    )
}

/// Run the cross product of one axis against the seed list; one summary row
/// per axis value, aggregated over seeds. Per-cell failures are recorded in
/// the status column and the sweep continues.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<SweepCell>> {
    fs::create_dir_all(out)?;
    let mut cells = Vec::new();
    for value in values {
        let mut configs = Vec::new();
        let mut prep_error: Option<Error> = None;
        match axis {
            SweepAxis::Seed => {
                let mut cfg = base.clone();
                match value.parse::<u64>() {
                    Ok(s) => {
                        cfg.seed = s;
                        configs.push(cfg);
                    }
                    Err(_) => prep_error = Some(Error::invalid(format!("bad seed '{value}'"))),
                }
            }
            _ => {
                for &s in seeds {
                    let mut cfg = base.clone();
                    cfg.seed = s;
                    if let Err(e) = apply_override(&mut cfg, axis.key(), value)
                        .and_then(|_| cfg.validate().map(|_| ()))
                    {
                        prep_error = Some(e);
                        break;
                    }
                    configs.push(cfg);
                }
            }
        }
        if let Some(e) = prep_error {
            cells.push(SweepCell {
                axis: axis.key().into(),
                value: value.clone(),
                runs: 0,
                mean: f64::NAN,
                std: f64::NAN,
                status: format!("error: {e}"),
            });
            continue;
        }

        let value_dir = out.join(format!(
            "{}-{}",
            axis.key().replace('.', "_"),
            value.replace([' ', '/'], "_")
        ));
        let results: Vec<Result<RunSummary>> = configs
            .par_iter()
            .map(|cfg| run_to_dir(cfg, &value_dir.join(format!("seed{}", cfg.seed))))
            .collect();

        let mut stats = Vec::new();
        let mut status = String::from("ok");
        for r in results {
            match r {
                Ok(s) => stats.push(s.final_100_eval_mean),
                Err(e) => status = format!("error: {e}"),
            }
        }
        let n = stats.len();
        let mean = if n > 0 {
            stats.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let std = if n > 0 {
            (stats.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt()
        } else {
            f64::NAN
        };
        cells.push(SweepCell {
            axis: axis.key().into(),
            value: value.clone(),
            runs: n,
            mean,
            std,
            status,
        });
    }

    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for c in &cells {
        csv.push_str(&sweep_cell_csv(c));
        csv.push('\n');
    }
    fs::write(out.join("summary.csv"), csv)?;
    Ok(cells)
}

/// Execute a parsed command. Returns the text printed to stdout.
pub fn execute(cmd: CliCommand) -> Result<String> {
    match cmd {
        CliCommand::Train { config, seeds, out } => {
            let base_name = format!("{}-{:?}", config.env.env_name(), config.shap.mode)
                .to_lowercase();
            let mut summaries: Vec<RunSummary> = Vec::new();
            let runs: Vec<Result<RunSummary>> = seeds
                .par_iter()
                .map(|&seed| {
                    let mut cfg = config.clone();
                    cfg.seed = seed;
                    run_to_dir(&cfg, &out.join(format!("{base_name}-seed{seed}")))
                })
                .collect();
            for r in runs {
                summaries.push(r?);
            }
            let n = summaries.len() as f64;
            let mean = summaries.iter().map(|s| s.final_100_eval_mean).sum::<f64>() / n;
            let var = summaries
                .iter()
                .map(|s| (s.final_100_eval_mean - mean).powi(2))
                .sum::<f64>()
                / n;
            let agg = serde_json::json!({
                "runs": summaries,
                "aggregate": { "final_100_eval_mean": mean, "final_100_eval_std": var.sqrt() },
            });
            Ok(serde_json::to_string_pretty(&agg)?)
        }
        CliCommand::Eval {
            run,
            episodes,
            seed,
        } => {
            let ck = load_checkpoint(&run)?;
            let env = EnvKind::from_config(&ck.config.env)?;
            let n = episodes.unwrap_or(ck.config.eval_episodes);
            let mut rng = derive_rng(seed, 0, 2);
            let (mean, std) = evaluate(&ck.policy, &env, n, ck.config.noise_var, &mut rng)?;
            Ok(serde_json::to_string_pretty(&serde_json::json!({
                "episodes": n, "mean": mean, "std": std,
            }))?)
        }
        CliCommand::Shap {
            run,
            state,
            mode,
            seed,
        } => {
            let ck = load_checkpoint(&run)?;
            let env = EnvKind::from_config(&ck.config.env)?;
            if ck.buffer.is_empty() {
                return Err(Error::State(
                    "checkpoint has an empty embedding buffer".into(),
                ));
            }
            let anchor = match state {
                Some(values) => {
                    if values.len() != env.obs_dim() {
                        return Err(Error::invalid(format!(
                            "--state needs {} components",
                            env.obs_dim()
                        )));
                    }
                    DVector::from_vec(values)
                }
                None => {
                    let mut rng = derive_rng(seed, 0, 5);
                    let s = env.sample_init(&mut rng);
                    env.observe(&s)
                }
            };
            let arm = mode.unwrap_or(ck.config.shap.mode);
            let imode = match arm {
                Arm::Kme => ImputationMode::Kme,
                Arm::Cme => ImputationMode::Cme,
                other => {
                    return Err(Error::invalid(format!(
                        "mode {other:?} has no attribution; use kme or cme"
                    )))
                }
            };
            let att = if anchor.len() <= EXACT_SHAPLEY_MAX_DIM {
                shapley_exact(&ck.value, &ck.buffer, &anchor, imode, ck.config.shap.lambda_cme)?
            } else {
                let mut rng = derive_rng(seed, 0, 6);
                shapley_sampled(
                    &ck.value,
                    &ck.buffer,
                    &anchor,
                    imode,
                    ck.config.shap.lambda_cme,
                    ck.config.shap.n_perms,
                    &mut rng,
                )?
            };
            Ok(serde_json::to_string_pretty(&serde_json::json!({
                "state": att.base_state.as_slice(),
                "phi": att.phi.as_slice(),
                "mode": match imode { ImputationMode::Kme => "kme", ImputationMode::Cme => "cme" },
            }))?)
        }
        CliCommand::Gap {
            run,
            rollouts,
            horizon,
            seed,
        } => {
            let ck = load_checkpoint(&run)?;
            let env = EnvKind::from_config(&ck.config.env)?;
            let lqr = env
                .gap_benchmark()
                .ok_or_else(|| Error::invalid("gap study requires the lqr environment"))?;
            let mut rng = derive_rng(seed, 0, 3);
            let policy = ck.policy;
            let est = optimality_gap(
                lqr,
                |s| policy.mean(s),
                rollouts.unwrap_or(ck.config.gap.rollouts),
                horizon.unwrap_or(ck.config.gap.horizon),
                &mut rng,
            )?;
            Ok(serde_json::to_string_pretty(&serde_json::json!({
                "gap": est.gap,
                "std_error": est.std_error,
                "tail_bound": est.tail_bound,
            }))?)
        }
        CliCommand::Sweep {
            config,
            axis,
            values,
            seeds,
            out,
        } => {
            let cells = sweep(&config, axis, &values, &seeds, &out)?;
            Ok(serde_json::to_string_pretty(&cells)?)
        }
        CliCommand::Export { run, out } => {
            let doc = export_traces(&run)?;
            let text = serde_json::to_string_pretty(&doc)?;
            if let Some(path) = out {
                fs::write(&path, &text)?;
                Ok(format!("exported to {}", path.display()))
            } else {
                Ok(text)
            }
        }
    }
}

/// Entry point used by the binary: parse, execute, map errors to exit codes.
pub fn main_with_args(argv: &[String]) -> i32 {
    match parse_and_validate(argv).and_then(execute) {
        Ok(output) => {
            println!("{output}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
