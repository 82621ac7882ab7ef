//! `ilicast`: validate data, simulate, backtest, score and report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use ilicast::ingest::{generate_synthetic, Schema, SyntheticConfig};
use ilicast::runner::{self, sha256_hex, RunConfig, VERSION};
use ilicast::states::state_codes;
use ilicast::validate::{default_seasons, validate_bytes};
use ilicast::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUN: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ilicast", version, about = "State-level ILI forecasting backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a surveillance CSV and count in-season weeks per season.
    Validate {
        #[arg(long)]
        data: PathBuf,
        /// Column mapping file; canonical columns when omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Run config whose seasons drive the audit.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a synthetic surveillance CSV.
    Simulate {
        /// Synthetic TOML config; 50 uniform states over 2010-11..2018-19 when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run (or continue) a rolling-origin backtest.
    Backtest {
        /// Run config. Without it, `--out` must hold a run to continue.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        strict_paper_mode: bool,
        #[arg(long)]
        debug_dumps: bool,
    },
    /// Recompute score tables from a run's forecasts.
    Score {
        #[arg(long)]
        out: PathBuf,
    },
    /// Within-class comparison tables and summary for a finished run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Error carrying an exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Schema(_) | Error::Parse(_) | Error::Duplicate { .. } | Error::Domain(_) => {
            EXIT_VALIDATION
        }
        _ => EXIT_RUN,
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = err.downcast_ref::<Error>().map(code_for).unwrap_or(EXIT_RUN);
        Failure { code, err }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_for(&e),
            err: e.into(),
        }
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_metadata(dir: &Path, meta: &Metadata) -> anyhow::Result<()> {
    let path = dir.join(format!("{}_metadata.json", meta.command));
    write_file(&path, serde_json::to_string_pretty(meta)?.as_bytes())
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn validate(data: &Path, schema: Option<&Path>, config: Option<&Path>, out: &Path) -> Result<u8, Failure> {
    let bytes = read(data)?;
    let (schema, schema_bytes) = match schema {
        Some(p) => {
            let b = read(p)?;
            (Schema::parse(&String::from_utf8_lossy(&b))?, b)
        }
        None => (Schema::canonical(), Vec::new()),
    };
    let (train, test) = match config {
        Some(p) => {
            let c = RunConfig::load(p)?;
            (c.train_seasons, c.test_seasons)
        }
        None => default_seasons(),
    };
    let report = validate_bytes(&bytes, &schema, &train, &test);
    let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    println!("{json}");
    write_file(&out.join("validation.json"), json.as_bytes())?;
    let mut hashed = bytes;
    hashed.push(0);
    hashed.extend(schema_bytes);
    write_metadata(
        out,
        &Metadata {
            command: "validate",
            version: VERSION,
            config_hash: config.map(read).transpose()?.map(|b| sha256_hex(&b)),
            data_hash: Some(sha256_hex(&hashed)),
            seed: None,
        },
    )?;
    Ok(if report.ok { 0 } else { EXIT_VALIDATION })
}

fn simulate(config: Option<&Path>, seed: u64, out: &Path) -> Result<u8, Failure> {
    let (cfg, cfg_hash) = match config {
        Some(p) => {
            let b = read(p)?;
            (
                SyntheticConfig::parse_toml(&String::from_utf8_lossy(&b))?,
                sha256_hex(&b),
            )
        }
        None => {
            let c = SyntheticConfig::uniform(&state_codes().collect::<Vec<_>>(), 2010, 9);
            let h = sha256_hex(toml::to_string(&c).map_err(anyhow::Error::from)?.as_bytes());
            (c, h)
        }
    };
    let table = generate_synthetic(&cfg, seed)?;
    let csv = table.to_csv_string();
    write_file(&out.join("ili.csv"), csv.as_bytes())?;
    write_metadata(
        out,
        &Metadata {
            command: "simulate",
            version: VERSION,
            config_hash: Some(cfg_hash),
            data_hash: Some(sha256_hex(csv.as_bytes())),
            seed: Some(seed),
        },
    )?;
    eprintln!("wrote {} rows to {}", table.len(), out.join("ili.csv").display());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn backtest(
    config: Option<&Path>,
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    strict: bool,
    debug: bool,
) -> Result<u8, Failure> {
    let summary = match config {
        Some(p) => {
            let mut cfg = RunConfig::load(p)?;
            if let Some(d) = data {
                cfg.data = d;
            }
            if schema.is_some() {
                cfg.schema = schema;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            cfg.strict_paper_mode |= strict;
            cfg.debug_dumps |= debug;
            runner::run_backtest(&cfg)?
        }
        None => {
            let Some(dir) = out else {
                return Err(Failure {
                    code: EXIT_USAGE,
                    err: anyhow::anyhow!("backtest needs --config, or --out pointing at a run to continue"),
                });
            };
            if data.is_some() || schema.is_some() || strict || debug {
                return Err(Failure {
                    code: EXIT_USAGE,
                    err: anyhow::anyhow!("continuing a run takes its settings from the run's manifest"),
                });
            }
            runner::resume(&dir)?
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?
    );
    Ok(0)
}

fn manifest_hashes(dir: &Path) -> Result<(Option<String>, Option<String>), Failure> {
    let m = runner::persist::Manifest::load(dir)?;
    Ok((m.as_ref().map(|m| m.config_hash.clone()), m.map(|m| m.data_hash)))
}

fn score(dir: &Path) -> Result<u8, Failure> {
    let scores = runner::score_run(dir)?;
    let (config_hash, data_hash) = manifest_hashes(dir)?;
    write_metadata(
        dir,
        &Metadata {
            command: "score",
            version: VERSION,
            config_hash,
            data_hash,
            seed: None,
        },
    )?;
    eprintln!("scored {} forecasts", scores.records.len());
    Ok(0)
}

fn report(dir: &Path) -> Result<u8, Failure> {
    let r = ilicast::report::write_report(dir)?;
    let summary = dir.join(ilicast::report::REPORT_DIR).join("summary.txt");
    print!("{}", String::from_utf8_lossy(&read(&summary)?));
    eprintln!("wrote {} files", r.files.len());
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Validate {
            data,
            schema,
            config,
            out,
        } => validate(&data, schema.as_deref(), config.as_deref(), &out),
        Command::Simulate { config, seed, out } => simulate(config.as_deref(), seed, &out),
        Command::Backtest {
            config,
            data,
            schema,
            out,
            jobs,
            strict_paper_mode,
            debug_dumps,
        } => backtest(
            config.as_deref(),
            data,
            schema,
            out,
            jobs,
            strict_paper_mode,
            debug_dumps,
        ),
        Command::Score { out } => score(&out),
        Command::Report { out } => report(&out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
