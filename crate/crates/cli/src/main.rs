//! `opm`: run declarative experiments and the invariant check suites.

mod config;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use opm_core::experiments::output::ResultDir;
use serde_json::{json, Map, Value};

use crate::config::{apply_override, Format, RunConfig};
use crate::error::CliError;

/// Where result directories go when `--out` is not given.
const OUTPUT_ROOT_VAR: &str = "OPM_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "opm", version, about = "Optimal parameterizing manifolds: closures, reduced models, transitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override a config value, `dotted.key=value`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Result directory (default: $OPM_OUTPUT_ROOT/<config name>, or results/<config name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed from which every random stream is derived.
        #[arg(long)]
        seed: Option<u64>,
        /// Cap on worker threads.
        #[arg(long)]
        threads: Option<usize>,
        /// Trajectory file format.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Run one of the check suites and print its table.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(opm_core::verify::SUITES))]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn default_out(config: &Path) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"));
    root.join(config.file_stem().unwrap_or_default())
}

fn error_json(e: &CliError) -> Value {
    json!({ "code": e.code(), "message": e.to_string() })
}

struct RunArgs {
    config: PathBuf,
    set: Vec<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
    format: Option<FormatArg>,
}

fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut overrides = args.set.clone();
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(f) = args.format {
        overrides.push(format!("output.format=\"{}\"", match f {
            FormatArg::Csv => "csv",
            FormatArg::Binary => "binary",
        }));
    }
    let mut cfg = config::load(&args.config, &[])?;
    for o in &overrides {
        apply_override(&mut cfg.tree, o)?;
    }
    cfg.check()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> ExitCode {
    let cfg = match resolve(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("opm: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("opm: could not size the thread pool: {e}");
        }
    }
    let out_path = args.out.clone().unwrap_or_else(|| default_out(&args.config));
    let format = cfg.output().map(|o| o.format).unwrap_or(Format::Csv);
    let dir = match ResultDir::create(&out_path, format == Format::Binary) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("opm: cannot create {}: {e}", out_path.display());
            return ExitCode::from(1);
        }
    };
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let outcome = run::execute(&cfg, &dir);
    let mut summary = Map::new();
    summary.insert("experiment".into(), cfg.tree["experiment"].clone());
    summary.insert("seed".into(), cfg.tree["seed"].clone());
    let code = match outcome {
        Ok(m) => {
            summary.insert("status".into(), json!("ok"));
            summary.insert("results".into(), Value::Object(m));
            0
        }
        Err(e) => {
            eprintln!("opm: {e}");
            summary.insert("status".into(), json!("error"));
            summary.insert("error".into(), error_json(&e));
            e.exit_code()
        }
    };
    let metadata = json!({
        "started_unix": started,
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_file": args.config.display().to_string(),
    });
    let written = dir
        .json("config.json", &cfg.tree)
        .and_then(|_| dir.json("summary.json", &Value::Object(summary)))
        .and_then(|_| dir.json("metadata.json", &metadata));
    if let Err(e) = written {
        eprintln!("opm: writing results: {e}");
        return ExitCode::from(1);
    }
    println!("{}", dir.path().display());
    ExitCode::from(code)
}

fn verify(suite: &str, seed: u64) -> ExitCode {
    match opm_core::verify::run_suite(suite, seed) {
        Some(Ok(report)) => {
            print!("{}", report.table());
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            println!("{}: {} checks, {failed} failed", report.suite, report.checks.len());
            ExitCode::from(if failed == 0 { 0 } else { 1 })
        }
        Some(Err(e)) => {
            eprintln!("opm: {e}");
            ExitCode::from(1)
        }
        None => {
            eprintln!("opm: unknown suite {suite}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for validity
    // breaches here.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { config, set, out, seed, threads, format } => {
            run(RunArgs { config, set, out, seed, threads, format })
        }
        Command::Verify { suite, seed } => verify(&suite, seed),
    }
}
