//! Experiment runner: parses structured configs, dispatches to the
//! verification drivers, and writes machine-readable and human-readable
//! reports.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 config error,
//! 3 numerical-stability error.

mod config;
mod report;
mod runner;

use clap::{Args, Parser, Subcommand};
use config::ExperimentConfig;
use report::RunReport;
use runner::{run_config, RunError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "etalab", version, about = "eta/index-defect laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Path to the experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for the JSON report (optional).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized trials (overrides the config's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Print the JSON report to stdout instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Regularized eta invariant of a tangential operator.
    Eta(RunArgs),
    /// Spectral flow along a path of scalar potentials.
    #[command(name = "spectral-flow")]
    SpectralFlow(RunArgs),
    /// Numerical Fredholm index of a cylinder problem.
    Index(RunArgs),
    /// The mod-n index defect and relative eta invariant.
    Defect(RunArgs),
    /// Lefschetz congruence on the rotating disk model.
    Lefschetz(RunArgs),
    /// Randomized anticommuting-involution model trials.
    Hirzebruch(RunArgs),
    /// Homotopy invariance scan of the defect along a potential path.
    #[command(name = "homotopy-scan")]
    HomotopyScan(RunArgs),
    /// Projection-family verification.
    #[command(name = "kproj-verify")]
    KprojVerify(RunArgs),
    /// Shapiro-Lopatinskii checker against the brute-force oracle.
    #[command(name = "sl-check")]
    SlCheck(RunArgs),
    /// Run every config in a directory and aggregate a CSV table.
    Report {
        /// Directory of experiment configs.
        #[arg(long)]
        config: PathBuf,
        /// Directory for the CSV and JSON reports (optional).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed applied to every run (overrides config seeds).
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl Command {
    fn expected_kind(&self) -> Option<&'static str> {
        match self {
            Command::Eta(_) => Some("eta"),
            Command::SpectralFlow(_) => Some("spectral-flow"),
            Command::Index(_) => Some("index"),
            Command::Defect(_) => Some("defect"),
            Command::Lefschetz(_) => Some("lefschetz"),
            Command::Hirzebruch(_) => Some("hirzebruch"),
            Command::HomotopyScan(_) => Some("homotopy-scan"),
            Command::KprojVerify(_) => Some("kproj-verify"),
            Command::SlCheck(_) => Some("sl-check"),
            Command::Report { .. } => None,
        }
    }
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn load_config(path: &Path, expected_kind: &str) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let cfg = ExperimentConfig::parse(&text)?;
    if cfg.kind != expected_kind {
        return Err(format!(
            "config kind '{}' does not match subcommand '{expected_kind}'",
            cfg.kind
        ));
    }
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig, seed: u64) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let body = run_config(cfg, seed)?;
    Ok(RunReport::new(body, start.elapsed().as_millis()))
}

fn emit(report: &RunReport, args: &RunArgs, stem: &str) -> Result<(), String> {
    let json = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    if args.json {
        println!("{json}");
    } else {
        print!("{}", report.render_table());
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, json).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_single(args: &RunArgs, kind: &str) -> u8 {
    let cfg = match load_config(&args.config, kind) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let seed = args.seed.unwrap_or(cfg.seed);
    match execute(&cfg, seed) {
        Ok(report) => {
            let stem = args
                .config
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "report".into());
            if let Err(msg) = emit(&report, args, &stem) {
                eprintln!("error: {msg}");
                return EXIT_CONFIG;
            }
            if report.body.pass {
                0
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(RunError::Config(msg)) => {
            eprintln!("error: config error: {msg}");
            EXIT_CONFIG
        }
        Err(RunError::Numerical(msg)) => {
            eprintln!("error: numerical error: {msg}");
            EXIT_NUMERICAL
        }
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn run_report(config_dir: &Path, out: Option<&Path>, seed: Option<u64>) -> u8 {
    let mut entries: Vec<PathBuf> = match std::fs::read_dir(config_dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|x| x == "toml").unwrap_or(false))
            .collect(),
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_dir.display());
            return EXIT_CONFIG;
        }
    };
    entries.sort();

    let mut csv = String::from("config,kind,sheets,key_value,tolerance,pass\n");
    let mut worst: u8 = 0;
    let mut passes = 0usize;
    for path in &entries {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        };
        let cfg = match ExperimentConfig::parse(&text) {
            Ok(c) => c,
            Err(msg) => {
                eprintln!("error: {}: {msg}", path.display());
                return EXIT_CONFIG;
            }
        };
        let used_seed = seed.unwrap_or(cfg.seed);
        match execute(&cfg, used_seed) {
            Ok(report) => {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    csv_escape(&name),
                    report.body.kind,
                    cfg.covering.sheets,
                    report.key_value(),
                    report.key_tolerance(),
                    report.body.pass
                ));
                if report.body.pass {
                    passes += 1;
                } else {
                    worst = worst.max(EXIT_CHECK_FAILED);
                }
                if let Some(dir) = out {
                    if std::fs::create_dir_all(dir).is_ok() {
                        let _ = std::fs::write(
                            dir.join(format!("{name}.json")),
                            serde_json::to_string_pretty(&report).unwrap_or_default(),
                        );
                    }
                }
            }
            Err(RunError::Config(msg)) => {
                eprintln!("error: {}: config error: {msg}", path.display());
                return EXIT_CONFIG;
            }
            Err(RunError::Numerical(msg)) => {
                eprintln!("error: {}: numerical error: {msg}", path.display());
                worst = worst.max(EXIT_NUMERICAL);
                csv.push_str(&format!(
                    "{},{},{},NaN,NaN,false\n",
                    csv_escape(&name),
                    cfg.kind,
                    cfg.covering.sheets
                ));
            }
        }
    }
    print!("{csv}");
    eprintln!("{passes}/{} configs passed", entries.len());
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("report.csv"), &csv);
        }
    }
    worst
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Report { config, out, seed } => run_report(config, out.as_deref(), *seed),
        cmd => {
            let kind = cmd.expected_kind().expect("non-report commands have kinds");
            let args = match cmd {
                Command::Eta(a)
                | Command::SpectralFlow(a)
                | Command::Index(a)
                | Command::Defect(a)
                | Command::Lefschetz(a)
                | Command::Hirzebruch(a)
                | Command::HomotopyScan(a)
                | Command::KprojVerify(a)
                | Command::SlCheck(a) => a,
                Command::Report { .. } => unreachable!(),
            };
            run_single(args, kind)
        }
    };
    ExitCode::from(code)
}
