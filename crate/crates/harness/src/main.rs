//! Command-line front end: `validate`, `accelerate`, `expansion` and
//! `taylor-check` subcommands over a shared config file.
//!
//! Exit codes: 0 when the run passes, 2 when it completes but fails its
//! acceptance rule, 1 on errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use spde_harness::config::{ExperimentConfig, OutputFormat};
use spde_harness::report::{emit_report, ConvergenceReport, RunMetadata, StudyReport};
use spde_harness::study::{
    run_acceleration_study, run_expansion_study, run_taylor_study, run_validation,
};

#[derive(Parser)]
#[command(
    name = "spde",
    about = "Implicit finite-difference schemes for parabolic SPDEs on the torus, with Richardson-accelerated convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (key = value sections)
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Monte Carlo path count
    #[arg(long)]
    paths: Option<usize>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: csv or json
    #[arg(long)]
    format: Option<String>,
    /// Write every sampled noise path to this directory (binary format)
    #[arg(long)]
    dump_paths: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the coefficient validators (parabolicity, consistency, bounds)
    Validate(Common),
    /// Richardson acceleration study against the time-scheme reference
    Accelerate(Common),
    /// Expansion-remainder study via the correction system
    Expansion(Common),
    /// Taylor-remainder checks of the difference expansions
    TaylorCheck(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| format!("cannot read {}: {e}", common.config.display()))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| e.to_string())?;
    let mut overrides = Vec::new();
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        overrides.push(format!("seed = {seed}"));
    }
    if let Some(paths) = common.paths {
        cfg.paths = paths;
        overrides.push(format!("paths = {paths}"));
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.display().to_string();
        overrides.push(format!("directory = {}", out.display()));
    }
    if let Some(dir) = &common.dump_paths {
        cfg.dump_paths = Some(dir.display().to_string());
        overrides.push(format!("dump_paths = {}", dir.display()));
    }
    if let Some(format) = &common.format {
        cfg.format = match format.as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => return Err(format!("unknown format `{other}` (use csv or json)")),
        };
        overrides.push(format!("format = {format}"));
    }
    if !overrides.is_empty() {
        cfg.source_text.push_str(&format!(
            "\n# command-line overrides\n# {}\n",
            overrides.join(", ")
        ));
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn print_convergence(report: &ConvergenceReport) {
    println!(
        "{} study: order k = {}, {} paths, seed {}, reference {}",
        report.study, report.order, report.paths, report.seed, report.reference
    );
    for level in &report.levels {
        let sup = level
            .stats
            .iter()
            .find(|s| s.name == "sup_rms")
            .map(|s| s.value)
            .unwrap_or(f64::NAN);
        let flag = if level.floored { "  [floored]" } else { "" };
        println!(
            "  level {}: n_x = {:5}, h = {:.6e}, sup_rms = {:.6e}{}",
            level.level_index, level.n_x, level.h, sup, flag
        );
    }
    for slope in &report.slopes {
        println!("  fitted order [{}]: {:.4}", slope.statistic, slope.slope);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "  rule: {} -> {}",
        report.pass_rule,
        if report.pass { "PASS" } else { "FAIL" }
    );
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Validate(common) => {
            let cfg = load_config(&common)?;
            let start = Instant::now();
            let report = run_validation(&cfg).map_err(|e| e.to_string())?;
            let meta = RunMetadata::now(start.elapsed().as_millis());
            for e in &report.entries {
                println!(
                    "  {}: value {:.6e} vs threshold {:.6e} -> {}",
                    e.name,
                    e.value,
                    e.threshold,
                    if e.pass { "PASS" } else { "FAIL" }
                );
            }
            println!(
                "validation -> {}",
                if report.pass { "PASS" } else { "FAIL" }
            );
            let pass = report.pass;
            let paths = emit_report(
                &StudyReport::Validation(report),
                &meta,
                cfg.out_dir.as_ref(),
                cfg.format,
            )
            .map_err(|e| e.to_string())?;
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            Ok(pass)
        }
        Command::Accelerate(common) => {
            let cfg = load_config(&common)?;
            let start = Instant::now();
            let report = run_acceleration_study(&cfg).map_err(|e| e.to_string())?;
            let meta = RunMetadata::now(start.elapsed().as_millis());
            print_convergence(&report);
            let pass = report.pass;
            let paths = emit_report(
                &StudyReport::Convergence(report),
                &meta,
                cfg.out_dir.as_ref(),
                cfg.format,
            )
            .map_err(|e| e.to_string())?;
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            Ok(pass)
        }
        Command::Expansion(common) => {
            let cfg = load_config(&common)?;
            let start = Instant::now();
            let report = run_expansion_study(&cfg).map_err(|e| e.to_string())?;
            let meta = RunMetadata::now(start.elapsed().as_millis());
            print_convergence(&report);
            let pass = report.pass;
            let paths = emit_report(
                &StudyReport::Convergence(report),
                &meta,
                cfg.out_dir.as_ref(),
                cfg.format,
            )
            .map_err(|e| e.to_string())?;
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            Ok(pass)
        }
        Command::TaylorCheck(common) => {
            let cfg = load_config(&common)?;
            let start = Instant::now();
            let report = run_taylor_study(&cfg).map_err(|e| e.to_string())?;
            let meta = RunMetadata::now(start.elapsed().as_millis());
            for e in &report.entries {
                println!(
                    "  {}: value {:.6e} in [{:.6e}, {:.6e}] -> {}",
                    e.name,
                    e.value,
                    e.lower,
                    e.upper,
                    if e.pass { "PASS" } else { "FAIL" }
                );
            }
            println!(
                "taylor-check -> {}",
                if report.pass { "PASS" } else { "FAIL" }
            );
            let pass = report.pass;
            let paths = emit_report(
                &StudyReport::Taylor(report),
                &meta,
                cfg.out_dir.as_ref(),
                cfg.format,
            )
            .map_err(|e| e.to_string())?;
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            Ok(pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
