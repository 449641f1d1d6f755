use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use msth::harness::{
    ablate, collect_report, expand_matrix, parse_matrix, parse_override, report_csv, run,
    write_report, ExperimentSpec,
};
use msth::{selftest, MsthError, Result};

#[derive(Parser)]
#[command(
    name = "msth",
    version,
    about = "Multi-scale temporal homeostasis experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment and write steps.csv, summary.json and the resolved config
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// override a config key, e.g. --set train.lr=0.01
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the cross product of a matrix file over seed replicates
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Collect every summary.json under a directory into a comparison table
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
    },
    /// Run the built-in invariant checks
    Selftest,
}

fn load_spec(config: Option<&Path>, set: &[String]) -> Result<ExperimentSpec> {
    let overrides = set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>>>()?;
    match config {
        Some(path) => ExperimentSpec::load(path, &overrides),
        None => ExperimentSpec::from_pairs(overrides),
    }
}

fn main_inner(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, set } => {
            let spec = load_spec(config.as_deref(), &set)?;
            let out = run(&spec)?;
            let s = &out.summary;
            println!("output: {}", spec.resolved_output_dir().display());
            println!("config_hash: {}", s.config_hash);
            if let Some(v) = s.final_val_metric {
                println!(
                    "val_metric: {:.4} ± {:.4} over {} fold(s)",
                    v.mean, v.std, v.n
                );
            }
            if let Some(r) = s.recovered_fraction {
                println!("recovered_fraction: {r:.3}");
            }
            println!(
                "interventions: {:?} ratios {:.3?}",
                s.ledger.counts, s.ledger.ratios
            );
            println!(
                "realism: {:.3}  regulator_flops: {}",
                s.realism.score, s.regulator_flops
            );
            println!(
                "failure_flag: {}  wall_time: {:.2}s",
                s.failure_flag, out.wall_time_secs
            );
            if s.failure_flag && spec.perturbations.is_empty() {
                return Ok(ExitCode::from(4));
            }
        }
        Command::Ablate {
            config,
            matrix,
            set,
        } => {
            let spec = load_spec(config.as_deref(), &set)?;
            let text = std::fs::read_to_string(&matrix)
                .map_err(|e| MsthError::Config(format!("{}: {e}", matrix.display())))?;
            let cells = expand_matrix(&parse_matrix(&text)?);
            let table = ablate(&spec, &cells)?;
            let dir = spec.resolved_output_dir();
            table.write(&dir)?;
            print!("{}", table.to_csv()?);
            println!("written to {}", dir.display());
        }
        Command::Report { dir } => {
            let rows = collect_report(&dir)?;
            write_report(&dir, &rows)?;
            print!("{}", report_csv(&rows)?);
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{} {}{}",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.name,
                    c.detail_suffix()
                );
                failed += usize::from(!c.passed);
            }
            println!("{} checks, {failed} failed", checks.len());
            if failed > 0 {
                return Ok(ExitCode::from(4));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
