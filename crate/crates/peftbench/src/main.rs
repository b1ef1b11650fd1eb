use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use peftbench::check::{run_suites, CheckOptions, Fault, Suite};
use peftbench::report::{self, CURVES_FILE, RESULTS_FILE, SUMMARY_FILE};
use peftbench::{parse_config, resolve_seed, run_experiment, BenchError, OutputFormat, SEED_ENV};

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "peftbench", version, about = "Train and compare adapters on synthetic shift tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method instance for every seed of an experiment file.
    Run {
        /// Experiment file (see configs/ for examples).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads. Results do not depend on this.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Replaces the first configured seed (takes precedence over PEFTBENCH_SEED).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in invariant suites.
    Check {
        /// Restrict to these suites (repeatable).
        #[arg(long = "suite")]
        suites: Vec<Suite>,
        /// Deliberately break a component to confirm the suites notice.
        #[arg(long)]
        inject_fault: Option<Fault>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-render the markdown summary from a results directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn create_dir(dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

fn run(config: &Path, out: Option<PathBuf>, jobs: usize, seed: Option<u64>) -> Result<(), BenchError> {
    let text = fs::read_to_string(config).map_err(|e| BenchError::io(config, e))?;
    let mut cfg = parse_config(&text)?;
    let env = std::env::var(SEED_ENV).ok();
    if let Some(seed) = resolve_seed(seed, env.as_deref())? {
        cfg.override_first_seed(seed);
    }
    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| BenchError::ConfigStructure("no output directory (use --out)".into()))?;
    create_dir(&dir)?;

    let results = run_experiment(&cfg, jobs)?;
    let rows: Vec<report::CsvRow> = results.iter().map(report::CsvRow::from).collect();
    let summary = report::aggregate(&rows);
    for format in &cfg.output.formats {
        match format {
            OutputFormat::Csv => report::write_csv(&results, &dir.join(RESULTS_FILE))?,
            OutputFormat::Markdown => report::write_markdown(&summary, &dir.join(SUMMARY_FILE))?,
            OutputFormat::Curves => report::write_curves(&results, &dir.join(CURVES_FILE))?,
        }
    }
    print!("{}", report::render_markdown(&summary));
    let diverged = results.iter().filter(|r| r.diverged).count();
    if diverged > 0 {
        eprintln!("{diverged} of {} runs diverged", results.len());
    }
    Ok(())
}

fn report_dir(input: &Path) -> Result<(), BenchError> {
    let rows = report::read_csv(&input.join(RESULTS_FILE))?;
    let summary = report::aggregate(&rows);
    report::write_markdown(&summary, &input.join(SUMMARY_FILE))?;
    print!("{}", report::render_markdown(&summary));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run { config, out, jobs, seed } => run(&config, out, jobs, seed),
        Command::Report { input } => report_dir(&input),
        Command::Check { suites, inject_fault, seed } => {
            let suites = if suites.is_empty() { Suite::ALL.to_vec() } else { suites };
            let opts = CheckOptions { fault: inject_fault, seed };
            let outcomes = run_suites(&suites, &opts);
            for o in &outcomes {
                println!("{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed()).count();
            println!("{} suites, {failed} failed", outcomes.len());
            return if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK_FAILED) };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
