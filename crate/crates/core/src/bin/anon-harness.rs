use std::path::PathBuf;
use std::process::ExitCode;

use anon_optim::harness::config::{load, OUT_ENV};
use anon_optim::harness::output::describe;
use anon_optim::harness::{
    emit_report, exit, run_experiment, run_sweep, ExperimentKind, HarnessResult, RawConfig,
    ReportFormat,
};
use anon_optim::optim::OptimizerKind;
use anon_optim::testbed::functions::TestFunction;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anon-harness", version, about = "Run optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (ablations and sweep axes fan out automatically).
    Run(Overrides),
    /// Run the cartesian product of every sweep_* axis.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Worker threads; 0 uses one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Measured vs analytic adaptivity over seeded random histories.
    Adaptivity(Overrides),
    /// Collect run.json sidecars under a directory into one table.
    Report {
        /// Directory to scan; defaults to the configured output directory.
        dir: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<ExperimentKind>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    beta3: Option<f64>,
    #[arg(long)]
    ratio: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    function: Option<TestFunction>,
    #[arg(long)]
    lr_search: bool,
    #[arg(long)]
    paper_literal: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn split(self) -> (Option<PathBuf>, RawConfig) {
        let raw = RawConfig {
            experiment: self.experiment,
            optimizer: self.optimizer,
            gamma: self.gamma,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            ratio: self.ratio,
            epsilon: self.epsilon,
            steps: self.steps,
            seed: self.seed,
            function: self.function,
            lr_search: self.lr_search.then_some(true),
            paper_literal: self.paper_literal.then_some(true),
            out: self.out,
            ..RawConfig::default()
        };
        (self.config, raw)
    }
}

fn execute(command: Command) -> HarnessResult<i32> {
    match command {
        Command::Run(o) => {
            let (file, raw) = o.split();
            let outcome = run_experiment(&load(file.as_deref(), raw)?)?;
            println!(
                "{}  -> {}",
                describe(&outcome.summary),
                outcome.dir.display()
            );
            Ok(outcome.exit_code())
        }
        Command::Sweep { overrides, jobs } => {
            let (file, raw) = overrides.split();
            let outcome = run_sweep(&load(file.as_deref(), raw)?, jobs)?;
            for p in &outcome.points {
                println!("{:<40} {}", p.label, describe(&p.summary));
            }
            println!(
                "{} points -> {}",
                outcome.points.len(),
                outcome.dir.display()
            );
            Ok(exit::OK)
        }
        Command::Adaptivity(o) => {
            let (file, mut raw) = o.split();
            raw.experiment = Some(ExperimentKind::Adaptivity);
            let outcome = run_experiment(&load(file.as_deref(), raw)?)?;
            println!(
                "{}  -> {}",
                describe(&outcome.summary),
                outcome.dir.display()
            );
            Ok(outcome.exit_code())
        }
        Command::Report { dir, format } => {
            let dir = dir
                .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            let path = emit_report(&dir, format)?;
            println!("{}", path.display());
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = execute(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
