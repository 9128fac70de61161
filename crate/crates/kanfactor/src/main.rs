use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};
use kanfactor::{commands, Overrides, RunConfig};
use kanfactor_core::NetKind;

/// Conditional autoencoder factor models with KAN beta networks.
#[derive(Debug, Parser)]
#[command(name = "kanfactor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic panel with planted factor structure.
    Synth(RunArgs),
    /// Fit one model on the first train/validation split.
    Train(RunArgs),
    /// Run the rolling out-of-sample backtest.
    Backtest(RunArgs),
    /// Print pooled metrics of one or more backtest reports.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Export every KAN edge of a checkpoint as a sampled curve.
    ExportSplines {
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = PossibleValuesParser::new(["kan", "mlp", "linear"]))]
    model: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    factors: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> kanfactor::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        let model = self.model.as_deref().map(str::parse::<NetKind>).transpose()?;
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            model,
            factors: self.factors.map(|k| k as usize),
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> kanfactor::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Synth(a) => commands::synth(&a.load()?, &mut out).map(drop),
        Command::Train(a) => commands::train(&a.load()?, &mut out).map(drop),
        Command::Backtest(a) => commands::backtest(&a.load()?, &mut out).map(drop),
        Command::Report { reports } => commands::report(&reports, &mut out),
        Command::ExportSplines { checkpoint, out: dir } => {
            commands::export_splines(&checkpoint, &dir, &mut out).map(drop)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
