mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_rates, RunConfig};

/// Capacity regions and coded scheduling for the two-user erasure broadcast
/// channel with hidden Markov memory.
#[derive(Parser)]
#[command(name = "bec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pareto frontier of the L-th order region (CSV)
    Region(Flags),
    /// Queue-network simulation (JSON report)
    Simulate(Flags),
    /// Prediction gap versus window length (CSV)
    Forgetting(Flags),
    /// Decodability check of a dumped trace
    Verify {
        /// trace file (JSON lines)
        #[arg(value_name = "TRACE")]
        input: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Canonical form of an action distribution
    Canonicalize(Flags),
    /// Window probabilities and erasure statistics (CSV)
    DumpWindowTable(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// JSON run configuration; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// feedback window length
    #[arg(long = "L")]
    len: Option<usize>,
    /// weight of R1 (single region point, or the point used by --scale / probabilistic)
    #[arg(long, conflicts_with = "sweep")]
    lambda: Option<f64>,
    /// number of weights in the frontier sweep
    #[arg(long)]
    sweep: Option<usize>,
    /// arrival rates R1,R2
    #[arg(long, value_parser = parse_rates)]
    rates: Option<[f64; 2]>,
    /// arrival rates as a multiple of the region point at --lambda
    #[arg(long, conflicts_with = "rates")]
    scale: Option<f64>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// main output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// maxweight | probabilistic | probabilistic:<dist.json>
    #[arg(long)]
    scheduler: Option<String>,
    /// action distribution JSON
    #[arg(long)]
    dist: Option<PathBuf>,
    /// region: witness JSON output
    #[arg(long)]
    witness: Option<PathBuf>,
    /// region: sandwich values JSON output
    #[arg(long)]
    sandwich: Option<PathBuf>,
    /// simulate: per-slot CSV output
    #[arg(long)]
    csv: Option<PathBuf>,
    /// simulate: trace output (JSON lines)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// forgetting: history length
    #[arg(long)]
    horizon: Option<usize>,
    /// forgetting: sampled histories
    #[arg(long)]
    samples: Option<usize>,
}

impl Flags {
    fn resolve(self) -> Result<RunConfig, error::CliError> {
        let file = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            model: self.model,
            len: self.len,
            lambda: self.lambda,
            sweep: self.sweep,
            rates: self.rates,
            scale: self.scale,
            slots: self.slots,
            seed: self.seed,
            out: self.out,
            scheduler: self.scheduler,
            dist: self.dist,
            witness: self.witness,
            sandwich: self.sandwich,
            csv: self.csv,
            trace: self.trace,
            horizon: self.horizon,
            samples: self.samples,
        };
        Ok(flags.over(file))
    }
}

fn run(cli: Cli) -> Result<(), error::CliError> {
    match cli.command {
        Command::Region(f) => commands::region(&f.resolve()?),
        Command::Simulate(f) => commands::simulate(&f.resolve()?),
        Command::Forgetting(f) => commands::forgetting(&f.resolve()?),
        Command::Verify { input, flags } => {
            let mut cfg = flags.resolve()?;
            if input.is_some() {
                cfg.trace = input;
            }
            commands::verify(&cfg)
        }
        Command::Canonicalize(f) => commands::canonicalize(&f.resolve()?),
        Command::DumpWindowTable(f) => commands::dump_window_table(&f.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
