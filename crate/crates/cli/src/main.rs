use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cylmode_cli::commands::{execute, Context};
use cylmode_cli::{Command, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "cylmode",
    version,
    about = "Mode-truncated spectral solver for flows in a cylinder"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config and CYLMODE_OUT
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Evolve the truncated mode system and write reports
    Simulate(Common),
    /// Energy inequality and mode invariance of the linear Stokes flow
    StokesTest(Common),
    /// Bounds of the linear flow started from the profile
    LinearFlow(Common),
    /// Random search for the constants of the disk inequalities
    InequalityScan(Common),
    /// Mode solver against the full 3-D reference solver
    OracleCompare(Common),
    /// Rebuild the decay report from a stored energy history
    DecayReport {
        #[command(flatten)]
        common: Common,
        /// History file (default: <out>/history.json)
        #[arg(long)]
        history: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common, history) = match cli.command {
        Sub::Simulate(c) => (Command::Simulate, c, None),
        Sub::StokesTest(c) => (Command::StokesTest, c, None),
        Sub::LinearFlow(c) => (Command::LinearFlow, c, None),
        Sub::InequalityScan(c) => (Command::InequalityScan, c, None),
        Sub::OracleCompare(c) => (Command::OracleCompare, c, None),
        Sub::DecayReport { common, history } => (Command::DecayReport, common, history),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("cylmode: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match ExperimentConfig::load(&common.config) {
        Ok(c) => c.resolve(common.out.as_deref(), common.config.parent()),
        Err(e) => {
            eprintln!("cylmode: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let ctx = Context {
        quiet: common.quiet,
        history,
    };
    match execute(cmd, &cfg, &ctx) {
        Ok(o) if o.passed => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cylmode: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
