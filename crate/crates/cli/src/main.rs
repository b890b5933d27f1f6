//! `klemu`: design, simulate, fit, predict, validate and report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure. Failures end with one line on stderr of the form
//! `klemu: error code=<n> kind=<kind>: <message>`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "klemu", version, about = "Karhunen-Loeve emulation of stochastic simulators")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, env = "KLEMU_OUT", default_value = "klemu-out")]
    out: PathBuf,
    /// Seed of the design and of the cross-validation shuffles.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Latin hypercube design over the simulator's input space.
    Doe(Overrides),
    /// Evaluate every design point under every trajectory seed.
    Simulate(Overrides),
    /// Fit the emulator to the trajectories.
    Fit(Overrides),
    /// Predict ensembles at test points or at the points of a CSV file.
    Predict {
        /// CSV of points, one column per input, with a header row.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Repeated k-fold cross-validation.
    Validate(Overrides),
    /// Compare emulators with direct simulation and write plot data and tables.
    Report {
        /// Emulator artifacts to compare (default: the one in the output directory).
        #[arg(long = "emulator")]
        emulators: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

impl Command {
    fn overrides(&self) -> &Overrides {
        match self {
            Self::Doe(o) | Self::Simulate(o) | Self::Fit(o) | Self::Validate(o) => o,
            Self::Predict { overrides, .. } | Self::Report { overrides, .. } => overrides,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        Self { code: 1, kind: "usage", message }
    }

    pub fn data(message: String) -> Self {
        Self { code: 2, kind: "data", message }
    }
}

impl From<klemu::Error> for CliError {
    fn from(e: klemu::Error) -> Self {
        use klemu::Error as E;
        let (code, kind) = match &e {
            E::Config(_) => (1, "config"),
            E::Numerical(_) => (3, "numerical"),
            E::Data(_) => (2, "data"),
            E::Domain(_) => (2, "domain"),
            E::Version { .. } => (2, "version"),
            E::Checksum { .. } => (2, "checksum"),
            E::Kind { .. } => (2, "kind"),
            E::Io(_) => (2, "io"),
            E::Serde(_) => (2, "serde"),
        };
        Self { code, kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        klemu::Error::from(e).into()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot size thread pool: {e}")))?;
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed, cli.command.overrides())?;
    let ctx = Ctx { cfg, out: cli.out };
    match &cli.command {
        Command::Doe(_) => commands::doe(&ctx),
        Command::Simulate(_) => commands::simulate(&ctx),
        Command::Fit(_) => commands::fit(&ctx),
        Command::Predict { input, .. } => commands::predict(&ctx, input.as_deref()),
        Command::Validate(_) => commands::validate(&ctx),
        Command::Report { emulators, .. } => commands::report(&ctx, emulators),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("klemu: error code=1 kind=usage: {}", one_line(first));
            return ExitCode::from(1);
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).parse_default_env().format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("klemu: error code={} kind={}: {}", e.code, e.kind, one_line(&e.message));
            ExitCode::from(e.code)
        }
    }
}
