use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use equidist_cli::manifest::Mode;
use equidist_cli::run::{run_manifest, Options};
use equidist_cli::CliError;

/// Effective equidistribution experiments driven by JSON manifests.
#[derive(Parser)]
#[command(name = "equidist", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the constant recursion.
    Ledger(Common),
    /// Direction and window selection for translation tuples.
    Schedule(Common),
    /// Horocycle correlations on the modular surface.
    Correlate(Common),
    /// Log-log decay fit of an error series.
    Fit(Common),
    /// Seeded randomized self-checks.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; overrides the manifest's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Minimum quadrature nodes for `correlate`.
    #[arg(long)]
    nodes: Option<usize>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, env = "EQUIDIST_THREADS")]
    threads: Option<usize>,
    /// Seed for randomized checks; overrides the manifest.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Ledger(c) => (Mode::Ledger, c),
        Command::Schedule(c) => (Mode::Schedule, c),
        Command::Correlate(c) => (Mode::Correlate, c),
        Command::Fit(c) => (Mode::Fit, c),
        Command::Verify(c) => (Mode::Verify, c),
    };
    match execute(mode, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(mode: Mode, common: &Common) -> Result<(), CliError> {
    if let Some(threads) = common.threads {
        if threads == 0 {
            return Err(CliError::Schema("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let options = Options {
        out: common.out.clone(),
        nodes: common.nodes,
        seed: common.seed,
    };
    let report = run_manifest(mode, &common.manifest, &options)?;
    for line in &report.lines {
        println!("{line}");
    }
    println!("wrote {} to {}", report.files.join(", "), report.out_dir.display());
    Ok(())
}
