use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use g2inst_cli::commands::{run, Command, PlotArgs};
use g2inst_cli::config::{Overrides, RunConfig};
use g2inst_cli::CliError;

#[derive(Parser)]
#[command(name = "g2inst", version, about = "Invariant SU(2) G2-instantons on the AC manifold M(1,1)")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Flat TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Seed for randomized checks.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Relative tolerance of the β bisection.
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Linearisations of the rescaled system at its fixed points.
    FixedPoints,
    /// Tune β to the AC value and export the metric profile.
    TuneMetric,
    /// Integrate one connection (f0, h0) from the singular orbit.
    Integrate,
    /// Solve for h0(f0) so that the connection converges to the limit state.
    Shoot,
    /// Shoot along a grid of f0.
    Sweep,
    /// Run all verification suites; nonzero exit on any failure.
    Verify,
    /// Render a CSV table as an SVG line chart.
    Plot {
        input: PathBuf,
        /// Comma-separated y columns (default: all but the first).
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (cmd, plot) = match cli.verb {
        Verb::FixedPoints => (Command::FixedPoints, PlotArgs::default()),
        Verb::TuneMetric => (Command::TuneMetric, PlotArgs::default()),
        Verb::Integrate => (Command::Integrate, PlotArgs::default()),
        Verb::Shoot => (Command::Shoot, PlotArgs::default()),
        Verb::Sweep => (Command::Sweep, PlotArgs::default()),
        Verb::Verify => (Command::Verify, PlotArgs::default()),
        Verb::Plot { input, columns } => (Command::Plot, PlotArgs { input: Some(input), columns }),
    };
    let ov = Overrides { out: cli.out, seed: cli.seed, tol: cli.tol, jobs: cli.jobs };
    let result = RunConfig::load(cli.config.as_deref(), &ov).and_then(|cfg| run(cmd, &cfg, &plot));
    match result {
        Ok(o) => match o.failure {
            None => ExitCode::SUCCESS,
            Some(msg) => {
                eprintln!("g2inst {}: {msg}", cmd.name());
                ExitCode::from(1)
            }
        },
        Err(e) => {
            eprintln!("g2inst {}: {e}", cmd.name());
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &CliError) -> u8 {
    e.exit_code() as u8
}
