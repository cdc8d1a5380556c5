//! `hexlat`: resample images onto hexagonal grids and back, score the
//! conversions, render grids, and train the hexagonal/square reference
//! networks.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 I/O error,
//! 4 malformed input file.

mod bench;
mod commands;
mod data;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hexlat", version, about, disable_help_subcommand = true)]
struct Cli {
    /// Worker threads for the data-parallel paths (rendering, bench batches).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample between square images and hexagonal grids.
    Transform(commands::TransformArgs),
    /// Paint a hexagonal grid file onto a raster image.
    Render(commands::RenderArgs),
    /// Transformation-efficiency report for one grid choice (JSON).
    Metrics(commands::MetricsArgs),
    /// Efficiency comparison across a series of hexagon radii (CSV).
    Sweep(commands::SweepArgs),
    /// Print a model's layer table and parameter counts.
    Summary(commands::SummaryArgs),
    /// Train a network on a labeled image dataset.
    Train(commands::TrainArgs),
    /// Evaluate saved weights on a dataset's test split.
    Eval(commands::EvalArgs),
    /// Measure resampling throughput in images per second.
    Bench(commands::BenchArgs),
}

fn run(command: Command) -> hexlat::Result<()> {
    match command {
        Command::Transform(args) => commands::transform(args),
        Command::Render(args) => commands::render(args),
        Command::Metrics(args) => commands::metrics(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Summary(args) => commands::summary(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Bench(args) => commands::bench(args),
    }
}

fn exit_code(err: &hexlat::Error) -> u8 {
    match err {
        hexlat::Error::Io(_) => 3,
        hexlat::Error::Format { .. } | hexlat::Error::Codec(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .ok();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
