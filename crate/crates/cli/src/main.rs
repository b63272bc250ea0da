//! `viewalign` command-line tool: dataset generation, training, evaluation,
//! candidate export, camera-orientation sweeps and SVG plots, all seeded and
//! reproducible.
//!
//! Every command accepts `--config <file.json>` holding the same parameters as
//! its flags (flags override the file). A handful of globals can also come
//! from environment variables with the `VIEWALIGN_` prefix. Errors print a
//! single JSON line on stderr and exit nonzero.

mod commands;
mod plot;
mod util;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "viewalign", version, about)]
struct Cli {
    /// Worker threads for generation/evaluation (0 = rayon default).
    #[arg(long, global = true, env = "VIEWALIGN_JOBS", default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-view dataset container.
    Generate(commands::generate::GenerateArgs),
    /// Train a model on a dataset container and write a checkpoint.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint over random view subsets.
    Eval(commands::eval::EvalArgs),
    /// Export a viewpoint setup and its assignment candidates as JSON.
    Candidates(commands::candidates::CandidatesArgs),
    /// Train and evaluate across camera-system orientations.
    Sweep(commands::sweep::SweepArgs),
    /// Render a training history or metrics CSV as a self-contained SVG.
    Plot(commands::plot_cmd::PlotArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Candidates(args) => commands::candidates::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Plot(args) => commands::plot_cmd::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    let result = if cli.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build()
            .expect("thread pool");
        let jobs = cli.jobs;
        pool.install(move || {
            let _ = jobs;
            run(cli)
        })
    } else {
        run(cli)
    };
    if let Err(err) = result {
        // single-line machine-parsable error
        eprintln!(
            "{}",
            serde_json::json!({ "error": format!("{err:#}") })
        );
        std::process::exit(1);
    }
}
