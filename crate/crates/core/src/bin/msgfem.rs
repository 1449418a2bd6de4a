use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use msgfem::config::{RunConfig, VariantSet};
use msgfem::experiments::{run, Task};

#[derive(Parser)]
#[command(name = "msgfem", version, about = "Multiscale spectral GFEM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multiscale approximation and preconditioned iterative solve of one problem.
    Solve(Common),
    /// Error decay in the number of local eigenfunctions and in the oversampling.
    Decay(Common),
    /// Iteration counts of Richardson and GMRES over contrast and coarse size.
    Iterate(Common),
    /// Local spectra and large-mode counts on selected subdomains.
    Spectrum(Common),
    /// Fill-in and wall time of the local eigensolve in 3D (single thread).
    BenchFillin(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file overriding the experiment defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["full", "ring", "both"])]
    variant: Option<String>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Solve(a) => (Task::Solve, a),
        Command::Decay(a) => (Task::Decay, a),
        Command::Iterate(a) => (Task::Iterate, a),
        Command::Spectrum(a) => (Task::Spectrum, a),
        Command::BenchFillin(a) => (Task::BenchFillin, a),
    };
    match execute(task, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(task: Task, args: Common) -> msgfem::Result<()> {
    let preset = RunConfig::preset(task.experiment());
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load_over(&preset, path)?,
        None => preset,
    };
    cfg.experiment = task.experiment();
    if let Some(v) = &args.variant {
        cfg.variants = v.parse::<VariantSet>()?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if task == Task::BenchFillin && cfg.jobs != 1 {
        warn!("bench-fillin times a single thread; ignoring jobs = {}", cfg.jobs);
        cfg.jobs = 1;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| msgfem::Error::Config(format!("thread pool: {e}")))?;
    let out = cfg.output_dir.clone();
    let manifest = pool.install(|| run(task, &cfg, &out))?;
    for f in &manifest.files {
        info!("wrote {}", f.display());
    }
    Ok(())
}
