use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod files;

/// Neural SDF reconstruction from oriented point clouds and images.
#[derive(Parser, Debug)]
#[command(name = "sdfforge", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset from a scene spec.
    Synth {
        /// Scene spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normals, orientation, downsampling and boundary points.
    Preprocess {
        /// Dataset directory holding points.ply and cameras.txt.
        #[arg(long)]
        data: PathBuf,
        /// Raw cloud (default: <data>/points.ply).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Cameras file (default: <data>/cameras.txt).
        #[arg(long)]
        cameras: Option<PathBuf>,
    },
    /// Fit the networks to a preprocessed dataset.
    Train(TrainArgs),
    /// Extract the zero level set as a mesh in scene units.
    Mesh {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
        /// Output mesh, `.obj` or `.ply` (default: <run>/mesh.obj).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render the training views with the learned light field.
    Render {
        #[arg(long)]
        run: PathBuf,
        /// Cameras file in scene units (default: the run's dataset cameras).
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Output directory (default: <run>/renders).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a mesh or point cloud against ground truth, or images by PSNR.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    run: PathBuf,
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from the checkpoint in the run directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set train.weights.hessian=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted mesh (.obj/.ply), point cloud (.ply), image (.ppm) or image directory.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Resampling density in scene units.
    #[arg(long)]
    density: Option<f64>,
    /// Distance threshold as a multiple of the density.
    #[arg(long)]
    distance_factor: Option<f64>,
    #[arg(long)]
    angle: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report file (key=value block).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &sdfforge::Error) -> u8 {
    use sdfforge::Error::*;
    match e.root() {
        Config(_) | UnsupportedActivation(_) => 2,
        NumericFault { .. } | TangentialRay { .. } | UndefinedMetric(_) => 4,
        NonConvergence(_) => 5,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let force = cli.force;
    let result = match cli.command {
        Command::Synth { spec, out } => commands::synth(&spec, &out, force),
        Command::Preprocess { data, input, cameras } => commands::preprocess(&data, input.as_deref(), cameras.as_deref(), force),
        Command::Train(a) => commands::train(&a, force),
        Command::Mesh { run, resolution, out } => commands::mesh(&run, resolution, out.as_deref(), force),
        Command::Render { run, cameras, out } => commands::render(&run, cameras.as_deref(), out.as_deref(), force),
        Command::Eval(a) => commands::eval(&a, force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
