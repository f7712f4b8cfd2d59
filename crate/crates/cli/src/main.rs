//! `v2model` command-line front end.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use v2model::Error;

#[derive(Debug, Parser)]
#[command(name = "v2model", version, about = "Hierarchical V1/V2 model: training, experiments and figures")]
struct Cli {
    /// TOML file with run settings (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelFlags {
    /// Grid geometry: 6x6 (stride 4) or 11x11 (stride 2).
    #[arg(long)]
    grid: Option<String>,
    /// V2 stage: sc or ica.
    #[arg(long)]
    v2: Option<String>,
    /// Sparse-coding regularization coefficient.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of training patches to sample.
    #[arg(long)]
    patches: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit PCA and a V2 stage on natural images and write a model bundle.
    Train {
        #[command(flatten)]
        model: ModelFlags,
        /// Directory of PNG/PGM natural images.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write V2 responses for a set of patches.
    Encode {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        input: data::PatchInput,
        #[arg(long)]
        out: PathBuf,
    },
    /// Delete V1 complex regions and reconstruct through each model.
    Complete {
        /// One or more bundles; the first supplies the V1/PCA columns.
        #[arg(long = "bundle", required = true)]
        bundles: Vec<PathBuf>,
        #[command(flatten)]
        input: data::PatchInput,
        /// Deletion sizes in grid cells.
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        sizes: Vec<usize>,
        /// Number of patches rendered as reconstruction strips.
        #[arg(long, default_value_t = 8)]
        strips: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Texture-vs-noise modulation index of each model.
    Modulation {
        #[arg(long = "bundle", required = true)]
        bundles: Vec<PathBuf>,
        /// Texture corpus: one subdirectory of images per class.
        #[arg(long)]
        textures: PathBuf,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        /// Also report the V1 complex-energy stage of the first bundle.
        #[arg(long)]
        v1: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Five-fold linear SVM accuracy on V2 responses.
    Classify {
        #[arg(long = "bundle", required = true)]
        bundles: Vec<PathBuf>,
        #[command(flatten)]
        task: data::TaskInput,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Z-score features using training-fold statistics.
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Response kurtosis and sparsity, with box plot and histograms.
    Stats {
        #[arg(long = "bundle", required = true)]
        bundles: Vec<PathBuf>,
        #[command(flatten)]
        input: data::PatchInput,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oval-glyph SVGs and max-activating patches for V2 units.
    Visualize {
        #[arg(long)]
        bundle: PathBuf,
        /// `all`, a single index, or a half-open range such as `0..20`.
        #[arg(long, default_value = "0..20")]
        units: String,
        /// Optional patches for max-activation grids.
        #[command(flatten)]
        input: data::OptionalPatchInput,
        #[arg(long, default_value_t = 6)]
        top: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a procedural desk corpus: dead-leaves images and textures.
    Synth {
        #[arg(long, default_value_t = 40)]
        images: usize,
        #[arg(long, default_value_t = 4)]
        textures_per_class: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the 1944 line-angle stimuli as PGM files with a manifest.
    Lines {
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } => 1,
        Error::Io { .. } | Error::Data(_) | Error::Bundle(_) => 2,
        Error::Numerical(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
