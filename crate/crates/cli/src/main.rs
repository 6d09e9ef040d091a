//! `dea`: fit, apply and benchmark distinctive element analysis models.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dea_core::DeaError;

/// Exit codes: 2 bad arguments, 3 data error, 4 numerical failure.
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Rejected command-line or configuration input.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "dea", version, about = "Distinctive element analysis", after_long_help = config::keys_help())]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Where to write the run manifest (default: next to the primary output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Config file: `key = value` lines or a JSON object.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override one config key, e.g. `--set p=16` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Seed for clustering and weight initialization (same as `--set seed=N`).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Number of components (same as `--set p=N`).
    #[arg(short = 'p', long)]
    pub components: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Data matrix with features in rows and observations in columns (.csv, .tsv or .bin),
    /// or a folder of images with one subfolder per class.
    #[arg(long)]
    pub input: PathBuf,

    /// Override the format implied by the file extension.
    #[arg(long)]
    pub format: Option<String>,

    /// Image size HxW[xC] used when the input is an image folder.
    #[arg(long)]
    pub image_spec: Option<String>,

    /// Row normalization applied after loading: zscore, minmax or none.
    #[arg(long, default_value = "none")]
    pub normalize: String,
}

#[derive(Args, Debug, Clone)]
pub struct PlantedArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    #[arg(long, default_value_t = 400)]
    pub features: usize,
    #[arg(long, default_value_t = 40)]
    pub informative: usize,
    #[arg(long, default_value_t = 2.0)]
    pub signal: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 3)]
    pub nuisance_rank: usize,
    /// Standard deviation of the shared nuisance term in every row.
    #[arg(long, default_value_t = 1.0)]
    pub nuisance_scale: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a DEA model and write it as JSON.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Project observations onto the components of a DEA, PCA or NNMF model (P x N CSV).
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank features by the norm of their component loadings.
    Rank {
        #[arg(long)]
        model: PathBuf,
        /// Only write the best N features.
        #[arg(long)]
        top: Option<usize>,
        /// Importance cut on the normalized score: a number or `mean`.
        #[arg(long, default_value = "0.5")]
        threshold: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep only the best-ranked feature rows of a data matrix.
    Select {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        top: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write each component as a grayscale PNG.
    Export {
        #[arg(long)]
        model: PathBuf,
        /// Image size HxW[xC]; H*W*C must equal the feature count.
        #[arg(long)]
        image_spec: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated components to write.
        #[arg(long, conflicts_with = "drop")]
        keep: Option<String>,
        /// Comma-separated components to leave out.
        #[arg(long)]
        drop: Option<String>,
    },
    /// Train an ECOC classifier on projected training data and label projected test data.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        train_labels: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// When given, accuracy is reported.
        #[arg(long)]
        test_labels: Option<PathBuf>,
        #[arg(long, default_value = "none")]
        normalize: String,
        #[arg(long, default_value_t = 1e-2)]
        lambda: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Predicted labels, one per line.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a PCA or NNMF baseline model.
    Baseline {
        /// pca or nnmf
        #[arg(long)]
        method: String,
        #[command(flatten)]
        input: InputArgs,
        #[arg(short = 'p', long)]
        components: usize,
        /// NNMF multiplicative update rounds.
        #[arg(long, default_value_t = dea_core::baselines::nnmf::DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Accuracy sweep of DEA, PCA and NNMF on planted data.
    Bench {
        #[command(flatten)]
        planted: PlantedArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "dea,pca,nnmf")]
        methods: String,
        #[arg(long = "bench-components", default_value = "8,16,32")]
        bench_components: String,
        #[arg(long, default_value = "0.3,0.5,0.7")]
        fractions: String,
        /// Number of seeds, starting at --first-seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Per-run accuracies.
        #[arg(long)]
        out: PathBuf,
        /// Summary table (default: next to --out with a `_summary` suffix).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Generate a planted dataset with known informative features.
    Generate {
        #[command(flatten)]
        planted: PlantedArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels_out: Option<PathBuf>,
        /// Indices of the informative rows, one per line.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Print the default configuration file.
    Config,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<DeaError>() {
        if e.is_numerical() {
            return EXIT_NUMERICAL;
        }
        if e.is_data() {
            return EXIT_DATA;
        }
        return EXIT_USAGE;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_DATA;
    }
    EXIT_USAGE
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let manifest = cli.manifest.as_deref();
    match cli.command {
        Command::Fit { input, config, out_model } => commands::fit(&input, &config, &out_model, manifest),
        Command::Transform { model, input, out } => commands::transform(&model, &input, &out, manifest),
        Command::Rank { model, top, threshold, out } => commands::rank(&model, top, &threshold, &out, manifest),
        Command::Select { model, input, top, out } => commands::select(&model, &input, top, &out, manifest),
        Command::Export { model, image_spec, out_dir, keep, drop } => {
            commands::export(&model, &image_spec, &out_dir, keep.as_deref(), drop.as_deref(), manifest)
        }
        Command::Classify {
            model,
            train,
            train_labels,
            test,
            test_labels,
            normalize,
            lambda,
            epochs,
            seed,
            out,
        } => commands::classify(
            &commands::ClassifyArgs {
                model,
                train,
                train_labels,
                test,
                test_labels,
                normalize,
                lambda,
                epochs,
                seed,
                out,
            },
            manifest,
        ),
        Command::Baseline { method, input, components, iterations, seed, out_model } => {
            commands::baseline(&method, &input, components, iterations, seed, &out_model, manifest)
        }
        Command::Bench {
            planted,
            config,
            methods,
            bench_components,
            fractions,
            seeds,
            first_seed,
            out,
            summary,
        } => commands::bench(
            &commands::BenchArgs {
                planted,
                config,
                methods,
                components: bench_components,
                fractions,
                seeds,
                first_seed,
                out,
                summary,
            },
            manifest,
        ),
        Command::Generate { planted, seed, out, labels_out, truth_out } => {
            commands::generate(&planted, seed, &out, labels_out.as_deref(), truth_out.as_deref(), manifest)
        }
        Command::Config => {
            print!("{}", config::defaults_file());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
