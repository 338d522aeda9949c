//! `sg2v`: subgraph embedding pipeline driver.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 1 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(sg2v::Error),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::Core(e) => match e {
                sg2v::Error::Io { .. } | sg2v::Error::Numerical(_) => 1,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<sg2v::Error> for CliError {
    fn from(e: sg2v::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tu,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Wl,
    Deep,
}

impl From<Mode> for sg2v::KernelMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Wl => sg2v::KernelMode::Wl,
            Mode::Deep => sg2v::KernelMode::Deep,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sg2v", version, about = "Rooted-subgraph embeddings and WL graph kernels")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// TU dataset directory or JSON-lines file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Tu)]
    pub format: Format,
    /// TU file prefix; defaults to the directory name.
    #[arg(long)]
    pub name: Option<String>,
    /// Keep edge direction; neighbours become out-neighbours.
    #[arg(long)]
    pub directed: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the rooted-subgraph vocabulary.
    Vocab {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        /// Intern each level's subgraphs to short ids before the next level.
        #[arg(long)]
        compress: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train subgraph embeddings.
    Train {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 32)]
        dimensions: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 5)]
        neg_count: usize,
        #[arg(long, default_value_t = 0.025)]
        lr_initial: f64,
        #[arg(long, default_value_t = 1e-4)]
        lr_min: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Lock-free multi-threaded updates; faster but not reproducible.
        #[arg(long)]
        nondeterministic: bool,
        #[arg(long)]
        output: PathBuf,
        /// Per-epoch loss log; defaults to `<output>.loss`.
        #[arg(long)]
        loss_log: Option<PathBuf>,
    },
    /// Compute a graph kernel matrix.
    Kernel {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Deep)]
        mode: Mode,
        /// Embedding file, required for the deep kernel.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Cosine-normalize the kernel.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        output: PathBuf,
        /// Companion `graph_id, class` file; defaults to `<output>.labels`.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Repeated stratified SVM evaluation of a kernel.
    Classify {
        #[arg(long)]
        kernel: PathBuf,
        /// Defaults to `<kernel>.labels`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "dataset")]
        dataset: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0.9)]
        train_frac: f64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value = "0.01,0.1,1,10,100", value_parser = config::parse_grid)]
        c_grid: std::vec::Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report file; printed to stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Affinity propagation over a kernel.
    Cluster {
        #[arg(long)]
        kernel: PathBuf,
        /// Ground-truth `graph_id, class` file for the ARI.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        damping: f64,
        /// `median` or a number.
        #[arg(long, default_value = "median")]
        preference: String,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize the artifacts found in a directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Run every stage from one `key = value` config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_logging() {
    let level = std::env::var("SG2V_LOG").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    // A pipeline config may raise the thread count.
    let pipeline_cfg = match &cli.command {
        Command::Pipeline { config } => Some(config::PipelineConfig::load(config)?),
        _ => None,
    };
    let threads = pipeline_cfg
        .as_ref()
        .map_or(cli.threads, |c| c.threads.max(cli.threads));
    if threads == 0 {
        return Err(CliError::Usage("threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Vocab {
            data,
            degree,
            compress,
            output,
        } => commands::vocab(&data, degree, compress, &output),
        Command::Train {
            data,
            vocab,
            dimensions,
            epochs,
            neg_count,
            lr_initial,
            lr_min,
            seed,
            nondeterministic,
            output,
            loss_log,
        } => {
            let cfg = sg2v::TrainingConfig {
                dimensions,
                epochs,
                neg_count,
                lr_initial,
                lr_min,
                seed,
                deterministic: !nondeterministic,
                threads: cli.threads,
                ..Default::default()
            };
            let loss_log = loss_log.unwrap_or_else(|| commands::sibling(&output, "loss"));
            commands::train(&data, &vocab, cfg, &output, &loss_log)
        }
        Command::Kernel {
            data,
            vocab,
            mode,
            embeddings,
            normalize,
            output,
            labels,
        } => {
            let labels = labels.unwrap_or_else(|| commands::sibling(&output, "labels"));
            commands::kernel(
                &data,
                &vocab,
                mode.into(),
                embeddings.as_deref(),
                normalize,
                &output,
                &labels,
            )
        }
        Command::Classify {
            kernel,
            labels,
            dataset,
            repeats,
            train_frac,
            folds,
            c_grid,
            tol,
            seed,
            output,
        } => {
            let cfg = sg2v::EvalConfig {
                repeats,
                train_frac,
                folds,
                c_grid,
                seed,
                tol,
            };
            let labels = labels.unwrap_or_else(|| commands::sibling(&kernel, "labels"));
            commands::classify(&kernel, &labels, &dataset, &cfg, output.as_deref()).map(|_| ())
        }
        Command::Cluster {
            kernel,
            truth,
            damping,
            preference,
            max_iter,
            window,
            output,
        } => {
            let preference =
                match preference.as_str() {
                    "median" => sg2v::Preference::Median,
                    v => sg2v::Preference::Value(v.parse().map_err(|_| {
                        CliError::Usage(format!("--preference must be `median` or a number, got {v:?}"))
                    })?),
                };
            let params = sg2v::ApParams {
                damping,
                preference,
                max_iter,
                convergence_window: window,
            };
            commands::cluster(&kernel, truth.as_deref(), &params, output.as_deref()).map(|_| ())
        }
        Command::Report { dir } => {
            print!("{}", commands::report(&dir)?);
            Ok(())
        }
        Command::Pipeline { .. } => commands::pipeline(&pipeline_cfg.expect("loaded above")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
