mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kge_core::dataset::DatasetError;
use kge_core::evaluation::{EvalError, TiePolicy};
use kge_core::io::CheckpointError;
use kge_core::models::{ModelError, ModelKind, Norm};
use kge_core::sampling::SamplingMode;
use kge_core::training::TrainError;

#[derive(Parser, Debug)]
#[command(
    name = "kge",
    version,
    about = "Translation-based knowledge graph embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a dataset and print split sizes and relation statistics.
    Prepare(PrepareArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test (or validation) split.
    Eval(EvalArgs),
    /// Write relation vectors [r; alpha; beta] as TSV.
    ExportRelations(ExportArgs),
    /// Parameter counts and seconds per epoch across models.
    Bench(BenchArgs),
    /// Closed-form parameter counts.
    Params(ParamsArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Train split, one `head<TAB>relation<TAB>tail` per line.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Multiplicity above which a side counts as "many".
    #[arg(long, default_value_t = kge_core::dataset::DEFAULT_CATEGORY_THRESHOLD)]
    threshold: f64,
    /// Also write the statistics as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InitAs {
    /// Continue training the checkpointed model.
    Resume,
    /// Start TransF from a TransE checkpoint.
    TransfInit,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_with::<ModelKind>, default_value = "transf")]
    model: ModelKind,
    #[arg(long, default_value_t = 100)]
    dim_e: usize,
    /// Relation space dimension; defaults to --dim-e.
    #[arg(long)]
    dim_r: Option<usize>,
    #[arg(long, default_value_t = 5)]
    bases: usize,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    #[arg(long, value_parser = parse_with::<Norm>, default_value = "l1")]
    norm: Norm,
    #[arg(long, value_parser = parse_with::<SamplingMode>, default_value = "bern")]
    sampling: SamplingMode,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    /// TransE epochs before TransF training.
    #[arg(long, default_value_t = 1000)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 4096)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    negatives: usize,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    filter_negatives: Switch,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    normalize_projections: Switch,
    /// Clamp entity embeddings to the unit ball.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    bound_entities: Switch,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Check validation MRR every N epochs and stop after --patience checks
    /// without improvement.
    #[arg(long)]
    early_stopping: Option<usize>,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long = "as", value_enum, default_value_t = InitAs::Resume)]
    init_as: InitAs,
    /// Accept an --init checkpoint built on a different vocabulary.
    #[arg(long)]
    allow_vocab_mismatch: bool,
    /// Output checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-epoch TSV log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = parse_with::<TiePolicy>, default_value = "mean")]
    tie_policy: TiePolicy,
    /// Evaluate the validation split instead of the test split.
    #[arg(long)]
    on_valid: bool,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    allow_vocab_mismatch: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Export the translation vector r alone.
    #[arg(long)]
    translation_only: bool,
    #[arg(long)]
    allow_vocab_mismatch: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Benchmark on this dataset instead of a synthetic one.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    entities: usize,
    #[arg(long, default_value_t = 200)]
    relations: usize,
    #[arg(long, default_value_t = 20000)]
    triples: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_with::<ModelKind>, default_value = "transe,transh,transr,transf")]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 100)]
    dim_e: usize,
    #[arg(long)]
    dim_r: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    bases: Vec<usize>,
    #[arg(long, value_parser = parse_with::<Norm>, default_value = "l1")]
    norm: Norm,
    #[arg(long, default_value_t = 4096)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report parameter counts only.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParamsArgs {
    #[arg(long)]
    entities: u64,
    #[arg(long)]
    relations: u64,
    #[arg(long, default_value_t = 100)]
    dim_e: u64,
    #[arg(long)]
    dim_r: Option<u64>,
    #[arg(long, default_value_t = 5)]
    bases: u64,
}

fn parse_with<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Maps an error to the documented exit status.
fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return match e {
                TrainError::NonFiniteLoss { .. } | TrainError::Diverged { .. } => EXIT_NUMERIC,
                TrainError::Model(m) => model_status(m),
                TrainError::InvalidConfig(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Model(m) => model_status(m),
                _ => EXIT_DATA,
            };
        }
        if let Some(m) = cause.downcast_ref::<ModelError>() {
            return model_status(m);
        }
        if cause.is::<DatasetError>()
            || cause.is::<CheckpointError>()
            || cause.is::<std::io::Error>()
        {
            return EXIT_DATA;
        }
        if cause.is::<commands::UsageError>() {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}

fn model_status(e: &ModelError) -> u8 {
    match e {
        ModelError::NonFinite(_) | ModelError::DegenerateNormal(_) => EXIT_NUMERIC,
        ModelError::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::ExportRelations(a) => commands::export_relations(a),
        Command::Bench(a) => commands::bench(a),
        Command::Params(a) => commands::params(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
