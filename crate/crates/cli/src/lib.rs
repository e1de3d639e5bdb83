//! The `patterncraft` command line: corpus synthesis, classifier training,
//! auto-labelling, generator training, generation, experiment runs and the
//! REST service.
//!
//! Every subcommand that draws random numbers takes a mandatory `--seed`, and
//! nothing but `--out` is written to, so a rerun with the same flags writes
//! the same bytes. Wall-clock timings go to stderr only.

use std::fs;
use std::io;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use patterncraft_core::autoencoder::{AeDataset, AeError, TrainSummary};
use patterncraft_core::forest::{autolabel_detailed, ForestConfig, ForestError, ForestModel, DEFAULT_AUTOLABEL_STRIDE};
use patterncraft_core::level::{annotations_to_examples, Chunk, LevelError, LevelGrid, PatternAnnotation};
use patterncraft_core::Autoencoder;
use patterncraft_eval::corpus::{make_synthetic_corpus, Corpus, CorpusSpec};
use patterncraft_eval::experiments::classifier_examples;
use patterncraft_eval::{EvalError, ExperimentConfig, ExperimentReport};
use patterncraft_service::pipeline::{ae_config, parent_windows};
use patterncraft_service::ServiceConfig;
use serde_json::json;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "patterncraft", version, about = "Learn a designer's pattern vocabulary and generate level structure")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus whose annotations come from rule oracles.
    SynthCorpus(SynthArgs),
    /// Fit the random forest on a corpus's annotations plus sampled negatives.
    TrainClassifier(TrainClassifierArgs),
    /// Label every level of a corpus with a trained classifier.
    Autolabel(AutolabelArgs),
    /// Train the label-conditioned autoencoder.
    TrainGenerator(TrainGeneratorArgs),
    /// Generate one chunk of structure for a label.
    Generate(GenerateArgs),
    /// Run the cross-validated experiments of a config file.
    Evaluate(EvaluateArgs),
    /// Serve the REST API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in spec name (small, default, all-patterns) or a JSON spec file.
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// Corpus directory as written by synth-corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub forest_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AutolabelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// classifier.json from train-classifier.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_AUTOLABEL_STRIDE)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorMode {
    /// Corpus annotations plus any auto-labels.
    Full,
    /// Label-free windows only; the result can serve as a transfer parent.
    NoLabels,
    /// Fine-tune from a label-free parent.
    Transfer,
}

#[derive(Debug, Args)]
pub struct TrainGeneratorArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub mode: GeneratorMode,
    /// Weights of a label-free model (required for transfer).
    #[arg(long)]
    pub parent: Option<PathBuf>,
    /// annotations.json from autolabel, added to the labelled examples.
    #[arg(long)]
    pub auto: Option<PathBuf>,
    /// Defaults to 300, or 150 for no-labels.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Column stride of the label-free windows.
    #[arg(long, default_value_t = 8)]
    pub window_stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator weights; the manifest is read from beside them.
    #[arg(long)]
    pub model: PathBuf,
    /// Level file giving the context chunk.
    #[arg(long)]
    pub level: PathBuf,
    #[arg(long)]
    pub x: usize,
    #[arg(long)]
    pub y: usize,
    #[arg(long)]
    pub label: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write generation.json and chunk.lvl here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Keep wall-clock columns in the written reports.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PATTERNCRAFT_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "PATTERNCRAFT_HOST", default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, env = "PATTERNCRAFT_DATA_DIR", default_value = "patterncraft-data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "PATTERNCRAFT_MAX_PARALLEL_JOBS", default_value_t = 1)]
    pub max_parallel_jobs: usize,
}

/// A failure with its exit code class and a short machine-readable code.
#[derive(Debug, thiserror::Error)]
#[error("error[{code}]: {message}")]
pub struct CliError {
    pub exit: i32,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self { exit: EXIT_VALIDATION, code, message: message.into() }
    }

    pub fn runtime(code: &'static str, message: impl Into<String>) -> Self {
        Self { exit: EXIT_RUNTIME, code, message: message.into() }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::NotFound {
            CliError::validation("MissingInput", e.to_string())
        } else {
            CliError::runtime("Io", e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::validation("InvalidInput", e.to_string())
    }
}

impl From<LevelError> for CliError {
    fn from(e: LevelError) -> Self {
        let code = match &e {
            LevelError::UnknownLabel(_) => "UnknownLabel",
            LevelError::UnknownLevel(_) => "UnknownLevel",
            LevelError::UnknownGlyph { .. } => "UnknownGlyph",
            LevelError::OutOfBounds { .. } | LevelError::AnnotationOutOfBounds { .. } => "OutOfBounds",
            LevelError::Vocabulary(_) => "InvalidVocabulary",
            _ => "InvalidLevel",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<ForestError> for CliError {
    fn from(e: ForestError) -> Self {
        let code = match e {
            ForestError::Io(io) => return io.into(),
            ForestError::InsufficientData(_) | ForestError::SingleClass => "InsufficientData",
            ForestError::VocabularyMismatch { .. } => "VocabularyMismatch",
            ForestError::Format(_) | ForestError::NotTrained => "InvalidModel",
            _ => "InvalidRequest",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<AeError> for CliError {
    fn from(e: AeError) -> Self {
        let code = match e {
            AeError::Level(l) => return l.into(),
            AeError::Io(io) => return io.into(),
            AeError::Nn(_) => return CliError::runtime("Network", e.to_string()),
            AeError::UnknownLabel(_) => "UnknownLabel",
            AeError::VocabularyMismatch { .. } => "VocabularyMismatch",
            AeError::IncompatibleParent(_) => "IncompatibleParent",
            AeError::EmptyDataset => "InsufficientData",
            AeError::InvalidConfig(_) => "InvalidRequest",
            AeError::NotTrained | AeError::Format(_) | AeError::ShapeMismatch { .. } => "InvalidModel",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Level(l) => l.into(),
            EvalError::Forest(f) => f.into(),
            EvalError::Autoencoder(a) => a.into(),
            EvalError::Io(io) => io.into(),
            EvalError::Json(j) => j.into(),
            EvalError::InvalidSpec(m) => CliError::validation("InvalidSpec", m),
            EvalError::InsufficientData(m) => CliError::validation("InsufficientData", m),
            EvalError::Table(m) => CliError::validation("InvalidTable", m),
            other => CliError::runtime("Evaluation", other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn read_corpus(dir: &Path) -> CliResult<Corpus> {
    if !dir.is_dir() {
        return Err(CliError::validation("MissingInput", format!("corpus directory {} does not exist", dir.display())));
    }
    Ok(Corpus::read(dir)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime("Json", e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::runtime("Io", format!("{}: {e}", path.display())))
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime("Io", format!("{}: {e}", dir.display())))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SynthCorpus(a) => synth_corpus(&a),
        Command::TrainClassifier(a) => train_classifier(&a),
        Command::Autolabel(a) => autolabel(&a),
        Command::TrainGenerator(a) => train_generator(&a),
        Command::Generate(a) => generate(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Serve(a) => serve(&a),
    }
}

pub fn synth_corpus(a: &SynthArgs) -> CliResult<()> {
    let spec = match CorpusSpec::named(&a.spec) {
        Some(spec) => spec,
        None if Path::new(&a.spec).is_file() => serde_json::from_str(&fs::read_to_string(&a.spec)?)?,
        None => {
            return Err(CliError::validation("InvalidSpec", format!("{:?} is neither a built-in spec nor a file", a.spec)))
        }
    };
    let corpus = make_synthetic_corpus(&spec, a.seed)?;
    let problems = corpus.verify();
    if !problems.is_empty() {
        return Err(CliError::validation("OracleCheck", problems.join("; ")));
    }
    create_out(&a.out)?;
    corpus.write(&a.out).map_err(|e| CliError::runtime("Io", e.to_string()))?;
    eprintln!("{} levels, {} annotations", corpus.levels.len(), corpus.annotations.len());
    Ok(())
}

pub fn train_classifier(a: &TrainClassifierArgs) -> CliResult<()> {
    let corpus = read_corpus(&a.corpus)?;
    let mut config = ForestConfig::default();
    if let Some(n) = a.forest_size {
        config.forest_size = n;
    }
    let examples = classifier_examples(&corpus, a.seed)?;
    let model = ForestModel::fit(&examples, &corpus.vocabulary, config, a.seed)?;
    create_out(&a.out)?;
    model.save(&a.out.join("classifier.json")).map_err(|e| CliError::runtime("Io", e.to_string()))?;
    let summary = json!({
        "seed": a.seed,
        "examples": examples.len(),
        "trees": model.trees().len(),
        "train_accuracy": model.accuracy(&examples),
        "vocabulary_hash": corpus.vocabulary.hash(),
    });
    write_json(&a.out.join("summary.json"), &summary)
}

pub fn autolabel(a: &AutolabelArgs) -> CliResult<()> {
    let corpus = read_corpus(&a.corpus)?;
    let model = ForestModel::load(&a.model, Some(&corpus.vocabulary))?;
    let detailed = autolabel_detailed(&model, &corpus.levels, a.stride);
    let plain: Vec<&PatternAnnotation> = detailed.iter().map(|d| &d.annotation).collect();
    create_out(&a.out)?;
    write_json(&a.out.join("annotations.json"), &plain)?;
    write_json(&a.out.join("autolabel.json"), &detailed)?;
    eprintln!("{} auto annotations", detailed.len());
    Ok(())
}

fn labelled_examples(corpus: &Corpus, auto: Option<&Path>) -> CliResult<Vec<patterncraft_core::level::LabeledChunk>> {
    let mut annotations = corpus.annotations.clone();
    if let Some(path) = auto {
        let extra: Vec<PatternAnnotation> = serde_json::from_str(&fs::read_to_string(path)?)?;
        for ann in extra {
            let level = corpus.level(&ann.level).ok_or_else(|| LevelError::UnknownLevel(ann.level.clone()))?;
            ann.validate(level, &corpus.vocabulary)?;
            if !annotations.contains(&ann) {
                annotations.push(ann);
            }
        }
    }
    Ok(annotations_to_examples(&annotations, &corpus.levels, &corpus.vocabulary)?)
}

pub fn train_generator(a: &TrainGeneratorArgs) -> CliResult<()> {
    let corpus = read_corpus(&a.corpus)?;
    let n = corpus.vocabulary.len();
    let (mut model, examples) = match a.mode {
        GeneratorMode::NoLabels => {
            if a.parent.is_some() || a.auto.is_some() {
                return Err(CliError::validation("InvalidRequest", "no-labels takes neither --parent nor --auto"));
            }
            let config = ae_config(0, a.seed, a.max_epochs.unwrap_or(150));
            let windows = parent_windows(&corpus.levels, a.window_stride)
                .map_err(|e| CliError::validation("InvalidLevel", e.body.message))?;
            (Autoencoder::build(config, None)?, windows)
        }
        GeneratorMode::Full => {
            if a.parent.is_some() {
                return Err(CliError::validation("InvalidRequest", "--parent is only used by transfer"));
            }
            let config = ae_config(n, a.seed, a.max_epochs.unwrap_or(300));
            (Autoencoder::build(config, Some(&corpus.vocabulary))?, labelled_examples(&corpus, a.auto.as_deref())?)
        }
        GeneratorMode::Transfer => {
            let parent = a.parent.as_ref().ok_or_else(|| CliError::validation("MissingInput", "transfer needs --parent"))?;
            let config = ae_config(n, a.seed, a.max_epochs.unwrap_or(300));
            let model = Autoencoder::transfer_from_file(parent, config, Some(&corpus.vocabulary))?;
            (model, labelled_examples(&corpus, a.auto.as_deref())?)
        }
    };
    let data = AeDataset::from_chunks(&examples);
    let mut losses = Vec::new();
    let summary: TrainSummary = model.train_with(&data, |_, loss| {
        losses.push(loss);
        true
    })?;
    create_out(&a.out)?;
    model.save(&a.out.join("generator.weights")).map_err(|e| CliError::runtime("Io", e.to_string()))?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    fs::write(a.out.join("loss.csv"), csv)?;
    let out = json!({
        "mode": a.mode.to_possible_value().map(|v| v.get_name().to_string()),
        "model_id": model.id(),
        "seed": a.seed,
        "examples": examples.len(),
        "epochs": summary.epochs,
        "final_loss": summary.final_loss,
        "best_loss": summary.best_loss,
        "stop": summary.stop,
    });
    write_json(&a.out.join("summary.json"), &out)?;
    eprintln!("{} epochs in {:.1}s, final loss {}", summary.epochs, summary.seconds, summary.final_loss);
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let model = Autoencoder::load(&a.model, None)?;
    let grid = LevelGrid::parse(&fs::read_to_string(&a.level)?)?;
    let chunk = Chunk::encode(&grid, a.x, a.y)?;
    let g = model.generate_named(&chunk, &a.label, a.threshold)?;
    let value = json!({
        "label": a.label,
        "x": a.x,
        "y": a.y,
        "threshold": a.threshold,
        "model_id": model.id(),
        "tiles": g.grid.rows(),
        "predicted_labels": g.predicted_labels.iter().map(|(l, s)| json!({ "label": l, "strength": s })).collect::<Vec<_>>(),
        "label_head": g.label_head,
    });
    if let Some(out) = &a.out {
        create_out(out)?;
        write_json(&out.join("generation.json"), &value)?;
        fs::write(out.join("chunk.lvl"), g.grid.to_text())?;
    }
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&value).expect("json values serialize")),
        Format::Table => {
            print!("{}", g.grid.to_text());
            for (label, strength) in &g.predicted_labels {
                println!("{label}  {strength}");
            }
        }
    }
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    config.seed = a.seed;
    let base = a.config.parent().filter(|p| !p.as_os_str().is_empty());
    let reports = patterncraft_eval::experiments::run_experiments(&config, base, &mut |msg| eprintln!("{msg}"))?;
    let reports: Vec<ExperimentReport> =
        reports.into_iter().map(|r| if a.timings { r } else { r.without_timings() }).collect();
    create_out(&a.out)?;
    for r in &reports {
        r.write(&a.out, &format!("{}-seed{}", r.experiment, r.seed)).map_err(|e| CliError::runtime("Io", e.to_string()))?;
    }
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialize")),
        Format::Table => {
            for r in &reports {
                println!("{} (seed {})", r.experiment, r.seed);
                print!("{}", r.to_table());
                for w in &r.warnings {
                    println!("warning: {w}");
                }
                println!();
            }
        }
    }
    Ok(())
}

pub fn serve(a: &ServeArgs) -> CliResult<()> {
    let config = ServiceConfig { max_parallel_jobs: a.max_parallel_jobs, ..ServiceConfig::new(&a.data_dir) };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime("Io", e.to_string()))?;
    runtime
        .block_on(patterncraft_service::serve(config, SocketAddr::new(a.host, a.port)))
        .map_err(|e| CliError::runtime("Serve", e.to_string()))
}
