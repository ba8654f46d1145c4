//! Batch command-line interface.
//!
//! Every subcommand writes only below `--out`, starting with a
//! `config.json` snapshot of its arguments. All randomness derives from the
//! single `--seed` flag.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::augment::{augment_all, AugmentConfig, AugmentError};
use crate::catalog::ActionClass;
use crate::dbn::{finetune, pretrain, DbnError, DbnModel, PretrainConfig, Propagate};
use crate::eval::{argmax, evaluate_model, select_thresholds, ClassScorer, EvalError, ThresholdSearch, ThresholdSet};
use crate::geometry::{encode_annotation, normalize_scale, ImageAnnotation};
use crate::io::{
    annotations_to_string, load_annotations, load_model, model_to_string, AnnotationError, ModelFileError,
};
use crate::optim::TrainError;
use crate::pipeline::{prepare_training_set, train_on_features, PipelineError, TrainRecipe};
use crate::rbm::RbmError;
use crate::seed::derive_seed;
use crate::synth::{generate, SynthConfig, SynthError, TemplateSet};

/// Exit status for a failure class.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

fn from_train(e: &TrainError) -> CliError {
    match e {
        TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
        TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

impl From<DbnError> for CliError {
    fn from(e: DbnError) -> Self {
        match &e {
            DbnError::Train(t) => from_train(t),
            DbnError::Rbm(RbmError::InvalidConfig(_)) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Model(m) => m.into(),
            PipelineError::Augment(AugmentError::InvalidConfig(m)) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        from_train(&e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "stillact", version, about = "Still-image action recognition from part and object detections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled synthetic annotation file
    SynthGen(SynthGenArgs),
    /// Encode annotations into 90-dim feature vectors
    Encode(EncodeArgs),
    /// Normalise and augment labelled annotations
    Augment(AugmentArgs),
    /// Greedy layer-wise pre-training; writes a model with a zero softmax head
    Pretrain(TrainCmdArgs),
    /// Fine-tune a pre-trained model
    Finetune(FinetuneCmdArgs),
    /// Pre-train and fine-tune
    Train(TrainCmdArgs),
    /// Per-image class scores and predicted class
    Predict(ScoreArgs),
    /// Per-class AP, mAP and accuracy on a labelled file
    Evaluate(ScoreArgs),
    /// Cross-validated per-entity detector score thresholds
    SelectThresholds(SelectArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Output directory; nothing is written elsewhere
    #[arg(long)]
    out: PathBuf,
    /// Master seed for every random stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SynthGenArgs {
    #[command(flatten)]
    common: Common,
    /// Images generated for each action class
    #[arg(long, default_value_t = 100)]
    images_per_class: usize,
    /// Probability that a non-head entity is missed
    #[arg(long, default_value_t = 0.0)]
    miss_prob: f64,
    /// Coordinate noise (px)
    #[arg(long, default_value_t = 0.0)]
    coord_sigma: f64,
    /// Probability of a spurious detection per absent object kind
    #[arg(long, default_value_t = 0.0)]
    false_positive_prob: f64,
    /// Alternative template file
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct EncodeArgs {
    #[command(flatten)]
    common: Common,
    /// Annotation file (JSON lines)
    #[arg(long)]
    data: PathBuf,
    /// Threshold file from select-thresholds (default: keep every detection)
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct AugmentArgs {
    #[command(flatten)]
    common: Common,
    /// Annotation file (JSON lines)
    #[arg(long)]
    data: PathBuf,
    /// Jitter bound (px, after head-length normalisation)
    #[arg(long, default_value_t = 10)]
    jitter: u32,
    /// Jittered copies per orientation
    #[arg(long, default_value_t = 10)]
    replicas: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum PropagateArg {
    Mean,
    Sample,
}

/// Training hyperparameters shared by pretrain, finetune, train and
/// select-thresholds.
#[derive(Args, Debug, Clone, Serialize)]
struct Hyper {
    /// Pre-training epochs per RBM layer
    #[arg(long, default_value_t = 100)]
    epochs_pretrain: usize,
    /// Contrastive-divergence learning rate
    #[arg(long, default_value_t = 0.01)]
    lr_pretrain: f64,
    /// Fine-tuning epochs
    #[arg(long, default_value_t = 1000)]
    epochs_finetune: usize,
    /// Fine-tuning learning rate
    #[arg(long, default_value_t = 0.1)]
    lr_finetune: f64,
    /// Mini-batch size for both phases
    #[arg(long, default_value_t = 20)]
    batch: usize,
    /// Jitter bound (px, after head-length normalisation)
    #[arg(long, default_value_t = 10)]
    jitter: u32,
    /// Jittered copies per orientation; 0 disables augmentation
    #[arg(long, default_value_t = 10)]
    replicas: usize,
    /// Layer-1 activity passed to layer 2 during pre-training
    #[arg(long, value_enum, default_value_t = PropagateArg::Mean)]
    propagate: PropagateArg,
}

impl Hyper {
    fn recipe(&self, seed: u64) -> TrainRecipe {
        let mut r = TrainRecipe::from_seed(seed);
        for layer in [&mut r.pretrain.layer1, &mut r.pretrain.layer2] {
            layer.epochs = self.epochs_pretrain;
            layer.learning_rate = self.lr_pretrain;
            layer.batch_size = self.batch;
        }
        r.pretrain.propagate = match self.propagate {
            PropagateArg::Mean => Propagate::Mean,
            PropagateArg::Sample => Propagate::Sample,
        };
        r.finetune.epochs = self.epochs_finetune;
        r.finetune.learning_rate = self.lr_finetune;
        r.finetune.batch_size = self.batch;
        r.augment = r.augment.filter(|_| self.replicas > 0).map(|a| AugmentConfig {
            jitter_px: self.jitter,
            replicas: self.replicas,
            ..a
        });
        r
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct TrainCmdArgs {
    #[command(flatten)]
    common: Common,
    /// Annotation file (JSON lines)
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FinetuneCmdArgs {
    #[command(flatten)]
    common: Common,
    /// Annotation file (JSON lines)
    #[arg(long)]
    data: PathBuf,
    /// Pre-trained model file
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    /// Annotation file (JSON lines)
    #[arg(long)]
    data: PathBuf,
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Threshold file from select-thresholds (default: keep every detection)
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    /// Annotation file (JSON lines)
    #[arg(long)]
    data: PathBuf,
    /// Cross-validation folds
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Serialize)]
struct Snapshot<'a, A> {
    command: &'a str,
    version: &'a str,
    args: &'a A,
}

/// Output directory guard: every file goes through here.
struct OutDir(PathBuf);

impl OutDir {
    fn create<A: Serialize>(common: &Common, command: &str, args: &A) -> Result<Self, CliError> {
        fs::create_dir_all(&common.out)
            .map_err(|e| CliError::Data(format!("{}: cannot create output directory: {e}", common.out.display())))?;
        let out = OutDir(common.out.clone());
        let snapshot = Snapshot { command, version: env!("CARGO_PKG_VERSION"), args };
        out.write("config.json", &(serde_json::to_string_pretty(&snapshot).expect("arguments serialise") + "\n"))?;
        Ok(out)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.0.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

fn read_annotations(path: &Path) -> Result<Vec<ImageAnnotation>, CliError> {
    load_annotations(path).map_err(|e| match e {
        AnnotationError::Io { .. } => CliError::Data(e.to_string()),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn read_model(path: &Path) -> Result<DbnModel<f64>, CliError> {
    load_model::<f64>(path).map_err(|e| match e {
        ModelFileError::Io { .. } => CliError::Data(e.to_string()),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn read_thresholds(path: Option<&Path>) -> Result<ThresholdSet, CliError> {
    let Some(path) = path else {
        return Ok(ThresholdSet::permissive());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), e.line())))
}

fn trace_lines<T: std::fmt::Display>(out: &mut String, stage: &str, metric: &str, trace: &[T]) {
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(out, "{stage} epoch={} {metric}={v}", i + 1);
    }
}

fn synth_gen(args: &SynthGenArgs) -> Result<(), CliError> {
    let templates = match &args.templates {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            TemplateSet::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => TemplateSet::builtin(),
    };
    let config = SynthConfig {
        miss_prob: args.miss_prob,
        coord_sigma: args.coord_sigma,
        false_positive_prob: args.false_positive_prob,
        ..SynthConfig::noisy(
            args.images_per_class,
            args.miss_prob,
            args.coord_sigma,
            derive_seed(args.common.seed, "synth"),
        )
    };
    config.validate()?;
    let out = OutDir::create(&args.common, "synth-gen", args)?;
    let data = generate(&templates, &config)?;
    out.write("annotations.jsonl", &annotations_to_string(&data))?;
    log::info!("wrote {} annotations", data.len());
    Ok(())
}

#[derive(Serialize)]
struct FeatureLine<'a> {
    image_id: &'a str,
    label: Option<&'a str>,
    features: &'a [f64],
}

fn encode(args: &EncodeArgs) -> Result<(), CliError> {
    let data = read_annotations(&args.data)?;
    let thresholds = read_thresholds(args.thresholds.as_deref())?;
    let out = OutDir::create(&args.common, "encode", args)?;
    let mut text = String::new();
    for a in &data {
        let f = encode_annotation(a, &thresholds)
            .map_err(|e| CliError::Data(format!("{}: image {}: {e}", args.data.display(), a.image_id)))?;
        let line = FeatureLine { image_id: &a.image_id, label: a.label.map(ActionClass::name), features: f.as_slice() };
        text.push_str(&serde_json::to_string(&line).expect("features serialise"));
        text.push('\n');
    }
    out.write("features.jsonl", &text)?;
    Ok(())
}

fn augment_cmd(args: &AugmentArgs) -> Result<(), CliError> {
    let data = read_annotations(&args.data)?;
    let config = AugmentConfig {
        jitter_px: args.jitter,
        replicas: args.replicas,
        seed: derive_seed(args.common.seed, "augment"),
    };
    if config.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    let out = OutDir::create(&args.common, "augment", args)?;
    let mut normalized = Vec::with_capacity(data.len());
    for a in &data {
        normalized.push(
            normalize_scale(a)
                .map_err(|e| CliError::Data(format!("{}: image {}: {e}", args.data.display(), a.image_id)))?,
        );
    }
    let samples = augment_all(&normalized, &config).map_err(|e| match e {
        AugmentError::MissingLabel(id) => CliError::Data(format!("{}: image {id} has no label", args.data.display())),
        AugmentError::InvalidConfig(m) => CliError::Usage(m),
    })?;
    out.write("augmented.jsonl", &annotations_to_string(&samples))?;
    Ok(())
}

fn pretrain_cmd(args: &TrainCmdArgs) -> Result<(), CliError> {
    let data = read_annotations(&args.data)?;
    let recipe = args.hyper.recipe(args.common.seed);
    let out = OutDir::create(&args.common, "pretrain", args)?;
    let (features, _) = prepare_training_set::<f64>(&data, recipe.augment.as_ref(), &ThresholdSet::permissive())?;
    let pre = pretrain(&features, recipe.architecture, &recipe.pretrain)?;
    let mut metrics = String::new();
    trace_lines(&mut metrics, "pretrain.layer1", "recon_mse", &pre.layer1_trace);
    trace_lines(&mut metrics, "pretrain.layer2", "recon_mse", &pre.layer2_trace);
    let mut model = DbnModel::from_layers(pre.layer1, pre.layer2, recipe.architecture.classes)?;
    model.metadata.seed = Some(recipe.seed);
    model.metadata.pretrain = Some(recipe.pretrain);
    out.write("metrics.log", &metrics)?;
    out.write("model.json", &model_to_string(&model))?;
    Ok(())
}

fn finetune_cmd(args: &FinetuneCmdArgs) -> Result<(), CliError> {
    let data = read_annotations(&args.data)?;
    let pre = read_model(&args.model)?;
    let recipe = args.hyper.recipe(args.common.seed);
    let out = OutDir::create(&args.common, "finetune", args)?;
    let (features, labels) = prepare_training_set::<f64>(&data, recipe.augment.as_ref(), &ThresholdSet::permissive())?;
    let metadata = pre.metadata.clone();
    let classes = pre.head.bias.len();
    let (mut model, trace) = finetune(pre.layer1, pre.layer2, &features, &labels, classes, &recipe.finetune)?;
    model.metadata.seed = metadata.seed;
    model.metadata.pretrain = metadata.pretrain;
    let mut metrics = String::new();
    trace_lines(&mut metrics, "finetune", "loss", &trace);
    out.write("metrics.log", &metrics)?;
    out.write("model.json", &model_to_string(&model))?;
    Ok(())
}

fn train_cmd(args: &TrainCmdArgs) -> Result<(), CliError> {
    let data = read_annotations(&args.data)?;
    let recipe = args.hyper.recipe(args.common.seed);
    let out = OutDir::create(&args.common, "train", args)?;
    let (features, labels) = prepare_training_set::<f64>(&data, recipe.augment.as_ref(), &ThresholdSet::permissive())?;
    log::info!("training on {} samples", labels.len());
    let outcome = train_on_features(&features, &labels, &recipe)?;
    let mut metrics = String::new();
    trace_lines(&mut metrics, "pretrain.layer1", "recon_mse", &outcome.layer1_trace);
    trace_lines(&mut metrics, "pretrain.layer2", "recon_mse", &outcome.layer2_trace);
    trace_lines(&mut metrics, "finetune", "loss", &outcome.finetune_trace);
    out.write("metrics.log", &metrics)?;
    out.write("model.json", &model_to_string(&outcome.model))?;
    Ok(())
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    image_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn predict_cmd(args: &ScoreArgs) -> Result<(), CliError> {
    let data = read_annotations(&args.data)?;
    let model = read_model(&args.model)?;
    let thresholds = read_thresholds(args.thresholds.as_deref())?;
    let out = OutDir::create(&args.common, "predict", args)?;
    let mut text = String::new();
    for a in &data {
        let line = match encode_annotation(a, &thresholds) {
            Ok(f) => {
                let scores = model.class_scores(f.as_slice());
                let predicted = ActionClass::from_index(argmax(&scores)).map(ActionClass::name);
                PredictionLine { image_id: &a.image_id, predicted, scores: Some(scores), error: None }
            }
            Err(e) => {
                log::warn!("skipping image {}: {e}", a.image_id);
                PredictionLine { image_id: &a.image_id, predicted: None, scores: None, error: Some(e.to_string()) }
            }
        };
        text.push_str(&serde_json::to_string(&line).expect("prediction serialises"));
        text.push('\n');
    }
    out.write("predictions.jsonl", &text)?;
    Ok(())
}

fn evaluate_cmd(args: &ScoreArgs) -> Result<(), CliError> {
    let data = read_annotations(&args.data)?;
    let model = read_model(&args.model)?;
    let thresholds = read_thresholds(args.thresholds.as_deref())?;
    let out = OutDir::create(&args.common, "evaluate", args)?;
    let report = evaluate_model(&model, &data, &thresholds)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.data.display())))?;
    out.write("report.txt", &report.to_text())?;
    out.write("report.json", &(report.to_json() + "\n"))?;
    Ok(())
}

#[derive(Serialize)]
struct SelectionSummary<'a> {
    cv_map: f64,
    grids: &'a [Vec<f64>],
}

fn select_cmd(args: &SelectArgs) -> Result<(), CliError> {
    let data = read_annotations(&args.data)?;
    let recipe = args.hyper.recipe(args.common.seed);
    let out = OutDir::create(&args.common, "select-thresholds", args)?;
    let search = ThresholdSearch { folds: args.folds, seed: derive_seed(args.common.seed, "thresholds") };
    let mut fold = 0u64;
    let mut failure = None;
    let selection = select_thresholds(
        &data,
        |part| {
            fold += 1;
            let r = TrainRecipe {
                pretrain: PretrainConfig {
                    init_seed: derive_seed(recipe.pretrain.init_seed, &format!("fold{fold}")),
                    ..recipe.pretrain
                },
                ..recipe
            };
            let trained = prepare_training_set::<f64>(part, r.augment.as_ref(), &ThresholdSet::permissive())
                .and_then(|(features, labels)| train_on_features(&features, &labels, &r));
            match trained {
                Ok(outcome) => Ok(outcome.model),
                Err(e) => {
                    let message = e.to_string();
                    failure = Some(CliError::from(e));
                    Err(message.into())
                }
            }
        },
        search,
    )
    .map_err(|e| failure.take().unwrap_or_else(|| e.into()))?;
    out.write(
        "thresholds.json",
        &(serde_json::to_string_pretty(&selection.thresholds).expect("thresholds serialise") + "\n"),
    )?;
    let summary = SelectionSummary { cv_map: selection.cv_map, grids: &selection.grids };
    out.write("selection.json", &(serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n"))?;
    Ok(())
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::SynthGen(a) => synth_gen(a),
        Command::Encode(a) => encode(a),
        Command::Augment(a) => augment_cmd(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::SelectThresholds(a) => select_cmd(a),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Logging verbosity comes from `STILLACT_LOG`.
pub fn run<S: AsRef<str>>(argv: &[S]) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("STILLACT_LOG", "error")).try_init();
    let cli = match Cli::try_parse_from(argv.iter().map(|s| s.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
