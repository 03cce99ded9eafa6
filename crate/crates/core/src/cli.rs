//! Batch command-line frontend.
//!
//! Every command writes its artifacts under `--out` together with
//! `manifest.tsv`, which lists each artifact with its size and SHA-256 and
//! carries a hash of the invocation (arguments minus `--out`, plus the bytes
//! of every file the command read).
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 bad data, 4 a solver
//! failed to converge, 5 filesystem error.

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::channel::{generate_dataset, preset, ChannelError, Preset, PresetError};
use crate::correction::{
    detect_breakpoints, distance_from_rtt, fit_segmented, rtt_from_distance, CorrectionError,
    PiecewiseLinearMap,
};
use crate::energy::{daily_budget, lifetime_table, lifetime_table_tsv, EnergyError, EnergyProfile};
use crate::eval::{compare, rssi_profile, rssi_profile_tsv, sanitize, spearman, ErrorRecord, EvalError};
use crate::io::{
    import_external, read_dataset_with, write_dataset, EstimatorConfig, ExperimentConfig, IoError,
    MappingSpec, ReadOptions, SourceConfig,
};
use crate::measurement::{to_labeled_sample, Dataset};
use crate::ml::cv::{cv_score, kfold_partition, Evaluation};
use crate::ml::export::ReadModelError;
use crate::ml::{
    cross_validate, export_compact, read_compact, split, train, MlError, SearchStrategy,
    TargetMode, TrainOptions, TrainedModel, Variant,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub const MANIFEST: &str = "manifest.tsv";

#[derive(Debug, Parser)]
#[command(name = "ftmkit", version, about = "Wi-Fi FTM ranging toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scenario preset.
    Simulate(SimulateArgs),
    /// Convert an external measurement log into the native dataset format.
    Ingest(IngestArgs),
    /// Fit a piecewise-linear RTT correction map to logged data.
    FitCorrection(FitCorrectionArgs),
    /// Split, cross-validate and train distance estimators.
    Train(TrainArgs),
    /// Compare distance estimators on labeled datasets.
    Evaluate(EvaluateArgs),
    /// Average current and battery lifetime per measurement period.
    Energy(EnergyArgs),
    /// Re-encode a trained model as compact binary or JSON.
    ExportModel(ExportArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in preset: indoor-40, outdoor-20 or outdoor-40.
    #[arg(long, conflicts_with = "preset_file", required_unless_present = "preset_file")]
    preset: Option<String>,
    /// Preset TOML file.
    #[arg(long)]
    preset_file: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// External log (CSV) or native dataset file.
    #[arg(long)]
    input: PathBuf,
    /// Column mapping (TOML). Without it the input is read as a native dataset.
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Keep measurements that fail validation and report them as warnings.
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Against {
    /// Pairs of (rtt_raw, firmware rtt_est).
    Vendor,
    /// Pairs of (rtt_raw, RTT implied by the true distance).
    Truth,
}

#[derive(Debug, Args)]
struct FitCorrectionArgs {
    /// Native dataset files.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "vendor")]
    against: Against,
    /// Number of linear segments to detect.
    #[arg(long, default_value_t = 3)]
    segments: usize,
    /// Fixed breakpoints in ns (comma separated) instead of detection.
    #[arg(long, value_delimiter = ',')]
    breakpoints: Option<Vec<f64>>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Experiment configuration (TOML). Excludes the source and model flags.
    #[arg(long, conflicts_with_all = ["preset", "preset_file", "input", "variant", "budget", "strategy", "target_mode"])]
    config: Option<PathBuf>,
    /// Built-in presets to simulate as sources.
    #[arg(long, value_delimiter = ',')]
    preset: Vec<String>,
    #[arg(long)]
    preset_file: Vec<PathBuf>,
    /// Native dataset files used as sources.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Estimators to train (default: all).
    #[arg(long, value_delimiter = ',')]
    variant: Vec<Variant>,
    /// Mandatory unless the configuration file sets it.
    #[arg(long)]
    seed: Option<u64>,
    /// Candidates evaluated per estimator.
    #[arg(long)]
    budget: Option<usize>,
    /// random, coarse-grid or surrogate.
    #[arg(long)]
    strategy: Option<SearchStrategy>,
    /// absolute or correction.
    #[arg(long)]
    target_mode: Option<TargetMode>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Labeled native dataset files.
    #[arg(long, num_args = 1.., required_unless_present = "preset")]
    input: Vec<PathBuf>,
    /// Simulate a built-in preset instead of reading files.
    #[arg(long, requires = "seed", conflicts_with = "input")]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trained models (`.ftmm`); named after the file stem minus `model_`.
    #[arg(long, num_args = 1..)]
    model: Vec<PathBuf>,
    /// Correction map (TOML) used for the vendor estimate instead of the
    /// logged `dist_est`.
    #[arg(long)]
    vendor_map: Option<PathBuf>,
    /// Distance bin width of the RSSI profile, m.
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct EnergyArgs {
    /// Comma-separated periods such as `10s,1m,10m,30m,1h`.
    #[arg(long, value_delimiter = ',', default_value = "10s,1m,10m,30m,1h")]
    periods: Vec<String>,
    /// Sleep current, mA.
    #[arg(long)]
    i_sleep: Option<f64>,
    /// Average current during an FTM operation, mA.
    #[arg(long)]
    i_ftm: Option<f64>,
    /// Duration of one FTM operation, s.
    #[arg(long)]
    t_ftm: Option<f64>,
    /// Battery capacity, mAh.
    #[arg(long)]
    capacity: Option<f64>,
    /// Separate FTM current for the vendor-correction row, mA.
    #[arg(long)]
    vendor_i_ftm: Option<f64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ExportFormat {
    Binary,
    Json,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: ExportFormat,
    #[command(flatten)]
    out: OutArg,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match &e {
            IoError::Io { .. } => EXIT_IO,
            IoError::Config(_) | IoError::UnitMismatch { .. } => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<PresetError> for Failure {
    fn from(e: PresetError) -> Self {
        let code = match e {
            PresetError::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ChannelError> for Failure {
    fn from(e: ChannelError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<MlError> for Failure {
    fn from(e: MlError) -> Self {
        let code = match e {
            MlError::NotConverged(_) | MlError::FactorizationFailed | MlError::DivergedLoss => {
                EXIT_CONVERGENCE
            }
            MlError::InvalidParameter(_) | MlError::EmptySearchSpace(_) | MlError::InvalidKernel(_) => {
                EXIT_CONFIG
            }
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<CorrectionError> for Failure {
    fn from(e: CorrectionError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<EnergyError> for Failure {
    fn from(e: EnergyError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<ReadModelError> for Failure {
    fn from(e: ReadModelError) -> Self {
        match e {
            ReadModelError::Io(e) => Failure {
                code: EXIT_IO,
                message: e.to_string(),
            },
            ReadModelError::Format(e) => Failure::data(format!("model file: {e}")),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let invocation = invocation_args(&argv);
    match execute(cli.command, invocation) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Arguments after the program name with `--out` and its value removed.
fn invocation_args(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

/// Collects artifacts for one output directory and writes the manifest.
struct Artifacts {
    dir: PathBuf,
    hasher: Sha256,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path, invocation: &[String]) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let mut hasher = Sha256::new();
        for a in invocation {
            hasher.update(a.as_bytes());
            hasher.update([0u8]);
        }
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            hasher,
            files: Vec::new(),
        })
    }

    /// Folds the contents of an input into the configuration hash.
    fn input(&mut self, bytes: &[u8]) {
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    fn read_input(&mut self, path: &Path) -> Result<(), Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
        self.input(&bytes);
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let p = self.path(name);
        std::fs::write(&p, bytes).map_err(|e| Failure::io(&p, e))?;
        self.record(name);
        Ok(())
    }

    /// Registers a file some other writer already put in the directory.
    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    fn finish(mut self) -> Result<(), Failure> {
        self.files.sort();
        let mut text = format!("#config_sha256\t{}\n", hex(&self.hasher.finalize()));
        text.push_str("path\tbytes\tsha256\n");
        for f in &self.files {
            let p = self.dir.join(f);
            let bytes = std::fs::read(&p).map_err(|e| Failure::io(&p, e))?;
            let _ = writeln!(text, "{f}\t{}\t{}", bytes.len(), hex(&Sha256::digest(&bytes)));
        }
        let p = self.dir.join(MANIFEST);
        std::fs::write(&p, text).map_err(|e| Failure::io(&p, e))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn execute(cmd: Command, invocation: Vec<String>) -> Result<(), Failure> {
    match cmd {
        Command::Simulate(a) => simulate(a, &invocation),
        Command::Ingest(a) => ingest(a, &invocation),
        Command::FitCorrection(a) => fit_correction(a, &invocation),
        Command::Train(a) => train_cmd(a, &invocation),
        Command::Evaluate(a) => evaluate(a, &invocation),
        Command::Energy(a) => energy(a, &invocation),
        Command::ExportModel(a) => export_model(a, &invocation),
    }
}

fn load_preset(name: Option<&str>, file: Option<&Path>, art: &mut Artifacts) -> Result<Preset, Failure> {
    match (name, file) {
        (Some(n), _) => Ok(preset(n)?),
        (None, Some(p)) => {
            art.read_input(p)?;
            Ok(Preset::from_path(p)?)
        }
        (None, None) => Err(Failure::config("either --preset or --preset-file is required")),
    }
}

fn dataset_file_name(name: &str) -> String {
    format!("{}.ftm", sanitize(name))
}

fn simulate(a: SimulateArgs, inv: &[String]) -> Result<(), Failure> {
    let mut art = Artifacts::new(&a.out.out, inv)?;
    let p = load_preset(a.preset.as_deref(), a.preset_file.as_deref(), &mut art)?.with_seed(a.seed);
    let ds = generate_dataset(&p.spec)?;
    let name = dataset_file_name(&ds.name);
    write_dataset(&ds, &art.path(&name))?;
    art.record(&name);
    art.finish()
}

fn ingest(a: IngestArgs, inv: &[String]) -> Result<(), Failure> {
    let mut art = Artifacts::new(&a.out.out, inv)?;
    art.read_input(&a.input)?;
    let opts = ReadOptions { lenient: a.lenient };
    let outcome = match &a.mapping {
        Some(m) => {
            art.read_input(m)?;
            import_external(&a.input, &MappingSpec::from_path(m)?, opts)?
        }
        None => read_dataset_with(&a.input, opts)?,
    };
    let name = dataset_file_name(&outcome.dataset.name);
    write_dataset(&outcome.dataset, &art.path(&name))?;
    art.record(&name);
    let mut report = String::from("line\tmessage\n");
    for w in &outcome.warnings {
        let _ = writeln!(report, "{}\t{}", w.line, w.message);
        eprintln!("warning: line {}: {}", w.line, w.message);
    }
    art.write("ingest_warnings.tsv", report.as_bytes())?;
    art.finish()
}

fn read_inputs(paths: &[PathBuf], art: &mut Artifacts) -> Result<Vec<Dataset>, Failure> {
    paths
        .iter()
        .map(|p| {
            art.read_input(p)?;
            let outcome = read_dataset_with(p, ReadOptions::default())?;
            for w in &outcome.warnings {
                eprintln!("warning: {}: line {}: {}", p.display(), w.line, w.message);
            }
            Ok(outcome.dataset)
        })
        .collect()
}

fn fit_correction(a: FitCorrectionArgs, inv: &[String]) -> Result<(), Failure> {
    let mut art = Artifacts::new(&a.out.out, inv)?;
    let datasets = read_inputs(&a.input, &mut art)?;
    let pairs: Vec<(f64, f64)> = datasets
        .iter()
        .flat_map(|d| &d.measurements)
        .filter_map(|m| match a.against {
            Against::Vendor => m.rtt_est.map(|e| (m.rtt_raw, e)),
            Against::Truth => m.true_distance.map(|d| (m.rtt_raw, rtt_from_distance(d))),
        })
        .collect();
    if pairs.is_empty() {
        let what = match a.against {
            Against::Vendor => "rtt_est",
            Against::Truth => "true_distance",
        };
        return Err(Failure::data(format!("no measurement carries {what}")));
    }
    let breakpoints = match &a.breakpoints {
        Some(b) => b.clone(),
        None => {
            if a.segments < 2 {
                return Err(Failure::config("--segments must be >= 2"));
            }
            detect_breakpoints(&pairs, a.segments)?
        }
    };
    let fit = fit_segmented(&pairs, &breakpoints).map_err(|e| match e {
        CorrectionError::UnsortedBreakpoints => Failure::config(e.to_string()),
        e => e.into(),
    })?;
    let toml = toml::to_string(&fit.map).map_err(|e| Failure::data(e.to_string()))?;
    art.write("correction.toml", toml.as_bytes())?;

    let mut report = String::from("segment\tlower_ns\tupper_ns\tslope\tintercept_ns\tcount\trmse_ns\n");
    let bps = fit.map.breakpoints();
    for (i, seg) in fit.map.segments().iter().enumerate() {
        let lo = if i == 0 { f64::NEG_INFINITY } else { bps[i - 1] };
        let hi = bps.get(i).copied().unwrap_or(f64::INFINITY);
        let _ = writeln!(
            report,
            "{i}\t{lo:.3}\t{hi:.3}\t{:.6}\t{:.6}\t{}\t{:.6}",
            seg.slope, seg.intercept, fit.counts[i], fit.rmse[i]
        );
    }
    art.write("correction_report.tsv", report.as_bytes())?;
    art.finish()
}

/// Flag-based `train` arguments as an experiment configuration.
fn config_from_flags(a: &TrainArgs) -> Result<ExperimentConfig, Failure> {
    let seed = a
        .seed
        .ok_or_else(|| Failure::config("--seed is required"))?;
    let mut sources: Vec<SourceConfig> = a
        .preset
        .iter()
        .map(|p| SourceConfig::Preset { preset: p.clone() })
        .collect();
    sources.extend(a.preset_file.iter().map(|p| SourceConfig::PresetFile {
        preset_file: p.clone(),
    }));
    sources.extend(a.input.iter().map(|p| SourceConfig::Path { path: p.clone() }));
    let variants = if a.variant.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variant.clone()
    };
    let mut cfg = ExperimentConfig {
        seed,
        out: None,
        target_mode: a.target_mode.unwrap_or_default(),
        sources,
        split: Default::default(),
        cv: Default::default(),
        estimators: variants.into_iter().map(EstimatorConfig::new).collect(),
    };
    if let Some(b) = a.budget {
        cfg.cv.budget = b;
    }
    if let Some(s) = a.strategy {
        cfg.cv.strategy = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_sources(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Dataset>, Failure> {
    cfg.sources
        .iter()
        .map(|s| match s {
            SourceConfig::Preset { preset: name } => {
                Ok(generate_dataset(&preset(name)?.with_seed(cfg.seed).spec)?)
            }
            SourceConfig::PresetFile { preset_file } => {
                let p = load_preset(None, Some(preset_file), art)?.with_seed(cfg.seed);
                Ok(generate_dataset(&p.spec)?)
            }
            SourceConfig::Path { path } => Ok(read_inputs(std::slice::from_ref(path), art)?.remove(0)),
        })
        .collect()
}

fn train_cmd(a: TrainArgs, inv: &[String]) -> Result<(), Failure> {
    let (cfg, config_bytes) = match &a.config {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Failure::io(p, e))?;
            let cfg = ExperimentConfig::from_path(p)?;
            let cfg = match a.seed {
                Some(seed) => ExperimentConfig { seed, ..cfg },
                None => cfg,
            };
            (cfg, Some(bytes))
        }
        None => (config_from_flags(&a)?, None),
    };
    let mut art = Artifacts::new(&a.out.out, inv)?;
    if let Some(b) = &config_bytes {
        art.input(b);
    }
    let datasets = load_sources(&cfg, &mut art)?;

    // split labeled measurements per source, keeping the test part as files
    let labeled: Vec<Vec<_>> = datasets
        .iter()
        .map(|d| {
            d.measurements
                .iter()
                .filter(|m| to_labeled_sample(m).is_ok())
                .cloned()
                .collect()
        })
        .collect();
    for (i, (l, d)) in labeled.iter().zip(&datasets).enumerate() {
        if l.is_empty() {
            return Err(Failure::data(format!(
                "source {i} (`{}`) has no measurement with frames and true_distance",
                d.name
            )));
        }
    }
    let parts = split(&labeled, &cfg.split_spec())?;
    for (i, (test, d)) in parts.test.iter().zip(&datasets).enumerate() {
        let ds = Dataset {
            name: d.name.clone(),
            scenario: d.scenario,
            measurements: test.clone(),
        };
        let name = format!("test_{i}_{}", dataset_file_name(&d.name));
        write_dataset(&ds, &art.path(&name))?;
        art.record(&name);
    }
    let train_set: Vec<_> = parts
        .merged_train()
        .iter()
        .map(|m| to_labeled_sample(m).expect("filtered above"))
        .collect();

    let mut summary = String::from("variant\tcv_rmse_m\tcandidates\tparameters\n");
    for est in &cfg.estimators {
        let base = TrainOptions {
            hyperparams: est.base_hyperparams(cfg.seed)?,
            target_mode: cfg.target_mode,
        };
        let space = est.hyper_space();
        let cv = cfg.cv_config(est);
        let (best, history) = if space.params.is_empty() {
            let folds = kfold_partition(train_set.len(), cv.folds, cv.seed);
            let score = cv_score(&train_set, &base, &folds)?;
            let eval = Evaluation {
                candidate: Default::default(),
                score,
            };
            (base, vec![eval])
        } else {
            let outcome = cross_validate(&train_set, &base, &space, &cv)?;
            (outcome.best, outcome.history)
        };
        let model = train(&train_set, &best)?;
        let v = est.variant.as_str();
        art.write(&format!("model_{v}.ftmm"), &export_compact(&model))?;
        art.write(&format!("cv_{v}.tsv"), cv_report(&history).as_bytes())?;
        let best_score = history
            .iter()
            .map(|e| e.score)
            .fold(f64::INFINITY, f64::min);
        let params = serde_json::to_string(&best.hyperparams).map_err(|e| Failure::data(e.to_string()))?;
        let _ = writeln!(summary, "{v}\t{best_score:.6}\t{}\t{params}", history.len());
    }
    art.write("train_summary.tsv", summary.as_bytes())?;
    art.finish()
}

/// One row per evaluated candidate in search order, best marked with 1.
fn cv_report(history: &[Evaluation]) -> String {
    let names: Vec<&String> = history
        .first()
        .map(|e| e.candidate.keys().collect())
        .unwrap_or_default();
    let best = history
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, e)| match acc {
            Some((_, s)) if s <= e.score => acc,
            _ => Some((i, e.score)),
        })
        .map(|(i, _)| i);
    let mut out = String::from("eval");
    for n in &names {
        let _ = write!(out, "\t{n}");
    }
    out.push_str("\tcv_rmse_m\tbest\n");
    for (i, e) in history.iter().enumerate() {
        let _ = write!(out, "{i}");
        for n in &names {
            let _ = write!(out, "\t{}", e.candidate[*n]);
        }
        let _ = writeln!(out, "\t{:.6}\t{}", e.score, u8::from(best == Some(i)));
    }
    out
}

fn model_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    stem.strip_prefix("model_").map(str::to_string).unwrap_or(stem)
}

fn evaluate(a: EvaluateArgs, inv: &[String]) -> Result<(), Failure> {
    let mut art = Artifacts::new(&a.out.out, inv)?;
    let datasets = match &a.preset {
        Some(name) => {
            let seed = a.seed.ok_or_else(|| Failure::config("--seed is required with --preset"))?;
            vec![generate_dataset(&preset(name)?.with_seed(seed).spec)?]
        }
        None => read_inputs(&a.input, &mut art)?,
    };
    let mut models: Vec<(String, TrainedModel)> = Vec::new();
    for p in &a.model {
        art.read_input(p)?;
        let name = model_name(p);
        if ["raw", "vendor", "own"].contains(&name.as_str()) || models.iter().any(|(n, _)| *n == name) {
            return Err(Failure::config(format!("duplicate estimator name `{name}`")));
        }
        models.push((name, read_compact(p)?));
    }
    let vendor_map: Option<PiecewiseLinearMap> = match &a.vendor_map {
        Some(p) => {
            art.read_input(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
            Some(toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    if !(a.resolution > 0.0 && a.resolution.is_finite()) {
        return Err(Failure::config("--resolution must be > 0"));
    }

    let labeled: Vec<_> = datasets
        .iter()
        .flat_map(|d| d.measurements.iter().map(move |m| (d.scenario, m)))
        .filter_map(|(sc, m)| to_labeled_sample(m).ok().map(|s| (sc, m, s)))
        .collect();
    if labeled.is_empty() {
        return Err(Failure::data("no measurement with frames and true_distance"));
    }
    let all_dist_est = labeled.iter().all(|(_, m, _)| m.dist_est.is_some());
    let all_own_est = labeled.iter().all(|(_, m, _)| m.own_est.is_some());

    let mut records = Vec::new();
    for (sc, m, s) in &labeled {
        let mut push = |name: &str, est: f64| {
            records.push(ErrorRecord::new(name, s.true_distance, est, *sc, m.bandwidth));
        };
        push("raw", distance_from_rtt(m.rtt_raw));
        match &vendor_map {
            Some(map) => push("vendor", distance_from_rtt(map.apply(m.rtt_raw)).max(0.0)),
            None if all_dist_est => push("vendor", m.dist_est.expect("checked")),
            None => {}
        }
        if all_own_est {
            push("own", m.own_est.expect("checked"));
        }
        for (name, model) in &models {
            push(name, model.predict(s.rtt_raw, s.mean_rssi));
        }
    }
    let report = compare(&records)?;
    for p in report.write(&art.dir).map_err(|e| Failure::io(&art.dir, e))? {
        let name = p.file_name().expect("file path").to_string_lossy().into_owned();
        art.record(&name);
    }

    let merged = Dataset {
        name: "evaluation".into(),
        scenario: datasets[0].scenario,
        measurements: datasets.iter().flat_map(|d| d.measurements.clone()).collect(),
    };
    let profile = rssi_profile(&merged, a.resolution)?;
    art.write("rssi_profile.tsv", rssi_profile_tsv(&profile).as_bytes())?;

    let (dist, rssi): (Vec<f64>, Vec<f64>) = labeled.iter().map(|(_, _, s)| (s.true_distance, s.mean_rssi)).unzip();
    let rho = spearman(&dist, &rssi);
    let corr = match rho {
        Some(r) => format!("distance_rssi_spearman\n{r:.6}\n"),
        None => "distance_rssi_spearman\nNA\n".to_string(),
    };
    art.write("correlation.tsv", corr.as_bytes())?;
    print!("{}", report.summary_tsv());
    art.finish()
}

fn parse_period(text: &str) -> Result<f64, Failure> {
    let t = text.trim();
    let d = humantime::parse_duration(t).map_err(|e| Failure::config(format!("period `{t}`: {e}")))?;
    Ok(d.as_secs_f64())
}

fn energy(a: EnergyArgs, inv: &[String]) -> Result<(), Failure> {
    let mut art = Artifacts::new(&a.out.out, inv)?;
    let d = EnergyProfile::default();
    let profile = EnergyProfile {
        i_sleep: a.i_sleep.unwrap_or(d.i_sleep),
        i_ftm_avg: a.i_ftm.unwrap_or(d.i_ftm_avg),
        t_ftm: a.t_ftm.unwrap_or(d.t_ftm),
        battery_capacity: a.capacity.unwrap_or(d.battery_capacity),
    };
    let periods = a
        .periods
        .iter()
        .map(|p| parse_period(p))
        .collect::<Result<Vec<_>, _>>()?;
    if periods.is_empty() {
        return Err(Failure::config("no periods given"));
    }
    let rows = lifetime_table(
        &profile,
        &[("regression-tree", None), ("vendor", a.vendor_i_ftm)],
        &periods,
    )?;
    let table = lifetime_table_tsv(&rows);
    art.write("energy.tsv", table.as_bytes())?;

    let mut budget = String::from("period_s\te_idle_mah_per_day\te_ftm_mah_per_day\tidle_time_fraction\n");
    for &p in &periods {
        let b = daily_budget(&profile, p)?;
        let _ = writeln!(
            budget,
            "{p}\t{:.4}\t{:.4}\t{:.6}",
            b.e_idle, b.e_ftm, b.idle_time_fraction
        );
    }
    art.write("energy_budget.tsv", budget.as_bytes())?;
    print!("{table}");
    art.finish()
}

fn export_model(a: ExportArgs, inv: &[String]) -> Result<(), Failure> {
    let mut art = Artifacts::new(&a.out.out, inv)?;
    art.read_input(&a.model)?;
    let model = read_compact(&a.model)?;
    let stem = model_name(&a.model);
    match a.format {
        ExportFormat::Binary => art.write(&format!("model_{stem}.ftmm"), &export_compact(&model))?,
        ExportFormat::Json => {
            let mut text = serde_json::to_string_pretty(&model).map_err(|e| Failure::data(e.to_string()))?;
            text.push('\n');
            art.write(&format!("model_{stem}.json"), text.as_bytes())?;
        }
    }
    art.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<String> {
        std::iter::once("ftmkit").chain(s.iter().copied()).map(String::from).collect()
    }

    #[test]
    fn out_is_not_part_of_the_invocation() {
        let inv = invocation_args(&args(&["energy", "--out", "a", "--periods", "1m", "--out=b"]));
        assert_eq!(inv, ["energy", "--periods", "1m"]);
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(run(args(&["simulate", "--out", "x"])), EXIT_CONFIG);
        assert_eq!(run(args(&["nonsense"])), EXIT_CONFIG);
        assert_eq!(run(args(&["--help"])), 0);
    }

    #[test]
    fn periods_parse_with_units() {
        assert_eq!(parse_period("10s").unwrap(), 10.0);
        assert_eq!(parse_period("1m").unwrap(), 60.0);
        assert_eq!(parse_period("1h").unwrap(), 3600.0);
        assert!(parse_period("soon").is_err());
    }

    #[test]
    fn model_names_drop_prefix() {
        assert_eq!(model_name(Path::new("run/model_tree.ftmm")), "tree");
        assert_eq!(model_name(Path::new("mine.ftmm")), "mine");
    }

    #[test]
    fn cv_report_marks_first_best() {
        let h = vec![
            Evaluation { candidate: [("c".to_string(), 1.0)].into(), score: 2.0 },
            Evaluation { candidate: [("c".to_string(), 2.0)].into(), score: 1.0 },
            Evaluation { candidate: [("c".to_string(), 3.0)].into(), score: 1.0 },
        ];
        let r = cv_report(&h);
        let lines: Vec<&str> = r.lines().collect();
        assert_eq!(lines[0], "eval\tc\tcv_rmse_m\tbest");
        assert!(lines[2].ends_with("\t1"));
        assert!(lines[3].ends_with("\t0"));
    }
}
