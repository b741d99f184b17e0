//! Command-line front end: `generate`, `train`, `detect`, `eval`, `experiment`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 IO failure, 4 algorithmic or
//! degenerate-data failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{emdd_train, EmddConfig};
use crate::detectors::DetectorMode;
use crate::error::{Error, Result};
use crate::eval::{
    derive_seed, roc_curve, run_experiment, EndmemberSpec, ExperimentSpec, Metric, NegativeBags,
};
use crate::io::{self, ConceptFile, LinearFile, ModelFile, SignatureFile};
use crate::spectral::{BagSet, BackgroundStats, Regularization, WhiteningScope};
use crate::synth::{generate, SyntheticConfig, DEFAULT_CONCENTRATION};
use crate::train::{objective, train, PreparedBags, TrainConfig, TrainMode, DEFAULT_MAX_ITERATIONS};

pub const OUT_DIR_ENV: &str = "MITARGET_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mitarget", version, about = "Multiple-instance target signature learning and evaluation")]
pub struct Cli {
    /// Default directory for outputs not given explicitly.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bag dataset from a TOML config.
    Generate(GenerateArgs),
    /// Learn a target signature (or baseline concept) from a bag CSV.
    Train(TrainArgs),
    /// Score every instance of a bag CSV with a model file.
    Detect(DetectArgs),
    /// Compute AUC or NAUC from a scores CSV carrying truth labels.
    Eval(EvalArgs),
    /// Run a table experiment described by a TOML spec.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub config: PathBuf,
    /// Output directory; defaults to the global output directory.
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CliMode {
    Smf,
    Ace,
    Lindisc,
    Emdd,
    Emddp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CliScope {
    Negative,
    Global,
}

impl From<CliScope> for WhiteningScope {
    fn from(s: CliScope) -> Self {
        match s {
            CliScope::Negative => WhiteningScope::Negative,
            CliScope::Global => WhiteningScope::Global,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "ace")]
    pub mode: CliMode,
    #[arg(long, value_enum, default_value = "negative")]
    pub whitening: CliScope,
    /// Model JSON path; defaults to `<out-dir>/model.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
    /// Regroup negatives: `single` or `kmeans:<K>`.
    #[arg(long)]
    pub negative_bags: Option<String>,
    /// Per-iteration trace CSV (MI modes only).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Seed for any randomized step (k-means negative bags).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    pub data: PathBuf,
    pub model: PathBuf,
    /// Scores CSV path; defaults to `<out-dir>/scores.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Truth sidecar whose instance labels are copied into the scores file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Unused; accepted so every subcommand takes a seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CliMetric {
    Auc,
    Nauc,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub scores: PathBuf,
    #[arg(long, value_enum, default_value = "auc")]
    pub metric: CliMetric,
    #[arg(long, default_value_t = 1e-3)]
    pub far_max: f64,
    /// Write the ROC points to this CSV.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// Unused; accepted so every subcommand takes a seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub spec: PathBuf,
    /// Results directory; defaults to the global output directory.
    pub out: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `runs`.
    #[arg(long)]
    pub runs: Option<usize>,
}

/// Synthetic dataset config as read by `generate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub endmembers: EndmemberSpec,
    pub n_pos_bags: usize,
    pub n_neg_bags: usize,
    pub instances_per_bag: usize,
    pub targets_per_positive_bag: usize,
    pub mean_target_proportion: f64,
    #[serde(default = "default_concentration")]
    pub proportion_concentration: f64,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub target_background_mask: Option<Vec<bool>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_concentration() -> f64 {
    DEFAULT_CONCENTRATION
}

fn default_snr() -> f64 {
    f64::INFINITY
}

impl GenerateConfig {
    pub fn resolve(&self) -> Result<SyntheticConfig> {
        let endmembers = self.endmembers.resolve()?;
        let cfg = SyntheticConfig {
            endmembers,
            n_pos_bags: self.n_pos_bags,
            n_neg_bags: self.n_neg_bags,
            instances_per_bag: self.instances_per_bag,
            targets_per_positive_bag: self.targets_per_positive_bag,
            mean_target_proportion: self.mean_target_proportion,
            proportion_concentration: self.proportion_concentration,
            snr_db: self.snr_db,
            target_background_mask: self.target_background_mask.clone(),
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path)?;
    Ok(FileDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

struct ManifestBuilder {
    command: &'static str,
    start: Instant,
    started_unix_s: u64,
}

impl ManifestBuilder {
    fn start(command: &'static str) -> Self {
        ManifestBuilder {
            command,
            start: Instant::now(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn finish(
        self,
        config: serde_json::Value,
        seeds: BTreeMap<String, u64>,
        inputs: &[&Path],
        outputs: &[&Path],
        path: &Path,
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            seeds,
            inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.start.elapsed().as_secs_f64(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_text(path)?).map_err(|e| Error::InvalidConfig(vec![format!("{}: {e}", path.display())]))
}

fn parse_negative_bags(text: &str) -> Result<NegativeBags> {
    match text {
        "single" => Ok(NegativeBags::Single),
        "as-generated" => Ok(NegativeBags::AsGenerated),
        _ => text
            .strip_prefix("kmeans:")
            .and_then(|k| k.parse().ok())
            .map(NegativeBags::Kmeans)
            .ok_or_else(|| Error::InvalidArgument(format!("--negative-bags: expected `single` or `kmeans:<K>`, got `{text}`"))),
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Io(_) => 3,
        Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 3,
        Error::InvalidConfig(_)
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::Format(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::NonFinite { .. }
        | Error::EmptyBag { .. } => 2,
        _ => 4,
    }
}

fn cmd_generate(args: &GenerateArgs, out_dir: &Path) -> Result<()> {
    let manifest = ManifestBuilder::start("generate");
    let mut config: GenerateConfig = parse_toml(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let synth = config.resolve()?;
    let data = generate(&synth)?;

    let dir = args.out.clone().unwrap_or_else(|| out_dir.to_path_buf());
    std::fs::create_dir_all(&dir)?;
    let bags_path = dir.join("bags.csv");
    let truth_path = dir.join("truth.csv");
    let sig_path = dir.join("true_signature.json");
    io::save_bags(&data.bags, &bags_path)?;
    io::save_truth(&io::truth_rows(&data.truth), &truth_path)?;

    // reference signature: the target minus the background mean
    let stats = std::sync::Arc::new(BackgroundStats::from_bags(&data.bags, WhiteningScope::Negative, Regularization::Auto)?);
    let s = &data.target - stats.mean();
    let sig = crate::detectors::TargetSignature::from_original(&s, stats.clone(), DetectorMode::Smf)?;
    let prepared = PreparedBags::whiten(&data.bags, &stats, DetectorMode::Smf)?;
    let obj = objective(sig.whitened(), &prepared)?;
    ModelFile::Signature(SignatureFile::new(&sig, 0, obj, None)).save(&sig_path)?;

    let manifest_path = dir.join("manifest.json");
    manifest.finish(
        serde_json::to_value(&config)?,
        BTreeMap::from([("seed".to_string(), config.seed)]),
        &[&args.config],
        &[&bags_path, &truth_path, &sig_path],
        &manifest_path,
    )?;
    println!(
        "generated {} bags ({} positive, {} negative), {} instances, d = {} -> {}",
        data.bags.bags().len(),
        data.bags.n_positive(),
        data.bags.n_negative(),
        data.bags.n_instances(),
        data.bags.dim(),
        dir.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, out_dir: &Path) -> Result<()> {
    let manifest = ManifestBuilder::start("train");
    let mut bags: BagSet = io::load_bags(&args.data)?;
    bags.require_both_classes()?;
    if let Some(spec) = &args.negative_bags {
        bags = parse_negative_bags(spec)?.apply(&bags, args.seed)?;
    }
    let out = args.out.clone().unwrap_or_else(|| out_dir.join("model.json"));
    let scope: WhiteningScope = args.whitening.into();

    let mi = |mode: TrainMode| TrainConfig::new(mode).with_scope(scope).with_max_iterations(args.max_iterations);
    let (file, iterations, converged, objective_value) = match args.mode {
        CliMode::Smf | CliMode::Ace | CliMode::Lindisc => {
            let mode = match args.mode {
                CliMode::Smf => TrainMode::Smf,
                CliMode::Ace => TrainMode::Ace,
                _ => TrainMode::LinearDiscriminant,
            };
            let r = train(&bags, &mi(mode))?;
            if let Some(trace) = &args.trace {
                io::save_trace(&r.trace, trace)?;
            }
            let file = match (r.signature(), r.linear()) {
                (Some(sig), _) => ModelFile::Signature(SignatureFile::new(sig, r.iterations, r.objective, Some(r.converged))),
                (_, Some(l)) => ModelFile::Linear(LinearFile::new(l, r.iterations, r.objective, Some(r.converged))),
                _ => unreachable!("training returns a signature or a linear model"),
            };
            (file, r.iterations, r.converged, r.objective)
        }
        CliMode::Emdd | CliMode::Emddp => {
            let mut config = EmddConfig::new(args.mode == CliMode::Emdd);
            config.max_iterations = args.max_iterations.max(1);
            let r = emdd_train(&bags, &config)?;
            let mut file = ConceptFile::new(&r.concept);
            file.mode = Some(if args.mode == CliMode::Emdd { "emdd" } else { "emddp" }.into());
            file.iterations = Some(r.iterations);
            file.log_likelihood = Some(r.log_likelihood);
            file.converged = Some(r.converged);
            (ModelFile::Concept(file), r.iterations, r.converged, r.log_likelihood)
        }
    };
    file.save(&out)?;

    let config = serde_json::json!({
        "data": args.data.display().to_string(),
        "mode": args.mode,
        "whitening": WhiteningScope::from(args.whitening),
        "max_iterations": args.max_iterations,
        "negative_bags": args.negative_bags,
        "iterations": iterations,
        "converged": converged,
        "objective": objective_value,
    });
    let mut outputs: Vec<&Path> = vec![&out];
    if let Some(t) = &args.trace {
        outputs.push(t);
    }
    manifest.finish(
        config,
        BTreeMap::from([("seed".to_string(), args.seed)]),
        &[&args.data],
        &outputs,
        &manifest_path_for(&out),
    )?;
    println!(
        "{}: {} after {iterations} iterations, objective {objective_value:.6} -> {}",
        serde_json::to_value(args.mode)?.as_str().unwrap_or_default(),
        if converged { "converged" } else { "stopped at the iteration limit" },
        out.display()
    );
    Ok(())
}

fn cmd_detect(args: &DetectArgs, out_dir: &Path) -> Result<()> {
    let manifest = ManifestBuilder::start("detect");
    let bags = io::load_bags(&args.data)?;
    let model = ModelFile::load(&args.model)?.to_model()?;
    if model.dim() != bags.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: bags.dim() });
    }
    let scores = model.score_all(bags.instances())?;
    let truth = match &args.truth {
        Some(p) => {
            let rows = io::load_truth(p)?;
            if rows.len() != scores.len() {
                return Err(Error::InvalidArgument(format!(
                    "truth file has {} rows for {} instances",
                    rows.len(),
                    scores.len()
                )));
            }
            Some(rows.iter().map(|r| r.instance_label == 1).collect::<Vec<_>>())
        }
        None => None,
    };
    let out = args.out.clone().unwrap_or_else(|| out_dir.join("scores.csv"));
    io::save_scores(&scores, truth.as_deref(), &out)?;

    let mut inputs: Vec<&Path> = vec![&args.data, &args.model];
    if let Some(t) = &args.truth {
        inputs.push(t);
    }
    manifest.finish(
        serde_json::json!({ "data": args.data.display().to_string(), "model": args.model.display().to_string() }),
        BTreeMap::from([("seed".to_string(), args.seed)]),
        &inputs,
        &[&out],
        &manifest_path_for(&out),
    )?;
    println!("scored {} instances -> {}", scores.len(), out.display());
    Ok(())
}

/// Returns the metric value.
pub fn cmd_eval(args: &EvalArgs) -> Result<f64> {
    let rows = io::load_scores(&args.scores)?;
    let mut scores = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for r in &rows {
        let Some(l) = r.truth_label else {
            return Err(Error::InvalidArgument(format!(
                "instance {} has no truth_label; detect with --truth first",
                r.instance_id
            )));
        };
        scores.push(r.score);
        labels.push(l == 1);
    }
    let curve = roc_curve(&scores, &labels)?;
    let (name, metric) = match args.metric {
        CliMetric::Auc => ("auc", Metric::Auc),
        CliMetric::Nauc => ("nauc", Metric::Nauc { far_max: args.far_max }),
    };
    let value = metric.evaluate(&curve)?;
    if let Some(p) = &args.roc {
        io::save_roc(&curve, p)?;
    }
    match args.metric {
        CliMetric::Auc => println!("{name} {value}"),
        CliMetric::Nauc => println!("{name}@{} {value}", args.far_max),
    }
    Ok(value)
}

fn cmd_experiment(args: &ExperimentArgs, out_dir: &Path) -> Result<()> {
    let manifest = ManifestBuilder::start("experiment");
    let mut spec = ExperimentSpec::from_toml(&read_text(&args.spec)?)?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(runs) = args.runs {
        spec.runs = runs;
    }
    let report = run_experiment(&spec)?;
    let dir = args.out.clone().unwrap_or_else(|| out_dir.to_path_buf());
    std::fs::create_dir_all(&dir)?;
    let results = dir.join(format!("{}_results.csv", spec.name));
    let rocs = dir.join(format!("{}_roc.csv", spec.name));
    io::save_results(&report.rows, &results)?;
    io::save_roc_dumps(&report.rocs, &rocs)?;

    let mut seeds = BTreeMap::from([("master_seed".to_string(), spec.master_seed)]);
    for (c, cell) in spec.cells.iter().enumerate() {
        for run in 0..spec.runs {
            seeds.insert(format!("{}/{run}/train", cell.name), derive_seed(spec.master_seed, c, run, "train"));
        }
    }
    manifest.finish(
        serde_json::to_value(&spec)?,
        seeds,
        &[&args.spec],
        &[&results, &rocs],
        &dir.join(format!("{}_manifest.json", spec.name)),
    )?;

    println!("{:<14} {:<11} {:>8} {:>8} {:>10}", "cell", "algorithm", "mean", "std", "runtime_s");
    for r in &report.rows {
        println!(
            "{:<14} {:<11} {:>8.4} {:>8.4} {:>10.4}{}",
            r.cell,
            r.algorithm.name(),
            r.mean,
            r.std,
            r.mean_runtime_s,
            if r.failures > 0 { format!("  ({} failed)", r.failures) } else { String::new() }
        );
    }
    for r in report.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} {} run {}: {}", r.cell, r.algorithm, r.run, r.error.as_deref().unwrap_or_default());
    }
    println!("-> {}", results.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, &cli.out_dir),
        Command::Train(a) => cmd_train(a, &cli.out_dir),
        Command::Detect(a) => cmd_detect(a, &cli.out_dir),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Experiment(a) => cmd_experiment(a, &cli.out_dir),
    }
}

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::InvalidConfig(items) = e.root() {
                for item in items {
                    eprintln!("  {item}");
                }
            }
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidConfig(vec![])), 2);
        assert_eq!(exit_code(&Error::DimensionMismatch { expected: 1, got: 2 }), 2);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 3);
        assert_eq!(exit_code(&Error::MissingBagClass { positive: 0, negative: 1 }), 4);
        assert_eq!(exit_code(&Error::DegenerateLabels { positives: 1, negatives: 0 }), 4);
        let wrapped = Error::AtInstance { index: 3, source: Box::new(Error::ZeroSignature) };
        assert_eq!(exit_code(&wrapped), 4);
    }

    #[test]
    fn negative_bag_flag() {
        assert_eq!(parse_negative_bags("kmeans:15").unwrap(), NegativeBags::Kmeans(15));
        assert_eq!(parse_negative_bags("single").unwrap(), NegativeBags::Single);
        assert!(parse_negative_bags("kmeans:x").is_err());
    }

    #[test]
    fn manifest_name() {
        assert_eq!(manifest_path_for(Path::new("a/model.json")), Path::new("a/model.json.manifest.json"));
    }

    #[test]
    fn parses_every_subcommand() {
        for line in [
            "mitarget generate c.toml out --seed 3",
            "mitarget train d.csv --mode lindisc --whitening global --seed 1",
            "mitarget detect d.csv m.json --truth t.csv --seed 1",
            "mitarget eval s.csv --metric nauc --far-max 0.01 --seed 1",
            "mitarget experiment e.toml --seed 9 --runs 2",
        ] {
            Cli::try_parse_from(line.split_whitespace()).unwrap();
        }
    }
}
