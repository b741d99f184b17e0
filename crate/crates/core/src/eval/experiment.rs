use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kmeans::kmeans_negative_bags;
use super::roc::{roc_curve, RocCurve};
use crate::baselines::{emdd_train, EmddConfig};
use crate::detectors::{DetectorMode, TargetSignature};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::spectral::{Bag, BagSet, BackgroundStats, Instance, Regularization, WhiteningScope};
use crate::synth::{
    generate, generate_test_set, make_endmembers, EndmemberKind, SyntheticConfig, TestSetConfig,
    DEFAULT_CONCENTRATION,
};
use crate::train::{train, TrainConfig, TrainMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    MiSmf,
    MiAce,
    MiLindisc,
    EmDd,
    EmDdP,
    /// SMF with the generating target minus the background mean.
    TrueSmf,
    TrueAce,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::MiSmf,
        Algorithm::MiAce,
        Algorithm::MiLindisc,
        Algorithm::EmDd,
        Algorithm::EmDdP,
        Algorithm::TrueSmf,
        Algorithm::TrueAce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MiSmf => "mi-smf",
            Algorithm::MiAce => "mi-ace",
            Algorithm::MiLindisc => "mi-lindisc",
            Algorithm::EmDd => "em-dd",
            Algorithm::EmDdP => "em-dd-p",
            Algorithm::TrueSmf => "true-smf",
            Algorithm::TrueAce => "true-ace",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A trained model plus what the training reported.
#[derive(Clone, Debug)]
pub struct Fitted {
    pub model: Model,
    pub iterations: usize,
    pub converged: bool,
}

/// Trains `algorithm` on `bags`. `target` is only read by the true-signature
/// references.
pub fn fit(algorithm: Algorithm, bags: &BagSet, target: &DVector<f64>, scope: WhiteningScope) -> Result<Fitted> {
    let mi = |mode: TrainMode| -> Result<Fitted> {
        let r = train(bags, &TrainConfig::new(mode).with_scope(scope))?;
        Ok(Fitted { iterations: r.iterations, converged: r.converged, model: r.into() })
    };
    let emdd = |scales: bool| -> Result<Fitted> {
        let r = emdd_train(bags, &EmddConfig::new(scales))?;
        Ok(Fitted { iterations: r.iterations, converged: r.converged, model: Model::Concept(r.concept) })
    };
    let truth = |mode: DetectorMode| -> Result<Fitted> {
        let stats = Arc::new(BackgroundStats::from_bags(bags, scope, Regularization::Auto)?);
        let s = target - stats.mean();
        let sig = TargetSignature::from_original(&s, stats, mode)?;
        Ok(Fitted { model: Model::Signature(sig), iterations: 0, converged: true })
    };
    match algorithm {
        Algorithm::MiSmf => mi(TrainMode::Smf),
        Algorithm::MiAce => mi(TrainMode::Ace),
        Algorithm::MiLindisc => mi(TrainMode::LinearDiscriminant),
        Algorithm::EmDd => emdd(true),
        Algorithm::EmDdP => emdd(false),
        Algorithm::TrueSmf => truth(DetectorMode::Smf),
        Algorithm::TrueAce => truth(DetectorMode::Ace),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    #[default]
    Auc,
    Nauc,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Auc,
    Nauc { far_max: f64 },
}

impl Metric {
    pub fn evaluate(self, curve: &RocCurve) -> Result<f64> {
        match self {
            Metric::Auc => Ok(curve.auc()),
            Metric::Nauc { far_max } => curve.nauc(far_max),
        }
    }
}

/// How the training negatives are grouped before fitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeBags {
    #[default]
    AsGenerated,
    /// All negative instances in one bag.
    Single,
    /// k-means clusters of all negative instances, one bag each.
    Kmeans(usize),
}

impl NegativeBags {
    pub fn apply(self, bags: &BagSet, seed: u64) -> Result<BagSet> {
        match self {
            NegativeBags::AsGenerated => Ok(bags.clone()),
            NegativeBags::Single => {
                let all: Vec<Instance> = bags.negative_instances().cloned().collect();
                if all.is_empty() {
                    return Err(Error::MissingBagClass { positive: bags.n_positive(), negative: 0 });
                }
                bags.with_negative_bags(vec![Bag::negative("background", all)?])
            }
            NegativeBags::Kmeans(k) => {
                let all: Vec<Instance> = bags.negative_instances().cloned().collect();
                bags.with_negative_bags(kmeans_negative_bags(&all, k, seed)?)
            }
        }
    }
}

/// Which labeled instances a cell is scored on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalData {
    /// A separately generated instance-labeled test set.
    #[default]
    Test,
    /// The training instances themselves, with their instance labels.
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EndmemberSpec {
    Generated { kind: EndmemberKind, d: usize, count: usize, seed: u64 },
    Explicit { vectors: Vec<Vec<f64>> },
}

impl EndmemberSpec {
    pub fn resolve(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            EndmemberSpec::Generated { kind, d, count, seed } => make_endmembers(*kind, *d, *count, *seed),
            EndmemberSpec::Explicit { vectors } => Ok(vectors.clone()),
        }
    }
}

fn default_scale() -> f64 {
    1.0
}
fn default_test_alpha() -> f64 {
    0.15
}
fn default_test_snr() -> f64 {
    20.0
}
fn default_concentration() -> f64 {
    DEFAULT_CONCENTRATION
}
fn default_cell_snr() -> f64 {
    f64::INFINITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    /// Multiplies the default 25,000 + 25,000 instances.
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub n_target: Option<usize>,
    #[serde(default)]
    pub n_background: Option<usize>,
    #[serde(default = "default_test_alpha")]
    pub mean_target_proportion: f64,
    #[serde(default = "default_concentration")]
    pub proportion_concentration: f64,
    #[serde(default = "default_test_snr")]
    pub snr_db: f64,
}

impl Default for TestSpec {
    fn default() -> Self {
        TestSpec {
            scale: default_scale(),
            n_target: None,
            n_background: None,
            mean_target_proportion: default_test_alpha(),
            proportion_concentration: default_concentration(),
            snr_db: default_test_snr(),
        }
    }
}

impl TestSpec {
    pub fn config(&self, seed: u64) -> TestSetConfig {
        let base = TestSetConfig::scaled(self.scale, seed);
        TestSetConfig {
            n_target: self.n_target.unwrap_or(base.n_target),
            n_background: self.n_background.unwrap_or(base.n_background),
            mean_target_proportion: self.mean_target_proportion,
            proportion_concentration: self.proportion_concentration,
            snr_db: self.snr_db,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub name: String,
    pub n_pos_bags: usize,
    pub n_neg_bags: usize,
    pub instances_per_bag: usize,
    pub targets_per_positive_bag: usize,
    pub mean_target_proportion: f64,
    #[serde(default = "default_concentration")]
    pub proportion_concentration: f64,
    #[serde(default = "default_cell_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub target_background_mask: Option<Vec<bool>>,
}

impl CellSpec {
    pub fn synthetic_config(&self, endmembers: Vec<Vec<f64>>, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            endmembers,
            n_pos_bags: self.n_pos_bags,
            n_neg_bags: self.n_neg_bags,
            instances_per_bag: self.instances_per_bag,
            targets_per_positive_bag: self.targets_per_positive_bag,
            mean_target_proportion: self.mean_target_proportion,
            proportion_concentration: self.proportion_concentration,
            snr_db: self.snr_db,
            target_background_mask: self.target_background_mask.clone(),
            seed,
        }
    }
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub runs: usize,
    pub master_seed: u64,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub metric: MetricKind,
    #[serde(default)]
    pub far_max: Option<f64>,
    #[serde(default)]
    pub whitening: WhiteningScope,
    #[serde(default)]
    pub negative_bags: NegativeBags,
    #[serde(default)]
    pub evaluate_on: EvalData,
    pub endmembers: EndmemberSpec,
    #[serde(default)]
    pub test: TestSpec,
    pub cells: Vec<CellSpec>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(vec![e.to_string()]))
    }

    pub fn metric(&self) -> Result<Metric> {
        match (self.metric, self.far_max) {
            (MetricKind::Auc, _) => Ok(Metric::Auc),
            (MetricKind::Nauc, Some(far_max)) => Ok(Metric::Nauc { far_max }),
            (MetricKind::Nauc, None) => Err(Error::InvalidConfig(vec!["far_max: required when metric = \"nauc\"".into()])),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.runs == 0 {
            errs.push("runs: must be at least 1".to_string());
        }
        if self.algorithms.is_empty() {
            errs.push("algorithms: list at least one".into());
        }
        if self.cells.is_empty() {
            errs.push("cells: list at least one".into());
        }
        if let Err(Error::InvalidConfig(e)) = self.metric() {
            errs.extend(e);
        }
        if let Some(f) = self.far_max {
            if !(f > 0.0 && f.is_finite()) {
                errs.push(format!("far_max: must be positive, got {f}"));
            }
        }
        match self.endmembers.resolve() {
            Ok(ems) => {
                for cell in &self.cells {
                    if let Err(Error::InvalidConfig(e)) = cell.synthetic_config(ems.clone(), 0).validate() {
                        errs.extend(e.into_iter().map(|m| format!("cells.{}: {m}", cell.name)));
                    }
                }
            }
            Err(e) => errs.push(format!("endmembers: {e}")),
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

/// Seed for one random stream of one run, derived from the master seed.
pub fn derive_seed(master: u64, cell: usize, run: usize, stream: &str) -> u64 {
    let digest = Sha256::digest(format!("{master}/{cell}/{run}/{stream}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub cell: String,
    pub algorithm: Algorithm,
    pub run: usize,
    pub value: Option<f64>,
    pub runtime_s: f64,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub cell: String,
    pub algorithm: Algorithm,
    pub mean: f64,
    pub std: f64,
    pub mean_runtime_s: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Clone, Debug)]
pub struct RocDump {
    pub cell: String,
    pub algorithm: Algorithm,
    pub curve: RocCurve,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunRecord>,
    /// Curves from the first run of every cell and algorithm that succeeded.
    pub rocs: Vec<RocDump>,
}

struct UnitOutput {
    records: Vec<RunRecord>,
    rocs: Vec<RocDump>,
}

fn run_unit(spec: &ExperimentSpec, metric: Metric, endmembers: &[Vec<f64>], c: usize, run: usize) -> UnitOutput {
    let cell = &spec.cells[c];
    let fail_all = |msg: String| UnitOutput {
        records: spec
            .algorithms
            .iter()
            .map(|&algorithm| RunRecord {
                cell: cell.name.clone(),
                algorithm,
                run,
                value: None,
                runtime_s: 0.0,
                iterations: None,
                error: Some(msg.clone()),
            })
            .collect(),
        rocs: Vec::new(),
    };

    let train_cfg = cell.synthetic_config(endmembers.to_vec(), derive_seed(spec.master_seed, c, run, "train"));
    let data = match generate(&train_cfg) {
        Ok(d) => d,
        Err(e) => return fail_all(format!("generate: {e}")),
    };
    let bags = match spec.negative_bags.apply(&data.bags, derive_seed(spec.master_seed, c, run, "negative-bags")) {
        Ok(b) => b,
        Err(e) => return fail_all(format!("negative bags: {e}")),
    };
    let (instances, labels) = match spec.evaluate_on {
        EvalData::Train => (data.bags.instances().cloned().collect::<Vec<_>>(), data.instance_labels()),
        EvalData::Test => match generate_test_set(&train_cfg, &spec.test.config(derive_seed(spec.master_seed, c, run, "test"))) {
            Ok(t) => (t.instances, t.labels),
            Err(e) => return fail_all(format!("test set: {e}")),
        },
    };

    let mut out = UnitOutput { records: Vec::new(), rocs: Vec::new() };
    for &algorithm in &spec.algorithms {
        let start = Instant::now();
        let fitted = fit(algorithm, &bags, &data.target, spec.whitening);
        let runtime_s = start.elapsed().as_secs_f64();
        let evaluated = fitted.and_then(|f| {
            let scores = f.model.score_all(&instances)?;
            let curve = roc_curve(&scores, &labels)?;
            Ok((metric.evaluate(&curve)?, curve, f.iterations))
        });
        let mut record = RunRecord {
            cell: cell.name.clone(),
            algorithm,
            run,
            value: None,
            runtime_s,
            iterations: None,
            error: None,
        };
        match evaluated {
            Ok((value, curve, iterations)) => {
                record.value = Some(value);
                record.iterations = Some(iterations);
                if run == 0 {
                    out.rocs.push(RocDump { cell: cell.name.clone(), algorithm, curve });
                }
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        out.records.push(record);
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every cell `spec.runs` times. Runs execute in parallel but every
/// random stream is seeded from `(master_seed, cell, run)`, so metric values
/// do not depend on scheduling. A failing run is recorded and the rest go on.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let metric = spec.metric()?;
    let endmembers = spec.endmembers.resolve()?;

    let units: Vec<(usize, usize)> =
        (0..spec.cells.len()).flat_map(|c| (0..spec.runs).map(move |r| (c, r))).collect();
    let outputs: Vec<UnitOutput> =
        units.par_iter().map(|&(c, r)| run_unit(spec, metric, &endmembers, c, r)).collect();

    let mut runs = Vec::new();
    let mut rocs = Vec::new();
    for o in outputs {
        runs.extend(o.records);
        rocs.extend(o.rocs);
    }

    let mut rows = Vec::new();
    for cell in &spec.cells {
        for &algorithm in &spec.algorithms {
            let mine: Vec<&RunRecord> =
                runs.iter().filter(|r| r.cell == cell.name && r.algorithm == algorithm).collect();
            let values: Vec<f64> = mine.iter().filter_map(|r| r.value).collect();
            let (mean, std) = mean_std(&values);
            rows.push(ResultRow {
                cell: cell.name.clone(),
                algorithm,
                mean,
                std,
                mean_runtime_s: mine.iter().map(|r| r.runtime_s).sum::<f64>() / mine.len() as f64,
                successes: values.len(),
                failures: mine.len() - values.len(),
            });
        }
    }
    Ok(ExperimentReport { rows, runs, rocs })
}
