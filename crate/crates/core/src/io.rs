//! File formats: bag CSV, truth sidecar, scores, model JSON, results and ROC dumps.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::DdConcept;
use crate::detectors::{DetectorMode, TargetSignature};
use crate::error::{Error, Result};
use crate::eval::{ResultRow, RocCurve, RocDump};
use crate::model::Model;
use crate::spectral::{Bag, BagLabel, BagSet, BackgroundStats};
use crate::synth::InstanceTruth;
use crate::train::{IterationRecord, LinearDiscriminant};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

// ---- bags ----

pub fn write_bags<W: Write>(bags: &BagSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["bag_id".to_string(), "label".to_string()];
    header.extend((0..bags.dim()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for bag in bags.bags() {
        for x in bag.instances() {
            row.clear();
            row.push(bag.id().to_string());
            row.push(bag.label().bit().to_string());
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows of one bag need not be contiguous; bags come back in order of
/// first appearance.
pub fn read_bags<R: Read>(input: R) -> Result<BagSet> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[0] != "bag_id" || &header[1] != "label" {
        return Err(Error::Format("bag file header must start with `bag_id,label,f0`".into()));
    }
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{k}") {
            return Err(Error::Format(format!("bag file column {} is `{name}`, expected `f{k}`", k + 2)));
        }
    }
    let d = header.len() - 2;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (BagLabel, Vec<DVector<f64>>)> = HashMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let id = rec[0].to_string();
        let label = rec[1]
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(BagLabel::from_bit)
            .ok_or_else(|| Error::Format(format!("row {row}: label `{}` is not 0 or 1", &rec[1])))?;
        let values = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(k, v)| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {row}, column f{k}: `{v}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: values.len() });
        }
        match groups.get_mut(&id) {
            Some((l, xs)) => {
                if *l != label {
                    return Err(Error::Format(format!("row {row}: bag `{id}` has conflicting labels")));
                }
                xs.push(DVector::from_vec(values));
            }
            None => {
                order.push(id.clone());
                groups.insert(id, (label, vec![DVector::from_vec(values)]));
            }
        }
    }
    let bags = order
        .into_iter()
        .map(|id| {
            let (label, xs) = groups.remove(&id).expect("every id was inserted");
            Bag::new(id, label, xs)
        })
        .collect::<Result<Vec<_>>>()?;
    BagSet::new(bags)
}

pub fn save_bags(bags: &BagSet, path: &Path) -> Result<()> {
    write_bags(bags, create(path)?)
}

pub fn load_bags(path: &Path) -> Result<BagSet> {
    read_bags(open(path)?)
}

// ---- truth sidecar ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub instance_id: usize,
    pub bag_id: String,
    pub alpha_target: f64,
    pub instance_label: u8,
}

pub fn truth_rows(truth: &[InstanceTruth]) -> Vec<TruthRow> {
    truth
        .iter()
        .enumerate()
        .map(|(i, t)| TruthRow {
            instance_id: i,
            bag_id: t.bag_id.clone(),
            alpha_target: t.alpha_target,
            instance_label: u8::from(t.is_target),
        })
        .collect()
}

pub fn save_truth(rows: &[TruthRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_truth(path: &Path) -> Result<Vec<TruthRow>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let rows: Vec<TruthRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    for (i, row) in rows.iter().enumerate() {
        if row.instance_id != i {
            return Err(Error::Format(format!("truth row {i} has instance_id {}", row.instance_id)));
        }
    }
    Ok(rows)
}

// ---- scores ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub instance_id: usize,
    pub score: f64,
    pub truth_label: Option<u8>,
}

pub fn save_scores(scores: &[f64], truth: Option<&[bool]>, path: &Path) -> Result<()> {
    if let Some(t) = truth {
        if t.len() != scores.len() {
            return Err(Error::DimensionMismatch { expected: scores.len(), got: t.len() });
        }
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    for (i, &score) in scores.iter().enumerate() {
        w.serialize(ScoreRow { instance_id: i, score, truth_label: truth.map(|t| u8::from(t[i])) })?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let rows: Vec<ScoreRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    if let Some(bad) = rows.iter().find(|r| r.truth_label.is_some_and(|l| l > 1)) {
        return Err(Error::Format(format!("instance {}: truth_label must be 0 or 1", bad.instance_id)));
    }
    Ok(rows)
}

// ---- models ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureFile {
    pub mode: DetectorMode,
    pub d: usize,
    pub signature: Vec<f64>,
    pub mu_b: Vec<f64>,
    /// Row-major `d * d` background covariance, ridge included.
    pub sigma_b: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

impl SignatureFile {
    pub fn new(sig: &TargetSignature, iterations: usize, objective: f64, converged: Option<bool>) -> Self {
        let stats = sig.stats();
        let d = sig.dim();
        let cov = stats.covariance();
        SignatureFile {
            mode: sig.mode(),
            d,
            signature: sig.signature().iter().copied().collect(),
            mu_b: stats.mean().iter().copied().collect(),
            sigma_b: (0..d).flat_map(|r| (0..d).map(move |c| cov[(r, c)])).collect(),
            iterations,
            objective,
            converged,
        }
    }

    pub fn to_signature(&self) -> Result<TargetSignature> {
        let d = self.d;
        if self.signature.len() != d || self.mu_b.len() != d {
            return Err(Error::Format(format!("signature file: vectors must have length d = {d}")));
        }
        if self.sigma_b.len() != d * d {
            return Err(Error::Format(format!("signature file: sigma_b must have d*d = {} entries", d * d)));
        }
        let stats = BackgroundStats::from_mean_covariance(
            DVector::from_column_slice(&self.mu_b),
            DMatrix::from_row_slice(d, d, &self.sigma_b),
        )?;
        TargetSignature::from_original(&DVector::from_column_slice(&self.signature), Arc::new(stats), self.mode)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFile {
    /// Always `lindisc`.
    pub mode: String,
    pub d: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

impl LinearFile {
    pub const MODE: &'static str = "lindisc";

    pub fn new(l: &LinearDiscriminant, iterations: usize, objective: f64, converged: Option<bool>) -> Self {
        LinearFile {
            mode: Self::MODE.into(),
            d: l.dim(),
            weights: l.weights().iter().copied().collect(),
            bias: l.bias(),
            iterations,
            objective,
            converged,
        }
    }

    pub fn to_linear(&self) -> Result<LinearDiscriminant> {
        if self.weights.len() != self.d {
            return Err(Error::Format(format!("linear model: weights must have length d = {}", self.d)));
        }
        let mut c = self.weights.clone();
        c.push(self.bias);
        LinearDiscriminant::new(DVector::from_vec(c))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptFile {
    pub point: Vec<f64>,
    pub scales: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

impl ConceptFile {
    pub fn new(c: &DdConcept) -> Self {
        ConceptFile {
            point: c.point.iter().copied().collect(),
            scales: c.scales.iter().copied().collect(),
            mode: None,
            iterations: None,
            log_likelihood: None,
            converged: None,
        }
    }

    pub fn to_concept(&self) -> Result<DdConcept> {
        DdConcept::new(DVector::from_column_slice(&self.point), DVector::from_column_slice(&self.scales))
    }
}

/// Any of the three model documents.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    Signature(SignatureFile),
    Linear(LinearFile),
    Concept(ConceptFile),
}

impl ModelFile {
    pub fn to_model(&self) -> Result<Model> {
        Ok(match self {
            ModelFile::Signature(f) => Model::Signature(f.to_signature()?),
            ModelFile::Linear(f) => Model::Linear(f.to_linear()?),
            ModelFile::Concept(f) => Model::Concept(f.to_concept()?),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(match self {
            ModelFile::Signature(f) => serde_json::to_string_pretty(f)?,
            ModelFile::Linear(f) => serde_json::to_string_pretty(f)?,
            ModelFile::Concept(f) => serde_json::to_string_pretty(f)?,
        })
    }

    /// Dispatches on `mode`; documents carrying `point` are concepts.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let mode = value.get("mode").and_then(|m| m.as_str());
        if value.get("point").is_some() {
            return Ok(ModelFile::Concept(serde_json::from_value(value)?));
        }
        match mode {
            Some("smf") | Some("ace") => Ok(ModelFile::Signature(serde_json::from_value(value)?)),
            Some(LinearFile::MODE) => Ok(ModelFile::Linear(serde_json::from_value(value)?)),
            other => Err(Error::Format(format!("unknown model mode {other:?}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// ---- training trace, results, ROC ----

pub fn save_trace(trace: &[IterationRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["iteration", "objective", "selection_hash"])?;
    for r in trace {
        w.write_record([r.iteration.to_string(), r.objective.to_string(), r.selection_hash.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["cell", "algorithm", "mean", "std", "mean_runtime_s"])?;
    for r in rows {
        w.write_record([
            r.cell.clone(),
            r.algorithm.name().to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.mean_runtime_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_roc(curve: &RocCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["threshold", "far", "pd"])?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.far.to_string(), p.pd.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_roc_dumps(dumps: &[RocDump], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["cell", "algorithm", "threshold", "far", "pd"])?;
    for dump in dumps {
        for p in &dump.curve.points {
            w.write_record([
                dump.cell.clone(),
                dump.algorithm.name().to_string(),
                p.threshold.to_string(),
                p.far.to_string(),
                p.pd.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{train, TrainConfig};
    use nalgebra::dvector;

    fn toy() -> BagSet {
        BagSet::new(vec![
            Bag::positive("a", vec![dvector![1.0, 0.1], dvector![0.0, 0.3]]).unwrap(),
            Bag::negative("b", vec![dvector![0.1, 0.0], dvector![-0.2, 0.4], dvector![0.05, -0.3]]).unwrap(),
            Bag::positive("c", vec![dvector![0.9, -0.1]]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn bag_round_trip() {
        let bags = toy();
        let mut buf = Vec::new();
        write_bags(&bags, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("bag_id,label,f0,f1\n"));
        assert_eq!(read_bags(buf.as_slice()).unwrap(), bags);
    }

    #[test]
    fn interleaved_rows_group_by_id() {
        let text = "bag_id,label,f0\nx,1,1.0\ny,0,2.0\nx,1,3.0\n";
        let bags = read_bags(text.as_bytes()).unwrap();
        assert_eq!(bags.bags().len(), 2);
        assert_eq!(bags.bags()[0].len(), 2);
    }

    #[test]
    fn bad_bag_files() {
        assert!(matches!(read_bags("bag_id,label,f0\nx,2,1.0\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_bags("bag_id,label,f0\nx,1,1.0\nx,0,1.0\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_bags("id,label,f0\nx,1,1.0\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_bags("bag_id,label,f0\nx,1,abc\n".as_bytes()), Err(Error::Format(_))));
        assert!(read_bags("bag_id,label,f0\nx,1,NaN\n".as_bytes()).is_err());
    }

    #[test]
    fn signature_round_trip() {
        let r = train(&toy(), &TrainConfig::ace()).unwrap();
        let sig = r.signature().unwrap();
        let file = ModelFile::Signature(SignatureFile::new(sig, r.iterations, r.objective, Some(r.converged)));
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        let model = back.to_model().unwrap();
        for x in toy().instances() {
            assert!((model.score(x).unwrap() - sig.score(x).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_and_concept_round_trip() {
        let r = train(&toy(), &TrainConfig::linear_discriminant()).unwrap();
        let l = r.linear().unwrap();
        let file = ModelFile::Linear(LinearFile::new(l, r.iterations, r.objective, None));
        let model = ModelFile::from_json(&file.to_json().unwrap()).unwrap().to_model().unwrap();
        let x = dvector![0.3, 0.7];
        assert_eq!(model.score(&x).unwrap(), l.score(&x).unwrap());

        let c = DdConcept::new(dvector![0.5, 0.25], dvector![2.0, 0.0]).unwrap();
        let file = ModelFile::Concept(ConceptFile::new(&c));
        let json = file.to_json().unwrap();
        assert!(!json.contains("mode"));
        assert_eq!(ModelFile::from_json(&json).unwrap().to_model().unwrap().score(&x).unwrap(), c.log_predict(&x).unwrap());
    }

    #[test]
    fn unknown_mode() {
        assert!(matches!(ModelFile::from_json(r#"{"mode":"svm"}"#), Err(Error::Format(_))));
    }
}
