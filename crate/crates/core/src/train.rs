//! MI-SMF / MI-ACE signature learning.
//!
//! Training alternates two closed-form steps on bags mapped into whitened
//! space (unit-normalized as well for ACE):
//!
//! 1. pick, in every positive bag, the instance scoring highest against the
//!    current signature;
//! 2. set the signature to the normalized difference between the mean of the
//!    picked instances and the mean of the per-bag negative means.
//!
//! Step 2 is the exact maximizer of the objective under the unit-norm
//! constraint for a fixed pick, and step 1 is the exact maximizer for a fixed
//! signature, so the objective never decreases. The loop stops as soon as a
//! pick repeats (contiguously or not); the signature is a function of the
//! pick, so a repeated pick means a repeated signature.
//!
//! The same loop run on raw instances with a constant `1` appended gives a
//! multiple-instance linear discriminant.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detectors::{DetectorMode, TargetSignature};
use crate::error::{Error, Result};
use crate::spectral::{BackgroundStats, BagSet, Instance, Regularization, WhiteningScope, ZERO_NORM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Smf,
    Ace,
    #[serde(rename = "lindisc")]
    LinearDiscriminant,
}

impl TrainMode {
    pub fn detector(self) -> Option<DetectorMode> {
        match self {
            TrainMode::Smf => Some(DetectorMode::Smf),
            TrainMode::Ace => Some(DetectorMode::Ace),
            TrainMode::LinearDiscriminant => None,
        }
    }
}

impl From<DetectorMode> for TrainMode {
    fn from(mode: DetectorMode) -> Self {
        match mode {
            DetectorMode::Smf => TrainMode::Smf,
            DetectorMode::Ace => TrainMode::Ace,
        }
    }
}

pub const DEFAULT_MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub max_iterations: usize,
    pub scope: WhiteningScope,
    pub regularization: Regularization,
}

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        TrainConfig {
            mode,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            scope: WhiteningScope::Negative,
            regularization: Regularization::Auto,
        }
    }

    pub fn smf() -> Self {
        Self::new(TrainMode::Smf)
    }

    pub fn ace() -> Self {
        Self::new(TrainMode::Ace)
    }

    pub fn linear_discriminant() -> Self {
        Self::new(TrainMode::LinearDiscriminant)
    }

    pub fn with_scope(mut self, scope: WhiteningScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_regularization(mut self, regularization: Regularization) -> Self {
        self.regularization = regularization;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(vec!["max_iterations: must be at least 1".into()]));
        }
        Ok(())
    }
}

/// Training bags mapped into the coordinates in which the objective is
/// linear in the signature: whitened (SMF), whitened and unit-normalized
/// (ACE), or raw with a bias coordinate (linear discriminant).
///
/// The negative side of the objective only enters through the average of the
/// per-bag negative means, which is computed once here.
#[derive(Clone, Debug)]
pub struct PreparedBags {
    positives: Vec<Vec<DVector<f64>>>,
    // false for instances that could not be normalized (at the background mean)
    usable: Vec<Vec<bool>>,
    negative_mean: DVector<f64>,
    dim: usize,
}

impl PreparedBags {
    /// Builds from vectors that are already in objective coordinates. Every
    /// vector is usable.
    pub fn from_vectors(positives: Vec<Vec<DVector<f64>>>, negatives: &[Vec<DVector<f64>>]) -> Result<Self> {
        let usable = positives.iter().map(|b| vec![true; b.len()]).collect();
        Self::assemble(positives, usable, negatives)
    }

    fn assemble(
        positives: Vec<Vec<DVector<f64>>>,
        usable: Vec<Vec<bool>>,
        negatives: &[Vec<DVector<f64>>],
    ) -> Result<Self> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::MissingBagClass {
                positive: positives.len(),
                negative: negatives.len(),
            });
        }
        let Some(dim) = positives.iter().flatten().next().map(|x| x.len()) else {
            return Err(Error::EmptyBag { id: "positive".into() });
        };
        for (j, bag) in negatives.iter().enumerate() {
            if bag.is_empty() {
                return Err(Error::EmptyBag { id: format!("negative #{j}") });
            }
        }
        if let Some(bad) = positives.iter().chain(negatives).flatten().find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        for (bag, ok) in positives.iter().zip(&usable) {
            if bag.is_empty() || !ok.iter().any(|&u| u) {
                return Err(Error::NoValidCandidate);
            }
        }

        let mut negative_mean = DVector::zeros(dim);
        for bag in negatives {
            let mut bag_sum = DVector::zeros(dim);
            for x in bag {
                bag_sum += x;
            }
            negative_mean += bag_sum / bag.len() as f64;
        }
        negative_mean /= negatives.len() as f64;

        Ok(PreparedBags {
            positives,
            usable,
            negative_mean,
            dim,
        })
    }

    /// Whitens every instance against `stats`; ACE additionally normalizes.
    /// Positive instances at the background mean are kept but never selected.
    pub fn whiten(bags: &BagSet, stats: &BackgroundStats, mode: DetectorMode) -> Result<Self> {
        bags.require_both_classes()?;
        let normalize = mode == DetectorMode::Ace;
        let mut positives = Vec::new();
        let mut usable = Vec::new();
        let mut negatives = Vec::new();
        for bag in bags.bags() {
            let mut vs = Vec::with_capacity(bag.len());
            let mut ok = Vec::with_capacity(bag.len());
            for x in bag.instances() {
                let hat = stats.whiten_centered(x)?;
                let norm = hat.norm();
                if normalize && norm < ZERO_NORM {
                    if !bag.is_positive() {
                        return Err(Error::ZeroVector { norm });
                    }
                    vs.push(hat);
                    ok.push(false);
                } else {
                    vs.push(if normalize { hat / norm } else { hat });
                    ok.push(true);
                }
            }
            if bag.is_positive() {
                positives.push(vs);
                usable.push(ok);
            } else {
                negatives.push(vs);
            }
        }
        Self::assemble(positives, usable, &negatives)
    }

    /// Raw instances with a trailing constant `1` (bias) coordinate.
    pub fn augmented(bags: &BagSet) -> Result<Self> {
        bags.require_both_classes()?;
        let augment = |x: &Instance| x.clone().push(1.0);
        let positives: Vec<Vec<_>> = bags
            .positive_bags()
            .map(|b| b.instances().iter().map(augment).collect())
            .collect();
        let negatives: Vec<Vec<_>> = bags
            .negative_bags()
            .map(|b| b.instances().iter().map(augment).collect())
            .collect();
        Self::from_vectors(positives, &negatives)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_positive(&self) -> usize {
        self.positives.len()
    }

    pub fn positives(&self) -> &[Vec<DVector<f64>>] {
        &self.positives
    }

    /// `(1/N-) sum_j (1/N_j) sum_i x_ji` over negative bags.
    pub fn negative_mean(&self) -> &DVector<f64> {
        &self.negative_mean
    }

    pub fn is_usable(&self, bag: usize, instance: usize) -> bool {
        self.usable[bag][instance]
    }

    fn check_dim(&self, s: &DVector<f64>) -> Result<()> {
        if s.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: s.len() });
        }
        Ok(())
    }
}

/// One selected instance index per positive bag, in positive-bag order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Selection(pub Vec<usize>);

impl Selection {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// Stable 64-bit fingerprint (hex) for traces.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for &i in &self.0 {
            hasher.update((i as u64).to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

/// Per positive bag, the index of the highest-scoring usable instance.
/// Ties go to the lowest index.
pub fn select_instances(signature: &DVector<f64>, bags: &PreparedBags) -> Result<Selection> {
    bags.check_dim(signature)?;
    let picks = bags
        .positives
        .iter()
        .zip(&bags.usable)
        .map(|(bag, ok)| {
            let mut best = None::<(usize, f64)>;
            for (i, x) in bag.iter().enumerate() {
                if !ok[i] {
                    continue;
                }
                let score = signature.dot(x);
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((i, score));
                }
            }
            best.map(|(i, _)| i).expect("positive bags have a usable instance")
        })
        .collect();
    Ok(Selection(picks))
}

/// Mean of per-bag maxima over positive bags minus the average per-bag mean
/// score over negative bags.
pub fn objective(signature: &DVector<f64>, bags: &PreparedBags) -> Result<f64> {
    let selection = select_instances(signature, bags)?;
    Ok(objective_for_selection(signature, &selection, bags))
}

fn objective_for_selection(signature: &DVector<f64>, selection: &Selection, bags: &PreparedBags) -> f64 {
    let positive: f64 = bags
        .positives
        .iter()
        .zip(selection.indices())
        .map(|(bag, &i)| signature.dot(&bag[i]))
        .sum::<f64>()
        / bags.positives.len() as f64;
    positive - signature.dot(&bags.negative_mean)
}

/// Closed-form maximizer of the objective for a fixed selection:
/// `t / ||t||` with `t` = mean of selected positives minus the negative mean.
pub fn update_signature(selection: &Selection, bags: &PreparedBags) -> Result<DVector<f64>> {
    if selection.0.len() != bags.positives.len() {
        return Err(Error::InvalidArgument(format!(
            "selection covers {} bags, expected {}",
            selection.0.len(),
            bags.positives.len()
        )));
    }
    let mut t = DVector::zeros(bags.dim);
    for (bag, &i) in bags.positives.iter().zip(selection.indices()) {
        let Some(x) = bag.get(i) else {
            return Err(Error::InvalidArgument(format!(
                "selected index {i} out of range for a bag of {}",
                bag.len()
            )));
        };
        t += x;
    }
    t /= bags.positives.len() as f64;
    t -= &bags.negative_mean;
    let norm = t.norm();
    if norm < ZERO_NORM {
        return Err(Error::DegenerateUpdate { norm });
    }
    Ok(t / norm)
}

/// The normalized positive instance with the highest objective. Ties go to
/// the first candidate in bag order; zero-length candidates are skipped.
pub fn initialize_signature(bags: &PreparedBags) -> Result<DVector<f64>> {
    let mut best: Option<(DVector<f64>, f64)> = None;
    for (j, bag) in bags.positives.iter().enumerate() {
        for (i, x) in bag.iter().enumerate() {
            if !bags.usable[j][i] {
                continue;
            }
            let norm = x.norm();
            if norm < ZERO_NORM {
                continue;
            }
            let candidate = x / norm;
            let value = objective(&candidate, bags)?;
            if best.as_ref().is_none_or(|(_, b)| value > *b) {
                best = Some((candidate, value));
            }
        }
    }
    best.map(|(s, _)| s).ok_or(Error::NoValidCandidate)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub selection_hash: String,
}

/// Outcome of the alternating loop in objective coordinates.
#[derive(Clone, Debug)]
pub struct LoopOutcome {
    pub signature: DVector<f64>,
    pub selection: Selection,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Entry 0 is the initialization; entry k follows the k-th update.
    pub trace: Vec<IterationRecord>,
}

/// Runs initialize / (select, update)* until a selection repeats or
/// `max_iterations` updates have been made.
pub fn optimize(bags: &PreparedBags, max_iterations: usize) -> Result<LoopOutcome> {
    let mut signature = initialize_signature(bags)?;
    let mut selection = select_instances(&signature, bags)?;
    let mut trace = vec![IterationRecord {
        iteration: 0,
        objective: objective_for_selection(&signature, &selection, bags),
        selection_hash: selection.fingerprint(),
    }];
    let mut history = HashSet::new();
    let mut iterations = 0;
    let converged = loop {
        if !history.insert(selection.clone()) {
            break true;
        }
        if iterations == max_iterations {
            break false;
        }
        signature = update_signature(&selection, bags)?;
        iterations += 1;
        selection = select_instances(&signature, bags)?;
        trace.push(IterationRecord {
            iteration: iterations,
            objective: objective_for_selection(&signature, &selection, bags),
            selection_hash: selection.fingerprint(),
        });
    };
    let objective = objective_for_selection(&signature, &selection, bags);
    Ok(LoopOutcome {
        signature,
        selection,
        iterations,
        converged,
        objective,
        trace,
    })
}

/// A linear discriminant over raw features: `score(x) = w^T x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearDiscriminant {
    coefficients: DVector<f64>,
}

impl LinearDiscriminant {
    /// `coefficients` holds the `d` weights followed by the bias.
    pub fn new(coefficients: DVector<f64>) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::InvalidArgument("a linear discriminant needs d >= 1 weights plus a bias".into()));
        }
        Ok(LinearDiscriminant { coefficients })
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn weights(&self) -> DVector<f64> {
        self.coefficients.rows(0, self.dim()).into_owned()
    }

    pub fn bias(&self) -> f64 {
        self.coefficients[self.dim()]
    }

    /// Feature dimension (without the bias).
    pub fn dim(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn score(&self, x: &Instance) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.coefficients.rows(0, self.dim()).dot(x) + self.bias())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Signature(TargetSignature),
    Linear(LinearDiscriminant),
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub model: TrainedModel,
    pub iterations: usize,
    /// Objective at the returned signature, in objective coordinates.
    pub objective: f64,
    pub converged: bool,
    /// The final selection; reselecting with the returned signature gives it back.
    pub selection: Selection,
    pub trace: Vec<IterationRecord>,
}

impl TrainResult {
    pub fn signature(&self) -> Option<&TargetSignature> {
        match &self.model {
            TrainedModel::Signature(s) => Some(s),
            TrainedModel::Linear(_) => None,
        }
    }

    pub fn linear(&self) -> Option<&LinearDiscriminant> {
        match &self.model {
            TrainedModel::Linear(l) => Some(l),
            TrainedModel::Signature(_) => None,
        }
    }

    pub fn score(&self, x: &Instance) -> Result<f64> {
        match &self.model {
            TrainedModel::Signature(s) => s.score(x),
            TrainedModel::Linear(l) => l.score(x),
        }
    }
}

/// Full training: background statistics, whitening, initialization and the
/// alternating loop; the result is mapped back to the original space.
pub fn train(bags: &BagSet, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    bags.require_both_classes()?;
    let Some(mode) = config.mode.detector() else {
        return train_linear_discriminant(bags, config);
    };
    let stats = Arc::new(BackgroundStats::from_bags(bags, config.scope, config.regularization)?);
    let prepared = PreparedBags::whiten(bags, &stats, mode)?;
    let outcome = optimize(&prepared, config.max_iterations)?;
    let signature = TargetSignature::from_whitened(&outcome.signature, stats, mode)?;
    Ok(TrainResult {
        model: TrainedModel::Signature(signature),
        iterations: outcome.iterations,
        objective: outcome.objective,
        converged: outcome.converged,
        selection: outcome.selection,
        trace: outcome.trace,
    })
}

/// The same loop on raw instances with a bias coordinate; no whitening and
/// no normalization. Only `max_iterations` is read from `config`.
pub fn train_linear_discriminant(bags: &BagSet, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let prepared = PreparedBags::augmented(bags)?;
    let outcome = optimize(&prepared, config.max_iterations)?;
    Ok(TrainResult {
        model: TrainedModel::Linear(LinearDiscriminant::new(outcome.signature)?),
        iterations: outcome.iterations,
        objective: outcome.objective,
        converged: outcome.converged,
        selection: outcome.selection,
        trace: outcome.trace,
    })
}
