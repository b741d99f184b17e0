//! Anything that turns an instance into a detection score.

use crate::baselines::DdConcept;
use crate::detectors::TargetSignature;
use crate::error::{Error, Result};
use crate::spectral::Instance;
use crate::train::{LinearDiscriminant, TrainResult, TrainedModel};

#[derive(Clone, Debug)]
pub enum Model {
    Signature(TargetSignature),
    Linear(LinearDiscriminant),
    /// Scored by the log of the EM-DD prediction.
    Concept(DdConcept),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Signature(s) => s.dim(),
            Model::Linear(l) => l.dim(),
            Model::Concept(c) => c.dim(),
        }
    }

    pub fn score(&self, x: &Instance) -> Result<f64> {
        match self {
            Model::Signature(s) => s.score(x),
            Model::Linear(l) => l.score(x),
            Model::Concept(c) => c.log_predict(x),
        }
    }

    pub fn score_all<'a, I>(&self, instances: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a Instance>,
    {
        instances
            .into_iter()
            .enumerate()
            .map(|(i, x)| self.score(x).map_err(|e| Error::at_instance(i, e)))
            .collect()
    }
}

impl From<TrainResult> for Model {
    fn from(r: TrainResult) -> Self {
        match r.model {
            TrainedModel::Signature(s) => Model::Signature(s),
            TrainedModel::Linear(l) => Model::Linear(l),
        }
    }
}
