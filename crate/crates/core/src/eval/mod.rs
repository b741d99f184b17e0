//! ROC/AUC/NAUC metrics, k-means negative bags and the experiment harness.

pub mod experiment;
pub mod kmeans;
pub mod roc;

pub use experiment::{
    derive_seed, fit, run_experiment, Algorithm, CellSpec, EndmemberSpec, EvalData, ExperimentReport,
    ExperimentSpec, Fitted, Metric, MetricKind, NegativeBags, ResultRow, RocDump, RunRecord, TestSpec,
};
pub use kmeans::{kmeans, kmeans_negative_bags, KMeans, KMEANS_MAX_ITERATIONS};
pub use roc::{auc, nauc, partial_area, roc_curve, RocCurve, RocPoint};
