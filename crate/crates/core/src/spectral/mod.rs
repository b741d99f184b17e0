//! Core data model (instances, bags, bag sets) and background statistics.

mod bag;
mod stats;

pub use bag::{Bag, BagLabel, BagSet, Instance};
pub use stats::{
    BackgroundStats, Regularization, WhitenedInstance, WhiteningScope, SINGULAR_RATIO, ZERO_NORM,
};
pub(crate) use stats::unit_or_zero_error;
