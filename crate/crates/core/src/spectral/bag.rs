use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One feature vector (a pixel spectrum, or any fixed-length feature).
pub type Instance = DVector<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BagLabel {
    Negative,
    Positive,
}

impl BagLabel {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(BagLabel::Negative),
            1 => Some(BagLabel::Positive),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            BagLabel::Negative => 0,
            BagLabel::Positive => 1,
        }
    }
}

pub(crate) fn check_finite(x: &DVector<f64>, context: impl FnOnce() -> String) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(feature) => Err(Error::NonFinite {
            context: context(),
            feature,
        }),
        None => Ok(()),
    }
}

/// A labeled multiset of instances. The label cannot change after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    id: String,
    label: BagLabel,
    instances: Vec<Instance>,
}

impl Bag {
    pub fn new(id: impl Into<String>, label: BagLabel, instances: Vec<Instance>) -> Result<Self> {
        let id = id.into();
        let Some(first) = instances.first() else {
            return Err(Error::EmptyBag { id });
        };
        let d = first.len();
        if d == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        for (i, x) in instances.iter().enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            check_finite(x, || format!("instance {i} of bag `{id}`"))?;
        }
        Ok(Bag {
            id,
            label,
            instances,
        })
    }

    pub fn positive(id: impl Into<String>, instances: Vec<Instance>) -> Result<Self> {
        Bag::new(id, BagLabel::Positive, instances)
    }

    pub fn negative(id: impl Into<String>, instances: Vec<Instance>) -> Result<Self> {
        Bag::new(id, BagLabel::Negative, instances)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> BagLabel {
        self.label
    }

    pub fn is_positive(&self) -> bool {
        self.label == BagLabel::Positive
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    /// Always false; bags hold at least one instance.
    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances[0].len()
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }
}

/// A collection of bags sharing one dimensionality.
#[derive(Clone, Debug, PartialEq)]
pub struct BagSet {
    bags: Vec<Bag>,
    dim: usize,
}

impl BagSet {
    pub fn new(bags: Vec<Bag>) -> Result<Self> {
        let Some(first) = bags.first() else {
            return Err(Error::InvalidArgument("a bag set needs at least one bag".into()));
        };
        let dim = first.dim();
        if let Some(bad) = bags.iter().find(|b| b.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(BagSet { bags, dim })
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn into_bags(self) -> Vec<Bag> {
        self.bags
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positive_bags(&self) -> impl Iterator<Item = &Bag> + '_ {
        self.bags.iter().filter(|b| b.is_positive())
    }

    pub fn negative_bags(&self) -> impl Iterator<Item = &Bag> + '_ {
        self.bags.iter().filter(|b| !b.is_positive())
    }

    pub fn n_positive(&self) -> usize {
        self.positive_bags().count()
    }

    pub fn n_negative(&self) -> usize {
        self.negative_bags().count()
    }

    /// Total number of instances over all bags.
    pub fn n_instances(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> + '_ {
        self.bags.iter().flat_map(|b| b.instances.iter())
    }

    pub fn negative_instances(&self) -> impl Iterator<Item = &Instance> + '_ {
        self.negative_bags().flat_map(|b| b.instances.iter())
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let (positive, negative) = (self.n_positive(), self.n_negative());
        if positive == 0 || negative == 0 {
            return Err(Error::MissingBagClass { positive, negative });
        }
        Ok(())
    }

    /// Keeps the positive bags and swaps in a new set of negative bags.
    pub fn with_negative_bags(&self, negatives: Vec<Bag>) -> Result<BagSet> {
        let mut bags: Vec<Bag> = self.positive_bags().cloned().collect();
        for b in negatives {
            if b.is_positive() {
                return Err(Error::InvalidArgument(format!(
                    "bag `{}` is positive but was passed as a negative bag",
                    b.id
                )));
            }
            bags.push(b);
        }
        BagSet::new(bags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn empty_bag_rejected() {
        assert!(matches!(
            Bag::positive("b", vec![]),
            Err(Error::EmptyBag { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let err = Bag::negative("b", vec![dvector![1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { feature: 1, .. }));
    }

    #[test]
    fn mixed_dims_rejected() {
        let a = Bag::negative("a", vec![dvector![1.0, 2.0]]).unwrap();
        let b = Bag::positive("b", vec![dvector![1.0]]).unwrap();
        assert!(matches!(
            BagSet::new(vec![a, b]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(Bag::negative("c", vec![dvector![1.0], dvector![1.0, 2.0]]).is_err());
    }

    #[test]
    fn counts() {
        let set = BagSet::new(vec![
            Bag::positive("p", vec![dvector![1.0], dvector![2.0]]).unwrap(),
            Bag::negative("n1", vec![dvector![0.0]]).unwrap(),
            Bag::negative("n2", vec![dvector![0.5], dvector![0.1], dvector![0.2]]).unwrap(),
        ])
        .unwrap();
        assert_eq!(set.n_positive(), 1);
        assert_eq!(set.n_negative(), 2);
        assert_eq!(set.n_instances(), 6);
        assert_eq!(set.negative_instances().count(), 4);
        assert!(set.require_both_classes().is_ok());

        let only_neg = BagSet::new(vec![Bag::negative("n", vec![dvector![0.0]]).unwrap()]).unwrap();
        assert!(matches!(
            only_neg.require_both_classes(),
            Err(Error::MissingBagClass { positive: 0, negative: 1 })
        ));
    }
}
