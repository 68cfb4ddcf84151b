//! Label space, vote counts and probability vectors over the three NLI labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of labels.
pub const NUM_LABELS: usize = 3;

/// Tolerance on the total mass of a [`LabelDistribution`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// An NLI label. The discriminant is the canonical index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "e")]
    Entailment = 0,
    #[serde(rename = "n")]
    Neutral = 1,
    #[serde(rename = "c")]
    Contradiction = 2,
}

impl Label {
    pub const ALL: [Label; NUM_LABELS] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    /// Single-letter code used in annotation files.
    pub fn code(self) -> &'static str {
        match self {
            Label::Entailment => "e",
            Label::Neutral => "n",
            Label::Contradiction => "c",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "entailment" => Ok(Label::Entailment),
            "n" | "neutral" => Ok(Label::Neutral),
            "c" | "contradiction" => Ok(Label::Contradiction),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

/// Index of the largest entry; ties go to the lowest canonical index.
pub fn argmax(values: &[f64; NUM_LABELS]) -> Label {
    let mut best = 0;
    for i in 1..NUM_LABELS {
        if values[i] > values[best] {
            best = i;
        }
    }
    Label::ALL[best]
}

/// Per-label vote counts with a positive total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelCounts([u32; NUM_LABELS]);

impl LabelCounts {
    pub fn new(counts: [u32; NUM_LABELS]) -> Result<Self> {
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::ZeroAnnotations);
        }
        Ok(LabelCounts(counts))
    }

    /// A single vote for `label`.
    pub fn single(label: Label) -> Self {
        let mut counts = [0; NUM_LABELS];
        counts[label.index()] = 1;
        LabelCounts(counts)
    }

    pub fn get(&self, label: Label) -> u32 {
        self.0[label.index()]
    }

    pub fn as_array(&self) -> [u32; NUM_LABELS] {
        self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Empirical vote frequencies.
    pub fn to_distribution(&self) -> LabelDistribution {
        let total = f64::from(self.total());
        LabelDistribution(self.0.map(|c| f64::from(c) / total))
    }

    /// Label with the most votes, ties broken toward the lowest canonical index.
    pub fn majority_label(&self) -> Label {
        let mut best = 0;
        for i in 1..NUM_LABELS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Label::ALL[best]
    }

    /// The individual votes as a flat list, in canonical label order.
    pub fn votes(&self) -> Vec<Label> {
        Label::ALL
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, self.get(l) as usize))
            .collect()
    }

    /// Counts of a non-empty vote list.
    pub fn from_votes(votes: &[Label]) -> Result<Self> {
        let mut counts = [0u32; NUM_LABELS];
        for v in votes {
            counts[v.index()] += 1;
        }
        LabelCounts::new(counts)
    }
}

/// A probability vector over the three labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelDistribution([f64; NUM_LABELS]);

impl LabelDistribution {
    pub fn new(probs: [f64; NUM_LABELS]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "non-finite entry in {probs:?}"
            )));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "negative entry in {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, not 1"
            )));
        }
        Ok(LabelDistribution(probs))
    }

    pub fn uniform() -> Self {
        LabelDistribution([1.0 / NUM_LABELS as f64; NUM_LABELS])
    }

    pub fn one_hot(label: Label) -> Self {
        let mut probs = [0.0; NUM_LABELS];
        probs[label.index()] = 1.0;
        LabelDistribution(probs)
    }

    pub fn probs(&self) -> &[f64; NUM_LABELS] {
        &self.0
    }

    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    pub fn argmax(&self) -> Label {
        argmax(&self.0)
    }

    pub(crate) fn from_raw(probs: [f64; NUM_LABELS]) -> Self {
        debug_assert!(LabelDistribution::new(probs).is_ok(), "{probs:?}");
        LabelDistribution(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_to_distribution() {
        let d = LabelCounts::new([60, 30, 10]).unwrap().to_distribution();
        assert_eq!(d.probs(), &[0.6, 0.3, 0.1]);
        let d = LabelCounts::new([100, 0, 0]).unwrap().to_distribution();
        assert_eq!(d.probs(), &[1.0, 0.0, 0.0]);
        let d = LabelCounts::new([1, 1, 1]).unwrap().to_distribution();
        for p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(matches!(
            LabelCounts::new([0, 0, 0]),
            Err(Error::ZeroAnnotations)
        ));
    }

    #[test]
    fn majority_tie_break() {
        let m = |c| LabelCounts::new(c).unwrap().majority_label();
        assert_eq!(m([60, 30, 10]), Label::Entailment);
        assert_eq!(m([50, 50, 0]), Label::Entailment);
        assert_eq!(m([0, 1, 0]), Label::Neutral);
        assert_eq!(m([0, 4, 4]), Label::Neutral);
    }

    #[test]
    fn distribution_validation() {
        assert!(LabelDistribution::new([0.5, 0.5, 0.0]).is_ok());
        assert!(LabelDistribution::new([0.5, 0.6, -0.1]).is_err());
        assert!(LabelDistribution::new([0.5, 0.4, 0.0]).is_err());
        assert!(LabelDistribution::new([f64::NAN, 0.5, 0.5]).is_err());
    }

    #[test]
    fn label_codes_round_trip() {
        for l in Label::ALL {
            assert_eq!(l.code().parse::<Label>().unwrap(), l);
            assert_eq!(Label::from_index(l.index()), Some(l));
        }
        assert!("x".parse::<Label>().is_err());
    }

    #[test]
    fn votes_round_trip() {
        let c = LabelCounts::new([2, 0, 3]).unwrap();
        let v = c.votes();
        assert_eq!(v.len(), 5);
        assert_eq!(LabelCounts::from_votes(&v).unwrap(), c);
    }
}
