//! Distribution metrics and evaluation reports.
//!
//! Entropy and KL use natural logs; JSD is the square-rooted base-2
//! Jensen-Shannon divergence, so it lies in `[0, 1]`. KL is taken as
//! `KL(human || model)`.

use std::collections::HashSet;

use rand::seq::SliceRandom;

use crate::calibration::CalibrationMethod;
use crate::dataset::{AnnotationRecord, PredictionSet};
use crate::error::{Error, Result};
use crate::label::{Label, LabelCounts, LabelDistribution, NUM_LABELS};
use crate::seed;

/// Floor applied to model-side probabilities inside KL.
pub const DEFAULT_KL_EPSILON: f64 = 1e-12;

/// Default bin count for entropy histograms and binned JSD.
pub const DEFAULT_BINS: usize = 10;

/// Upper end of the entropy axis, `ln 3`.
pub fn max_entropy() -> f64 {
    (NUM_LABELS as f64).ln()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(dist: &LabelDistribution) -> f64 {
    entropy_base(dist, std::f64::consts::E)
}

pub fn entropy_base(dist: &LabelDistribution, base: f64) -> f64 {
    let h: f64 = dist
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    // a one-hot gives -0.0
    h.max(0.0) / base.ln()
}

/// `KL(p || q)` in nats, with `q` floored at `epsilon`.
pub fn kl_div(p: &LabelDistribution, q: &LabelDistribution, epsilon: f64) -> f64 {
    kl_terms(p.probs(), q.probs(), epsilon).max(0.0)
}

fn kl_terms(p: &[f64; NUM_LABELS], q: &[f64; NUM_LABELS], epsilon: f64) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(epsilon)).ln())
        .sum()
}

/// Jensen-Shannon distance with base-2 logs.
pub fn jsd(p: &LabelDistribution, q: &LabelDistribution) -> f64 {
    jsd_base(p, q, 2.0)
}

pub fn jsd_base(p: &LabelDistribution, q: &LabelDistribution, base: f64) -> f64 {
    let (p, q) = (p.probs(), q.probs());
    let m: [f64; NUM_LABELS] = std::array::from_fn(|i| 0.5 * (p[i] + q[i]));
    // m_i > 0 wherever p_i > 0 or q_i > 0, so no floor is needed
    let div = 0.5 * (kl_terms(p, &m, 0.0) + kl_terms(q, &m, 0.0)) / base.ln();
    div.max(0.0).sqrt().min(1.0)
}

/// The reference side of an evaluated example.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub uid: String,
    pub human: LabelDistribution,
    pub old_label: Label,
    pub new_label: Label,
}

impl Reference {
    pub fn from_record(record: &AnnotationRecord) -> Self {
        Reference {
            uid: record.uid.clone(),
            human: record.distribution(),
            old_label: record.old_label,
            new_label: record.majority_label(),
        }
    }

    /// A reference whose human distribution is known exactly, e.g. from a
    /// synthetic generator.
    pub fn from_distribution(
        uid: impl Into<String>,
        human: LabelDistribution,
        old_label: Label,
    ) -> Self {
        Reference {
            uid: uid.into(),
            new_label: human.argmax(),
            human,
            old_label,
        }
    }
}

/// Fractions of predictions whose argmax equals the old gold label and the
/// majority label.
pub fn accuracies(pairs: &[(LabelDistribution, Reference)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let (mut old, mut new) = (0usize, 0usize);
    for (pred, r) in pairs {
        let label = pred.argmax();
        old += usize::from(label == r.old_label);
        new += usize::from(label == r.new_label);
    }
    let n = pairs.len() as f64;
    Ok((old as f64 / n, new as f64 / n))
}

/// Mean over examples of `min(p_entailment, p_contradiction)`.
pub fn min_extreme_prob(dists: &[LabelDistribution]) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::Empty("distributions"));
    }
    let sum: f64 = dists
        .iter()
        .map(|d| d.get(Label::Entailment).min(d.get(Label::Contradiction)))
        .sum();
    Ok(sum / dists.len() as f64)
}

/// Equal-width bins over `[0, ln 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyBins {
    edges: Vec<f64>,
}

impl EntropyBins {
    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins < 1 {
            return Err(Error::InvalidArgument("need at least one bin".into()));
        }
        let top = max_entropy();
        let edges = (0..=n_bins)
            .map(|i| top * i as f64 / n_bins as f64)
            .collect();
        Ok(EntropyBins { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bins are right-open except the last, which also takes anything
    /// rounding pushed past `ln 3`.
    pub fn index_of(&self, h: f64) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&e| e <= h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl EntropyHistogram {
    /// Index of the most populated bin, lowest index on ties.
    pub fn modal_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

pub fn entropy_histogram(dists: &[LabelDistribution], n_bins: usize) -> Result<EntropyHistogram> {
    let bins = EntropyBins::new(n_bins)?;
    let mut counts = vec![0; bins.len()];
    for d in dists {
        counts[bins.index_of(entropy(d))] += 1;
    }
    Ok(EntropyHistogram {
        edges: bins.edges().to_vec(),
        counts,
    })
}

/// Mean JSD per bin of human label entropy. Empty bins hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedJsd {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean_jsd: Vec<Option<f64>>,
}

/// Pairs are `(prediction, human)`.
pub fn binned_jsd(
    pairs: &[(LabelDistribution, LabelDistribution)],
    n_bins: usize,
) -> Result<BinnedJsd> {
    let bins = EntropyBins::new(n_bins)?;
    let mut counts = vec![0usize; bins.len()];
    let mut sums = vec![0.0; bins.len()];
    for (pred, human) in pairs {
        let b = bins.index_of(entropy(human));
        counts[b] += 1;
        sums[b] += jsd(human, pred);
    }
    let mean_jsd = counts
        .iter()
        .zip(&sums)
        .map(|(&c, &s)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(BinnedJsd {
        edges: bins.edges().to_vec(),
        counts,
        mean_jsd,
    })
}

/// Aggregate scores over an evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub jsd: f64,
    pub kl: f64,
    pub acc_old: f64,
    pub acc_new: f64,
    /// Mean prediction entropy in nats.
    pub entropy: f64,
    pub n: usize,
    pub min_extreme_prob: f64,
}

impl MetricsReport {
    /// Fixed-key rendering, six decimals.
    pub fn to_key_values(&self) -> String {
        format!(
            "jsd = {:.6}\nkl = {:.6}\nacc_old = {:.6}\nacc_new = {:.6}\nentropy = {:.6}\nn = {}\nmin_extreme_prob = {:.6}\n",
            self.jsd, self.kl, self.acc_old, self.acc_new, self.entropy, self.n, self.min_extreme_prob
        )
    }

    fn mean_of(reports: &[MetricsReport]) -> MetricsReport {
        let k = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        MetricsReport {
            jsd: avg(|r| r.jsd),
            kl: avg(|r| r.kl),
            acc_old: avg(|r| r.acc_old),
            acc_new: avg(|r| r.acc_new),
            entropy: avg(|r| r.entropy),
            n: reports[0].n,
            min_extreme_prob: avg(|r| r.min_extreme_prob),
        }
    }
}

/// Scores `(prediction, reference)` pairs. Sums run in uid order so the
/// result does not depend on input order.
pub fn score(pairs: &[(LabelDistribution, Reference)], kl_epsilon: f64) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].1.uid.cmp(&pairs[b].1.uid));
    let (mut jsd_sum, mut kl_sum, mut h_sum) = (0.0, 0.0, 0.0);
    for &i in &order {
        let (pred, r) = &pairs[i];
        jsd_sum += jsd(&r.human, pred);
        kl_sum += kl_div(&r.human, pred, kl_epsilon);
        h_sum += entropy(pred);
    }
    let n = pairs.len() as f64;
    let (acc_old, acc_new) = accuracies(pairs)?;
    let preds: Vec<LabelDistribution> = order.iter().map(|&i| pairs[i].0).collect();
    Ok(MetricsReport {
        jsd: jsd_sum / n,
        kl: kl_sum / n,
        acc_old,
        acc_new,
        entropy: h_sum / n,
        n: pairs.len(),
        min_extreme_prob: min_extreme_prob(&preds)?,
    })
}

/// Calibrated prediction and reference for every record, in record order.
pub fn match_predictions(
    predictions: &PredictionSet,
    records: &[AnnotationRecord],
    calibration: Option<&CalibrationMethod>,
) -> Result<Vec<(LabelDistribution, Reference)>> {
    if let Some(c) = calibration {
        c.validate()?;
    }
    let mut seen = HashSet::with_capacity(records.len());
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.uid.as_str()) {
            return Err(Error::DuplicateUid(r.uid.clone()));
        }
        let p = predictions
            .get(&r.uid)
            .ok_or_else(|| Error::MissingPrediction(r.uid.clone()))?;
        let dist = match calibration {
            Some(c) => c.apply(&p.logits)?,
            None => crate::calibration::softmax(&p.logits)?,
        };
        pairs.push((dist, Reference::from_record(r)));
    }
    Ok(pairs)
}

/// Applies the optional post-hoc calibration and scores every record.
pub fn evaluate(
    predictions: &PredictionSet,
    records: &[AnnotationRecord],
    calibration: Option<&CalibrationMethod>,
) -> Result<MetricsReport> {
    let pairs = match_predictions(predictions, records, calibration)?;
    score(&pairs, DEFAULT_KL_EPSILON)
}

/// Approximates inter-annotator agreement: each resample splits every
/// record's votes into two random halves and scores one half against the
/// other. Reports are averaged over resamples.
pub fn estimate_human_baseline(
    records: &[AnnotationRecord],
    n_resamples: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidArgument("need at least one resample".into()));
    }
    if let Some(r) = records.iter().find(|r| r.counts.total() < 2) {
        return Err(Error::InvalidArgument(format!(
            "record `{}` has fewer than 2 annotations",
            r.uid
        )));
    }
    let mut reports = Vec::with_capacity(n_resamples);
    for s in 0..n_resamples {
        let mut rng = seed::rng_for_item(seed, "human-baseline", s as u64);
        let mut pairs = Vec::with_capacity(records.len());
        for r in records {
            let mut votes = r.counts.votes();
            votes.shuffle(&mut rng);
            let (a, b) = votes.split_at(votes.len() / 2);
            let half_a = LabelCounts::from_votes(a)?.to_distribution();
            let half_b = LabelCounts::from_votes(b)?;
            let reference = Reference {
                uid: r.uid.clone(),
                human: half_b.to_distribution(),
                old_label: r.old_label,
                new_label: half_b.majority_label(),
            };
            pairs.push((half_a, reference));
        }
        reports.push(score(&pairs, DEFAULT_KL_EPSILON)?);
    }
    Ok(MetricsReport::mean_of(&reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PredictionRecord;

    fn d(p: [f64; 3]) -> LabelDistribution {
        LabelDistribution::new(p).unwrap()
    }

    #[test]
    fn entropy_fixtures() {
        assert!((entropy(&LabelDistribution::uniform()) - 3f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&d([1.0, 0.0, 0.0])), 0.0);
        assert!((entropy(&d([0.5, 0.5, 0.0])) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((entropy_base(&d([0.5, 0.5, 0.0]), 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_fixtures() {
        let p = d([0.2, 0.3, 0.5]);
        assert_eq!(kl_div(&p, &p, DEFAULT_KL_EPSILON), 0.0);
        let k = kl_div(
            &d([1.0, 0.0, 0.0]),
            &d([0.5, 0.25, 0.25]),
            DEFAULT_KL_EPSILON,
        );
        assert!((k - 2f64.ln()).abs() < 1e-12);
        let k = kl_div(&d([0.5, 0.5, 0.0]), &d([1.0, 0.0, 0.0]), 1e-12);
        // 0.5 ln 0.5 + 0.5 ln(0.5 / 1e-12), evaluated independently
        assert!((k - 13.12236337740433).abs() < 1e-9, "{k}");
    }

    #[test]
    fn jsd_fixtures() {
        let p = d([0.2, 0.3, 0.5]);
        assert_eq!(jsd(&p, &p), 0.0);
        assert!((jsd(&d([1.0, 0.0, 0.0]), &d([0.0, 1.0, 0.0])) - 1.0).abs() < 1e-12);
        let v = jsd(&d([1.0, 0.0, 0.0]), &d([0.5, 0.5, 0.0]));
        assert!((v - 0.5579230452841438).abs() < 1e-12, "{v}");
    }

    fn reference(uid: &str, counts: [u32; 3], old: Label) -> Reference {
        Reference::from_record(&AnnotationRecord::new(
            uid,
            LabelCounts::new(counts).unwrap(),
            old,
        ))
    }

    #[test]
    fn accuracy_fixtures() {
        let pairs = vec![(
            d([0.5, 0.3, 0.2]),
            reference("a", [10, 80, 10], Label::Entailment),
        )];
        assert_eq!(accuracies(&pairs).unwrap(), (1.0, 0.0));
        assert!(accuracies(&[]).is_err());

        let golds = [
            Label::Entailment,
            Label::Neutral,
            Label::Entailment,
            Label::Contradiction,
        ];
        let pairs: Vec<_> = golds
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let mut c = [0; 3];
                c[g.index()] = 1;
                (
                    LabelDistribution::uniform(),
                    reference(&i.to_string(), c, g),
                )
            })
            .collect();
        assert_eq!(accuracies(&pairs).unwrap(), (0.5, 0.5));
    }

    #[test]
    fn min_extreme_fixtures() {
        assert!((min_extreme_prob(&[d([0.31, 0.68, 0.01])]).unwrap() - 0.01).abs() < 1e-15);
        let u = vec![LabelDistribution::uniform(); 3];
        assert!((min_extreme_prob(&u).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(min_extreme_prob(&[]).is_err());
    }

    #[test]
    fn histogram_fixtures() {
        let one_hot = vec![d([1.0, 0.0, 0.0]); 5];
        let h = entropy_histogram(&one_hot, 10).unwrap();
        assert_eq!(h.counts[0], 5);
        let uniform = vec![LabelDistribution::uniform(); 4];
        let h = entropy_histogram(&uniform, 10).unwrap();
        assert_eq!(h.counts[9], 4);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        assert!(entropy_histogram(&uniform, 0).is_err());

        // entropies 0.3251, 0.6931, 1.0397, 1.0889; edges every ln3/4 = 0.27465
        let mixed = vec![
            d([0.9, 0.1, 0.0]),
            d([0.5, 0.5, 0.0]),
            d([0.5, 0.25, 0.25]),
            d([0.4, 0.3, 0.3]),
        ];
        let h = entropy_histogram(&mixed, 4).unwrap();
        assert_eq!(h.counts, vec![0, 1, 1, 2]);
    }

    #[test]
    fn edge_values_go_right() {
        let bins = EntropyBins::new(4).unwrap();
        assert_eq!(bins.index_of(0.0), 0);
        assert_eq!(bins.index_of(bins.edges()[1]), 1);
        assert_eq!(bins.index_of(max_entropy()), 3);
        assert_eq!(bins.index_of(max_entropy() + 1e-15), 3);
    }

    #[test]
    fn binned_jsd_fixtures() {
        let humans = [d([1.0, 0.0, 0.0]), LabelDistribution::uniform()];
        let same: Vec<_> = humans.iter().map(|h| (*h, *h)).collect();
        let b = binned_jsd(&same, 10).unwrap();
        assert_eq!(b.mean_jsd[0], Some(0.0));
        assert_eq!(b.mean_jsd[9], Some(0.0));
        assert_eq!(b.mean_jsd[5], None);
        assert_eq!(b.counts.iter().sum::<usize>(), 2);

        let pairs = vec![
            (d([0.5, 0.5, 0.0]), d([1.0, 0.0, 0.0])),
            (d([1.0, 0.0, 0.0]), LabelDistribution::uniform()),
        ];
        let b = binned_jsd(&pairs, 10).unwrap();
        assert!((b.mean_jsd[0].unwrap() - jsd(&pairs[0].1, &pairs[0].0)).abs() < 1e-15);
        assert!((b.mean_jsd[9].unwrap() - jsd(&pairs[1].1, &pairs[1].0)).abs() < 1e-15);
    }

    fn records() -> Vec<AnnotationRecord> {
        vec![
            AnnotationRecord::new(
                "a",
                LabelCounts::new([60, 30, 10]).unwrap(),
                Label::Entailment,
            ),
            AnnotationRecord::new("b", LabelCounts::new([5, 90, 5]).unwrap(), Label::Neutral),
            AnnotationRecord::new("c", LabelCounts::new([20, 30, 50]).unwrap(), Label::Neutral),
        ]
    }

    fn preds_from_humans(records: &[AnnotationRecord]) -> PredictionSet {
        PredictionSet::new(
            records
                .iter()
                .map(|r| PredictionRecord {
                    uid: r.uid.clone(),
                    logits: r.distribution().probs().map(f64::ln),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn evaluate_perfect_predictions() {
        let recs = records();
        let r = evaluate(&preds_from_humans(&recs), &recs, None).unwrap();
        assert!(r.jsd < 1e-7 && r.kl < 1e-12, "{r:?}");
        assert_eq!(r.acc_new, 1.0);
        let mean_h: f64 = recs.iter().map(|r| entropy(&r.distribution())).sum::<f64>() / 3.0;
        assert!((r.entropy - mean_h).abs() < 1e-12);
        assert_eq!(r.n, 3);
    }

    #[test]
    fn evaluate_errors() {
        let recs = records();
        let preds = preds_from_humans(&recs[..2]);
        assert!(matches!(
            evaluate(&preds, &recs, None),
            Err(Error::MissingPrediction(u)) if u == "c"
        ));
        let mut dup = recs.clone();
        dup.push(recs[0].clone());
        assert!(matches!(
            evaluate(&preds_from_humans(&recs), &dup, None),
            Err(Error::DuplicateUid(_))
        ));
    }

    #[test]
    fn evaluate_temp_scale_keeps_accuracy() {
        let recs = records();
        let preds = PredictionSet::new(vec![
            PredictionRecord {
                uid: "a".into(),
                logits: [0.1, 2.0, -1.0],
            },
            PredictionRecord {
                uid: "b".into(),
                logits: [0.0, 3.0, 0.0],
            },
            PredictionRecord {
                uid: "c".into(),
                logits: [1.0, 0.0, 0.9],
            },
        ])
        .unwrap();
        let base = evaluate(&preds, &recs, None).unwrap();
        for s in [0.01, 0.3, 1.7, 40.0] {
            let r = evaluate(
                &preds,
                &recs,
                Some(&CalibrationMethod::TempScale { scale: s }),
            )
            .unwrap();
            assert_eq!((r.acc_old, r.acc_new), (base.acc_old, base.acc_new));
        }
    }

    #[test]
    fn report_rendering() {
        let r = MetricsReport {
            jsd: 0.0,
            kl: 1.0 / 3.0,
            acc_old: 0.5,
            acc_new: 1.0,
            entropy: 0.25,
            n: 7,
            min_extreme_prob: 0.03,
        };
        assert_eq!(
            r.to_key_values(),
            "jsd = 0.000000\nkl = 0.333333\nacc_old = 0.500000\nacc_new = 1.000000\nentropy = 0.250000\nn = 7\nmin_extreme_prob = 0.030000\n"
        );
    }

    #[test]
    fn human_baseline_cases() {
        let unanimous = vec![
            AnnotationRecord::new(
                "a",
                LabelCounts::new([100, 0, 0]).unwrap(),
                Label::Entailment,
            ),
            AnnotationRecord::new(
                "b",
                LabelCounts::new([0, 0, 100]).unwrap(),
                Label::Contradiction,
            ),
        ];
        let r = estimate_human_baseline(&unanimous, 3, 1).unwrap();
        assert_eq!((r.jsd, r.kl, r.acc_old, r.acc_new), (0.0, 0.0, 1.0, 1.0));

        let recs = records();
        assert_eq!(
            estimate_human_baseline(&recs, 4, 9).unwrap(),
            estimate_human_baseline(&recs, 4, 9).unwrap()
        );

        // a 1/1 split of two different votes is a pair of disjoint one-hots
        let split = vec![AnnotationRecord::new(
            "a",
            LabelCounts::new([1, 1, 0]).unwrap(),
            Label::Entailment,
        )];
        let r = estimate_human_baseline(&split, 1, 5).unwrap();
        assert_eq!(r.jsd, 1.0);
        let same = vec![AnnotationRecord::new(
            "a",
            LabelCounts::new([2, 0, 0]).unwrap(),
            Label::Entailment,
        )];
        assert_eq!(estimate_human_baseline(&same, 1, 5).unwrap().jsd, 0.0);

        let one = vec![AnnotationRecord::new(
            "a",
            LabelCounts::new([1, 0, 0]).unwrap(),
            Label::Entailment,
        )];
        assert!(estimate_human_baseline(&one, 1, 1).is_err());
    }
}
