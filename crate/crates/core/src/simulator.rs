//! Annotation-budget plans, multi-annotated training-set construction,
//! example selection and a synthetic world with known label distributions.

use std::fmt;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::calibration::softmax;
use crate::classifier::TrainingDynamics;
use crate::dataset::{subsample_with, AnnotationRecord};
use crate::error::{Error, Result};
use crate::label::{Label, LabelCounts, LabelDistribution, NUM_LABELS};
use crate::metrics::entropy;
use crate::seed;

/// Split of a fixed vote budget between single-vote and `k_way`-vote examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BudgetPlan {
    pub budget: u64,
    pub n_single: u64,
    pub n_multi: u64,
    pub k_way: u64,
}

impl BudgetPlan {
    pub fn votes_spent(&self) -> u64 {
        self.n_single + self.n_multi * self.k_way
    }
}

impl fmt::Display for BudgetPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.budget, self.n_single, self.n_multi, self.k_way
        )
    }
}

/// Parses `budget:n_single:n_multi:k_way`; the budget identity is not checked.
impl std::str::FromStr for BudgetPlan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidArgument(format!("plan `{s}` is not budget:n_single:n_multi:k_way"));
        let parts = s
            .split(':')
            .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        match parts[..] {
            [budget, n_single, n_multi, k_way] => Ok(BudgetPlan {
                budget,
                n_single,
                n_multi,
                k_way,
            }),
            _ => Err(bad()),
        }
    }
}

/// Checks `n_single + n_multi * k_way == budget` and `k_way >= 2` whenever
/// multi-annotated examples are planned.
pub fn validate_plan(plan: &BudgetPlan) -> Result<()> {
    if plan.budget == 0 {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    if plan.n_multi > 0 && plan.k_way < 2 {
        return Err(Error::InvalidArgument(format!(
            "multi-annotated examples need k_way >= 2, got {}",
            plan.k_way
        )));
    }
    let spent = plan.votes_spent();
    if spent != plan.budget {
        return Err(Error::BudgetMismatch {
            budget: plan.budget,
            n_single: plan.n_single,
            n_multi: plan.n_multi,
            k_way: plan.k_way,
            spent,
        });
    }
    Ok(())
}

/// Where the one label of a single-annotated example comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingleLabelSource {
    /// One vote drawn from the example's annotation pool.
    #[default]
    PoolVote,
    /// The record's original gold label.
    OldGold,
}

impl SingleLabelSource {
    pub fn name(self) -> &'static str {
        match self {
            SingleLabelSource::PoolVote => "pool_vote",
            SingleLabelSource::OldGold => "old_gold",
        }
    }
}

impl std::str::FromStr for SingleLabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pool_vote" => Ok(SingleLabelSource::PoolVote),
            "old_gold" => Ok(SingleLabelSource::OldGold),
            _ => Err(Error::InvalidArgument(format!(
                "unknown single-label source `{s}` (pool_vote, old_gold)"
            ))),
        }
    }
}

/// Training examples chosen under a plan. Records keep their pool uid; the
/// counts hold only the votes that were "bought".
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSets {
    pub single: Vec<AnnotationRecord>,
    pub multi: Vec<AnnotationRecord>,
}

impl TrainingSets {
    pub fn total_votes(&self) -> u64 {
        self.single
            .iter()
            .chain(&self.multi)
            .map(|r| u64::from(r.counts.total()))
            .sum()
    }
}

fn pick(len: usize, n: usize, rng: &mut seed::Rng, what: &'static str) -> Result<Vec<usize>> {
    if n > len {
        return Err(Error::InsufficientPool {
            what,
            needed: n,
            available: len,
        });
    }
    let mut idx = index::sample(rng, len, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Draws `n_single` single-vote examples and `n_multi` examples with
/// `k_way` votes each, every choice without replacement.
pub fn build_training_sets(
    single_pool: &[AnnotationRecord],
    multi_pool: &[AnnotationRecord],
    plan: &BudgetPlan,
    source: SingleLabelSource,
    seed: u64,
) -> Result<TrainingSets> {
    validate_plan(plan)?;
    build_training_sets_unchecked(single_pool, multi_pool, plan, source, seed)
}

/// As [`build_training_sets`] without the budget identity check.
pub fn build_training_sets_unchecked(
    single_pool: &[AnnotationRecord],
    multi_pool: &[AnnotationRecord],
    plan: &BudgetPlan,
    source: SingleLabelSource,
    seed: u64,
) -> Result<TrainingSets> {
    let mut rng = seed::rng_for(seed, "build-single");
    let single_idx = pick(
        single_pool.len(),
        plan.n_single as usize,
        &mut rng,
        "single-pool examples",
    )?;
    let mut single = Vec::with_capacity(single_idx.len());
    for i in single_idx {
        let r = &single_pool[i];
        let label = match source {
            SingleLabelSource::OldGold => r.old_label,
            SingleLabelSource::PoolVote => {
                let vote = subsample_with(&r.counts, 1, &mut rng)?;
                vote.majority_label()
            }
        };
        single.push(AnnotationRecord {
            counts: LabelCounts::single(label),
            ..r.clone()
        });
    }

    let mut rng = seed::rng_for(seed, "build-multi");
    let multi_idx = pick(
        multi_pool.len(),
        plan.n_multi as usize,
        &mut rng,
        "multi-pool examples",
    )?;
    let mut multi = Vec::with_capacity(multi_idx.len());
    for i in multi_idx {
        let r = &multi_pool[i];
        let k = u32::try_from(plan.k_way)
            .map_err(|_| Error::InvalidArgument(format!("k_way {} too large", plan.k_way)))?;
        if k > r.counts.total() {
            return Err(Error::InsufficientPool {
                what: "annotations on a multi-pool record",
                needed: k as usize,
                available: r.counts.total() as usize,
            });
        }
        multi.push(AnnotationRecord {
            counts: subsample_with(&r.counts, k, &mut rng)?,
            ..r.clone()
        });
    }
    Ok(TrainingSets { single, multi })
}

/// Rule for choosing which pool examples get multiple annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionStrategy {
    Random,
    /// Highest human label entropy first.
    MostAmbiguous,
    /// Lowest human label entropy first.
    MostEasy,
    /// Lowest mean gold-label confidence across training epochs first.
    MostHard,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 4] = [
        SelectionStrategy::Random,
        SelectionStrategy::MostAmbiguous,
        SelectionStrategy::MostEasy,
        SelectionStrategy::MostHard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionStrategy::Random => "random",
            SelectionStrategy::MostAmbiguous => "ambiguous",
            SelectionStrategy::MostEasy => "easy",
            SelectionStrategy::MostHard => "hard",
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SelectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionStrategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown selection strategy `{s}`")))
    }
}

/// Indices (ascending) of the `n_select` pool records chosen by `strategy`.
/// Ranked strategies break ties by uid.
pub fn select_examples(
    pool: &[AnnotationRecord],
    dynamics: Option<&[TrainingDynamics]>,
    strategy: SelectionStrategy,
    n_select: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if n_select > pool.len() {
        return Err(Error::InsufficientPool {
            what: "pool records to select",
            needed: n_select,
            available: pool.len(),
        });
    }
    let score: Vec<f64> = match strategy {
        SelectionStrategy::Random => {
            return pick(
                pool.len(),
                n_select,
                &mut seed::rng_for(seed, "select"),
                "pool records",
            );
        }
        SelectionStrategy::MostAmbiguous => {
            pool.iter().map(|r| -entropy(&r.distribution())).collect()
        }
        SelectionStrategy::MostEasy => pool.iter().map(|r| entropy(&r.distribution())).collect(),
        SelectionStrategy::MostHard => {
            let d = dynamics.ok_or_else(|| {
                Error::InvalidArgument("hard-example selection needs training dynamics".into())
            })?;
            if d.len() != pool.len() {
                return Err(Error::DimensionMismatch {
                    expected: pool.len(),
                    got: d.len(),
                });
            }
            d.iter().map(|t| t.mean_confidence).collect()
        }
    };
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        score[a]
            .total_cmp(&score[b])
            .then_with(|| pool[a].uid.cmp(&pool[b].uid))
    });
    let mut picked = order[..n_select].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Parameters of a synthetic labelling world.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorldConfig {
    pub n_examples: usize,
    pub feature_dim: usize,
    /// Norm of each class mean.
    pub separation: f64,
    /// Temperature dividing the true logits; larger means more disagreement.
    pub tau_gen: f64,
    /// Crowd votes per example.
    pub votes: u32,
    /// Explicit `NUM_LABELS x feature_dim` row-major weights. Defaults to
    /// the class means.
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        SyntheticWorldConfig {
            n_examples: 1500,
            feature_dim: 8,
            separation: 2.0,
            tau_gen: 2.0,
            votes: 100,
            weights: None,
            seed: 0,
        }
    }
}

impl SyntheticWorldConfig {
    /// Short hex digest identifying this configuration.
    pub fn fingerprint(&self) -> String {
        crate::seed::fingerprint(&format!("{self:?}"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 1 {
            return Err(Error::InvalidArgument("feature_dim must be >= 1".into()));
        }
        if !(self.tau_gen > 0.0 && self.tau_gen.is_finite()) {
            return Err(Error::InvalidArgument("tau_gen must be positive".into()));
        }
        if self.votes < 1 {
            return Err(Error::InvalidArgument("votes must be >= 1".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidArgument(
                "separation must be non-negative".into(),
            ));
        }
        if let Some(w) = &self.weights {
            if w.len() != NUM_LABELS * self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: NUM_LABELS * self.feature_dim,
                    got: w.len(),
                });
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("synthetic weights"));
            }
        }
        Ok(())
    }
}

/// A generated world. `records[i].old_label` is the mixture component that
/// produced `features[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub class_means: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub true_dists: Vec<LabelDistribution>,
    pub records: Vec<AnnotationRecord>,
}

impl SyntheticWorld {
    pub fn mean_true_entropy(&self) -> f64 {
        self.true_dists.iter().map(entropy).sum::<f64>() / self.true_dists.len().max(1) as f64
    }
}

/// Uid of synthetic example `i`.
pub fn synthetic_uid(i: usize) -> String {
    format!("syn-{i:06}")
}

/// Draws a Gaussian-mixture world: each example picks a class uniformly,
/// its features are the class mean plus standard normal noise, its true
/// label distribution is `softmax(weights . x / tau_gen)`, and its votes are
/// drawn from that distribution.
pub fn generate_synthetic(config: &SyntheticWorldConfig) -> Result<SyntheticWorld> {
    config.validate()?;
    let d = config.feature_dim;
    let mut rng = seed::rng_for(config.seed, "synthetic-means");
    let class_means = class_means(d, config.separation, &mut rng);
    let weights = config
        .weights
        .clone()
        .unwrap_or_else(|| class_means.concat());

    let mut features = Vec::with_capacity(config.n_examples);
    let mut true_dists = Vec::with_capacity(config.n_examples);
    let mut records = Vec::with_capacity(config.n_examples);
    for i in 0..config.n_examples {
        let mut rng = seed::rng_for_item(config.seed, "synthetic-example", i as u64);
        let class = rng.random_range(0..NUM_LABELS);
        let x: Vec<f64> = class_means[class]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + z
            })
            .collect();
        let logits: [f64; NUM_LABELS] = std::array::from_fn(|k| {
            weights[k * d..(k + 1) * d]
                .iter()
                .zip(&x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                / config.tau_gen
        });
        let truth = softmax(&logits)?;
        let mut counts = [0u32; NUM_LABELS];
        for _ in 0..config.votes {
            counts[sample_label(&truth, rng.random::<f64>()).index()] += 1;
        }
        records.push(AnnotationRecord::new(
            synthetic_uid(i),
            LabelCounts::new(counts)?,
            Label::ALL[class],
        ));
        features.push(x);
        true_dists.push(truth);
    }
    Ok(SyntheticWorld {
        class_means,
        weights,
        features,
        true_dists,
        records,
    })
}

/// Random class means of norm `separation`, mutually orthogonal when
/// `dim >= NUM_LABELS` so every pair of classes is equally far apart.
fn class_means(dim: usize, separation: f64, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(NUM_LABELS);
    for _ in 0..NUM_LABELS {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        if dim >= NUM_LABELS {
            // Gram-Schmidt against the unit vectors found so far
            for u in &means {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        means.push(v.into_iter().map(|x| x / norm).collect());
    }
    means
        .into_iter()
        .map(|u| u.into_iter().map(|x| x * separation).collect())
        .collect()
}

/// Inverse-CDF draw from `dist` with `u` in `[0, 1)`.
fn sample_label(dist: &LabelDistribution, u: f64) -> Label {
    let mut acc = 0.0;
    for l in Label::ALL {
        acc += dist.get(l);
        if u < acc {
            return l;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    Label::ALL
        .into_iter()
        .rev()
        .find(|&l| dist.get(l) > 0.0)
        .unwrap_or(Label::Contradiction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_text_round_trips() {
        let plan: BudgetPlan = "150000:140000:1000:10".parse().unwrap();
        assert_eq!(plan.votes_spent(), 150_000);
        assert_eq!(plan.to_string().parse::<BudgetPlan>().unwrap(), plan);
        assert!("1:2:3".parse::<BudgetPlan>().is_err());
        assert!("1:2:x:4".parse::<BudgetPlan>().is_err());
        for src in [SingleLabelSource::PoolVote, SingleLabelSource::OldGold] {
            assert_eq!(src.name().parse::<SingleLabelSource>().unwrap(), src);
        }
    }

    fn rec(uid: &str, c: [u32; 3]) -> AnnotationRecord {
        AnnotationRecord::new(uid, LabelCounts::new(c).unwrap(), Label::Neutral)
    }

    #[test]
    fn plan_validation() {
        let p = |b, s, m, k| BudgetPlan {
            budget: b,
            n_single: s,
            n_multi: m,
            k_way: k,
        };
        assert!(validate_plan(&p(150_000, 140_000, 1000, 10)).is_ok());
        assert!(validate_plan(&p(150_000, 150_000, 0, 0)).is_ok());
        let err = validate_plan(&p(150_000, 130_000, 500, 20)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("140000") && msg.contains("150000"), "{msg}");
        assert!(validate_plan(&p(10, 0, 10, 1)).is_err());
    }

    #[test]
    fn selection_by_entropy() {
        let pool = vec![
            rec("a", [10, 0, 0]),
            rec("b", [5, 5, 5]),
            rec("c", [0, 10, 0]),
        ];
        assert_eq!(
            select_examples(&pool, None, SelectionStrategy::MostAmbiguous, 1, 0).unwrap(),
            vec![1]
        );
        assert_eq!(
            select_examples(&pool, None, SelectionStrategy::MostEasy, 1, 0).unwrap(),
            vec![0]
        );
        for s in [
            SelectionStrategy::Random,
            SelectionStrategy::MostAmbiguous,
            SelectionStrategy::MostEasy,
        ] {
            assert_eq!(
                select_examples(&pool, None, s, 3, 0).unwrap(),
                vec![0, 1, 2]
            );
        }
        assert!(select_examples(&pool, None, SelectionStrategy::MostHard, 1, 0).is_err());
        assert!(select_examples(&pool, None, SelectionStrategy::Random, 4, 0).is_err());
    }

    #[test]
    fn selection_by_dynamics() {
        let pool = vec![
            rec("a", [10, 0, 0]),
            rec("b", [5, 5, 5]),
            rec("c", [0, 10, 0]),
        ];
        let dyn_ = |m| TrainingDynamics {
            mean_confidence: m,
            std_confidence: 0.0,
        };
        let d = vec![dyn_(0.9), dyn_(0.5), dyn_(0.2)];
        assert_eq!(
            select_examples(&pool, Some(&d), SelectionStrategy::MostHard, 2, 0).unwrap(),
            vec![1, 2]
        );
    }

    #[test]
    fn training_sets_follow_plan() {
        let pool: Vec<_> = (0..50)
            .map(|i| rec(&format!("u{i:02}"), [60, 30, 10]))
            .collect();
        let plan = BudgetPlan {
            budget: 100,
            n_single: 50,
            n_multi: 5,
            k_way: 10,
        };
        let sets =
            build_training_sets(&pool, &pool[..20], &plan, SingleLabelSource::PoolVote, 1).unwrap();
        assert_eq!(sets.single.len(), 50);
        assert_eq!(sets.multi.len(), 5);
        assert!(sets.single.iter().all(|r| r.counts.total() == 1));
        assert!(sets.multi.iter().all(|r| r.counts.total() == 10));
        assert_eq!(sets.total_votes(), 100);

        let full = BudgetPlan {
            budget: 2000,
            n_single: 0,
            n_multi: 20,
            k_way: 100,
        };
        let sets =
            build_training_sets(&pool, &pool[..20], &full, SingleLabelSource::PoolVote, 1).unwrap();
        assert_eq!(sets.multi, pool[..20].to_vec());

        let gold = BudgetPlan {
            budget: 10,
            n_single: 10,
            n_multi: 0,
            k_way: 0,
        };
        let sets = build_training_sets(&pool, &[], &gold, SingleLabelSource::OldGold, 1).unwrap();
        assert!(sets
            .single
            .iter()
            .all(|r| r.counts.get(Label::Neutral) == 1));
        assert!(sets.multi.is_empty());

        let too_big = BudgetPlan {
            budget: 60,
            n_single: 60,
            n_multi: 0,
            k_way: 0,
        };
        assert!(build_training_sets(&pool, &[], &too_big, SingleLabelSource::PoolVote, 1).is_err());
    }

    #[test]
    fn synthetic_is_seeded_and_well_formed() {
        let cfg = SyntheticWorldConfig {
            n_examples: 50,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, generate_synthetic(&cfg).unwrap());
        assert_eq!(a.records.len(), 50);
        assert!(a.records.iter().all(|r| r.counts.total() == 100));
        assert!(a.features.iter().all(|x| x.len() == 8));
        assert_eq!(a.records[3].uid, "syn-000003");
    }

    #[test]
    fn synthetic_rejects_bad_config() {
        let bad = [
            SyntheticWorldConfig {
                tau_gen: 0.0,
                ..Default::default()
            },
            SyntheticWorldConfig {
                votes: 0,
                ..Default::default()
            },
            SyntheticWorldConfig {
                feature_dim: 0,
                ..Default::default()
            },
            SyntheticWorldConfig {
                weights: Some(vec![1.0; 5]),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(generate_synthetic(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn sampling_gap_falls_back_to_last_supported_label() {
        let d = LabelDistribution::new([0.5, 0.5, 0.0]).unwrap();
        assert_eq!(sample_label(&d, 0.999_999_999_999_999_9), Label::Neutral);
        assert_eq!(sample_label(&d, 0.2), Label::Entailment);
    }
}
