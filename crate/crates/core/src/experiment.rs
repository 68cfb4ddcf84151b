//! End-to-end pipelines: hyperparameter sweeps over a prediction set and
//! fixed-budget annotation simulations.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::calibration::{fit_entropy_match, softmax, EntropyFit, HyperparamGrid, MethodKind};
use crate::classifier::{self, Example, TrainConfig, TrainingDynamics};
use crate::dataset::{eval_indices, AnnotationRecord};
use crate::error::{Error, Result};
use crate::label::{LabelDistribution, NUM_LABELS};
use crate::metrics::{entropy, score, MetricsReport, Reference, DEFAULT_KL_EPSILON};
use crate::seed;
use crate::simulator::{
    build_training_sets_unchecked, select_examples, validate_plan, BudgetPlan, SelectionStrategy,
    SingleLabelSource, SyntheticWorld,
};

/// Mean entropy of the human side of `refs`.
pub fn mean_human_entropy(refs: &[Reference]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::Empty("references"));
    }
    Ok(refs.iter().map(|r| entropy(&r.human)).sum::<f64>() / refs.len() as f64)
}

/// One grid point of a sweep. `report` is `None` where the method is
/// undefined for some prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub report: Option<MetricsReport>,
    /// Whether this is the entropy-matched point.
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub fit: EntropyFit,
}

/// Scores `logits` against `refs` at every grid value and marks the value
/// whose mean prediction entropy best matches the mean human entropy.
pub fn sweep(
    logits: &[[f64; NUM_LABELS]],
    refs: &[Reference],
    values: &[f64],
    kind: MethodKind,
) -> Result<Sweep> {
    if logits.len() != refs.len() {
        return Err(Error::DimensionMismatch {
            expected: refs.len(),
            got: logits.len(),
        });
    }
    let grid = HyperparamGrid::new(values.to_vec(), mean_human_entropy(refs)?)?;
    let fit = fit_entropy_match(logits, &grid, kind)?;
    let mut rows = Vec::with_capacity(values.len());
    for &value in grid.values() {
        let method = kind.with_value(value);
        let preds: Result<Vec<LabelDistribution>> =
            logits.iter().map(|l| method.apply(l)).collect();
        let report = match preds {
            Ok(p) => {
                let pairs: Vec<_> = p.into_iter().zip(refs.iter().cloned()).collect();
                Some(score(&pairs, DEFAULT_KL_EPSILON)?)
            }
            Err(Error::SmoothingOutOfRange { .. }) => None,
            Err(e) => return Err(e),
        };
        rows.push(SweepRow {
            value,
            report,
            matched: value == fit.value,
        });
    }
    Ok(Sweep { rows, fit })
}

/// Examples with features, votes and the distribution used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationData {
    pub features: Vec<Vec<f64>>,
    pub records: Vec<AnnotationRecord>,
    /// Scoring target per example, aligned with `records`.
    pub references: Vec<Reference>,
}

impl SimulationData {
    /// Scores against the generator's true distributions.
    pub fn from_world(world: &SyntheticWorld) -> Self {
        let references = world
            .records
            .iter()
            .zip(&world.true_dists)
            .map(|(r, t)| Reference::from_distribution(r.uid.clone(), *t, r.old_label))
            .collect();
        SimulationData {
            features: world.features.clone(),
            records: world.records.clone(),
            references,
        }
    }

    /// Scores against the empirical vote distributions of `records`.
    pub fn from_records(records: Vec<AnnotationRecord>, features: Vec<Vec<f64>>) -> Result<Self> {
        if records.len() != features.len() {
            return Err(Error::DimensionMismatch {
                expected: records.len(),
                got: features.len(),
            });
        }
        let references = records.iter().map(Reference::from_record).collect();
        Ok(SimulationData {
            features,
            records,
            references,
        })
    }

    /// Joins records with a uid-keyed feature table.
    pub fn join(
        records: Vec<AnnotationRecord>,
        features: &HashMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let feats = records
            .iter()
            .map(|r| {
                features.get(&r.uid).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("no features for uid `{}`", r.uid))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SimulationData::from_records(records, feats)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_eval: usize,
    /// Training examples set aside as candidates for multi-annotation.
    pub multi_pool_size: usize,
    pub plans: Vec<BudgetPlan>,
    /// Strategies tried for plans with multi-annotated examples.
    pub strategies: Vec<SelectionStrategy>,
    pub single_label: SingleLabelSource,
    pub train: TrainConfig,
    /// Reject plans that break the budget identity.
    pub validate_plans: bool,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_eval: 500,
            multi_pool_size: 1000,
            plans: Vec::new(),
            strategies: vec![SelectionStrategy::Random],
            single_label: SingleLabelSource::default(),
            train: TrainConfig::default(),
            validate_plans: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRow {
    pub plan: BudgetPlan,
    /// `None` for plans without multi-annotated examples.
    pub strategy: Option<SelectionStrategy>,
    pub votes_spent: u64,
    /// Final model on the evaluation set.
    pub report: MetricsReport,
    /// Model after single-annotation training only.
    pub phase1_report: MetricsReport,
    pub eval_logits: Vec<[f64; NUM_LABELS]>,
    pub phase1_logits: Vec<[f64; NUM_LABELS]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub eval_references: Vec<Reference>,
    pub rows: Vec<SimulationRow>,
}

fn to_examples(
    data: &SimulationData,
    index: &HashMap<&str, usize>,
    records: &[AnnotationRecord],
) -> Vec<Example> {
    records
        .iter()
        .map(|r| Example {
            features: data.features[index[r.uid.as_str()]].clone(),
            target: r.distribution(),
        })
        .collect()
}

fn score_logits(logits: &[[f64; NUM_LABELS]], refs: &[Reference]) -> Result<MetricsReport> {
    let pairs = logits
        .iter()
        .zip(refs)
        .map(|(l, r)| Ok((softmax(l)?, r.clone())))
        .collect::<Result<Vec<_>>>()?;
    score(&pairs, DEFAULT_KL_EPSILON)
}

/// Gold-label confidence dynamics of a model trained on `pool` alone with
/// the pool's old gold labels.
pub fn probe_dynamics(
    data: &SimulationData,
    pool: &[usize],
    config: &TrainConfig,
) -> Result<Vec<TrainingDynamics>> {
    let examples: Vec<Example> = pool
        .iter()
        .map(|&i| Example {
            features: data.features[i].clone(),
            target: LabelDistribution::one_hot(data.records[i].old_label),
        })
        .collect();
    let dim = data.features.first().map_or(0, Vec::len);
    let init = classifier::init(dim, config.seed)?;
    let out = classifier::train(
        &init,
        &examples,
        classifier::LossKind::CrossEntropy,
        config.epochs_phase1.max(1),
        config,
        "probe",
    )?;
    Ok(out.dynamics)
}

/// For each plan (and each selection strategy when the plan buys
/// multi-annotations): build the training sets, train single-then-multi,
/// and score on a held-out evaluation set.
pub fn simulate(data: &SimulationData, config: &SimulationConfig) -> Result<SimulationOutcome> {
    let n = data.records.len();
    if data.features.len() != n || data.references.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: data.features.len().min(data.references.len()),
        });
    }
    if config.plans.is_empty() {
        return Err(Error::Empty("plans"));
    }
    if config.validate_plans {
        for p in &config.plans {
            validate_plan(p)?;
        }
    }
    let dim = data.features.first().map_or(0, Vec::len);
    if data.features.iter().any(|x| x.len() != dim) {
        return Err(Error::InvalidArgument(
            "feature vectors differ in length".into(),
        ));
    }

    let eval = eval_indices(n, config.n_eval, seed::derive_seed(config.seed, "sim-eval"))?;
    let mut is_eval = vec![false; n];
    for &i in &eval {
        is_eval[i] = true;
    }
    let mut train_idx: Vec<usize> = (0..n).filter(|&i| !is_eval[i]).collect();
    if config.multi_pool_size > train_idx.len() {
        return Err(Error::InsufficientPool {
            what: "training examples for the multi pool",
            needed: config.multi_pool_size,
            available: train_idx.len(),
        });
    }
    train_idx.shuffle(&mut seed::rng_for(config.seed, "sim-pools"));
    let mut multi_idx = train_idx[..config.multi_pool_size].to_vec();
    let mut single_idx = train_idx[config.multi_pool_size..].to_vec();
    multi_idx.sort_unstable();
    single_idx.sort_unstable();

    let records_at = |idx: &[usize]| {
        idx.iter()
            .map(|&i| data.records[i].clone())
            .collect::<Vec<_>>()
    };
    let single_pool = records_at(&single_idx);
    let multi_pool = records_at(&multi_idx);
    let eval_refs: Vec<Reference> = eval.iter().map(|&i| data.references[i].clone()).collect();
    let eval_x: Vec<Vec<f64>> = eval.iter().map(|&i| data.features[i].clone()).collect();
    let uid_index: HashMap<&str, usize> = data
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.uid.as_str(), i))
        .collect();

    let needs_dynamics = config.strategies.contains(&SelectionStrategy::MostHard)
        && config.plans.iter().any(|p| p.n_multi > 0);
    let dynamics = if needs_dynamics {
        Some(probe_dynamics(data, &multi_idx, &config.train)?)
    } else {
        None
    };

    let init = classifier::init(dim, config.train.seed)?;
    let build_seed = seed::derive_seed(config.seed, "sim-build");
    let select_seed = seed::derive_seed(config.seed, "sim-select");
    let mut rows = Vec::new();
    for plan in &config.plans {
        let strategies: Vec<Option<SelectionStrategy>> = if plan.n_multi == 0 {
            vec![None]
        } else {
            config.strategies.iter().copied().map(Some).collect()
        };
        for strategy in strategies {
            let candidates = match strategy {
                None => Vec::new(),
                Some(s) => {
                    let picked = select_examples(
                        &multi_pool,
                        dynamics.as_deref(),
                        s,
                        plan.n_multi as usize,
                        select_seed,
                    )?;
                    picked.into_iter().map(|i| multi_pool[i].clone()).collect()
                }
            };
            let sets = build_training_sets_unchecked(
                &single_pool,
                &candidates,
                plan,
                config.single_label,
                build_seed,
            )?;
            let single = to_examples(data, &uid_index, &sets.single);
            let multi = to_examples(data, &uid_index, &sets.multi);
            let trained = classifier::two_phase_train(&init, &single, &multi, &config.train)?;
            let eval_logits = classifier::predict(&trained.params, &eval_x)?;
            let phase1_logits = classifier::predict(&trained.phase1.params, &eval_x)?;
            rows.push(SimulationRow {
                plan: *plan,
                strategy,
                votes_spent: sets.total_votes(),
                report: score_logits(&eval_logits, &eval_refs)?,
                phase1_report: score_logits(&phase1_logits, &eval_refs)?,
                eval_logits,
                phase1_logits,
            });
        }
    }
    Ok(SimulationOutcome {
        eval_references: eval_refs,
        rows,
    })
}
