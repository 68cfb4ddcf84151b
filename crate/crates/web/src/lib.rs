//! Browser demo. Three operations, each returning a JSON string:
//!
//! - [`calibrate`]: one logit vector through temperature scaling and
//!   prediction smoothing.
//! - [`alpha_sweep`]: KL to the true distributions across the smoothing grid
//!   for an over-confident model trained on a synthetic world.
//! - [`entropy_histograms`]: prediction-entropy histograms of that model
//!   before and after calibration and after multi-annotation finetuning.

use labeldist::calibration::{
    default_alpha_grid, default_scale_grid, fit_entropy_match, pred_smooth, softmax, temp_scale,
    HyperparamGrid, MethodKind, SmoothingMode,
};
use labeldist::classifier::{Optimizer, TrainConfig};
use labeldist::experiment::{
    mean_human_entropy, simulate, sweep, SimulationConfig, SimulationData, SimulationOutcome,
};
use labeldist::metrics::{entropy, entropy_histogram, DEFAULT_BINS};
use labeldist::simulator::{
    generate_synthetic, SelectionStrategy, SingleLabelSource, SyntheticWorldConfig,
};
use labeldist::LabelDistribution;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Calibrated {
    probs: [f64; 3],
    entropy: f64,
}

impl From<LabelDistribution> for Calibrated {
    fn from(d: LabelDistribution) -> Self {
        Calibrated {
            probs: *d.probs(),
            entropy: entropy(&d),
        }
    }
}

#[derive(Serialize)]
struct CalibrateOut {
    softmax: Calibrated,
    temp_scaled: Calibrated,
    /// `None` when literal smoothing is undefined for this alpha.
    smoothed: Option<Calibrated>,
    max_entropy: f64,
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

pub fn calibrate_json(
    logits: &[f64],
    scale: f64,
    alpha: f64,
    mode: &str,
) -> Result<String, String> {
    let z: [f64; 3] = logits
        .try_into()
        .map_err(|_| "need exactly 3 logits".to_string())?;
    let mode: SmoothingMode = mode.parse().map_err(|e: labeldist::Error| e.to_string())?;
    let base = softmax(&z).map_err(|e| e.to_string())?;
    let smoothed = match pred_smooth(&base, alpha, mode) {
        Ok(d) => Some(d.into()),
        Err(labeldist::Error::SmoothingOutOfRange { .. }) => None,
        Err(e) => return Err(e.to_string()),
    };
    let out = CalibrateOut {
        softmax: base.into(),
        temp_scaled: temp_scale(&z, scale).map_err(|e| e.to_string())?.into(),
        smoothed,
        max_entropy: labeldist::metrics::max_entropy(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Softmax, temperature-scaled (logits times `scale`) and smoothed
/// distributions of `logits`, with their entropies.
#[wasm_bindgen]
pub fn calibrate(logits: &[f64], scale: f64, alpha: f64, mode: &str) -> Result<String, JsValue> {
    calibrate_json(logits, scale, alpha, mode).map_err(js_err)
}

const SINGLE_PLAN: &str = "1500:1500:0:0";
const MULTI_PLAN: &str = "1500:1000:50:10";

/// Trains the demo's two models on a synthetic world of `tau_gen`.
fn run_world(tau_gen: f64, seed: u64) -> Result<SimulationOutcome, String> {
    let world = generate_synthetic(&SyntheticWorldConfig {
        n_examples: 2500,
        tau_gen,
        seed,
        ..SyntheticWorldConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let config = SimulationConfig {
        n_eval: 500,
        multi_pool_size: 500,
        plans: vec![SINGLE_PLAN.parse().unwrap(), MULTI_PLAN.parse().unwrap()],
        strategies: vec![SelectionStrategy::Random],
        single_label: SingleLabelSource::OldGold,
        train: TrainConfig {
            learning_rate: 0.05,
            optimizer: Optimizer::adam(),
            seed,
            ..TrainConfig::default()
        },
        validate_plans: true,
        seed,
    };
    simulate(&SimulationData::from_world(&world), &config).map_err(|e| e.to_string())
}

fn logits_of<'a>(o: &'a SimulationOutcome, plan: &str, phase1: bool) -> &'a [[f64; 3]] {
    let row = o
        .rows
        .iter()
        .find(|r| r.plan.to_string() == plan)
        .expect("plan row");
    if phase1 {
        &row.phase1_logits
    } else {
        &row.eval_logits
    }
}

#[derive(Serialize)]
struct SweepOut {
    human_entropy: f64,
    alphas: Vec<f64>,
    kl: Vec<f64>,
    entropy: Vec<f64>,
    matched_alpha: f64,
}

pub fn alpha_sweep_json(tau_gen: f64, seed: u64) -> Result<String, String> {
    let o = run_world(tau_gen, seed)?;
    let logits = logits_of(&o, SINGLE_PLAN, true);
    let alphas = default_alpha_grid();
    let kind = MethodKind::PredSmooth(SmoothingMode::Standard);
    let s = sweep(logits, &o.eval_references, &alphas, kind).map_err(|e| e.to_string())?;
    let (kl, entropy) = s
        .rows
        .iter()
        .map(|r| {
            r.report
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |m| (m.kl, m.entropy))
        })
        .unzip();
    let out = SweepOut {
        human_entropy: s.fit.target_entropy,
        alphas,
        kl,
        entropy,
        matched_alpha: s.fit.value,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// KL and mean entropy at every smoothing mass for a phase-1 model on a
/// synthetic world, plus the entropy-matched mass.
#[wasm_bindgen]
pub fn alpha_sweep(tau_gen: f64, seed: u32) -> Result<String, JsValue> {
    alpha_sweep_json(tau_gen, u64::from(seed)).map_err(js_err)
}

#[derive(Serialize)]
struct HistogramsOut {
    edges: Vec<f64>,
    human: Vec<usize>,
    baseline: Vec<usize>,
    temp_scaled: Vec<usize>,
    multi_annot: Vec<usize>,
    temperature: f64,
    kl: [f64; 3],
}

pub fn entropy_histograms_json(tau_gen: f64, seed: u64) -> Result<String, String> {
    let o = run_world(tau_gen, seed)?;
    let refs = &o.eval_references;
    let err = |e: labeldist::Error| e.to_string();
    let baseline = logits_of(&o, SINGLE_PLAN, true);
    let tuned = logits_of(&o, MULTI_PLAN, false);
    let grid = HyperparamGrid::new(default_scale_grid(), mean_human_entropy(refs).map_err(err)?)
        .map_err(err)?;
    let fit = fit_entropy_match(baseline, &grid, MethodKind::TempScale).map_err(err)?;

    let dists = |logits: &[[f64; 3]], scale: f64| -> Result<Vec<LabelDistribution>, String> {
        logits
            .iter()
            .map(|z| temp_scale(z, scale).map_err(err))
            .collect()
    };
    let hist = |d: &[LabelDistribution]| entropy_histogram(d, DEFAULT_BINS).map_err(err);
    let mean_kl = |d: &[LabelDistribution]| {
        d.iter()
            .zip(refs)
            .map(|(p, r)| {
                labeldist::metrics::kl_div(&r.human, p, labeldist::metrics::DEFAULT_KL_EPSILON)
            })
            .sum::<f64>()
            / d.len() as f64
    };
    let human: Vec<LabelDistribution> = refs.iter().map(|r| r.human).collect();
    let (b, t, m) = (
        dists(baseline, 1.0)?,
        dists(baseline, fit.value)?,
        dists(tuned, 1.0)?,
    );
    let human_hist = hist(&human)?;
    let out = HistogramsOut {
        edges: human_hist.edges.clone(),
        human: human_hist.counts,
        baseline: hist(&b)?.counts,
        temp_scaled: hist(&t)?.counts,
        multi_annot: hist(&m)?.counts,
        temperature: 1.0 / fit.value,
        kl: [mean_kl(&b), mean_kl(&t), mean_kl(&m)],
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Entropy histograms of the true distributions, the phase-1 model, the
/// temperature-scaled phase-1 model and the multi-annotation model.
#[wasm_bindgen]
pub fn entropy_histograms(tau_gen: f64, seed: u32) -> Result<String, JsValue> {
    entropy_histograms_json(tau_gen, u64::from(seed)).map_err(js_err)
}
