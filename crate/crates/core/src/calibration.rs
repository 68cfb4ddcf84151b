//! Post-hoc and training-time calibration, and entropy-matched selection of
//! the calibration scalar.

use std::fmt;

use crate::error::{Error, Result};
use crate::label::{Label, LabelDistribution, NUM_LABELS};
use crate::metrics::entropy;

/// Mass each label receives back when `alpha` is redistributed evenly.
fn share(alpha: f64) -> f64 {
    alpha / NUM_LABELS as f64
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "smoothing mass must lie in [0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64; NUM_LABELS]) -> Result<LabelDistribution> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|v| (v - max).exp());
    let z: f64 = exps.iter().sum();
    Ok(LabelDistribution::from_raw(exps.map(|e| e / z)))
}

/// Softmax of logits multiplied by `scale`. The multiplier is the reciprocal
/// of the usual temperature.
pub fn temp_scale(logits: &[f64; NUM_LABELS], scale: f64) -> Result<LabelDistribution> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature scale must be positive, got {scale}"
        )));
    }
    softmax(&logits.map(|v| v * scale))
}

/// How prediction smoothing moves probability mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmoothingMode {
    /// Take `alpha` from the argmax entry, then give `alpha / 3` to every entry.
    Literal,
    /// Mix with the uniform distribution: `(1 - alpha) * p + alpha / 3`.
    Standard,
}

impl fmt::Display for SmoothingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SmoothingMode::Literal => "literal",
            SmoothingMode::Standard => "standard",
        })
    }
}

impl std::str::FromStr for SmoothingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(SmoothingMode::Literal),
            "standard" => Ok(SmoothingMode::Standard),
            other => Err(Error::InvalidArgument(format!(
                "unknown smoothing mode `{other}`"
            ))),
        }
    }
}

/// Smooths a predicted distribution. Literal mode refuses masses that would
/// drive the top entry negative rather than clamping.
pub fn pred_smooth(
    dist: &LabelDistribution,
    alpha: f64,
    mode: SmoothingMode,
) -> Result<LabelDistribution> {
    check_alpha(alpha)?;
    let p = dist.probs();
    let out = match mode {
        SmoothingMode::Standard => p.map(|v| (1.0 - alpha) * v + share(alpha)),
        SmoothingMode::Literal => {
            let top = dist.argmax().index();
            if p[top] - alpha + share(alpha) < 0.0 {
                return Err(Error::SmoothingOutOfRange { alpha, top: p[top] });
            }
            let mut out = *p;
            out[top] -= alpha;
            for v in &mut out {
                *v += share(alpha);
            }
            // rounding can leave -1e-17 on an entry that should be exactly 0
            out.map(|v| v.max(0.0))
        }
    };
    LabelDistribution::new(out)
}

/// Training target with `alpha` mass moved from `gold` to all labels evenly.
pub fn smooth_target(gold: Label, alpha: f64) -> Result<LabelDistribution> {
    check_alpha(alpha)?;
    let mut out = [share(alpha); NUM_LABELS];
    out[gold.index()] = 1.0 - alpha + share(alpha);
    LabelDistribution::new(out)
}

/// A configured calibration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMethod {
    TempScale {
        scale: f64,
    },
    PredSmooth {
        alpha: f64,
        mode: SmoothingMode,
    },
    /// Affects training targets only; post-hoc application is plain softmax.
    TrainSmooth {
        alpha: f64,
    },
}

impl CalibrationMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CalibrationMethod::TempScale { scale } if !(scale > 0.0 && scale.is_finite()) => Err(
                Error::InvalidArgument(format!("temperature scale must be positive, got {scale}")),
            ),
            CalibrationMethod::PredSmooth { alpha, .. }
            | CalibrationMethod::TrainSmooth { alpha } => check_alpha(alpha),
            _ => Ok(()),
        }
    }

    /// Turns model logits into a calibrated distribution.
    pub fn apply(&self, logits: &[f64; NUM_LABELS]) -> Result<LabelDistribution> {
        match *self {
            CalibrationMethod::TempScale { scale } => temp_scale(logits, scale),
            CalibrationMethod::PredSmooth { alpha, mode } => {
                pred_smooth(&softmax(logits)?, alpha, mode)
            }
            CalibrationMethod::TrainSmooth { alpha } => {
                check_alpha(alpha)?;
                softmax(logits)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CalibrationMethod::TempScale { .. } => "temp",
            CalibrationMethod::PredSmooth { .. } => "pred_smooth",
            CalibrationMethod::TrainSmooth { .. } => "train_smooth",
        }
    }

    /// The scalar hyperparameter (scale or smoothing mass).
    pub fn value(&self) -> f64 {
        match *self {
            CalibrationMethod::TempScale { scale } => scale,
            CalibrationMethod::PredSmooth { alpha, .. }
            | CalibrationMethod::TrainSmooth { alpha } => alpha,
        }
    }
}

/// The family searched by [`fit_entropy_match`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    TempScale,
    PredSmooth(SmoothingMode),
}

impl MethodKind {
    pub fn with_value(self, value: f64) -> CalibrationMethod {
        match self {
            MethodKind::TempScale => CalibrationMethod::TempScale { scale: value },
            MethodKind::PredSmooth(mode) => CalibrationMethod::PredSmooth { alpha: value, mode },
        }
    }

    /// Value that leaves predictions unchanged.
    pub fn identity(self) -> f64 {
        match self {
            MethodKind::TempScale => 1.0,
            MethodKind::PredSmooth(_) => 0.0,
        }
    }
}

/// Candidate values plus the entropy to match.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperparamGrid {
    values: Vec<f64>,
    target_entropy: f64,
}

impl HyperparamGrid {
    pub fn new(values: Vec<f64>, target_entropy: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("hyperparameter grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hyperparameter grid"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "grid values must be strictly increasing".into(),
            ));
        }
        if !(target_entropy >= 0.0 && target_entropy.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "target entropy must be non-negative, got {target_entropy}"
            )));
        }
        Ok(HyperparamGrid {
            values,
            target_entropy,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }
}

/// `start, start + step, ..., stop` inclusive. Points are rounded to 12
/// decimals so `0.1 + 20 * 0.025` lands on `0.6`.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::InvalidArgument(format!(
            "bad grid bounds {start}:{stop}:{step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Smoothing masses 0.1, 0.125, ..., 0.6.
pub fn default_alpha_grid() -> Vec<f64> {
    linear_grid(0.1, 0.6, 0.025).expect("static grid")
}

/// Temperatures 1.5, 1.75, ..., 5.
pub fn default_temperature_grid() -> Vec<f64> {
    linear_grid(1.5, 5.0, 0.25).expect("static grid")
}

/// Logit multipliers `1 / T` for the default temperatures, ascending.
pub fn default_scale_grid() -> Vec<f64> {
    let mut s: Vec<f64> = default_temperature_grid().iter().map(|t| 1.0 / t).collect();
    s.reverse();
    s
}

/// Outcome of an entropy-matching search.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyFit {
    pub value: f64,
    pub achieved_entropy: f64,
    pub target_entropy: f64,
    /// Mean entropy per grid point, `None` where the method is undefined.
    pub curve: Vec<(f64, Option<f64>)>,
}

impl EntropyFit {
    pub fn gap(&self) -> f64 {
        (self.achieved_entropy - self.target_entropy).abs()
    }
}

/// Mean entropy of `logits` after calibrating with `method`.
pub fn mean_calibrated_entropy(
    logits: &[[f64; NUM_LABELS]],
    method: &CalibrationMethod,
) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let mut sum = 0.0;
    for l in logits {
        sum += entropy(&method.apply(l)?);
    }
    Ok(sum / logits.len() as f64)
}

/// Picks the grid value whose calibrated mean prediction entropy is closest
/// to the grid's target. Ties go to the smaller value. Literal smoothing
/// masses that are invalid for some prediction are skipped.
pub fn fit_entropy_match(
    logits: &[[f64; NUM_LABELS]],
    grid: &HyperparamGrid,
    kind: MethodKind,
) -> Result<EntropyFit> {
    if logits.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let target = grid.target_entropy();
    let mut curve = Vec::with_capacity(grid.values().len());
    let mut best: Option<(f64, f64)> = None;
    for &value in grid.values() {
        let h = match mean_calibrated_entropy(logits, &kind.with_value(value)) {
            Ok(h) => h,
            Err(Error::SmoothingOutOfRange { .. }) => {
                curve.push((value, None));
                continue;
            }
            Err(e) => return Err(e),
        };
        curve.push((value, Some(h)));
        let better = match best {
            None => true,
            Some((_, bh)) => (h - target).abs() < (bh - target).abs(),
        };
        if better {
            best = Some((value, h));
        }
    }
    let (value, achieved_entropy) = best.ok_or_else(|| {
        Error::InvalidArgument("no grid value is valid for these predictions".into())
    })?;
    Ok(EntropyFit {
        value,
        achieved_entropy,
        target_entropy: target,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64; 3], b: &[f64; 3], tol: f64) {
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    // exp(v_i) / sum exp(v_j) without max-subtraction; fine for small inputs
    fn naive_softmax(v: [f64; 3]) -> [f64; 3] {
        let e = v.map(f64::exp);
        let z: f64 = e.iter().sum();
        e.map(|x| x / z)
    }

    #[test]
    fn softmax_fixtures() {
        close(softmax(&[0.0; 3]).unwrap().probs(), &[1.0 / 3.0; 3], 1e-15);
        close(
            softmax(&[2.0, 1.0, 0.0]).unwrap().probs(),
            &naive_softmax([2.0, 1.0, 0.0]),
            1e-15,
        );
        close(
            softmax(&[2.0, 1.0, 0.0]).unwrap().probs(),
            &[0.66524, 0.24473, 0.09003],
            1e-5,
        );
        close(
            softmax(&[1000.0, 0.0, 0.0]).unwrap().probs(),
            &[1.0, 0.0, 0.0],
            1e-12,
        );
        assert!(softmax(&[f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn temp_scale_fixtures() {
        let l = [2.0, 1.0, 0.0];
        assert_eq!(temp_scale(&l, 1.0).unwrap(), softmax(&l).unwrap());
        close(
            temp_scale(&l, 0.5).unwrap().probs(),
            &naive_softmax([1.0, 0.5, 0.0]),
            1e-15,
        );
        // frozen from the naive oracle above
        close(
            temp_scale(&l, 0.5).unwrap().probs(),
            &[0.50648, 0.30720, 0.18632],
            1e-5,
        );
        close(
            temp_scale(&[5.0, -3.0, 40.0], 1e-6).unwrap().probs(),
            &[1.0 / 3.0; 3],
            1e-5,
        );
        assert!(temp_scale(&l, 0.0).is_err());
        assert!(temp_scale(&l, -1.0).is_err());
    }

    #[test]
    fn pred_smooth_fixtures() {
        let d = LabelDistribution::new([0.7, 0.2, 0.1]).unwrap();
        for mode in [SmoothingMode::Literal, SmoothingMode::Standard] {
            assert_eq!(pred_smooth(&d, 0.0, mode).unwrap(), d);
        }
        close(
            pred_smooth(&d, 0.3, SmoothingMode::Literal)
                .unwrap()
                .probs(),
            &[0.5, 0.3, 0.2],
            1e-15,
        );
        close(
            pred_smooth(&d, 0.3, SmoothingMode::Standard)
                .unwrap()
                .probs(),
            &[0.59, 0.24, 0.17],
            1e-15,
        );
        let flat = LabelDistribution::new([0.34, 0.33, 0.33]).unwrap();
        assert!(matches!(
            pred_smooth(&flat, 0.6, SmoothingMode::Literal),
            Err(Error::SmoothingOutOfRange { .. })
        ));
        assert!(pred_smooth(&flat, 0.6, SmoothingMode::Standard).is_ok());
        assert!(pred_smooth(&d, 1.0, SmoothingMode::Standard).is_err());
    }

    #[test]
    fn smooth_target_fixtures() {
        close(
            smooth_target(Label::Entailment, 0.0).unwrap().probs(),
            &[1.0, 0.0, 0.0],
            0.0,
        );
        close(
            smooth_target(Label::Entailment, 0.3).unwrap().probs(),
            &[0.8, 0.1, 0.1],
            1e-15,
        );
        close(
            smooth_target(Label::Neutral, 0.125).unwrap().probs(),
            &[0.0416667, 0.9166667, 0.0416667],
            1e-7,
        );
    }

    #[test]
    fn grids() {
        let a = default_alpha_grid();
        assert_eq!(a.len(), 21);
        assert_eq!(a[0], 0.1);
        assert_eq!(a[1], 0.125);
        assert_eq!(*a.last().unwrap(), 0.6);
        let t = default_temperature_grid();
        assert_eq!(t.len(), 15);
        assert_eq!(t[1], 1.75);
        assert_eq!(*t.last().unwrap(), 5.0);
        let s = default_scale_grid();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*s.last().unwrap(), 1.0 / 1.5);
        assert!(HyperparamGrid::new(vec![], 0.5).is_err());
        assert!(HyperparamGrid::new(vec![0.2, 0.1], 0.5).is_err());
        assert!(linear_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn entropy_match_identity_when_on_target() {
        let logits = vec![[2.0, 1.0, 0.0], [0.5, -1.0, 0.3]];
        let h =
            mean_calibrated_entropy(&logits, &CalibrationMethod::TempScale { scale: 1.0 }).unwrap();
        let grid = HyperparamGrid::new(vec![0.5, 1.0, 2.0], h).unwrap();
        let fit = fit_entropy_match(&logits, &grid, MethodKind::TempScale).unwrap();
        assert_eq!(fit.value, 1.0);
        let grid = HyperparamGrid::new(vec![0.0, 0.1, 0.2], h).unwrap();
        let fit = fit_entropy_match(
            &logits,
            &grid,
            MethodKind::PredSmooth(SmoothingMode::Standard),
        )
        .unwrap();
        assert_eq!(fit.value, 0.0);
    }

    #[test]
    fn entropy_match_uniform_target_picks_smallest_scale() {
        let logits = vec![[2.0, 1.0, 0.0]; 4];
        let grid = HyperparamGrid::new(default_scale_grid(), 3f64.ln()).unwrap();
        let fit = fit_entropy_match(&logits, &grid, MethodKind::TempScale).unwrap();
        assert_eq!(fit.value, grid.values()[0]);
        // whole-grid check: entropy falls as the scale grows
        let hs: Vec<f64> = fit.curve.iter().map(|(_, h)| h.unwrap()).collect();
        assert!(hs.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn entropy_match_tie_prefers_smaller_value() {
        // symmetric logits give the same entropy for every alpha: all tie
        let logits = vec![[0.0, 0.0, 0.0]];
        let grid = HyperparamGrid::new(vec![0.1, 0.2, 0.3], 0.0).unwrap();
        let fit = fit_entropy_match(
            &logits,
            &grid,
            MethodKind::PredSmooth(SmoothingMode::Standard),
        )
        .unwrap();
        assert_eq!(fit.value, 0.1);
    }

    #[test]
    fn entropy_match_skips_invalid_literal_points() {
        let logits = vec![[0.1, 0.0, 0.0]];
        let grid = HyperparamGrid::new(vec![0.1, 0.6], 3f64.ln()).unwrap();
        let fit = fit_entropy_match(
            &logits,
            &grid,
            MethodKind::PredSmooth(SmoothingMode::Literal),
        )
        .unwrap();
        assert_eq!(fit.value, 0.1);
        assert_eq!(fit.curve[1].1, None);
        assert!(fit_entropy_match(&[], &grid, MethodKind::TempScale).is_err());
    }

    #[test]
    fn method_apply() {
        let l = [2.0, 1.0, 0.0];
        let m = CalibrationMethod::TrainSmooth { alpha: 0.2 };
        assert_eq!(m.apply(&l).unwrap(), softmax(&l).unwrap());
        assert!(CalibrationMethod::TempScale { scale: -1.0 }
            .validate()
            .is_err());
        assert!(CalibrationMethod::PredSmooth {
            alpha: 1.5,
            mode: SmoothingMode::Standard
        }
        .validate()
        .is_err());
    }
}
