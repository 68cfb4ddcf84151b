//! The `--calib` mini-language.

use labeldist::calibration::{
    default_alpha_grid, default_scale_grid, linear_grid, CalibrationMethod, MethodKind,
    SmoothingMode,
};

use crate::config::CalibrationBlock;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibSpec {
    None,
    Fixed(CalibrationMethod),
    /// Entropy-matched over a grid.
    Auto(MethodKind),
}

impl CalibSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::input(format!("--calib `{text}`: {why}"));
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        let value = |s: &str| -> Result<Option<f64>, CliError> {
            match s {
                "auto" => Ok(None),
                _ => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| bad("expected a number or `auto`")),
            }
        };
        let spec = match parts.as_slice() {
            ["none"] => CalibSpec::None,
            ["temp", v] => match value(v)? {
                None => CalibSpec::Auto(MethodKind::TempScale),
                Some(scale) => CalibSpec::Fixed(CalibrationMethod::TempScale { scale }),
            },
            ["pred", v, rest @ ..] if rest.len() <= 1 => {
                let mode = match rest.first() {
                    Some(m) => m.parse::<SmoothingMode>()?,
                    None => SmoothingMode::Literal,
                };
                match value(v)? {
                    None => CalibSpec::Auto(MethodKind::PredSmooth(mode)),
                    Some(alpha) => CalibSpec::Fixed(CalibrationMethod::PredSmooth { alpha, mode }),
                }
            }
            ["train", v] => match value(v)? {
                None => return Err(bad("train smoothing is fixed at training time; give alpha")),
                Some(alpha) => CalibSpec::Fixed(CalibrationMethod::TrainSmooth { alpha }),
            },
            _ => return Err(bad("unknown form")),
        };
        if let CalibSpec::Fixed(m) = &spec {
            m.validate()?;
        }
        Ok(spec)
    }

    /// Method family for a sweep.
    pub fn kind(&self) -> Result<MethodKind, CliError> {
        match *self {
            CalibSpec::Auto(kind) => Ok(kind),
            CalibSpec::Fixed(CalibrationMethod::TempScale { .. }) => Ok(MethodKind::TempScale),
            CalibSpec::Fixed(CalibrationMethod::PredSmooth { mode, .. }) => {
                Ok(MethodKind::PredSmooth(mode))
            }
            _ => Err(CliError::input(
                "sweep needs a temp or pred calibration method (e.g. --calib pred:auto)",
            )),
        }
    }
}

/// The configured grid, or the method's default grid.
pub fn grid_values(block: &CalibrationBlock, kind: MethodKind) -> Result<Vec<f64>, CliError> {
    match (block.grid_start, block.grid_stop, block.grid_step) {
        (None, None, None) => Ok(match kind {
            MethodKind::TempScale => default_scale_grid(),
            MethodKind::PredSmooth(_) => default_alpha_grid(),
        }),
        (Some(start), Some(stop), Some(step)) => Ok(linear_grid(start, stop, step)?),
        _ => Err(CliError::input(
            "calibration grid needs all of grid_start, grid_stop and grid_step",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        assert_eq!(CalibSpec::parse("none").unwrap(), CalibSpec::None);
        assert_eq!(
            CalibSpec::parse("temp:auto").unwrap(),
            CalibSpec::Auto(MethodKind::TempScale)
        );
        assert_eq!(
            CalibSpec::parse("temp:0.5").unwrap(),
            CalibSpec::Fixed(CalibrationMethod::TempScale { scale: 0.5 })
        );
        assert_eq!(
            CalibSpec::parse("pred:0.2").unwrap(),
            CalibSpec::Fixed(CalibrationMethod::PredSmooth {
                alpha: 0.2,
                mode: SmoothingMode::Literal
            })
        );
        assert_eq!(
            CalibSpec::parse("pred:auto:standard").unwrap(),
            CalibSpec::Auto(MethodKind::PredSmooth(SmoothingMode::Standard))
        );
        assert_eq!(
            CalibSpec::parse("train:0.1").unwrap(),
            CalibSpec::Fixed(CalibrationMethod::TrainSmooth { alpha: 0.1 })
        );
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in [
            "",
            "temp",
            "temp:-1",
            "temp:x",
            "pred:0.2:weird",
            "pred:1.5",
            "train:auto",
            "foo:1",
        ] {
            assert!(CalibSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn grid_needs_all_bounds() {
        let mut block = CalibrationBlock::default();
        assert_eq!(
            grid_values(&block, MethodKind::TempScale).unwrap().len(),
            15
        );
        block.grid_start = Some(0.0);
        assert!(grid_values(&block, MethodKind::TempScale).is_err());
        block.grid_stop = Some(0.2);
        block.grid_step = Some(0.1);
        assert_eq!(
            grid_values(&block, MethodKind::TempScale).unwrap(),
            vec![0.0, 0.1, 0.2]
        );
    }
}
