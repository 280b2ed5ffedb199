//! Affine least-squares calibration, fitted per grader on dev predictions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numeric::{ordered_mean, ordered_sum};

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    pub slope: f64,
    pub intercept: f64,
    /// Identifier of the data the map was fitted on (a split name).
    pub fitted_on: String,
    pub n_fit: usize,
}

impl CalibrationParams {
    pub fn identity() -> Self {
        CalibrationParams {
            slope: 1.0,
            intercept: 0.0,
            fitted_on: String::new(),
            n_fit: 0,
        }
    }

    pub fn apply_one(&self, pred: f64) -> f64 {
        self.slope * pred + self.intercept
    }
}

/// Ordinary least squares `(a, b)` minimising `sum((a p + b - r)^2)`.
pub fn fit_calibration(preds: &[f64], refs: &[f64], fitted_on: &str) -> Result<CalibrationParams> {
    if preds.len() != refs.len() {
        return Err(Error::Dimension {
            what: "calibration predictions vs references",
            expected: refs.len(),
            actual: preds.len(),
        });
    }
    if preds.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 points, got {}", preds.len())));
    }
    if preds.iter().chain(refs).any(|v| !v.is_finite()) {
        return Err(Error::Domain("calibration inputs must be finite".into()));
    }
    if preds.iter().all(|p| *p == preds[0]) {
        return Err(Error::DegenerateFit("predictions are constant".into()));
    }
    let mp = ordered_mean(preds).expect("non-empty");
    let mr = ordered_mean(refs).expect("non-empty");
    let sxx = ordered_sum(preds.iter().map(|p| (p - mp) * (p - mp)));
    let sxy = ordered_sum(preds.iter().zip(refs).map(|(p, r)| (p - mp) * (r - mr)));
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("predictions have no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = mr - slope * mp;
    if !(slope.is_finite() && intercept.is_finite()) {
        return Err(Error::DegenerateFit("non-finite solution".into()));
    }
    Ok(CalibrationParams {
        slope,
        intercept,
        fitted_on: fitted_on.to_string(),
        n_fit: preds.len(),
    })
}

/// Element-wise `a p + b`, unclamped.
pub fn apply_calibration(params: &CalibrationParams, preds: &[f64]) -> Vec<f64> {
    preds.iter().map(|p| params.apply_one(*p)).collect()
}

/// One calibration map per test part.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationSet {
    parts: BTreeMap<u8, CalibrationParams>,
}

impl CalibrationSet {
    pub fn insert(&mut self, part: u8, params: CalibrationParams) -> Option<CalibrationParams> {
        self.parts.insert(part, params)
    }

    pub fn get(&self, part: u8) -> Option<&CalibrationParams> {
        self.parts.get(&part)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, &CalibrationParams)> {
        self.parts.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn apply(&self, part: u8, pred: f64) -> Result<f64> {
        self.get(part)
            .map(|c| c.apply_one(pred))
            .ok_or_else(|| Error::Domain(format!("no calibration for part {part}")))
    }
}
