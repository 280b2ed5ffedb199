//! Per-part calibration parameters.
//!
//! ```text
//! SLACALIB v1
//! # part  slope  intercept  n_fit  fitted_on
//! 5  1.02  -0.13  400  dev
//! ```
//!
//! Slopes and intercepts use the shortest decimal that parses back to the
//! same binary64.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_text};
use crate::error::{Error, Result};
use crate::eval::{CalibrationParams, CalibrationSet};

const HEADER: &str = "SLACALIB v1";

pub fn write_calibration(set: &CalibrationSet, path: &Path) -> Result<()> {
    let mut out = format!("{HEADER}\n# part\tslope\tintercept\tn_fit\tfitted_on\n");
    for (part, p) in set.iter() {
        let _ = writeln!(out, "{part}\t{:?}\t{:?}\t{}\t{}", p.slope, p.intercept, p.n_fit, p.fitted_on);
    }
    write_text(path, &out)
}

pub fn read_calibration(path: &Path) -> Result<CalibrationSet> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, HEADER)) => {}
        _ => return Err(Error::parse(path, 1, format!("missing {HEADER:?} header"))),
    }
    let mut set = CalibrationSet::default();
    for (idx, line) in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(path, idx + 1, m);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let part: u8 = f[0].parse().map_err(|_| err(format!("invalid part {:?}", f[0])))?;
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("invalid number {s:?}")))
        };
        let params = CalibrationParams {
            slope: num(f[1])?,
            intercept: num(f[2])?,
            n_fit: f[3].parse().map_err(|_| err(format!("invalid n_fit {:?}", f[3])))?,
            fitted_on: f[4].to_string(),
        };
        if set.insert(part, params).is_some() {
            return Err(err(format!("part {part} listed twice")));
        }
    }
    Ok(set)
}
