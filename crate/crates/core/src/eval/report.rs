//! Metric reports and their fixed-width / tab-separated renderings.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use super::metrics::{pcc, rmse, src};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Response,
    Part,
    Submission,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Response => "response",
            Granularity::Part => "part",
            Granularity::Submission => "submission",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "response" => Ok(Granularity::Response),
            "part" => Ok(Granularity::Part),
            "submission" => Ok(Granularity::Submission),
            other => Err(Error::Domain(format!(
                "unknown granularity {other:?} (response|part|submission)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub pcc: f64,
    pub src: f64,
    pub n: usize,
    pub granularity: Granularity,
}

impl MetricReport {
    pub fn compute(preds: &[f64], refs: &[f64], granularity: Granularity) -> Result<Self> {
        Ok(MetricReport {
            rmse: rmse(preds, refs)?,
            pcc: pcc(preds, refs)?,
            src: src(preds, refs)?,
            n: preds.len(),
            granularity,
        })
    }
}

/// Rounds to three decimals, half to even, applied to the shortest decimal
/// representation of the value (so `0.8915` renders as `0.892`).
pub fn format_fixed3(value: f64) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    let repr = format!("{}", value.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((repr.as_str(), ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    digits.extend((0..3).map(|i| frac.get(i).copied().unwrap_or(0)));
    let rest = if frac.len() > 3 { &frac[3..] } else { &[][..] };

    let round_up = match rest.first() {
        None => false,
        Some(&d) if d > 5 => true,
        Some(&d) if d < 5 => false,
        Some(_) => {
            let exactly_half = rest[1..].iter().all(|&d| d == 0);
            !exactly_half || digits.last().is_some_and(|d| d % 2 == 1)
        }
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 3;
    let int_s: String = digits[..split].iter().map(|d| char::from(b'0' + d)).collect();
    let frac_s: String = digits[split..].iter().map(|d| char::from(b'0' + d)).collect();
    let negative = value.is_sign_negative() && digits.iter().any(|&d| d != 0);
    format!("{}{}.{}", if negative { "-" } else { "" }, int_s, frac_s)
}

const COLUMNS: [&str; 6] = ["system", "level", "n", "RMSE", "PCC", "SRC"];

/// Fixed-width table, one row per named report, columns in the order
/// system, level, n, RMSE, PCC, SRC.
pub fn render_report(reports: &[(String, MetricReport)]) -> String {
    let name_w = reports
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain(std::iter::once(COLUMNS[0].len()))
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_w$}  {:<10}  {:>6}  {:>7}  {:>7}  {:>7}",
        COLUMNS[0], COLUMNS[1], COLUMNS[2], COLUMNS[3], COLUMNS[4], COLUMNS[5]
    );
    for (name, r) in reports {
        let _ = writeln!(
            out,
            "{:<name_w$}  {:<10}  {:>6}  {:>7}  {:>7}  {:>7}",
            name,
            r.granularity.as_str(),
            r.n,
            format_fixed3(r.rmse),
            format_fixed3(r.pcc),
            format_fixed3(r.src)
        );
    }
    out
}

/// Machine-readable companion of [`render_report`] with full precision.
pub fn render_report_tsv(reports: &[(String, MetricReport)]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for (name, r) in reports {
        let _ = writeln!(out, "{name}\t{}\t{}\t{:?}\t{:?}\t{:?}", r.granularity, r.n, r.rmse, r.pcc, r.src);
    }
    out
}
