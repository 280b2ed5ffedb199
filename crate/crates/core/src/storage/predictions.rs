//! Tab-separated predictions:
//! `response_id \t part \t mode \t score \t p1,...,pC` with six decimals,
//! and `-` in place of the probabilities for regression heads.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_text};
use crate::data::{MAX_PART, MIN_PART};
use crate::decode::DecodeMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub response_id: String,
    pub part: u8,
    pub mode: DecodeMode,
    pub score: f64,
    pub probs: Option<Vec<f64>>,
}

pub fn format_predictions(rows: &[PredictionRow]) -> String {
    let mut out = String::from("# response_id\tpart\tmode\tscore\tprobs\n");
    for r in rows {
        let probs = match &r.probs {
            Some(p) => p.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(","),
            None => "-".to_string(),
        };
        let _ = writeln!(out, "{}\t{}\t{}\t{:.6}\t{}", r.response_id, r.part, r.mode, r.score, probs);
    }
    out
}

pub fn write_predictions(rows: &[PredictionRow], path: &Path) -> Result<()> {
    write_text(path, &format_predictions(rows))
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(path, idx + 1, m);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 tab-separated fields, found {}", f.len())));
        }
        let part: u8 = f[1]
            .parse()
            .ok()
            .filter(|p| (MIN_PART..=MAX_PART).contains(p))
            .ok_or_else(|| err(format!("invalid part {:?}", f[1])))?;
        let mode: DecodeMode = f[2].parse().map_err(|e: Error| err(e.to_string()))?;
        let score: f64 = f[3]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(format!("invalid score {:?}", f[3])))?;
        let probs = match f[4] {
            "-" => None,
            s => Some(
                s.split(',')
                    .map(|t| t.parse::<f64>().map_err(|_| err(format!("invalid probability {t:?}"))))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        if (mode == DecodeMode::Reg) != probs.is_none() {
            return Err(err(format!("mode {mode} does not match probability field")));
        }
        rows.push(PredictionRow {
            response_id: f[0].to_string(),
            part,
            mode,
            score,
            probs,
        });
    }
    Ok(rows)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    parse_predictions(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_fa_prediction_line() {
        let row = PredictionRow {
            response_id: "s1-p5".into(),
            part: 5,
            mode: DecodeMode::Soft,
            score: 3.5,
            probs: Some(vec![1.0 / 6.0; 6]),
        };
        let text = format_predictions(&[row]);
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line, "s1-p5\t5\tsoft\t3.500000\t0.166667,0.166667,0.166667,0.166667,0.166667,0.166667");
    }

    #[test]
    fn reg_prediction_has_dash() {
        let row = PredictionRow {
            response_id: "r".into(),
            part: 1,
            mode: DecodeMode::Reg,
            score: 6.25,
            probs: None,
        };
        let text = format_predictions(std::slice::from_ref(&row));
        assert!(text.ends_with("r\t1\treg\t6.250000\t-\n"));
        assert_eq!(parse_predictions(&text, Path::new("p")).unwrap(), vec![row]);
    }

    #[test]
    fn malformed_lines() {
        let p = Path::new("p");
        assert!(matches!(parse_predictions("r\t1\tsoft\t3.0\n", p), Err(Error::Parse { line: 1, .. })));
        assert!(parse_predictions("r\t9\tsoft\t3.0\t-\n", p).is_err());
        assert!(parse_predictions("r\t1\tfuzzy\t3.0\t-\n", p).is_err());
        assert!(parse_predictions("r\t1\tsoft\t3.0\t-\n", p).is_err());
        assert!(parse_predictions("r\t1\treg\tnan\t-\n", p).is_err());
    }
}
