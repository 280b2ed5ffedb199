//! RMSE, Pearson and Spearman (average ranks for ties).
//!
//! All sums go through [`ordered_sum`], so every metric is invariant under
//! a joint permutation of its two inputs down to the last bit.

use crate::error::{Error, Result};
use crate::numeric::{ordered_mean, ordered_sum};

fn check_lengths(preds: &[f64], refs: &[f64], min: usize) -> Result<()> {
    if preds.len() != refs.len() {
        return Err(Error::Dimension {
            what: "predictions vs references",
            expected: refs.len(),
            actual: preds.len(),
        });
    }
    if preds.len() < min {
        return Err(Error::UndefinedMetric(format!(
            "need at least {min} pairs, got {}",
            preds.len()
        )));
    }
    if preds.iter().chain(refs).any(|v| !v.is_finite()) {
        return Err(Error::Domain("metric inputs must be finite".into()));
    }
    Ok(())
}

pub fn rmse(preds: &[f64], refs: &[f64]) -> Result<f64> {
    check_lengths(preds, refs, 1)?;
    let sq = preds.iter().zip(refs).map(|(p, r)| (p - r) * (p - r));
    Ok((ordered_sum(sq) / preds.len() as f64).sqrt())
}

/// Sample Pearson correlation. Zero variance on either side is an error.
pub fn pcc(preds: &[f64], refs: &[f64]) -> Result<f64> {
    check_lengths(preds, refs, 2)?;
    let mp = ordered_mean(preds).expect("non-empty");
    let mr = ordered_mean(refs).expect("non-empty");
    let dp: Vec<f64> = preds.iter().map(|p| p - mp).collect();
    let dr: Vec<f64> = refs.iter().map(|r| r - mr).collect();
    let spp = ordered_sum(dp.iter().map(|d| d * d));
    let srr = ordered_sum(dr.iter().map(|d| d * d));
    if spp == 0.0 || srr == 0.0 {
        let side = if spp == 0.0 { "predictions" } else { "references" };
        return Err(Error::UndefinedMetric(format!("correlation undefined: {side} have zero variance")));
    }
    let spr = ordered_sum(dp.iter().zip(&dr).map(|(a, b)| a * b));
    Ok((spr / (spp * srr).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) -> ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn src(preds: &[f64], refs: &[f64]) -> Result<f64> {
    check_lengths(preds, refs, 2)?;
    pcc(&average_ranks(preds), &average_ranks(refs))
}
