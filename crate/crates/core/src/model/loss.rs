//! Softmax, the fair-average expected score, and the three per-example
//! losses.

use crate::error::{Error, Result};
use crate::numeric::ordered_sum;
use crate::scale::GradeScale;

/// Probability vector over the classes of a grade scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    /// Validates non-negativity and unit sum (within 1e-12).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty class distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain("class probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("class probabilities sum to {total}, not 1")));
        }
        Ok(ClassDistribution(probs))
    }

    pub fn uniform(classes: usize) -> Self {
        ClassDistribution(vec![1.0 / classes as f64; classes])
    }

    pub fn one_hot(classes: usize, index: usize) -> Self {
        let mut p = vec![0.0; classes];
        p[index] = 1.0;
        ClassDistribution(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; the earliest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Element-wise mean of several distributions over the same classes.
    pub fn mean(dists: &[ClassDistribution]) -> Result<Self> {
        let first = dists
            .first()
            .ok_or_else(|| Error::Domain("mean of zero distributions".into()))?;
        let c = first.len();
        let mut out = Vec::with_capacity(c);
        for k in 0..c {
            let col = dists
                .iter()
                .map(|d| {
                    d.0.get(k).copied().ok_or(Error::Dimension {
                        what: "class distribution",
                        expected: c,
                        actual: d.len(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(ordered_sum(col) / dists.len() as f64);
        }
        Ok(ClassDistribution(out))
    }
}

fn check_finite(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Domain("empty logit vector".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Domain("non-finite logit".into()));
    }
    Ok(())
}

/// `log(sum(exp(z)))` with the maximum factored out.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<ClassDistribution> {
    check_finite(logits)?;
    Ok(ClassDistribution(softmax_unchecked(logits)))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Fair average: the probability-weighted mean of class scores.
pub fn expected_score(dist: &ClassDistribution, scale: &GradeScale) -> f64 {
    expected_from_probs(dist.probs(), scale)
}

pub(crate) fn expected_from_probs(probs: &[f64], scale: &GradeScale) -> f64 {
    let e: f64 = probs.iter().zip(scale.scores()).map(|(p, s)| p * s).sum();
    // rounding can leave the convex combination a few ulps outside the range
    e.clamp(scale.min_score(), scale.max_score())
}

fn check_classes(logits: &[f64], scale: &GradeScale) -> Result<()> {
    if logits.len() != scale.num_classes() {
        return Err(Error::Dimension {
            what: "logits",
            expected: scale.num_classes(),
            actual: logits.len(),
        });
    }
    Ok(())
}

/// Cross-entropy of the target label, `logsumexp(z) - z[target]`.
pub fn ce_loss(logits: &[f64], target_label: &str, scale: &GradeScale) -> Result<f64> {
    check_finite(logits)?;
    check_classes(logits, scale)?;
    let k = scale.index_of(target_label)?;
    Ok(ce_loss_index(logits, k))
}

pub(crate) fn ce_loss_index(logits: &[f64], target: usize) -> f64 {
    (log_sum_exp(logits) - logits[target]).max(0.0)
}

/// Squared error between the fair average of `softmax(logits)` and the
/// reference score.
pub fn fa_loss(logits: &[f64], ref_score: f64, scale: &GradeScale) -> Result<f64> {
    check_finite(logits)?;
    check_classes(logits, scale)?;
    if !scale.on_grid(ref_score) {
        return Err(Error::Domain(format!("reference score {ref_score} is off the grade grid")));
    }
    let e = expected_from_probs(&softmax_unchecked(logits), scale);
    Ok((e - ref_score).powi(2))
}

pub fn reg_loss(pred: f64, ref_score: f64) -> f64 {
    (pred - ref_score).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN6: f64 = 1.791_759_469_228_055;

    #[test]
    fn softmax_examples() {
        let d = softmax(&[0.0; 6]).unwrap();
        for p in d.probs() {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        let big = softmax(&[1000.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((big.probs()[0] - 1.0).abs() < 1e-15);
        assert!(big.probs()[1..].iter().all(|p| *p >= 0.0 && *p < 1e-300));
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn ce_examples() {
        let scale = GradeScale::default();
        for label in ["A", "D", "F"] {
            assert!((ce_loss(&[0.0; 6], label, &scale).unwrap() - LN6).abs() < 1e-14);
        }
        let peaked = [0.0, 0.0, 60.0, 0.0, 0.0, 0.0];
        assert!(ce_loss(&peaked, "C", &scale).unwrap() < 1e-25);
        assert!(matches!(ce_loss(&[0.0; 6], "Z", &scale), Err(Error::Domain(_))));
        assert!(ce_loss(&[0.0; 5], "A", &scale).is_err());
    }

    #[test]
    fn ce_matches_direct_evaluation() {
        // direct route: explicit softmax then log, independent of log-sum-exp
        let scale = GradeScale::default();
        let logits = [0.3, -1.2, 2.2, 0.7, -0.4, 1.1];
        for (k, label) in scale.labels().iter().enumerate() {
            let total: f64 = logits.iter().map(|z: &f64| z.exp()).sum();
            let direct = -(logits[k].exp() / total).ln();
            assert!((ce_loss(&logits, label, &scale).unwrap() - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn expected_score_examples() {
        let scale = GradeScale::default();
        assert!((expected_score(&ClassDistribution::uniform(6), &scale) - 3.5).abs() < 1e-15);
        assert_eq!(expected_score(&ClassDistribution::one_hot(6, 1), &scale), 5.0);
        let half = ClassDistribution::new(vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(expected_score(&half, &scale), 5.5);
    }

    #[test]
    fn fa_examples() {
        let scale = GradeScale::default();
        let at_b = [-50.0, 50.0, -50.0, -50.0, -50.0, -50.0];
        assert!(fa_loss(&at_b, 5.0, &scale).unwrap() < 1e-30);
        assert!(fa_loss(&[0.0; 6], 3.5, &scale).unwrap() < 1e-28);
        assert!((fa_loss(&[0.0; 6], 4.5, &scale).unwrap() - 1.0).abs() < 1e-14);
        assert!(fa_loss(&[0.0; 6], 4.2, &scale).is_err());
    }

    #[test]
    fn reg_examples() {
        assert_eq!(reg_loss(4.0, 4.0), 0.0);
        assert_eq!(reg_loss(2.5, 4.0), 2.25);
        assert_eq!(reg_loss(6.0, 1.0), 25.0);
    }

    #[test]
    fn distribution_validation() {
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ClassDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassDistribution::new(vec![]).is_err());
        let m = ClassDistribution::mean(&[ClassDistribution::one_hot(2, 0), ClassDistribution::one_hot(2, 1)]).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(logits in proptest::collection::vec(-1e3f64..1e3, 2..10)) {
            let d = softmax(&logits).unwrap();
            prop_assert!(ClassDistribution::new(d.probs().to_vec()).is_ok());
        }

        #[test]
        fn softmax_shift_invariant(logits in proptest::collection::vec(-20f64..20.0, 6), k in -100f64..100.0) {
            let a = softmax(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|z| z + k).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn losses_non_negative(logits in proptest::collection::vec(-30f64..30.0, 6), k in 0u32..=10, pred in -10f64..10.0) {
            let scale = GradeScale::default();
            let r = 1.0 + 0.5 * k as f64;
            let label = scale.nearest_class(r).unwrap().to_string();
            prop_assert!(ce_loss(&logits, &label, &scale).unwrap() >= 0.0);
            prop_assert!(fa_loss(&logits, r, &scale).unwrap() >= 0.0);
            prop_assert!(reg_loss(pred, r) >= 0.0);
            let e = expected_score(&softmax(&logits).unwrap(), &scale);
            prop_assert!((1.0..=6.0).contains(&e));
        }
    }
}
