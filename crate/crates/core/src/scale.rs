//! Grade-scale arithmetic: class labels, their numeric scores, and the
//! half-point grid that reference scores live on.

use crate::error::{Error, Result};

/// Tolerance used when deciding whether a decimal lies on the score grid.
const GRID_TOLERANCE: f64 = 1e-9;

/// Bijective mapping between class labels and numeric scores.
///
/// Labels are ordered from the highest score to the lowest, so index 0 is
/// the best grade. The default scale is `A..F` mapped to `6.0..1.0` with a
/// 0.5 reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GradeScale {
    labels: Vec<String>,
    scores: Vec<f64>,
    min_score: f64,
    max_score: f64,
    grid_step: f64,
}

impl Default for GradeScale {
    fn default() -> Self {
        GradeScale::new(
            ["A", "B", "C", "D", "E", "F"].iter().map(|s| s.to_string()).collect(),
            vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0],
            0.5,
        )
        .expect("default scale is valid")
    }
}

impl GradeScale {
    /// Builds a scale from labels and their scores. `min_score` and
    /// `max_score` are taken from the last and first class.
    pub fn new(labels: Vec<String>, scores: Vec<f64>, grid_step: f64) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Domain(format!(
                "a grade scale needs at least 2 classes, got {}",
                labels.len()
            )));
        }
        if labels.len() != scores.len() {
            return Err(Error::Dimension {
                what: "grade scale scores",
                expected: labels.len(),
                actual: scores.len(),
            });
        }
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() || label.contains([',', '\t', '\n', '=', ':']) {
                return Err(Error::Domain(format!("invalid class label {label:?}")));
            }
            if labels[..i].contains(label) {
                return Err(Error::Domain(format!("duplicate class label {label:?}")));
            }
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("class scores must be finite".into()));
        }
        if scores.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Domain(
                "class scores must strictly decrease along label order".into(),
            ));
        }
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(Error::Domain(format!("grid step must be positive, got {grid_step}")));
        }
        let max_score = scores[0];
        let min_score = scores[scores.len() - 1];
        let scale = GradeScale {
            labels,
            scores,
            min_score,
            max_score,
            grid_step,
        };
        if let Some(off) = scale.scores.iter().find(|s| !scale.on_grid(**s)) {
            return Err(Error::Domain(format!(
                "class score {off} is not on the {grid_step} grid from {min_score}"
            )));
        }
        Ok(scale)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Number of classes, `C`.
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn min_score(&self) -> f64 {
        self.min_score
    }

    pub fn max_score(&self) -> f64 {
        self.max_score
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Domain(format!("unknown class label {label:?}")))
    }

    /// Numeric score of a class label.
    pub fn score_of(&self, label: &str) -> Result<f64> {
        self.index_of(label).map(|i| self.scores[i])
    }

    /// True when `score` is within range and a whole number of grid steps
    /// above the minimum.
    pub fn on_grid(&self, score: f64) -> bool {
        if !score.is_finite()
            || score < self.min_score - GRID_TOLERANCE
            || score > self.max_score + GRID_TOLERANCE
        {
            return false;
        }
        let steps = (score - self.min_score) / self.grid_step;
        (steps - steps.round()).abs() <= GRID_TOLERANCE
    }

    /// Rounds an arbitrary decimal to the nearest grid point, clamped to the
    /// scale range.
    pub fn snap_to_grid(&self, score: f64) -> f64 {
        let clamped = score.clamp(self.min_score, self.max_score);
        let steps = ((clamped - self.min_score) / self.grid_step).round();
        (self.min_score + steps * self.grid_step).min(self.max_score)
    }

    /// Index of the class whose score is nearest to `score`. Exact midpoints
    /// go to the higher score.
    pub fn nearest_index(&self, score: f64) -> Result<usize> {
        if !score.is_finite() || score < self.min_score || score > self.max_score {
            return Err(Error::Domain(format!(
                "score {score} outside [{}, {}]",
                self.min_score, self.max_score
            )));
        }
        let mut best = 0;
        let mut best_dist = (self.scores[0] - score).abs();
        for (i, s) in self.scores.iter().enumerate().skip(1) {
            let d = (s - score).abs();
            // strict: earlier labels carry higher scores and win ties
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        Ok(best)
    }

    /// Label whose score is nearest to `score` (ties round up).
    pub fn nearest_class(&self, score: f64) -> Result<&str> {
        self.nearest_index(score).map(|i| self.labels[i].as_str())
    }

    /// One-hot target vector for a reference score on the grid.
    pub fn onehot_target(&self, score: f64) -> Result<Vec<f64>> {
        if !self.on_grid(score) {
            return Err(Error::Domain(format!("reference score {score} is not on the grade grid")));
        }
        let k = self.nearest_index(score.clamp(self.min_score, self.max_score))?;
        let mut target = vec![0.0; self.num_classes()];
        target[k] = 1.0;
        Ok(target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn score_of_default_labels() {
        let scale = GradeScale::default();
        assert_eq!(scale.score_of("A").unwrap(), 6.0);
        assert_eq!(scale.score_of("F").unwrap(), 1.0);
        assert_eq!(scale.score_of("C").unwrap(), 4.0);
    }

    #[test]
    fn score_of_unknown_label_names_it() {
        let err = GradeScale::default().score_of("G").unwrap_err();
        assert!(err.to_string().contains("\"G\""), "{err}");
    }

    #[test]
    fn nearest_class_examples() {
        let scale = GradeScale::default();
        assert_eq!(scale.nearest_class(6.0).unwrap(), "A");
        assert_eq!(scale.nearest_class(3.5).unwrap(), "C");
        assert_eq!(scale.nearest_class(1.2).unwrap(), "F");
        assert_eq!(scale.nearest_class(5.5).unwrap(), "A");
        assert_eq!(scale.nearest_class(1.5).unwrap(), "E");
    }

    #[test]
    fn nearest_class_out_of_range() {
        let scale = GradeScale::default();
        assert!(matches!(scale.nearest_class(0.9), Err(Error::Domain(_))));
        assert!(matches!(scale.nearest_class(6.01), Err(Error::Domain(_))));
        assert!(scale.nearest_class(f64::NAN).is_err());
    }

    #[test]
    fn onehot_examples() {
        let scale = GradeScale::default();
        assert_eq!(scale.onehot_target(5.0).unwrap(), vec![0., 1., 0., 0., 0., 0.]);
        assert_eq!(scale.onehot_target(3.5).unwrap(), vec![0., 0., 1., 0., 0., 0.]);
        assert_eq!(scale.onehot_target(1.0).unwrap(), vec![0., 0., 0., 0., 0., 1.]);
        assert!(scale.onehot_target(3.25).is_err());
    }

    #[test]
    fn rejects_bad_scales() {
        let l = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(GradeScale::new(l(&["A"]), vec![1.0], 0.5).is_err());
        assert!(GradeScale::new(l(&["A", "B"]), vec![1.0, 2.0], 0.5).is_err());
        assert!(GradeScale::new(l(&["A", "A"]), vec![2.0, 1.0], 0.5).is_err());
        assert!(GradeScale::new(l(&["A", "B"]), vec![2.0, 1.25], 0.5).is_err());
        assert!(GradeScale::new(l(&["A", "B"]), vec![2.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn tiny_three_class_scale() {
        let l = ["hi", "mid", "lo"].iter().map(|s| s.to_string()).collect();
        let scale = GradeScale::new(l, vec![3.0, 2.0, 1.0], 0.5).unwrap();
        assert_eq!(scale.num_classes(), 3);
        assert_eq!(scale.nearest_class(2.5).unwrap(), "hi");
        assert!(scale.on_grid(1.5));
        assert!(!scale.on_grid(3.5));
    }

    #[test]
    fn round_trip_on_class_scores() {
        let scale = GradeScale::default();
        for label in scale.labels() {
            let s = scale.score_of(label).unwrap();
            assert_eq!(scale.nearest_class(s).unwrap(), label);
        }
    }

    proptest! {
        #[test]
        fn grid_scores_are_within_half_of_their_class(k in 0usize..=10) {
            let scale = GradeScale::default();
            let s = 1.0 + 0.5 * k as f64;
            prop_assert!(scale.on_grid(s));
            let label = scale.nearest_class(s).unwrap();
            prop_assert!((scale.score_of(label).unwrap() - s).abs() <= 0.5);
            let t = scale.onehot_target(s).unwrap();
            prop_assert_eq!(t.iter().sum::<f64>(), 1.0);
            prop_assert!(t.iter().all(|v| *v == 0.0 || *v == 1.0));
        }

        #[test]
        fn snap_lands_on_grid(x in -3.0f64..9.0) {
            let scale = GradeScale::default();
            prop_assert!(scale.on_grid(scale.snap_to_grid(x)));
        }
    }
}
