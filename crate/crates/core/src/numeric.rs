//! Summation helpers whose result does not depend on input order.

/// Sums values after sorting them, with Neumaier compensation. The result is
/// identical for any permutation of the input.
pub fn ordered_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_unstable_by(f64::total_cmp);
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Arithmetic mean via [`ordered_sum`]. Returns `None` for an empty input.
pub fn ordered_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(ordered_sum(values.iter().copied()) / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compensates_cancellation() {
        assert_eq!(ordered_sum([1e16, 1.0, -1e16]), 1.0);
        assert_eq!(ordered_mean(&[]), None);
        assert_eq!(ordered_mean(&[4.0, 5.0]), Some(4.5));
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut v in proptest::collection::vec(-1e6f64..1e6, 0..50), seed in any::<u64>()) {
            let a = ordered_sum(v.iter().copied());
            // cheap deterministic shuffle
            let n = v.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(a.to_bits(), ordered_sum(v).to_bits());
        }
    }
}
