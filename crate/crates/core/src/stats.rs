//! Order statistics on depth samples.

/// Linear-interpolation quantile of an ascending slice at fraction `q`,
/// i.e. the value at fractional index `q * (n - 1)`.
///
/// Panics on an empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// First quartile, interpolated at index `(n - 1) / 4`.
pub fn first_quartile_sorted(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.25)
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.5)
}

/// Mean accumulated in slice order.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Quantile of an unsorted sample using selection instead of a full sort.
pub fn quantile_unsorted(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, lo_val, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    if frac == 0.0 || upper.is_empty() {
        return lo_val;
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    lo_val + frac * (hi_val - lo_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quartile_interpolates() {
        let mut z = vec![1.0, 1.1, 1.6, 2.0];
        z.extend([8.0; 8]);
        assert!((first_quartile_sorted(&z) - 1.9).abs() < 1e-12);
        assert_eq!(first_quartile_sorted(&[3.0]), 3.0);
        assert_eq!(median_sorted(&[1.0, 2.0, 4.0, 10.0]), 3.0);
        assert_eq!(median_sorted(&[1.0, 2.0, 4.0]), 2.0);
    }

    proptest! {
        #[test]
        fn selection_matches_sorting(mut v in prop::collection::vec(0.1f64..100.0, 1..200), q in 0.0f64..1.0) {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let expected = quantile_sorted(&sorted, q);
            prop_assert_eq!(quantile_unsorted(&mut v, q), expected);
        }
    }
}
