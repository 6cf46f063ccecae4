//! Small reductions shared by every module: pairwise sums, moments and the
//! single quantile definition used throughout (linear interpolation, type 7).

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample standard deviation with the n-1 denominator.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&dev) / (xs.len() - 1) as f64).sqrt()
}

/// Type-7 quantile of unsorted data; `q` in [0, 1].
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo standard error of the mean via non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], n_batches: usize) -> f64 {
    let b = xs.len() / n_batches;
    if b == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..n_batches).map(|i| mean(&xs[i * b..(i + 1) * b])).collect();
    sample_sd(&means) / (n_batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantile_type7_matches_hand_values() {
        let xs = [3.0, 1.0, 4.0, 1.0, 5.0];
        // sorted 1 1 3 4 5; h = 4q
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.16), 1.0);
        assert!((quantile(&xs, 0.3) - 1.4).abs() < 1e-12);
        assert!((quantile(&xs, 0.84) - (4.0 + 0.36)).abs() < 1e-12);
        assert_eq!(quantile(&[2.5], 0.84), 2.5);
    }

    #[test]
    fn sd_of_known_sample() {
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn pairwise_matches_naive(xs in prop::collection::vec(-1e3f64..1e3, 0..300)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
        }

        #[test]
        fn quantiles_are_monotone(xs in prop::collection::vec(-1e3f64..1e3, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantile(&xs, lo) <= quantile(&xs, hi));
        }
    }
}
