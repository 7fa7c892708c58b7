//! Small summary-statistics helpers.

/// Pairwise (cascade) summation; the result depends only on the slice, not on
/// how work was scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
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

/// Sample variance with denominator `n - 1`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&dev) / (xs.len() - 1) as f64
}

/// Standard error of the mean of `xs`.
pub fn mean_standard_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Lower median: element `floor((n - 1) / 2)` of the sorted values.
pub fn lower_median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v[(v.len() - 1) / 2]
}
