//! Numerically stable scalar primitives shared across the crate.

/// log(1 + e^z) without overflow, standard piecewise evaluation.
pub fn log1pexp(z: f64) -> f64 {
    if z <= -37.0 {
        z.exp()
    } else if z <= 18.0 {
        z.exp().ln_1p()
    } else if z <= 33.3 {
        z + (-z).exp()
    } else {
        z
    }
}

/// Logistic function e^z / (1 + e^z), saturating without overflow.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(e^s - 1) for s > 0; inverse of [`log1pexp`] on the positive axis.
pub fn log_expm1(s: f64) -> f64 {
    debug_assert!(s > 0.0);
    if s <= 1e-4 {
        // e^s - 1 = s (1 + s/2 + s^2/6 + ...)
        s.ln() + (s / 2.0 + s * s / 6.0).ln_1p()
    } else if s >= 37.0 {
        s
    } else {
        s + (-(-s).exp()).ln_1p()
    }
}

/// Deterministic, permutation-invariant sum: sorts by total order, then sums pairwise.
///
/// Used for log-likelihood accumulation so that row order never changes a fit.
pub fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    pairwise_sum(values)
}

/// Pairwise (cascade) summation over a slice in its given order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Mean via pairwise summation; NaN on empty input.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}
