//! Central finite differences for gradients and Hessians.

use nalgebra::DMatrix;

/// Per-coordinate step `eps^{1/3} * max(1, |x_j|)`, the standard scaling for
/// central differences of second-derivative quality.
fn step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference gradient.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut work = x.to_vec();
    for j in 0..x.len() {
        let h = step(x[j]);
        work[j] = x[j] + h;
        let fp = f(&work);
        work[j] = x[j] - h;
        let fm = f(&work);
        work[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian, symmetrized as `(H + H') / 2`.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let f0 = f(x);
    let hs: Vec<f64> = x.iter().map(|&v| step(v)).collect();
    let mut h = DMatrix::<f64>::zeros(k, k);
    let mut work = x.to_vec();
    for j in 0..k {
        work[j] = x[j] + hs[j];
        let fp = f(&work);
        work[j] = x[j] - hs[j];
        let fm = f(&work);
        work[j] = x[j];
        h[(j, j)] = (fp - 2.0 * f0 + fm) / (hs[j] * hs[j]);
    }
    for a in 0..k {
        for b in (a + 1)..k {
            work[a] = x[a] + hs[a];
            work[b] = x[b] + hs[b];
            let fpp = f(&work);
            work[b] = x[b] - hs[b];
            let fpm = f(&work);
            work[a] = x[a] - hs[a];
            let fmm = f(&work);
            work[b] = x[b] + hs[b];
            let fmp = f(&work);
            work[a] = x[a];
            work[b] = x[b];
            let value = (fpp - fpm - fmp + fmm) / (4.0 * hs[a] * hs[b]);
            h[(a, b)] = value;
            h[(b, a)] = value;
        }
    }
    // symmetrize; the stencil is symmetric already, this guards rounding
    let ht = h.transpose();
    (h + ht) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn gradient_of_quadratic() {
        let f = |x: &[f64]| 0.5 * (3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 4.0 * x[1] * x[1]);
        let g = gradient(&f, &[1.0, -2.0]);
        assert_relative_eq!(g[0], 3.0 * 1.0 + 1.0 * -2.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 1.0 * 1.0 + 4.0 * -2.0, epsilon = 1e-8);
    }

    #[test]
    fn hessian_recovers_quadratic_matrix() {
        // f = 1/2 x'Ax with A = [[4,1,0],[1,3,-1],[0,-1,2]]
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += 0.5 * x[i] * a[i][j] * x[j];
                }
            }
            s
        };
        let h = hessian(&f, &[0.3, -1.2, 0.7]);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(h[(i, j)], a[i][j], epsilon = 1e-4);
            }
        }
        // exact symmetry
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h[(i, j)].to_bits(), h[(j, i)].to_bits());
            }
        }
    }
}
