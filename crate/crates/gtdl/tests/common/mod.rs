//! Shared test-only oracles: adaptive quadrature, KS distance, dataset builders.
//! Everything here is independent of the library's evaluation paths.
#![allow(dead_code)]

use gtdl::{DesignMatrix, SurvivalDataset};

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    // uniform pre-subdivision so concentrated mass cannot hide between the
    // initial probe points, then adapt within each panel
    let panels = 64;
    let mut total = 0.0;
    for k in 0..panels {
        let pa = a + (b - a) * k as f64 / panels as f64;
        let pb = a + (b - a) * (k + 1) as f64 / panels as f64;
        let fa = f(pa);
        let fb = f(pb);
        let (whole, m, fm) = simpson(f, pa, fa, pb, fb);
        total += recurse(f, pa, fa, pb, fb, whole, m, fm, tol / panels as f64, 40);
    }
    total
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: &F) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let c = cdf(x);
        d = d
            .max((c - (i + 1) as f64 / n).abs())
            .max((c - i as f64 / n).abs());
    }
    d
}

/// Dataset from parallel vectors: one beta covariate column, intercept-only alpha.
pub fn dataset_one_beta(times: Vec<f64>, status: Vec<bool>, x: Vec<f64>) -> SurvivalDataset {
    let n = times.len();
    SurvivalDataset::new(
        times,
        status,
        DesignMatrix::with_intercept(n, &[x]).unwrap(),
        DesignMatrix::intercept_only(n),
        None,
    )
    .unwrap()
}

/// Richardson-extrapolated central-difference gradient (independent stencil).
pub fn richardson_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h0: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut work = x.to_vec();
    for j in 0..x.len() {
        let h = h0 * x[j].abs().max(1.0);
        let central = |hh: f64, work: &mut Vec<f64>| {
            work[j] = x[j] + hh;
            let fp = f(work);
            work[j] = x[j] - hh;
            let fm = f(work);
            work[j] = x[j];
            (fp - fm) / (2.0 * hh)
        };
        let g_h = central(h, &mut work);
        let g_h2 = central(h / 2.0, &mut work);
        g[j] = (4.0 * g_h2 - g_h) / 3.0;
    }
    g
}
