//! Property tests over random parameter and covariate draws.

mod common;

use gtdl::model::{
    cure_fraction_gtdl, density_frailty, density_gtdl, hazard_frailty, hazard_gtdl,
    hazard_ratio_gtdl, loglik_frailty, loglik_gtdl, reliability_frailty, reliability_gtdl,
    LinearPredictors, ParamVector,
};
use gtdl::simulation::{sample_gtdl_time, SampledTime};
use proptest::prelude::*;

fn lp(a: f64, b: f64) -> LinearPredictors {
    LinearPredictors {
        eta_alpha: a,
        eta_beta: b,
    }
}

proptest! {
    #[test]
    fn hazard_bounded_by_lambda(
        a in -2.0f64..2.0,
        b in -5.0f64..5.0,
        t in 0.0f64..60.0,
        lambda in 0.2f64..3.0,
    ) {
        let h = hazard_gtdl(t, lp(a, b), lambda);
        prop_assert!(h > 0.0 && h <= lambda);
        // strictly below lambda wherever the logistic has not saturated in f64
        if a * t + b < 36.0 {
            prop_assert!(h < lambda);
        }
    }

    #[test]
    fn reliability_nonincreasing_both_models(
        a in -1.5f64..1.5,
        b in -4.0f64..4.0,
        theta in 0.05f64..8.0,
    ) {
        let p = lp(a, b);
        let mut last_g = 1.0f64;
        let mut last_f = 1.0f64;
        for k in 0..40 {
            let t = k as f64 * 0.5;
            let rg = reliability_gtdl(t, p, 1.0);
            let rf = reliability_frailty(t, p, 1.0, theta).unwrap();
            prop_assert!(rg <= last_g + 1e-15);
            prop_assert!(rf <= last_f + 1e-15);
            prop_assert!((0.0..=1.0).contains(&rg));
            prop_assert!((0.0..=1.0).contains(&rf));
            last_g = rg;
            last_f = rf;
        }
    }

    #[test]
    fn density_is_hazard_times_reliability(
        a in -1.5f64..1.5,
        b in -4.0f64..4.0,
        t in 0.0f64..30.0,
        theta in 0.05f64..8.0,
    ) {
        let p = lp(a, b);
        // GTDL density is assembled as h * R, so this is exact
        let fg = density_gtdl(t, p, 1.0);
        prop_assert_eq!(fg.to_bits(), (hazard_gtdl(t, p, 1.0) * reliability_gtdl(t, p, 1.0)).to_bits());
        // frailty density goes through the bracket power: an independent route.
        // Exponent magnitudes stay below ~100 on these ranges, so 1e-13
        // relative covers the rounding of the two exp() paths.
        let ff = density_frailty(t, p, 1.0, theta).unwrap();
        let hr = hazard_frailty(t, p, 1.0, theta).unwrap() * reliability_frailty(t, p, 1.0, theta).unwrap();
        let scale = ff.abs().max(hr.abs()).max(1e-300);
        prop_assert!((ff - hr).abs() / scale < 1e-13, "ff={} hr={}", ff, hr);
    }

    #[test]
    fn theta_to_zero_reduction_pointwise(
        a in -1.5f64..1.5,
        b in -3.0f64..3.0,
        t in 0.0f64..20.0,
    ) {
        let p = lp(a, b);
        let rg = reliability_gtdl(t, p, 1.0);
        let rf = reliability_frailty(t, p, 1.0, 1e-8).unwrap();
        prop_assert!((rg - rf).abs() < 1e-6);
        let hg = hazard_gtdl(t, p, 1.0);
        let hf = hazard_frailty(t, p, 1.0, 1e-8).unwrap();
        prop_assert!((hg - hf).abs() < 1e-6);
    }

    #[test]
    fn non_ph_when_profiles_differ(
        a in 0.1f64..1.5,
        b_i in -2.0f64..2.0,
        delta in 0.2f64..2.0,
    ) {
        let p_i = lp(a, b_i);
        let p_j = lp(a, b_i + delta);
        let r0 = hazard_ratio_gtdl(0.0, p_i, p_j, 1.0);
        let r_inf = hazard_ratio_gtdl(2000.0 / a, p_i, p_j, 1.0);
        // at the start the ratio reflects the covariate contrast; in the limit
        // both hazards saturate at lambda
        prop_assert!((r_inf - 1.0).abs() < 1e-4);
        prop_assert!((r0 - 1.0).abs() > 1e-3);
    }

    #[test]
    fn cure_fraction_in_unit_interval(
        a in -3.0f64..-0.05,
        b in -6.0f64..6.0,
    ) {
        let c = cure_fraction_gtdl(lp(a, b), 1.0).unwrap();
        prop_assert!(c > 0.0 && c < 1.0);
        // reliability approaches it from above
        let r = reliability_gtdl(1e7, lp(a, b), 1.0);
        prop_assert!(r >= c - 1e-12);
        prop_assert!((r - c).abs() < 1e-5);
    }

    #[test]
    fn sampler_round_trip_identity(
        a in -1.5f64..1.5,
        b in -3.0f64..3.0,
        u in 1e-6f64..0.999_999,
    ) {
        let p = lp(a, b);
        match sample_gtdl_time(p, 1.0, u).unwrap() {
            SampledTime::Failure(t) => {
                prop_assert!(t >= 0.0);
                let r = reliability_gtdl(t, p, 1.0);
                prop_assert!((r - u).abs() < 1e-10, "r={} u={}", r, u);
            }
            SampledTime::Cured => {
                prop_assert!(u < cure_fraction_gtdl(p, 1.0).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loglik_reduction_on_random_datasets(
        seed in 0u64..1_000,
        alpha0 in -0.8f64..0.8,
        beta1 in -0.8f64..0.8,
    ) {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let n = 50;
        let times: Vec<f64> = (0..n).map(|_| 0.05 + 2.95 * rng.random::<f64>()).collect();
        let status: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.6).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let data = common::dataset_one_beta(times, status, x);
        let g = ParamVector::gtdl(vec![alpha0], vec![-0.5, beta1]);
        let f = ParamVector::frailty(vec![alpha0], vec![-0.5, beta1], 1e-8);
        let lg = loglik_gtdl(&g, &data).unwrap();
        let lf = loglik_frailty(&f, &data).unwrap();
        prop_assert!((lg - lf).abs() < 1e-5, "lg={} lf={}", lg, lf);
    }
}
