//! Integration tests for stepwise selection and the heterogeneity decision.

mod common;

use gtdl::estimate::FitOptions;
use gtdl::model::{ModelKind, ParamVector};
use gtdl::selection::{
    decide_heterogeneity, run_selection, select_alpha, select_beta, Candidate, CandidateSet,
    SelectionConfig, StepAction,
};
use gtdl::simulation::{simulate_dataset, CovariateLaw};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Simulated set with one real beta covariate and optional extras as noise.
fn candidate_set(
    truth: &ParamVector,
    n: usize,
    censoring: f64,
    n_noise: usize,
    seed: u64,
) -> CandidateSet {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sim = simulate_dataset(truth, &CovariateLaw::default(), n, censoring, &mut rng).unwrap();
    let data = sim.dataset;
    let signal = data.covariates_beta().column(1);
    let mut candidates_beta = vec![Candidate::continuous("signal", signal)];
    for j in 0..n_noise {
        let col: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        candidates_beta.push(Candidate::continuous(format!("noise{j}"), col));
    }
    CandidateSet {
        times: data.times().to_vec(),
        status: data.status().to_vec(),
        candidates_beta,
        candidates_alpha: Vec::new(),
    }
}

#[test]
fn strong_beta_effect_is_selected() {
    let truth = ParamVector::gtdl(vec![0.5], vec![-1.0, 1.0]);
    let config = SelectionConfig::default();
    let opts = FitOptions::default();
    for seed in [1u64, 2, 3] {
        let set = candidate_set(&truth, 500, 0.3, 1, seed);
        let out = select_beta(&set, &config, &opts).unwrap();
        assert!(
            out.selected
                .iter()
                .any(|&i| set.candidates_beta[i].name == "signal"),
            "seed {seed}: signal not selected"
        );
        // noise stays out and its last evaluation is on record
        assert!(!out
            .selected
            .iter()
            .any(|&i| set.candidates_beta[i].name.starts_with("noise")));
    }
}

#[test]
fn noise_candidate_selected_near_nominal_rate() {
    // type-I check: a pure-noise candidate enters in roughly 10% of runs
    let truth = ParamVector::gtdl(vec![0.5], vec![-1.0, 0.0]);
    let config = SelectionConfig::default();
    let opts = FitOptions::default();
    let reps = 120;
    let mut hits = 0;
    for seed in 0..reps {
        let mut set = candidate_set(&truth, 120, 0.2, 1, 1000 + seed);
        // only the noise candidate competes
        set.candidates_beta.remove(0);
        let out = select_beta(&set, &config, &opts).unwrap();
        if !out.selected.is_empty() {
            hits += 1;
        }
    }
    let rate = hits as f64 / reps as f64;
    // 3 binomial sigmas around 0.10 at 120 reps is about +/- 0.082
    assert!((0.02..=0.19).contains(&rate), "selection rate {rate}");
}

#[test]
fn alpha_effect_is_selected_with_beta_fixed() {
    // simulate with a covariate in the alpha block
    let truth = ParamVector {
        alpha: vec![0.3, 2.0],
        beta: vec![-1.0, 0.5],
        theta: None,
        lambda: 1.0,
    };
    let law = CovariateLaw {
        beta_normal_cols: 1,
        alpha_normal_cols: 1,
        shared: false,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(50);
    let sim = simulate_dataset(&truth, &law, 500, 0.3, &mut rng).unwrap();
    let data = sim.dataset;
    let set = CandidateSet {
        times: data.times().to_vec(),
        status: data.status().to_vec(),
        candidates_beta: vec![Candidate::continuous(
            "xb",
            data.covariates_beta().column(1),
        )],
        candidates_alpha: vec![Candidate::continuous(
            "xa",
            data.covariates_alpha().column(1),
        )],
    };
    let config = SelectionConfig::default();
    let opts = FitOptions::default();
    let beta_pass = select_beta(&set, &config, &opts).unwrap();
    let alpha_pass = select_alpha(&set, &beta_pass.selected, &config, &opts).unwrap();
    assert_eq!(
        alpha_pass.selected.len(),
        1,
        "alpha covariate should be selected"
    );
}

#[test]
fn noise_alpha_candidates_leave_only_the_intercept() {
    let truth = ParamVector::gtdl(vec![0.5], vec![-1.0, 0.8]);
    let mut rng = ChaCha12Rng::seed_from_u64(70);
    let sim = simulate_dataset(&truth, &CovariateLaw::default(), 300, 0.3, &mut rng).unwrap();
    let data = sim.dataset;
    let noise: Vec<f64> = (0..data.n())
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    let set = CandidateSet {
        times: data.times().to_vec(),
        status: data.status().to_vec(),
        candidates_beta: vec![Candidate::continuous("x", data.covariates_beta().column(1))],
        candidates_alpha: vec![Candidate::continuous("junk", noise)],
    };
    let config = SelectionConfig::default();
    let opts = FitOptions::default();
    let beta_pass = select_beta(&set, &config, &opts).unwrap();
    let alpha_pass = select_alpha(&set, &beta_pass.selected, &config, &opts).unwrap();
    // nothing significant on the alpha side: only the intercept stays
    assert!(alpha_pass.selected.is_empty());
    assert_eq!(alpha_pass.fit.params_hat.alpha.len(), 1);
}

#[test]
fn duplicate_alpha_candidate_is_skipped() {
    let truth = ParamVector::gtdl(vec![0.5], vec![-1.0, 0.5]);
    let mut rng = ChaCha12Rng::seed_from_u64(60);
    let sim = simulate_dataset(&truth, &CovariateLaw::default(), 200, 0.3, &mut rng).unwrap();
    let data = sim.dataset;
    let x = data.covariates_beta().column(1);
    let set = CandidateSet {
        times: data.times().to_vec(),
        status: data.status().to_vec(),
        candidates_beta: vec![Candidate::continuous("x", x.clone())],
        // identical twice: the second enters only as a rank-deficient design
        candidates_alpha: vec![
            Candidate::continuous("dup_a", x.clone()),
            Candidate::continuous("dup_b", x),
        ],
    };
    let config = SelectionConfig::default();
    let opts = FitOptions::default();
    let beta_pass = select_beta(&set, &config, &opts).unwrap();
    let alpha_pass = select_alpha(&set, &beta_pass.selected, &config, &opts).unwrap();
    // at most one of the identical columns can be in; the other is skipped
    assert!(alpha_pass.selected.len() <= 1);
    if alpha_pass.selected.len() == 1 {
        assert!(alpha_pass
            .steps
            .iter()
            .any(|s| s.action == StepAction::SkippedNonConverged));
    }
}

#[test]
fn heterogeneity_power_under_true_frailty() {
    let truth = ParamVector::frailty(vec![0.5], vec![-1.0, 0.5], 1.0);
    let config = SelectionConfig::default();
    let opts = FitOptions::default();
    let mut frailty_chosen = 0;
    let reps = 20;
    for seed in 0..reps {
        let mut rng = ChaCha12Rng::seed_from_u64(7000 + seed);
        let sim = simulate_dataset(&truth, &CovariateLaw::default(), 500, 0.3, &mut rng).unwrap();
        let data = sim.dataset;
        let set = CandidateSet {
            times: data.times().to_vec(),
            status: data.status().to_vec(),
            candidates_beta: vec![Candidate::continuous("x", data.covariates_beta().column(1))],
            candidates_alpha: Vec::new(),
        };
        let decision = decide_heterogeneity(&set, &[0], &[], &config, &opts).unwrap();
        if decision.record.chosen == ModelKind::GtdlFrailty {
            frailty_chosen += 1;
        }
    }
    assert!(
        frailty_chosen >= 18,
        "frailty chosen in {frailty_chosen}/{reps} runs"
    );
}

#[test]
fn lr_zero_keeps_gtdl() {
    // no heterogeneity and almost no data: LR pins at 0, p = 0.5 -> GTDL
    let truth = ParamVector::gtdl(vec![0.5], vec![-1.0, 0.5]);
    let set = candidate_set(&truth, 150, 0.2, 0, 99);
    let decision = decide_heterogeneity(
        &set,
        &[0],
        &[],
        &SelectionConfig::default(),
        &FitOptions::default(),
    )
    .unwrap();
    assert!(decision.record.p_value >= 0.10 || decision.record.chosen == ModelKind::GtdlFrailty);
    if decision.record.lr_statistic == 0.0 {
        assert_eq!(decision.record.p_value, 0.5);
        assert_eq!(decision.record.chosen, ModelKind::Gtdl);
    }
}

#[test]
fn trace_replays_and_is_deterministic() {
    let truth = ParamVector::gtdl(vec![0.5], vec![-1.0, 1.0]);
    let set = candidate_set(&truth, 300, 0.3, 2, 123);
    let config = SelectionConfig::default();
    let opts = FitOptions::default();
    let out1 = run_selection(&set, &config, &opts).unwrap();
    let out2 = run_selection(&set, &config, &opts).unwrap();
    assert_eq!(out1.trace.final_spec, out2.trace.final_spec);
    assert_eq!(out1.trace.final_loglik, out2.trace.final_loglik);
    assert_eq!(out1.trace.steps.len(), out2.trace.steps.len());

    // replay: refitting the final spec reproduces the recorded loglik
    let refit = gtdl::estimate::fit(out1.trace.final_spec.kind, &out1.dataset, &opts).unwrap();
    assert!(
        (refit.loglik - out1.trace.final_loglik).abs() < 1e-6,
        "replay loglik {} vs trace {}",
        refit.loglik,
        out1.trace.final_loglik
    );

    // recorded p-values are consistent with statistic and df
    for step in &out1.trace.steps {
        if step.action == StepAction::Added {
            assert!(step.p_value < config.alpha_level);
            let p = gtdl::estimate::chi_square_upper_tail(step.statistic, step.df);
            assert!((p - step.p_value).abs() < 1e-10);
        }
    }
    // excluded candidates carry a final evaluation at or above the level
    for (name, p) in &out1.trace.rejected {
        assert!(*p >= config.alpha_level, "{name} excluded with p {p}");
    }
}
