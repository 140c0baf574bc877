//! Model checking: randomized quantile residuals with simulated envelopes,
//! nonparametric log cumulative-hazard curves, and case-deletion influence
//! (generalized Cook distance, likelihood distance, relative changes).

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::estimate::{fit, FitOptions, FitResult};
use crate::model::{loglik, reliability_at};

/// Reliability values this close to 0 or 1 are clamped before the inverse
/// normal transform and the case is flagged.
const RELIABILITY_CLAMP: f64 = 1e-12;

/// Options for [`rq_residuals`].
#[derive(Debug, Clone)]
pub struct ResidualOptions {
    /// Draw the conventional uniform randomization for censored cases.
    /// Off by default: the residual is the plain inverse normal of the
    /// fitted reliability for every case.
    pub randomize_censored: bool,
    /// Envelope confidence level.
    pub envelope_level: f64,
    /// Simulated standard-normal samples behind the envelope (>= 100).
    pub envelope_sims: usize,
    pub seed: u64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self {
            randomize_censored: false,
            envelope_level: 0.95,
            envelope_sims: 100,
            seed: 0,
        }
    }
}

/// Per-order-statistic envelope band from simulated standard-normal samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub level: f64,
    pub n_sims: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Randomized quantile residuals plus their QQ envelope.
#[derive(Debug, Clone)]
pub struct ResidualSet {
    /// One residual per case, in dataset order.
    pub residuals: Vec<f64>,
    /// Permutation sorting the residuals ascending.
    pub sorted_order: Vec<usize>,
    pub envelope: Envelope,
    /// Positions whose fitted reliability was clamped away from 0/1.
    pub clamped_cases: Vec<usize>,
}

impl ResidualSet {
    /// Sorted residuals paired with their envelope band.
    pub fn sorted_residuals(&self) -> Vec<f64> {
        self.sorted_order
            .iter()
            .map(|&i| self.residuals[i])
            .collect()
    }

    /// How many sorted residuals fall inside the envelope band.
    pub fn n_inside_envelope(&self) -> usize {
        self.sorted_residuals()
            .iter()
            .enumerate()
            .filter(|(k, r)| self.envelope.lower[*k] <= **r && **r <= self.envelope.upper[*k])
            .count()
    }
}

/// Inverse standard-normal of the fitted reliability, case by case.
pub fn rq_residuals(
    fit: &FitResult,
    data: &SurvivalDataset,
    opts: &ResidualOptions,
) -> Result<ResidualSet> {
    if opts.envelope_sims < 100 {
        return Err(Error::InvalidArgument(
            "envelope needs at least 100 simulated samples".into(),
        ));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut residuals = Vec::with_capacity(data.n());
    let mut clamped = Vec::new();
    for i in 0..data.n() {
        let mut r_hat = reliability_at(fit.model_kind, &fit.params_hat, data, i)?;
        if opts.randomize_censored && !data.status()[i] {
            // conditional on surviving past t, R(T) is uniform on (0, R(t))
            let u: f64 = rand::Rng::random(&mut rng);
            r_hat *= u;
        }
        if !(RELIABILITY_CLAMP..=1.0 - RELIABILITY_CLAMP).contains(&r_hat) {
            r_hat = r_hat.clamp(RELIABILITY_CLAMP, 1.0 - RELIABILITY_CLAMP);
            clamped.push(i);
        }
        residuals.push(normal.inverse_cdf(r_hat));
    }
    let mut sorted_order: Vec<usize> = (0..residuals.len()).collect();
    sorted_order.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]));
    let envelope = qq_envelope(data.n(), opts.envelope_level, opts.envelope_sims, opts.seed)?;
    Ok(ResidualSet {
        residuals,
        sorted_order,
        envelope,
        clamped_cases: clamped,
    })
}

/// Pointwise envelope band for normal QQ plots: empirical quantiles of each
/// order statistic over `n_sims` sorted standard-normal samples of size `n`.
pub fn qq_envelope(n: usize, level: f64, n_sims: usize, seed: u64) -> Result<Envelope> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "envelope needs at least two cases".into(),
        ));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level must be in (0,1), got {level}"
        )));
    }
    if n_sims == 0 {
        return Err(Error::InvalidArgument("n_sims must be positive".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    // per order statistic, across simulations
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n_sims); n];
    let mut sample = vec![0.0f64; n];
    for _ in 0..n_sims {
        for s in sample.iter_mut() {
            *s = normal.sample(&mut rng);
        }
        sample.sort_by(f64::total_cmp);
        for (col, &v) in columns.iter_mut().zip(sample.iter()) {
            col.push(v);
        }
    }
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for col in columns.iter_mut() {
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(col, lo_p));
        upper.push(quantile_sorted(col, hi_p));
    }
    Ok(Envelope {
        level,
        n_sims,
        lower,
        upper,
    })
}

/// Linear-interpolated quantile of an already sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// One group's Nelson-Aalen curve on the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CumHazCurve {
    pub label: String,
    /// (event time, log cumulative hazard) pairs, one per distinct event time.
    pub points: Vec<(f64, f64)>,
    pub n_cases: usize,
    pub n_events: usize,
    /// Set when the group has no events; `points` is then empty.
    pub empty: bool,
}

/// Nelson-Aalen estimate of log cumulative hazard versus time, per group.
pub fn nonparam_cumhaz(
    data: &SurvivalDataset,
    group_labels: &[String],
) -> Result<Vec<CumHazCurve>> {
    if group_labels.len() != data.n() {
        return Err(Error::Dimension(format!(
            "group labels have length {}, expected {}",
            group_labels.len(),
            data.n()
        )));
    }
    let mut groups: Vec<String> = group_labels.to_vec();
    groups.sort();
    groups.dedup();
    let mut curves = Vec::with_capacity(groups.len());
    for label in groups {
        let mut cases: Vec<(f64, bool)> = (0..data.n())
            .filter(|&i| group_labels[i] == label)
            .map(|i| (data.times()[i], data.status()[i]))
            .collect();
        cases.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n_cases = cases.len();
        let n_events = cases.iter().filter(|(_, d)| *d).count();
        if n_events == 0 {
            curves.push(CumHazCurve {
                label,
                points: Vec::new(),
                n_cases,
                n_events,
                empty: true,
            });
            continue;
        }
        let mut points = Vec::new();
        let mut cum = 0.0;
        let mut i = 0;
        while i < n_cases {
            let t = cases[i].0;
            let at_risk = (n_cases - i) as f64;
            let mut deaths = 0.0;
            let mut j = i;
            while j < n_cases && cases[j].0 == t {
                if cases[j].1 {
                    deaths += 1.0;
                }
                j += 1;
            }
            if deaths > 0.0 {
                cum += deaths / at_risk;
                points.push((t, cum.ln()));
            }
            i = j;
        }
        curves.push(CumHazCurve {
            label,
            points,
            n_cases,
            n_events,
            empty: false,
        });
    }
    Ok(curves)
}

/// One leave-one-out refit.
#[derive(Debug, Clone)]
pub struct DeletionFit {
    /// Position of the deleted case in the dataset.
    pub case_index: usize,
    /// Stable identifier of the deleted case.
    pub row_id: usize,
    pub result: FitResult,
}

/// Refit the model once per case with that case removed, warm-started at the
/// full-data estimate with a cold restart fallback. Parallel over cases,
/// results in case order.
pub fn case_deletion_fits(
    fit_full: &FitResult,
    data: &SurvivalDataset,
    opts: &FitOptions,
) -> Result<Vec<DeletionFit>> {
    let k = fit_full.params_hat.len();
    if data.n() < k + 2 {
        return Err(Error::Data(format!(
            "need at least {} cases for leave-one-out refits of {} parameters",
            k + 2,
            k
        )));
    }
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            let reduced = data.without_cases(&[i])?;
            if reduced.n_events() == 0 {
                return Err(Error::NoFailures);
            }
            let warm = FitOptions {
                initial_params: Some(fit_full.params_hat.clone()),
                ..opts.clone()
            };
            let mut refit = fit(fit_full.model_kind, &reduced, &warm)?;
            if !refit.converged {
                let cold = FitOptions {
                    initial_params: None,
                    ..opts.clone()
                };
                let retry = fit(fit_full.model_kind, &reduced, &cold)?;
                if retry.loglik > refit.loglik || retry.converged {
                    refit = retry;
                }
            }
            Ok(DeletionFit {
                case_index: i,
                row_id: data.row_ids()[i],
                result: refit,
            })
        })
        .collect()
}

/// Quadratic form `d' * info * d` of a parameter difference in the metric of
/// the observed information.
pub fn gd_quadratic_form(diff: &[f64], info: &DMatrix<f64>) -> f64 {
    let d = DVector::from_column_slice(diff);
    (d.transpose() * info * d)[(0, 0)]
}

/// Generalized Cook distances per case; `None` marks non-converged refits.
#[derive(Debug, Clone)]
pub struct CookDistances {
    pub full: Vec<Option<f64>>,
    /// Quadratic form restricted to the alpha block.
    pub alpha: Vec<Option<f64>>,
    /// Quadratic form restricted to the beta block.
    pub beta: Vec<Option<f64>>,
    /// Present for frailty fits only.
    pub theta: Option<Vec<Option<f64>>>,
}

/// Generalized Cook distance per deleted case, with per-block versions.
/// Requires a positive-definite observed information; otherwise the caller
/// should rely on the likelihood distance instead.
pub fn generalized_cook(fit_full: &FitResult, deletions: &[DeletionFit]) -> Result<CookDistances> {
    let info = &fit_full.observed_info;
    if info.iter().any(|v| !v.is_finite()) || info.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(
            "generalized Cook distance is unavailable; use the likelihood distance".into(),
        ));
    }
    let base = fit_full.params_hat.packed();
    let n_alpha = fit_full.params_hat.alpha.len();
    let n_beta = fit_full.params_hat.beta.len();
    let has_theta = fit_full.params_hat.theta.is_some();
    let k = base.len();
    let mut full = Vec::with_capacity(deletions.len());
    let mut alpha = Vec::with_capacity(deletions.len());
    let mut beta = Vec::with_capacity(deletions.len());
    let mut theta: Vec<Option<f64>> = Vec::with_capacity(deletions.len());
    for del in deletions {
        if !del.result.converged {
            full.push(None);
            alpha.push(None);
            beta.push(None);
            theta.push(None);
            continue;
        }
        let diff: Vec<f64> = del
            .result
            .params_hat
            .packed()
            .iter()
            .zip(&base)
            .map(|(a, b)| a - b)
            .collect();
        full.push(Some(gd_quadratic_form(&diff, info)));
        alpha.push(Some(block_form(&diff, info, 0, n_alpha)));
        beta.push(Some(block_form(&diff, info, n_alpha, n_beta)));
        if has_theta {
            theta.push(Some(block_form(&diff, info, k - 1, 1)));
        } else {
            theta.push(None);
        }
    }
    Ok(CookDistances {
        full,
        alpha,
        beta,
        theta: has_theta.then_some(theta),
    })
}

fn block_form(diff: &[f64], info: &DMatrix<f64>, start: usize, len: usize) -> f64 {
    let mut s = 0.0;
    for a in start..start + len {
        for b in start..start + len {
            s += diff[a] * info[(a, b)] * diff[b];
        }
    }
    s
}

/// Likelihood distances and any refit anomalies (cases whose deletion fit
/// beat the full-data optimum by more than numerical slack).
#[derive(Debug, Clone)]
pub struct LikelihoodDistances {
    pub values: Vec<Option<f64>>,
    pub anomalies: Vec<usize>,
}

const LD_SLACK: f64 = 1e-6;

/// `LD_i = 2 [l(full MLE) - l(leave-one-out MLE)]`, both on the full data.
pub fn likelihood_distance(
    fit_full: &FitResult,
    deletions: &[DeletionFit],
    data: &SurvivalDataset,
) -> Result<LikelihoodDistances> {
    let mut values = Vec::with_capacity(deletions.len());
    let mut anomalies = Vec::new();
    for del in deletions {
        if !del.result.converged {
            values.push(None);
            continue;
        }
        let l_del = loglik(fit_full.model_kind, &del.result.params_hat, data)?;
        let ld = 2.0 * (fit_full.loglik - l_del);
        if ld < -LD_SLACK {
            anomalies.push(del.case_index);
            values.push(Some(0.0));
        } else {
            values.push(Some(ld.max(0.0)));
        }
    }
    Ok(LikelihoodDistances { values, anomalies })
}

/// Relative change (%) of one parameter's estimate and standard error
/// between the full fit and a refit without some case set.
pub fn relative_change(
    fit_full: &FitResult,
    refit_without: &FitResult,
    param_index: usize,
) -> Result<(Option<f64>, Option<f64>)> {
    let base = fit_full.params_hat.packed();
    let refit = refit_without.params_hat.packed();
    if param_index >= base.len() || base.len() != refit.len() {
        return Err(Error::InvalidArgument(format!(
            "parameter index {param_index} out of range"
        )));
    }
    let rc_est = if base[param_index] != 0.0 {
        Some(((base[param_index] - refit[param_index]) / base[param_index]).abs() * 100.0)
    } else {
        None
    };
    let rc_se = match (fit_full.se[param_index], refit_without.se[param_index]) {
        (Some(s0), Some(s1)) if s0 > 0.0 => Some(((s0 - s1) / s0).abs() * 100.0),
        _ => None,
    };
    Ok((rc_est, rc_se))
}

/// Mean + k*SD exceedance rule for flagging influential cases.
#[derive(Debug, Clone, Copy)]
pub struct FlagRule {
    pub k: f64,
}

impl Default for FlagRule {
    fn default() -> Self {
        Self { k: 3.0 }
    }
}

/// Positions whose value strictly exceeds mean + k*SD of the defined values.
pub fn influence_flagging(values: &[Option<f64>], rule: FlagRule) -> Vec<usize> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.len() < 2 {
        return Vec::new();
    }
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    let var =
        defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (defined.len() - 1) as f64;
    let cut = mean + rule.k * var.sqrt();
    values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|&x| x > cut).map(|_| i))
        .collect()
}

/// One row of the relative-change table: a deletion set and its per-parameter
/// RC values plus the refit's Wald p-values.
#[derive(Debug, Clone)]
pub struct RcRow {
    /// "{id}" for single deletions, "All" for the union row.
    pub label: String,
    pub deleted_row_ids: Vec<usize>,
    pub entries: Vec<RcEntry>,
}

#[derive(Debug, Clone)]
pub struct RcEntry {
    pub parameter: String,
    pub rc_estimate: Option<f64>,
    pub rc_se: Option<f64>,
    /// Two-sided Wald p-value of the parameter in the refit.
    pub p_value: Option<f64>,
}

/// Full case-deletion influence analysis.
#[derive(Debug, Clone)]
pub struct InfluenceReport {
    pub row_ids: Vec<usize>,
    /// `None` when the observed information is not positive definite.
    pub gd: Option<CookDistances>,
    pub ld: LikelihoodDistances,
    /// Flagged row ids per metric and combined.
    pub flagged_gd: Vec<usize>,
    pub flagged_ld: Vec<usize>,
    pub flagged_union: Vec<usize>,
    pub flagged_intersection: Vec<usize>,
    pub rc_table: Vec<RcRow>,
    pub warnings: Vec<String>,
}

/// Wald p-values of every parameter of a fit (two-sided).
fn wald_p_values(fit: &FitResult) -> Vec<Option<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    fit.params_hat
        .packed()
        .iter()
        .zip(&fit.se)
        .map(|(&est, se)| se.map(|s| 2.0 * normal.cdf(-(est / s).abs())))
        .collect()
}

fn rc_row(label: String, fit_full: &FitResult, refit: &FitResult) -> Result<RcRow> {
    let labels = fit_full.params_hat.labels();
    let p = wald_p_values(refit);
    let mut entries = Vec::with_capacity(labels.len());
    for (j, name) in labels.iter().enumerate() {
        let (rc_est, rc_se) = relative_change(fit_full, refit, j)?;
        entries.push(RcEntry {
            parameter: name.clone(),
            rc_estimate: rc_est,
            rc_se,
            p_value: p[j],
        });
    }
    Ok(RcRow {
        label,
        deleted_row_ids: Vec::new(),
        entries,
    })
}

/// Run deletions, distances, flagging and the RC table in one pass.
pub fn influence_analysis(
    fit_full: &FitResult,
    data: &SurvivalDataset,
    opts: &FitOptions,
    rule: FlagRule,
) -> Result<InfluenceReport> {
    let deletions = case_deletion_fits(fit_full, data, opts)?;
    let mut warnings: Vec<String> = deletions
        .iter()
        .filter(|d| !d.result.converged)
        .map(|d| {
            format!(
                "leave-one-out refit for case {} did not converge; excluded",
                d.row_id
            )
        })
        .collect();
    let gd = match generalized_cook(fit_full, &deletions) {
        Ok(g) => Some(g),
        Err(Error::NotPositiveDefinite(msg)) => {
            warnings.push(format!("GD unavailable: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };
    let ld = likelihood_distance(fit_full, &deletions, data)?;
    for &i in &ld.anomalies {
        warnings.push(format!(
            "leave-one-out refit for case {} beat the full-data optimum; check convergence",
            data.row_ids()[i]
        ));
    }
    let flagged_gd_idx = gd
        .as_ref()
        .map(|g| influence_flagging(&g.full, rule))
        .unwrap_or_default();
    let flagged_ld_idx = influence_flagging(&ld.values, rule);
    let to_ids = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| data.row_ids()[i]).collect() };
    let flagged_gd = to_ids(&flagged_gd_idx);
    let flagged_ld = to_ids(&flagged_ld_idx);
    let mut union_idx: Vec<usize> = flagged_gd_idx
        .iter()
        .chain(flagged_ld_idx.iter())
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    union_idx.sort_unstable();
    let intersection_idx: Vec<usize> = flagged_gd_idx
        .iter()
        .filter(|i| flagged_ld_idx.contains(i))
        .copied()
        .collect();

    let mut rc_table = Vec::new();
    for &i in &union_idx {
        let mut row = rc_row(
            format!("{{{}}}", data.row_ids()[i]),
            fit_full,
            &deletions[i].result,
        )?;
        row.deleted_row_ids = vec![data.row_ids()[i]];
        rc_table.push(row);
    }
    if !union_idx.is_empty() {
        let reduced = data.without_cases(&union_idx)?;
        if reduced.n_events() == 0 {
            warnings.push("all-flagged deletion removes every failure; All row skipped".into());
        } else {
            let warm = FitOptions {
                initial_params: Some(fit_full.params_hat.clone()),
                ..opts.clone()
            };
            let refit_all = fit(fit_full.model_kind, &reduced, &warm)?;
            let mut row = rc_row("All".into(), fit_full, &refit_all)?;
            row.deleted_row_ids = to_ids(&union_idx);
            rc_table.push(row);
        }
    }

    Ok(InfluenceReport {
        row_ids: data.row_ids().to_vec(),
        gd,
        ld,
        flagged_gd,
        flagged_ld,
        flagged_union: to_ids(&union_idx),
        flagged_intersection: to_ids(&intersection_idx),
        rc_table,
        warnings,
    })
}
