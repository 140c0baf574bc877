//! Two-step stepwise covariate selection under the gamma-frailty model and
//! the boundary-corrected heterogeneity decision between the two models.
//!
//! Step 1 screens the failure-level block (x'beta) with a scalar time effect;
//! Step 2 screens the time-effect block (x*'alpha) holding the Step 1 set
//! fixed. Each step is forward selection by smallest LR p-value below the
//! level, with a backward check after every addition. Ties break on
//! (p-value, candidate name). After Step 2 the frailty variance is tested
//! against zero with the 50:50 chi-square mixture, and the winning model is
//! refitted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, SurvivalDataset};
use crate::error::{Error, Result};
use crate::estimate::{boundary_lr_test_theta, fit, lr_test_loglik, FitOptions, FitResult};
use crate::model::ModelKind;

/// A named covariate block: one column for a continuous covariate, several
/// for a categorical one (its dummy columns enter and leave together).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub name: String,
    pub columns: Vec<Vec<f64>>,
}

impl Candidate {
    pub fn continuous(name: impl Into<String>, column: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            columns: vec![column],
        }
    }

    pub fn block(name: impl Into<String>, columns: Vec<Vec<f64>>) -> Self {
        Self {
            name: name.into(),
            columns,
        }
    }

    /// Degrees of freedom the block adds to the model.
    pub fn df(&self) -> usize {
        self.columns.len()
    }
}

/// Times, status and the candidate pools for both predictor blocks.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub times: Vec<f64>,
    pub status: Vec<bool>,
    pub candidates_beta: Vec<Candidate>,
    pub candidates_alpha: Vec<Candidate>,
}

/// Stepwise configuration; the default level matches the usual 10%.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub alpha_level: f64,
    pub max_steps: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            alpha_level: 0.10,
            max_steps: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPhase {
    Beta,
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Added,
    Dropped,
    SkippedNonConverged,
}

/// One recorded stepwise event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub phase: SelectionPhase,
    pub action: StepAction,
    pub covariate: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Log-likelihood of the model after this event.
    pub loglik: f64,
}

/// Final model specification by covariate names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub beta_covariates: Vec<String>,
    pub alpha_covariates: Vec<String>,
}

/// Record of the boundary test that decides between the two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityRecord {
    pub lr_statistic: f64,
    pub p_value: f64,
    pub chosen: ModelKind,
    /// Set when the frailty fit failed and GTDL was chosen by default.
    pub caveat: Option<String>,
}

/// Complete audit trail of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    /// Last evaluated p-value for candidates that ended up excluded.
    pub rejected: Vec<(String, f64)>,
    pub heterogeneity: Option<HeterogeneityRecord>,
    pub final_spec: ModelSpec,
    pub final_loglik: f64,
}

/// Outcome of one stepwise pass over a block.
#[derive(Debug, Clone)]
pub struct StepwiseOutcome {
    /// Indices into the candidate pool, in inclusion order.
    pub selected: Vec<usize>,
    pub steps: Vec<SelectionStep>,
    pub rejected: Vec<(String, f64)>,
    /// Fit of the final model of this pass.
    pub fit: FitResult,
}

fn build_dataset(
    set: &CandidateSet,
    beta_included: &[usize],
    alpha_included: &[usize],
) -> Result<SurvivalDataset> {
    let n = set.times.len();
    let mut beta_cols: Vec<Vec<f64>> = Vec::new();
    for &i in beta_included {
        beta_cols.extend(set.candidates_beta[i].columns.iter().cloned());
    }
    let mut alpha_cols: Vec<Vec<f64>> = Vec::new();
    for &i in alpha_included {
        alpha_cols.extend(set.candidates_alpha[i].columns.iter().cloned());
    }
    SurvivalDataset::new(
        set.times.clone(),
        set.status.clone(),
        DesignMatrix::with_intercept(n, &beta_cols)?,
        DesignMatrix::with_intercept(n, &alpha_cols)?,
        None,
    )
}

struct StepContext<'a> {
    set: &'a CandidateSet,
    phase: SelectionPhase,
    config: &'a SelectionConfig,
    fit_opts: &'a FitOptions,
    /// Step 1 output, fixed during the alpha pass.
    beta_fixed: Vec<usize>,
}

impl<'a> StepContext<'a> {
    fn pool(&self) -> &[Candidate] {
        match self.phase {
            SelectionPhase::Beta => &self.set.candidates_beta,
            SelectionPhase::Alpha => &self.set.candidates_alpha,
        }
    }

    fn fit_with(&self, included: &[usize]) -> Result<FitResult> {
        let (beta, alpha) = match self.phase {
            SelectionPhase::Beta => (included.to_vec(), Vec::new()),
            SelectionPhase::Alpha => (self.beta_fixed.clone(), included.to_vec()),
        };
        let data = build_dataset(self.set, &beta, &alpha)?;
        fit(ModelKind::GtdlFrailty, &data, self.fit_opts)
    }
}

/// Forward selection with a backward check after each addition, on one block.
fn stepwise(ctx: &StepContext<'_>) -> Result<StepwiseOutcome> {
    let pool = ctx.pool();
    let mut included: Vec<usize> = Vec::new();
    let mut steps: Vec<SelectionStep> = Vec::new();
    let mut last_p: Vec<Option<f64>> = vec![None; pool.len()];
    let mut current = ctx.fit_with(&included)?;

    for _ in 0..ctx.config.max_steps {
        // candidate evaluations are independent: parallel map, stable order
        let remaining: Vec<usize> = (0..pool.len()).filter(|i| !included.contains(i)).collect();
        if remaining.is_empty() {
            break;
        }
        let evals: Vec<(usize, Result<FitResult>)> = remaining
            .par_iter()
            .map(|&i| {
                let mut with = included.clone();
                with.push(i);
                (i, ctx.fit_with(&with))
            })
            .collect();
        let mut best: Option<(f64, usize, f64, FitResult)> = None; // (p, idx, stat, fit)
        for (i, res) in evals {
            let cand_fit = match res {
                Ok(f) if f.converged => f,
                Ok(_) | Err(Error::RankDeficient(_)) => {
                    steps.push(SelectionStep {
                        phase: ctx.phase,
                        action: StepAction::SkippedNonConverged,
                        covariate: pool[i].name.clone(),
                        statistic: f64::NAN,
                        df: pool[i].df(),
                        p_value: f64::NAN,
                        loglik: current.loglik,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let stat = (2.0 * (cand_fit.loglik - current.loglik)).max(0.0);
            let p = lr_test_loglik(cand_fit.loglik, current.loglik, pool[i].df());
            last_p[i] = Some(p);
            let better = match &best {
                None => true,
                Some((bp, bi, _, _)) => p < *bp || (p == *bp && pool[i].name < pool[*bi].name),
            };
            if better {
                best = Some((p, i, stat, cand_fit));
            }
        }
        let Some((p, idx, stat, cand_fit)) = best else {
            break;
        };
        if p >= ctx.config.alpha_level {
            break;
        }
        included.push(idx);
        current = cand_fit;
        steps.push(SelectionStep {
            phase: ctx.phase,
            action: StepAction::Added,
            covariate: pool[idx].name.clone(),
            statistic: stat,
            df: pool[idx].df(),
            p_value: p,
            loglik: current.loglik,
        });

        // backward check: drop anything whose removal p-value is >= the level
        loop {
            if included.len() <= 1 {
                break;
            }
            let mut worst: Option<(f64, usize, f64, FitResult)> = None;
            for (pos, &i) in included.iter().enumerate() {
                let without: Vec<usize> = included
                    .iter()
                    .enumerate()
                    .filter(|(q, _)| *q != pos)
                    .map(|(_, &v)| v)
                    .collect();
                let reduced_fit = match ctx.fit_with(&without) {
                    Ok(f) if f.converged => f,
                    _ => continue,
                };
                let stat = (2.0 * (current.loglik - reduced_fit.loglik)).max(0.0);
                let p = lr_test_loglik(current.loglik, reduced_fit.loglik, pool[i].df());
                let worse = match &worst {
                    None => true,
                    Some((wp, wi, _, _)) => p > *wp || (p == *wp && pool[i].name < pool[*wi].name),
                };
                if worse {
                    worst = Some((p, pos, stat, reduced_fit));
                }
            }
            match worst {
                Some((p, pos, stat, reduced_fit)) if p >= ctx.config.alpha_level => {
                    let dropped = included.remove(pos);
                    last_p[dropped] = Some(p);
                    current = reduced_fit;
                    steps.push(SelectionStep {
                        phase: ctx.phase,
                        action: StepAction::Dropped,
                        covariate: pool[dropped].name.clone(),
                        statistic: stat,
                        df: pool[dropped].df(),
                        p_value: p,
                        loglik: current.loglik,
                    });
                }
                _ => break,
            }
        }
    }

    let rejected: Vec<(String, f64)> = (0..pool.len())
        .filter(|i| !included.contains(i))
        .filter_map(|i| last_p[i].map(|p| (pool[i].name.clone(), p)))
        .collect();
    Ok(StepwiseOutcome {
        selected: included,
        steps,
        rejected,
        fit: current,
    })
}

/// Step 1: screen the x'beta block under the frailty model with scalar alpha.
pub fn select_beta(
    set: &CandidateSet,
    config: &SelectionConfig,
    fit_opts: &FitOptions,
) -> Result<StepwiseOutcome> {
    let ctx = StepContext {
        set,
        phase: SelectionPhase::Beta,
        config,
        fit_opts,
        beta_fixed: Vec::new(),
    };
    stepwise(&ctx)
}

/// Step 2: screen the x*'alpha block with the Step 1 beta set held fixed.
/// The alpha intercept is always retained.
pub fn select_alpha(
    set: &CandidateSet,
    beta_selected: &[usize],
    config: &SelectionConfig,
    fit_opts: &FitOptions,
) -> Result<StepwiseOutcome> {
    let ctx = StepContext {
        set,
        phase: SelectionPhase::Alpha,
        config,
        fit_opts,
        beta_fixed: beta_selected.to_vec(),
    };
    stepwise(&ctx)
}

/// Outcome of the heterogeneity decision, with both fits retained.
#[derive(Debug)]
pub struct HeterogeneityDecision {
    pub record: HeterogeneityRecord,
    pub gtdl_fit: FitResult,
    pub frailty_fit: Option<FitResult>,
}

/// Fit both models on the final specification and test H0: theta = 0 with
/// the boundary-corrected mixture. Not rejecting keeps the GTDL model.
pub fn decide_heterogeneity(
    set: &CandidateSet,
    beta_selected: &[usize],
    alpha_selected: &[usize],
    config: &SelectionConfig,
    fit_opts: &FitOptions,
) -> Result<HeterogeneityDecision> {
    let data = build_dataset(set, beta_selected, alpha_selected)?;
    let gtdl_fit = fit(ModelKind::Gtdl, &data, fit_opts)?;
    match fit(ModelKind::GtdlFrailty, &data, fit_opts) {
        Ok(frailty_fit) if frailty_fit.converged => {
            let stat = (2.0 * (frailty_fit.loglik - gtdl_fit.loglik)).max(0.0);
            let p = boundary_lr_test_theta(&frailty_fit, &gtdl_fit);
            let chosen = if p >= config.alpha_level {
                ModelKind::Gtdl
            } else {
                ModelKind::GtdlFrailty
            };
            Ok(HeterogeneityDecision {
                record: HeterogeneityRecord {
                    lr_statistic: stat,
                    p_value: p,
                    chosen,
                    caveat: None,
                },
                gtdl_fit,
                frailty_fit: Some(frailty_fit),
            })
        }
        Ok(frailty_fit) => Ok(HeterogeneityDecision {
            record: HeterogeneityRecord {
                lr_statistic: f64::NAN,
                p_value: f64::NAN,
                chosen: ModelKind::Gtdl,
                caveat: Some("frailty fit did not converge; GTDL kept by default".into()),
            },
            gtdl_fit,
            frailty_fit: Some(frailty_fit),
        }),
        Err(e) => Ok(HeterogeneityDecision {
            record: HeterogeneityRecord {
                lr_statistic: f64::NAN,
                p_value: f64::NAN,
                chosen: ModelKind::Gtdl,
                caveat: Some(format!("frailty fit failed ({e}); GTDL kept by default")),
            },
            gtdl_fit,
            frailty_fit: None,
        }),
    }
}

/// Full selection outcome: trace plus the fit of the adopted model.
#[derive(Debug)]
pub struct SelectionOutcome {
    pub trace: SelectionTrace,
    pub final_fit: FitResult,
    pub dataset: SurvivalDataset,
}

/// Run Step 1, Step 2 and the heterogeneity decision end to end.
pub fn run_selection(
    set: &CandidateSet,
    config: &SelectionConfig,
    fit_opts: &FitOptions,
) -> Result<SelectionOutcome> {
    let beta_pass = select_beta(set, config, fit_opts)?;
    let alpha_pass = select_alpha(set, &beta_pass.selected, config, fit_opts)?;
    let decision = decide_heterogeneity(
        set,
        &beta_pass.selected,
        &alpha_pass.selected,
        config,
        fit_opts,
    )?;

    let mut steps = beta_pass.steps;
    steps.extend(alpha_pass.steps);
    let mut rejected = beta_pass.rejected;
    rejected.extend(alpha_pass.rejected);

    let final_spec = ModelSpec {
        kind: decision.record.chosen,
        beta_covariates: beta_pass
            .selected
            .iter()
            .map(|&i| set.candidates_beta[i].name.clone())
            .collect(),
        alpha_covariates: alpha_pass
            .selected
            .iter()
            .map(|&i| set.candidates_alpha[i].name.clone())
            .collect(),
    };
    let final_fit = match decision.record.chosen {
        ModelKind::Gtdl => decision.gtdl_fit,
        ModelKind::GtdlFrailty => decision
            .frailty_fit
            .expect("frailty chosen implies a converged frailty fit"),
    };
    let dataset = build_dataset(set, &beta_pass.selected, &alpha_pass.selected)?;
    let trace = SelectionTrace {
        steps,
        rejected,
        heterogeneity: Some(decision.record),
        final_spec,
        final_loglik: final_fit.loglik,
    };
    Ok(SelectionOutcome {
        trace,
        final_fit,
        dataset,
    })
}
