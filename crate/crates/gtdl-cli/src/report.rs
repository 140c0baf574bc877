//! Report structures and file emission. JSON carries full double precision
//! (the lossless channel); CSV tables print 4 decimals like the usual
//! parameter tables.

use std::fs;
use std::path::Path;

use gtdl::diagnostics::{InfluenceReport, ResidualSet};
use gtdl::estimate::FitResult;
use gtdl::selection::SelectionTrace;
use gtdl::simulation::SimStudyReport;
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// One parameter row of a fit report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParameterReport {
    /// Packed name: `alpha0..`, `beta0..`, `theta`.
    pub name: String,
    /// Covariate label behind the coefficient, empty for intercepts/theta.
    pub label: String,
    pub block: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

impl ParameterReport {
    /// `alpha1 (PC=7500)` style display name.
    pub fn display_name(&self) -> String {
        if self.label.is_empty() {
            self.name.clone()
        } else {
            format!("{} ({})", self.name, self.label)
        }
    }
}

/// Versioned, self-contained fit report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitReport {
    pub schema_version: u32,
    pub model: gtdl::ModelKind,
    pub lambda: f64,
    pub ci_level: f64,
    pub loglik: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub n: usize,
    pub n_events: usize,
    pub dropped_rows: Vec<usize>,
    pub parameters: Vec<ParameterReport>,
    pub observed_info: Vec<Vec<f64>>,
    pub info_positive_definite: bool,
    /// Design-column labels after the intercept, per block.
    pub beta_columns: Vec<String>,
    pub alpha_columns: Vec<String>,
    pub data_config: DataConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionTrace>,
}

/// Assemble a report from a fit and the load-time bookkeeping.
#[allow(clippy::too_many_arguments)]
pub fn build_fit_report(
    fit: &FitResult,
    beta_columns: &[String],
    alpha_columns: &[String],
    dropped_rows: &[usize],
    n: usize,
    n_events: usize,
    data_config: &DataConfig,
    selection: Option<SelectionTrace>,
) -> FitReport {
    let packed = fit.params_hat.packed();
    let names = fit.params_hat.labels();
    let n_alpha = fit.params_hat.alpha.len();
    let n_beta = fit.params_hat.beta.len();
    let mut parameters = Vec::with_capacity(packed.len());
    for (j, name) in names.iter().enumerate() {
        let (block, label) = if j < n_alpha {
            (
                "alpha",
                if j == 0 {
                    String::new()
                } else {
                    alpha_columns[j - 1].clone()
                },
            )
        } else if j < n_alpha + n_beta {
            let b = j - n_alpha;
            (
                "beta",
                if b == 0 {
                    String::new()
                } else {
                    beta_columns[b - 1].clone()
                },
            )
        } else {
            ("theta", String::new())
        };
        parameters.push(ParameterReport {
            name: name.clone(),
            label,
            block: block.into(),
            estimate: packed[j],
            se: fit.se[j],
            ci_lower: fit.ci[j].map(|c| c.0),
            ci_upper: fit.ci[j].map(|c| c.1),
        });
    }
    let k = fit.observed_info.nrows();
    let observed_info: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| fit.observed_info[(i, j)]).collect())
        .collect();
    FitReport {
        schema_version: SCHEMA_VERSION,
        model: fit.model_kind,
        lambda: fit.params_hat.lambda,
        ci_level: fit.ci_level,
        loglik: fit.loglik,
        converged: fit.converged,
        n_evals: fit.n_evals,
        n,
        n_events,
        dropped_rows: dropped_rows.to_vec(),
        parameters,
        observed_info,
        info_positive_definite: fit.info_positive_definite,
        beta_columns: beta_columns.to_vec(),
        alpha_columns: alpha_columns.to_vec(),
        data_config: data_config.clone(),
        selection,
    }
}

impl FitReport {
    /// Rebuild the parameter vector (exact doubles from the JSON channel).
    pub fn params(&self) -> gtdl::ParamVector {
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut theta = None;
        for p in &self.parameters {
            match p.block.as_str() {
                "alpha" => alpha.push(p.estimate),
                "beta" => beta.push(p.estimate),
                _ => theta = Some(p.estimate),
            }
        }
        gtdl::ParamVector {
            alpha,
            beta,
            theta,
            lambda: self.lambda,
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Serde(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_fit_report(path: &Path) -> Result<FitReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Serde(format!("{}: {e}", path.display())))
}

fn fmt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Write `fit_report.json` (full precision) and `fit_report.csv` (4 decimals,
/// columns parameter / mle / se / ci_lower / ci_upper).
pub fn emit_fit_report(report: &FitReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_json(report, &out_dir.join("fit_report.json"))?;
    let mut w = csv::Writer::from_path(out_dir.join("fit_report.csv"))
        .map_err(|e| CliError::Serde(e.to_string()))?;
    w.write_record(["parameter", "mle", "se", "ci_lower", "ci_upper"])
        .map_err(|e| CliError::Serde(e.to_string()))?;
    for p in &report.parameters {
        w.write_record([
            p.display_name(),
            format!("{:.4}", p.estimate),
            fmt4(p.se),
            fmt4(p.ci_lower),
            fmt4(p.ci_upper),
        ])
        .map_err(|e| CliError::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Residual plot data: per-case residuals plus the sorted QQ band.
pub fn emit_residuals(
    set: &ResidualSet,
    row_ids: &[usize],
    times: &[f64],
    status: &[bool],
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("residuals.csv"))
        .map_err(|e| CliError::Serde(e.to_string()))?;
    w.write_record(["case_id", "time", "status", "residual", "clamped"])
        .map_err(|e| CliError::Serde(e.to_string()))?;
    for i in 0..set.residuals.len() {
        w.write_record([
            row_ids[i].to_string(),
            format!("{}", times[i]),
            (status[i] as u8).to_string(),
            format!("{}", set.residuals[i]),
            (set.clamped_cases.contains(&i) as u8).to_string(),
        ])
        .map_err(|e| CliError::Serde(e.to_string()))?;
    }
    w.flush()?;

    let sorted = set.sorted_residuals();
    let mut w = csv::Writer::from_path(out_dir.join("qq.csv"))
        .map_err(|e| CliError::Serde(e.to_string()))?;
    w.write_record(["rank", "residual", "envelope_lower", "envelope_upper"])
        .map_err(|e| CliError::Serde(e.to_string()))?;
    for (k, r) in sorted.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            format!("{r}"),
            format!("{}", set.envelope.lower[k]),
            format!("{}", set.envelope.upper[k]),
        ])
        .map_err(|e| CliError::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Per-case GD/LD index-plot data plus the RC table in the paper's layout
/// (one deletion set per block, metric rows rc_estimate / rc_se / p_value).
pub fn emit_influence_report(
    report: &InfluenceReport,
    parameter_names: &[String],
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let has_theta = report.gd.as_ref().is_some_and(|g| g.theta.is_some());
    let mut w = csv::Writer::from_path(out_dir.join("gd_ld.csv"))
        .map_err(|e| CliError::Serde(e.to_string()))?;
    let mut header = vec![
        "case_id".to_string(),
        "gd".into(),
        "gd_alpha".into(),
        "gd_beta".into(),
    ];
    if has_theta {
        header.push("gd_theta".into());
    }
    header.push("ld".into());
    w.write_record(&header)
        .map_err(|e| CliError::Serde(e.to_string()))?;
    let fmt = |v: &Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for i in 0..report.row_ids.len() {
        let mut rec = vec![report.row_ids[i].to_string()];
        match &report.gd {
            Some(g) => {
                rec.push(fmt(&g.full[i]));
                rec.push(fmt(&g.alpha[i]));
                rec.push(fmt(&g.beta[i]));
                if let Some(theta) = &g.theta {
                    rec.push(fmt(&theta[i]));
                }
            }
            None => {
                rec.extend([String::new(), String::new(), String::new()]);
                if has_theta {
                    rec.push(String::new());
                }
            }
        }
        rec.push(fmt(&report.ld.values[i]));
        w.write_record(&rec)
            .map_err(|e| CliError::Serde(e.to_string()))?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join("rc_table.csv"))
        .map_err(|e| CliError::Serde(e.to_string()))?;
    let mut header = vec!["deleted".to_string(), "metric".into()];
    header.extend(parameter_names.iter().cloned());
    w.write_record(&header)
        .map_err(|e| CliError::Serde(e.to_string()))?;
    for row in &report.rc_table {
        for (metric, pick) in [("rc_estimate", 0usize), ("rc_se", 1), ("p_value", 2)] {
            let mut rec = vec![row.label.clone(), metric.to_string()];
            for entry in &row.entries {
                let v = match pick {
                    0 => entry.rc_estimate,
                    1 => entry.rc_se,
                    _ => entry.p_value,
                };
                rec.push(v.map(|x| format!("{x:.4}")).unwrap_or_default());
            }
            w.write_record(&rec)
                .map_err(|e| CliError::Serde(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Nelson-Aalen plot data: group, time, log cumulative hazard.
pub fn emit_cumhaz(curves: &[gtdl::diagnostics::CumHazCurve], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("cumhaz.csv"))
        .map_err(|e| CliError::Serde(e.to_string()))?;
    w.write_record(["group", "time", "log_cumhaz"])
        .map_err(|e| CliError::Serde(e.to_string()))?;
    for curve in curves {
        for (t, lh) in &curve.points {
            w.write_record([curve.label.clone(), format!("{t}"), format!("{lh}")])
                .map_err(|e| CliError::Serde(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Simulation study: JSON in full, CSV mirroring the usual table layout
/// (rows n x parameter, column groups per censoring level).
pub fn emit_sim_report(report: &SimStudyReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_json(report, &out_dir.join("sim_report.json"))?;

    let mut censorings: Vec<f64> = report.cells.iter().map(|c| c.censoring).collect();
    censorings.sort_by(f64::total_cmp);
    censorings.dedup();
    let mut ns: Vec<usize> = report.cells.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut params: Vec<String> = Vec::new();
    for c in &report.cells {
        if !params.contains(&c.parameter) {
            params.push(c.parameter.clone());
        }
    }

    let mut w = csv::Writer::from_path(out_dir.join("sim_report.csv"))
        .map_err(|e| CliError::Serde(e.to_string()))?;
    let mut header = vec![
        "model".to_string(),
        "n".into(),
        "parameter".into(),
        "truth".into(),
    ];
    for c in &censorings {
        let tag = format!("{:.0}", c * 100.0);
        for m in ["bias", "rmse", "sd", "cp", "mean_se", "n_converged"] {
            header.push(format!("{m}_{tag}"));
        }
    }
    w.write_record(&header)
        .map_err(|e| CliError::Serde(e.to_string()))?;
    for &n in &ns {
        for p in &params {
            let mut rec = Vec::new();
            let first = report
                .cells
                .iter()
                .find(|c| c.n == n && &c.parameter == p)
                .expect("grid cell");
            rec.push(report.model_kind.to_string());
            rec.push(n.to_string());
            rec.push(p.clone());
            rec.push(format!("{:.4}", first.truth));
            for &cens in &censorings {
                match report.cell(n, cens, p) {
                    Some(cell) => {
                        rec.push(format!("{:.4}", cell.bias));
                        rec.push(format!("{:.4}", cell.rmse));
                        rec.push(format!("{:.4}", cell.sd));
                        rec.push(format!("{:.4}", cell.cp));
                        rec.push(format!("{:.4}", cell.mean_se));
                        rec.push(cell.n_converged.to_string());
                    }
                    None => rec.extend(std::iter::repeat_n(String::new(), 6)),
                }
            }
            w.write_record(&rec)
                .map_err(|e| CliError::Serde(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Selection trace: JSON plus a flat CSV of the step records.
pub fn emit_selection_trace(trace: &SelectionTrace, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_json(trace, &out_dir.join("selection_trace.json"))?;
    let mut w = csv::Writer::from_path(out_dir.join("selection_steps.csv"))
        .map_err(|e| CliError::Serde(e.to_string()))?;
    w.write_record([
        "phase",
        "action",
        "covariate",
        "statistic",
        "df",
        "p_value",
        "loglik",
    ])
    .map_err(|e| CliError::Serde(e.to_string()))?;
    for s in &trace.steps {
        w.write_record([
            format!("{:?}", s.phase).to_lowercase(),
            format!("{:?}", s.action),
            s.covariate.clone(),
            format!("{:.6}", s.statistic),
            s.df.to_string(),
            format!("{:.6}", s.p_value),
            format!("{:.6}", s.loglik),
        ])
        .map_err(|e| CliError::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
