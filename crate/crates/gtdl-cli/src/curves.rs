//! Curve requests: reliability and hazard curves over covariate profiles,
//! hazard ratios between two profiles, and cure-fraction sweeps. Continuous
//! covariates default to their median; categoricals to the reference level.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gtdl::model::{
    cure_fraction_frailty, cure_fraction_gtdl, hazard_frailty, hazard_gtdl, hazard_ratio_gtdl,
    linear_predictor, reliability_frailty, reliability_gtdl, LinearPredictors, ModelKind,
    ParamVector,
};

use crate::loader::{CovariateValues, LoadedData};
use crate::report::FitReport;
use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Reliability,
    Hazard,
    HazardRatio,
    CureSurface,
}

impl CurveKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reliability" => Ok(Self::Reliability),
            "hazard" => Ok(Self::Hazard),
            "hazard_ratio" => Ok(Self::HazardRatio),
            "cure_surface" => Ok(Self::CureSurface),
            other => Err(CliError::Profile(format!(
                "unknown curve kind '{other}' (reliability | hazard | hazard_ratio | cure_surface)"
            ))),
        }
    }
}

/// A fully resolved covariate profile: one value per configured covariate.
#[derive(Debug, Clone)]
pub struct Profile {
    pub label: String,
    values: BTreeMap<String, ProfileValue>,
}

#[derive(Debug, Clone)]
enum ProfileValue {
    Number(f64),
    Level(String),
}

/// Build the default profile: medians for continuous covariates, reference
/// levels for categorical ones.
pub fn default_profile(loaded: &LoadedData) -> Result<Profile> {
    let mut values = BTreeMap::new();
    for (name, cov) in &loaded.covariates {
        let v = match cov {
            CovariateValues::Continuous(_) => ProfileValue::Number(loaded.median(name)?),
            CovariateValues::Categorical { reference, .. } => {
                ProfileValue::Level(reference.clone())
            }
        };
        values.insert(name.clone(), v);
    }
    Ok(Profile {
        label: "profile".into(),
        values,
    })
}

/// Apply `NAME=VALUE` overrides (numbers for continuous covariates, level
/// names for categorical ones).
pub fn apply_overrides(loaded: &LoadedData, base: &Profile, spec: &str) -> Result<Profile> {
    let mut profile = base.clone();
    let mut labels = Vec::new();
    for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Profile(format!("profile item '{item}' is not NAME=VALUE")))?;
        let name = name.trim();
        let value = value.trim();
        match loaded.covariates.get(name) {
            Some(CovariateValues::Continuous(_)) => {
                let v: f64 = value.parse().map_err(|_| {
                    CliError::Profile(format!("'{value}' is not a number for covariate '{name}'"))
                })?;
                profile.values.insert(name.into(), ProfileValue::Number(v));
            }
            Some(CovariateValues::Categorical { levels, .. }) => {
                if !levels.iter().any(|l| l == value) {
                    return Err(CliError::Profile(format!(
                        "unknown level '{value}' for '{name}' (levels: {})",
                        levels.join(", ")
                    )));
                }
                profile
                    .values
                    .insert(name.into(), ProfileValue::Level(value.into()));
            }
            None => {
                return Err(CliError::Profile(format!(
                    "unknown covariate '{name}' in profile"
                )))
            }
        }
        labels.push(format!("{name}={value}"));
    }
    profile.label = labels.join(",");
    Ok(profile)
}

/// Set one continuous covariate to an explicit value (sweep helper).
pub fn with_value(base: &Profile, name: &str, value: f64) -> Profile {
    let mut p = base.clone();
    p.values.insert(name.into(), ProfileValue::Number(value));
    p.label = format!("{name}={value:.4}");
    p
}

/// Encode a profile into the per-block design rows (with intercept).
fn encode(loaded: &LoadedData, covariate_names: &[String], profile: &Profile) -> Result<Vec<f64>> {
    let mut row = vec![1.0];
    for name in covariate_names {
        match loaded.covariates.get(name) {
            Some(CovariateValues::Continuous(_)) => match profile.values.get(name) {
                Some(ProfileValue::Number(v)) => row.push(*v),
                _ => {
                    return Err(CliError::Profile(format!(
                        "profile missing covariate '{name}'"
                    )))
                }
            },
            Some(CovariateValues::Categorical {
                levels, reference, ..
            }) => {
                let level = match profile.values.get(name) {
                    Some(ProfileValue::Level(l)) => l.clone(),
                    _ => {
                        return Err(CliError::Profile(format!(
                            "profile missing categorical covariate '{name}'"
                        )))
                    }
                };
                for l in levels.iter().filter(|l| *l != reference) {
                    row.push(if *l == level { 1.0 } else { 0.0 });
                }
            }
            None => return Err(CliError::Profile(format!("unknown covariate '{name}'"))),
        }
    }
    Ok(row)
}

/// Linear predictors of a profile under the fitted parameters.
pub fn profile_predictors(
    loaded: &LoadedData,
    report: &FitReport,
    params: &ParamVector,
    profile: &Profile,
) -> Result<LinearPredictors> {
    let beta_row = encode(loaded, &report.data_config.beta_covariates, profile)?;
    let alpha_row = encode(loaded, &report.data_config.alpha_covariates, profile)?;
    Ok(LinearPredictors {
        eta_beta: linear_predictor(&beta_row, &params.beta)?,
        eta_alpha: linear_predictor(&alpha_row, &params.alpha)?,
    })
}

/// Evenly spaced time grid from 0 to `t_max`.
pub fn time_grid(t_max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points)
        .map(|k| t_max * k as f64 / (points - 1) as f64)
        .collect()
}

/// One emitted curve series.
#[derive(Debug, Clone)]
pub struct CurveSeries {
    pub label: String,
    /// (x, value) pairs; x is time except for cure surfaces.
    pub points: Vec<(f64, f64)>,
}

fn model_reliability(
    kind: ModelKind,
    t: f64,
    lp: LinearPredictors,
    params: &ParamVector,
) -> Result<f64> {
    Ok(match kind {
        ModelKind::Gtdl => reliability_gtdl(t, lp, params.lambda),
        ModelKind::GtdlFrailty => {
            reliability_frailty(t, lp, params.lambda, params.theta.expect("frailty theta"))?
        }
    })
}

fn model_hazard(
    kind: ModelKind,
    t: f64,
    lp: LinearPredictors,
    params: &ParamVector,
) -> Result<f64> {
    Ok(match kind {
        ModelKind::Gtdl => hazard_gtdl(t, lp, params.lambda),
        ModelKind::GtdlFrailty => {
            hazard_frailty(t, lp, params.lambda, params.theta.expect("frailty theta"))?
        }
    })
}

/// Evaluate a curve request into plottable series.
pub fn evaluate(
    kind: CurveKind,
    report: &FitReport,
    loaded: &LoadedData,
    profiles: &[Profile],
    grid: &[f64],
) -> Result<Vec<CurveSeries>> {
    let params = report.params();
    match kind {
        CurveKind::Reliability | CurveKind::Hazard => {
            let mut out = Vec::with_capacity(profiles.len());
            for p in profiles {
                let lp = profile_predictors(loaded, report, &params, p)?;
                let mut points = Vec::with_capacity(grid.len());
                for &t in grid {
                    let v = match kind {
                        CurveKind::Reliability => model_reliability(report.model, t, lp, &params)?,
                        _ => model_hazard(report.model, t, lp, &params)?,
                    };
                    points.push((t, v));
                }
                out.push(CurveSeries {
                    label: p.label.clone(),
                    points,
                });
            }
            Ok(out)
        }
        CurveKind::HazardRatio => {
            if profiles.len() != 2 {
                return Err(CliError::Profile(format!(
                    "hazard_ratio needs exactly two profiles, got {}",
                    profiles.len()
                )));
            }
            let lp_i = profile_predictors(loaded, report, &params, &profiles[0])?;
            let lp_j = profile_predictors(loaded, report, &params, &profiles[1])?;
            let mut points = Vec::with_capacity(grid.len());
            for &t in grid {
                let v = match report.model {
                    ModelKind::Gtdl => hazard_ratio_gtdl(t, lp_i, lp_j, params.lambda),
                    ModelKind::GtdlFrailty => {
                        model_hazard(report.model, t, lp_i, &params)?
                            / model_hazard(report.model, t, lp_j, &params)?
                    }
                };
                points.push((t, v));
            }
            Ok(vec![CurveSeries {
                label: format!("{} / {}", profiles[0].label, profiles[1].label),
                points,
            }])
        }
        CurveKind::CureSurface => {
            // here the x axis is the swept covariate value carried in `grid`
            let mut points = Vec::with_capacity(profiles.len());
            for (p, &x) in profiles.iter().zip(grid) {
                let lp = profile_predictors(loaded, report, &params, p)?;
                let cure = match report.model {
                    ModelKind::Gtdl => cure_fraction_gtdl(lp, params.lambda)?,
                    ModelKind::GtdlFrailty => {
                        cure_fraction_frailty(lp, params.lambda, params.theta.expect("theta"))?
                    }
                };
                points.push((x, cure));
            }
            Ok(vec![CurveSeries {
                label: "cure_fraction".into(),
                points,
            }])
        }
    }
}

/// Write one CSV with the x column followed by one column per series.
pub fn emit_curves(
    kind: CurveKind,
    series: &[CurveSeries],
    out_dir: &Path,
) -> Result<std::path::PathBuf> {
    fs::create_dir_all(out_dir)?;
    let name = match kind {
        CurveKind::Reliability => "curves_reliability.csv",
        CurveKind::Hazard => "curves_hazard.csv",
        CurveKind::HazardRatio => "curves_hazard_ratio.csv",
        CurveKind::CureSurface => "curves_cure_surface.csv",
    };
    let path = out_dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Serde(e.to_string()))?;
    let x_name = if kind == CurveKind::CureSurface {
        "value"
    } else {
        "t"
    };
    let mut header = vec![x_name.to_string()];
    header.extend(series.iter().map(|s| s.label.clone()));
    w.write_record(&header)
        .map_err(|e| CliError::Serde(e.to_string()))?;
    let rows = series.first().map(|s| s.points.len()).unwrap_or(0);
    for r in 0..rows {
        let mut rec = vec![format!("{}", series[0].points[r].0)];
        for s in series {
            rec.push(format!("{}", s.points[r].1));
        }
        w.write_record(&rec)
            .map_err(|e| CliError::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(path)
}
