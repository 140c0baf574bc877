//! CSV ingestion with listwise deletion of rows missing any configured
//! covariate, dummy coding of categoricals against a reference level, and
//! intercept columns prepended to both blocks.

use std::collections::BTreeMap;
use std::path::Path;

use gtdl::{DesignMatrix, SurvivalDataset};

use crate::config::DataConfig;
use crate::{CliError, Result};

/// Values of one configured covariate across the kept rows.
#[derive(Debug, Clone)]
pub enum CovariateValues {
    Continuous(Vec<f64>),
    Categorical {
        /// Distinct levels, sorted; the reference comes from the config.
        levels: Vec<String>,
        reference: String,
        values: Vec<String>,
    },
}

/// A loaded dataset plus the bookkeeping needed for reports and curves.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: SurvivalDataset,
    /// Design-column labels after the intercept, e.g. `H2S` or `Mfr=B`.
    pub beta_columns: Vec<String>,
    pub alpha_columns: Vec<String>,
    /// 1-based data-row ordinals dropped for missing values.
    pub dropped_rows: Vec<usize>,
    pub n_raw: usize,
    /// Kept-row values per configured covariate, for medians and sweeps.
    pub covariates: BTreeMap<String, CovariateValues>,
}

fn is_missing(cell: &str) -> bool {
    cell.trim().is_empty() || cell.trim() == "NA"
}

pub fn load_csv(path: &Path, config: &DataConfig) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let col_index = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Config(format!("column '{name}' not found in {}", path.display()))
        })
    };
    let time_idx = col_index(&config.time_column)?;
    let status_idx = col_index(&config.status_column)?;
    let used = config.used_covariates();
    let used_idx: Vec<usize> = used.iter().map(|n| col_index(n)).collect::<Result<_>>()?;

    // pass 1: read everything, collect row errors and missingness
    let mut rows: Vec<(usize, f64, bool, Vec<String>)> = Vec::new(); // (ordinal, time, status, cells)
    let mut dropped: Vec<usize> = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    let mut n_raw = 0usize;
    for (i, record) in reader.records().enumerate() {
        let ordinal = i + 1; // 1-based data row; file line is ordinal + 1
        n_raw += 1;
        let record = record.map_err(|e| CliError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let time_cell = record.get(time_idx).unwrap_or("").trim().to_string();
        let status_cell = record.get(status_idx).unwrap_or("").trim().to_string();
        let cov_cells: Vec<String> = used_idx
            .iter()
            .map(|&j| record.get(j).unwrap_or("").trim().to_string())
            .collect();
        if is_missing(&time_cell)
            || is_missing(&status_cell)
            || cov_cells.iter().any(|c| is_missing(c))
        {
            dropped.push(ordinal);
            continue;
        }
        let time: f64 = match time_cell.parse() {
            Ok(t) => t,
            Err(_) => {
                errors.push(format!(
                    "data row {ordinal} (file line {}): time '{time_cell}' is not a number",
                    ordinal + 1
                ));
                continue;
            }
        };
        if time <= 0.0 || !time.is_finite() {
            errors.push(format!(
                "data row {ordinal} (file line {}): time must be positive, got {time}",
                ordinal + 1
            ));
            continue;
        }
        let status = match status_cell.as_str() {
            "0" => false,
            "1" => true,
            other => {
                errors.push(format!(
                    "data row {ordinal} (file line {}): status must be 0 or 1, got '{other}'",
                    ordinal + 1
                ));
                continue;
            }
        };
        rows.push((ordinal, time, status, cov_cells));
    }
    if !errors.is_empty() {
        return Err(CliError::RowErrors {
            path: path.display().to_string(),
            details: errors.join("\n"),
        });
    }
    if rows.is_empty() {
        return Err(CliError::Load {
            path: path.display().to_string(),
            message: "no complete rows after listwise deletion".into(),
        });
    }

    // pass 2: type each covariate and validate
    let mut covariates: BTreeMap<String, CovariateValues> = BTreeMap::new();
    for (k, name) in used.iter().enumerate() {
        if let Some(reference) = config.categorical.get(name) {
            let values: Vec<String> = rows.iter().map(|r| r.3[k].clone()).collect();
            let mut levels: Vec<String> = values.clone();
            levels.sort();
            levels.dedup();
            if !levels.contains(reference) {
                return Err(CliError::Config(format!(
                    "reference level '{reference}' for '{name}' not present (levels: {})",
                    levels.join(", ")
                )));
            }
            covariates.insert(
                name.clone(),
                CovariateValues::Categorical {
                    levels,
                    reference: reference.clone(),
                    values,
                },
            );
        } else {
            let mut parsed = Vec::with_capacity(rows.len());
            for r in &rows {
                match r.3[k].parse::<f64>() {
                    Ok(v) if v.is_finite() => parsed.push(v),
                    _ => errors.push(format!(
                        "data row {} (file line {}): covariate '{name}' value '{}' is not a number",
                        r.0,
                        r.0 + 1,
                        r.3[k]
                    )),
                }
            }
            if !errors.is_empty() {
                return Err(CliError::RowErrors {
                    path: path.display().to_string(),
                    details: errors.join("\n"),
                });
            }
            covariates.insert(name.clone(), CovariateValues::Continuous(parsed));
        }
    }

    // pass 3: build design columns for each block
    let build_block = |names: &[String]| -> (Vec<String>, Vec<Vec<f64>>) {
        let mut labels = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for name in names {
            match &covariates[name] {
                CovariateValues::Continuous(values) => {
                    labels.push(name.clone());
                    columns.push(values.clone());
                }
                CovariateValues::Categorical {
                    levels,
                    reference,
                    values,
                } => {
                    for level in levels.iter().filter(|l| *l != reference) {
                        labels.push(format!("{name}={level}"));
                        columns.push(
                            values
                                .iter()
                                .map(|v| if v == level { 1.0 } else { 0.0 })
                                .collect(),
                        );
                    }
                }
            }
        }
        (labels, columns)
    };
    let (beta_columns, beta_cols) = build_block(&config.beta_covariates);
    let (alpha_columns, alpha_cols) = build_block(&config.alpha_covariates);

    let n = rows.len();
    let times: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let status: Vec<bool> = rows.iter().map(|r| r.2).collect();
    let row_ids: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let dataset = SurvivalDataset::new(
        times,
        status,
        DesignMatrix::with_intercept(n, &beta_cols)?,
        DesignMatrix::with_intercept(n, &alpha_cols)?,
        Some(row_ids),
    )?;

    Ok(LoadedData {
        dataset,
        beta_columns,
        alpha_columns,
        dropped_rows: dropped,
        n_raw,
        covariates,
    })
}

impl LoadedData {
    /// Median of a continuous covariate over the kept rows (R type-7).
    pub fn median(&self, name: &str) -> Result<f64> {
        self.quantile(name, 0.5)
    }

    /// Interpolated quantile of a continuous covariate (R type-7).
    pub fn quantile(&self, name: &str, p: f64) -> Result<f64> {
        match self.covariates.get(name) {
            Some(CovariateValues::Continuous(values)) => {
                let mut v = values.clone();
                v.sort_by(f64::total_cmp);
                let pos = p * (v.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                let w = pos - lo as f64;
                Ok(v[lo] * (1.0 - w) + v[hi] * w)
            }
            Some(CovariateValues::Categorical { .. }) => Err(CliError::Profile(format!(
                "'{name}' is categorical; quantiles need a continuous covariate"
            ))),
            None => Err(CliError::Profile(format!("unknown covariate '{name}'"))),
        }
    }

    pub fn min_max(&self, name: &str) -> Result<(f64, f64)> {
        match self.covariates.get(name) {
            Some(CovariateValues::Continuous(values)) => {
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Ok((min, max))
            }
            Some(CovariateValues::Categorical { .. }) => Err(CliError::Profile(format!(
                "'{name}' is categorical; sweeps need a continuous covariate"
            ))),
            None => Err(CliError::Profile(format!(
                "'{name}' is not among the model's covariates"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn drops_rows_with_missing_configured_covariates() {
        let f = write_csv(
            "time,status,H2S,BSW,GOR\n\
             1.0,1,2.5,0.1,10\n\
             2.0,0,NA,0.2,20\n\
             3.0,1,1.5,,30\n\
             4.0,0,4.5,0.4,\n\
             5.0,1,0.5,0.5,50\n",
        );
        let config = DataConfig {
            beta_covariates: vec!["H2S".into(), "BSW".into()],
            ..Default::default()
        };
        let loaded = load_csv(f.path(), &config).unwrap();
        // GOR is not configured, so row 4 stays; rows 2 and 3 drop
        assert_eq!(loaded.dropped_rows, vec![2, 3]);
        assert_eq!(loaded.dataset.n(), 3);
        assert_eq!(loaded.dataset.row_ids(), &[1, 4, 5]);
        assert_eq!(loaded.n_raw, 5);
        assert_eq!(loaded.beta_columns, vec!["H2S", "BSW"]);

        // nothing missing among configured columns -> zero dropped
        let only_h2s = DataConfig {
            beta_covariates: vec!["H2S".into()],
            ..Default::default()
        };
        let f2 = write_csv("time,status,H2S\n1.0,1,2.5\n2.0,0,3.5\n");
        let loaded2 = load_csv(f2.path(), &only_h2s).unwrap();
        assert!(loaded2.dropped_rows.is_empty());
    }

    #[test]
    fn bad_status_reports_line_number() {
        let f = write_csv("time,status\n1.0,1\n2.0,2\n");
        let err = load_csv(f.path(), &DataConfig::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("data row 2"), "{msg}");
        assert!(msg.contains("status must be 0 or 1"), "{msg}");
    }

    #[test]
    fn nonpositive_time_reports_line_number() {
        let f = write_csv("time,status\n0.0,1\n2.0,0\n");
        let err = load_csv(f.path(), &DataConfig::default()).unwrap_err();
        assert!(err.to_string().contains("time must be positive"));
    }

    #[test]
    fn dummy_coding_respects_reference_level() {
        let f = write_csv("time,status,Mfr\n1.0,1,A\n2.0,0,B\n3.0,1,Others\n4.0,1,B\n");
        let mut config = DataConfig {
            beta_covariates: vec!["Mfr".into()],
            ..Default::default()
        };
        config.categorical.insert("Mfr".into(), "A".into());
        let loaded = load_csv(f.path(), &config).unwrap();
        assert_eq!(loaded.beta_columns, vec!["Mfr=B", "Mfr=Others"]);
        // rows: A -> (0,0); B -> (1,0); Others -> (0,1)
        assert_eq!(loaded.dataset.covariates_beta().row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(loaded.dataset.covariates_beta().row(1), &[1.0, 1.0, 0.0]);
        assert_eq!(loaded.dataset.covariates_beta().row(2), &[1.0, 0.0, 1.0]);

        let mut bad = config.clone();
        bad.categorical.insert("Mfr".into(), "Z".into());
        assert!(load_csv(f.path(), &bad).is_err());
    }

    #[test]
    fn group_wise_complete_counts() {
        // 6 raw rows; the flow group (H2S, BSW) is complete on 4 of them
        let f = write_csv(
            "time,status,H2S,BSW,CWT\n\
             1.0,1,1.0,2.0,NA\n\
             2.0,0,2.0,1.0,5\n\
             3.0,1,NA,3.0,6\n\
             4.0,0,4.0,4.0,7\n\
             5.0,1,5.0,NA,8\n\
             6.0,0,6.0,6.0,9\n",
        );
        let flow = DataConfig {
            beta_covariates: vec!["H2S".into(), "BSW".into()],
            ..Default::default()
        };
        assert_eq!(load_csv(f.path(), &flow).unwrap().dataset.n(), 4);
        let env = DataConfig {
            beta_covariates: vec!["CWT".into()],
            ..Default::default()
        };
        assert_eq!(load_csv(f.path(), &env).unwrap().dataset.n(), 5);
    }

    #[test]
    fn quantiles_and_min_max() {
        let f = write_csv("time,status,x\n1,1,1.0\n2,0,2.0\n3,1,3.0\n4,0,4.0\n");
        let config = DataConfig {
            beta_covariates: vec!["x".into()],
            ..Default::default()
        };
        let loaded = load_csv(f.path(), &config).unwrap();
        assert_eq!(loaded.median("x").unwrap(), 2.5);
        assert_eq!(loaded.quantile("x", 0.25).unwrap(), 1.75);
        assert_eq!(loaded.min_max("x").unwrap(), (1.0, 4.0));
    }
}
