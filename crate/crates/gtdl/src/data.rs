//! Right-censored survival data with two covariate blocks.

use crate::error::{Error, Result};

/// Dense row-major design matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    nrows: usize,
    ncols: usize,
}

impl DesignMatrix {
    /// Build from explicit rows; every row must have the same length >= 1.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("design matrix needs at least one row".into()));
        }
        let ncols = rows[0].len();
        if ncols == 0 {
            return Err(Error::Data(
                "design matrix needs at least one column".into(),
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::Dimension(format!(
                    "row {} has {} columns, expected {}",
                    i,
                    row.len(),
                    ncols
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            data,
            nrows: rows.len(),
            ncols,
        })
    }

    /// Intercept column followed by the given covariate columns.
    pub fn with_intercept(n: usize, columns: &[Vec<f64>]) -> Result<Self> {
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Dimension(format!(
                    "covariate column {} has length {}, expected {}",
                    j,
                    col.len(),
                    n
                )));
            }
        }
        let ncols = columns.len() + 1;
        let mut data = Vec::with_capacity(n * ncols);
        for i in 0..n {
            data.push(1.0);
            for col in columns {
                data.push(col[i]);
            }
        }
        Ok(Self {
            data,
            nrows: n,
            ncols,
        })
    }

    /// Intercept-only matrix (a single all-ones column).
    pub fn intercept_only(n: usize) -> Self {
        Self {
            data: vec![1.0; n],
            nrows: n,
            ncols: 1,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.data[i * self.ncols + j])
            .collect()
    }

    /// Copy with the given row positions removed (positions, not row ids).
    pub fn without_rows(&self, drop: &[usize]) -> Self {
        let mut keep = vec![true; self.nrows];
        for &i in drop {
            keep[i] = false;
        }
        let nrows = keep.iter().filter(|&&k| k).count();
        let mut data = Vec::with_capacity(nrows * self.ncols);
        for (i, &keep_row) in keep.iter().enumerate() {
            if keep_row {
                data.extend_from_slice(self.row(i));
            }
        }
        Self {
            data,
            nrows,
            ncols: self.ncols,
        }
    }

    /// True when the Gram matrix has no near-zero eigenvalue (relative tolerance).
    pub fn full_column_rank(&self) -> bool {
        let k = self.ncols;
        if self.nrows < k {
            return false;
        }
        let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
        for i in 0..self.nrows {
            let row = self.row(i);
            for a in 0..k {
                for b in a..k {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let eig = gram.symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        max > 0.0 && min > 1e-10 * max
    }

    fn validate_intercept(&self, name: &str) -> Result<()> {
        for i in 0..self.nrows {
            let row = self.row(i);
            if row[0] != 1.0 {
                return Err(Error::Data(format!(
                    "{name}: first column must be the intercept (row {i} has {})",
                    row[0]
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "{name}: non-finite covariate in row {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Right-censored observations with separate covariate blocks for the
/// failure-level predictor (beta) and the time-effect predictor (alpha).
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    status: Vec<bool>,
    covariates_beta: DesignMatrix,
    covariates_alpha: DesignMatrix,
    row_ids: Vec<usize>,
}

impl SurvivalDataset {
    /// Validates and assembles a dataset. `row_ids` defaults to `1..=n`.
    pub fn new(
        times: Vec<f64>,
        status: Vec<bool>,
        covariates_beta: DesignMatrix,
        covariates_alpha: DesignMatrix,
        row_ids: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::Data("dataset is empty".into()));
        }
        if status.len() != n {
            return Err(Error::Dimension(format!(
                "status has length {}, expected {}",
                status.len(),
                n
            )));
        }
        if covariates_beta.nrows() != n || covariates_alpha.nrows() != n {
            return Err(Error::Dimension(format!(
                "covariate matrices have {} / {} rows, expected {}",
                covariates_beta.nrows(),
                covariates_alpha.nrows(),
                n
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Data(format!(
                    "time at row {i} must be finite and > 0, got {t}"
                )));
            }
        }
        covariates_beta.validate_intercept("covariates_beta")?;
        covariates_alpha.validate_intercept("covariates_alpha")?;
        let row_ids = match row_ids {
            Some(ids) => {
                if ids.len() != n {
                    return Err(Error::Dimension(format!(
                        "row_ids has length {}, expected {}",
                        ids.len(),
                        n
                    )));
                }
                ids
            }
            None => (1..=n).collect(),
        };
        Ok(Self {
            times,
            status,
            covariates_beta,
            covariates_alpha,
            row_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&d| d).count()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn covariates_beta(&self) -> &DesignMatrix {
        &self.covariates_beta
    }

    pub fn covariates_alpha(&self) -> &DesignMatrix {
        &self.covariates_alpha
    }

    /// Leave-cases-out copy; `drop` holds row positions (0-based).
    pub fn without_cases(&self, drop: &[usize]) -> Result<Self> {
        for &i in drop {
            if i >= self.n() {
                return Err(Error::InvalidArgument(format!(
                    "case position {i} out of range"
                )));
            }
        }
        let mut keep = vec![true; self.n()];
        for &i in drop {
            keep[i] = false;
        }
        let times: Vec<f64> = self
            .times
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&t, _)| t)
            .collect();
        let status: Vec<bool> = self
            .status
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&d, _)| d)
            .collect();
        let row_ids: Vec<usize> = self
            .row_ids
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&r, _)| r)
            .collect();
        if times.is_empty() {
            return Err(Error::Data(
                "deleting these cases empties the dataset".into(),
            ));
        }
        Ok(Self {
            times,
            status,
            covariates_beta: self.covariates_beta.without_rows(drop),
            covariates_alpha: self.covariates_alpha.without_rows(drop),
            row_ids,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SurvivalDataset {
        SurvivalDataset::new(
            vec![1.0, 2.0, 3.0],
            vec![true, false, true],
            DesignMatrix::with_intercept(3, &[vec![0.5, -1.0, 2.0]]).unwrap(),
            DesignMatrix::intercept_only(3),
            None,
        )
        .unwrap()
    }

    #[test]
    fn validates_positive_times() {
        let err = SurvivalDataset::new(
            vec![1.0, 0.0],
            vec![true, false],
            DesignMatrix::intercept_only(2),
            DesignMatrix::intercept_only(2),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn validates_intercept_column() {
        let bad = DesignMatrix::from_rows(&[vec![1.0, 0.3], vec![0.0, 0.1]]).unwrap();
        let err = SurvivalDataset::new(
            vec![1.0, 2.0],
            vec![true, false],
            bad,
            DesignMatrix::intercept_only(2),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn without_cases_keeps_row_ids() {
        let d = toy();
        let d2 = d.without_cases(&[1]).unwrap();
        assert_eq!(d2.n(), 2);
        assert_eq!(d2.row_ids(), &[1, 3]);
        assert_eq!(d2.times(), &[1.0, 3.0]);
        assert_eq!(d2.covariates_beta().row(1), &[1.0, 2.0]);
    }

    #[test]
    fn rank_check_catches_duplicate_column() {
        let x = vec![0.5, -1.0, 2.0, 0.3];
        let full = DesignMatrix::with_intercept(4, std::slice::from_ref(&x)).unwrap();
        assert!(full.full_column_rank());
        let dup = DesignMatrix::with_intercept(4, &[x.clone(), x]).unwrap();
        assert!(!dup.full_column_rank());
    }
}
