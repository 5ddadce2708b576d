//! Vector autoregression: design construction, full and zero-constrained
//! least-squares fits, stability and lag-order selection.
//!
//! A VAR(p) over K variables is
//!
//! ```text
//! z_t = ν + A_1 z_{t-1} + ... + A_p z_{t-p} + u_t
//! ```
//!
//! Zero constraints on individual coefficients decouple per equation: fixing
//! a coefficient to zero is the same as deleting its regressor column from
//! that equation's least-squares problem. That is how constrained fits are
//! computed here; no general-purpose solver is involved.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, LeastSquares, Matrix};
use crate::table::{TableError, TimeSeriesTable};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VarError {
    #[error("lag order must be at least 1")]
    ZeroLag,
    #[error("{rows} rows cannot identify a VAR({p}) over {k} variables (need more than {needed})")]
    TooShort {
        rows: usize,
        p: usize,
        k: usize,
        needed: usize,
    },
    #[error("regressor {regressor} is linearly dependent on earlier regressors")]
    RankDeficient { regressor: String },
    #[error("unknown column `{0}` in constraint")]
    UnknownColumn(String),
    #[error("constraint lag {lag} outside 1..={p}")]
    LagOutOfRange { lag: usize, p: usize },
    #[error("table has no columns")]
    NoColumns,
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Forces the coefficients of `source` at the given lags to zero in the
/// equation of `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub target: String,
    pub source: String,
    pub lags: BTreeSet<usize>,
}

impl Constraint {
    /// Excludes `source` at lags `1..=p` from `target`'s equation.
    pub fn exclude(target: impl Into<String>, source: impl Into<String>, p: usize) -> Self {
        Self {
            target: target.into(),
            source: source.into(),
            lags: (1..=p).collect(),
        }
    }
}

/// Fitted VAR(p).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub names: Vec<String>,
    pub p: usize,
    /// Usable rows, T - p.
    pub t_eff: usize,
    pub intercepts: Vec<f64>,
    /// `coefficients[l-1][(i, j)]`: effect of variable j at lag l on variable i.
    pub coefficients: Vec<Matrix>,
    pub constraints: Vec<Constraint>,
    /// T_eff x K.
    pub residuals: Matrix,
    /// Per-equation residual sums of squares.
    pub ss: Vec<f64>,
    /// Residual covariance normalised by T_eff.
    pub residual_covariance: Matrix,
}

impl VarModel {
    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn coefficient(&self, target: usize, source: usize, lag: usize) -> f64 {
        self.coefficients[lag - 1][(target, source)]
    }

    /// Kp x Kp companion matrix.
    pub fn companion(&self) -> Matrix {
        companion_matrix(&self.coefficients)
    }
}

/// Stacks lag matrices into companion form.
pub fn companion_matrix(coefficients: &[Matrix]) -> Matrix {
    let p = coefficients.len();
    let k = coefficients.first().map_or(0, Matrix::rows);
    let n = k * p;
    let mut c = Matrix::zeros(n, n);
    for (l, a) in coefficients.iter().enumerate() {
        for i in 0..k {
            for j in 0..k {
                c[(i, l * k + j)] = a[(i, j)];
            }
        }
    }
    for i in k..n {
        c[(i, i - k)] = 1.0;
    }
    c
}

/// Regression system of a VAR(p).
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    /// T_eff x K; row r holds the variables at time `start + r`.
    pub targets: Matrix,
    /// T_eff x (1 + Kp): intercept, then for each lag ascending all
    /// variables in column order.
    pub regressors: Matrix,
    pub p: usize,
    pub k: usize,
}

impl Design {
    /// Regressor column holding variable `var` at `lag`.
    pub fn column_of(&self, var: usize, lag: usize) -> usize {
        1 + (lag - 1) * self.k + var
    }

    fn describe(&self, col: usize, names: &[String]) -> String {
        if col == 0 {
            return String::from("intercept");
        }
        let lag = (col - 1) / self.k + 1;
        let var = (col - 1) % self.k;
        format!("`{}` at lag {}", names[var], lag)
    }
}

fn min_rows(p: usize, k: usize) -> usize {
    p * k + 1
}

/// Design over columns with rows starting at time index `start >= p`.
pub fn design_from(columns: &[Vec<f64>], p: usize, start: usize) -> Result<Design, VarError> {
    if p == 0 {
        return Err(VarError::ZeroLag);
    }
    let k = columns.len();
    if k == 0 {
        return Err(VarError::NoColumns);
    }
    let t = columns[0].len();
    assert!(start >= p, "design start must leave room for the lags");
    if t <= min_rows(p, k) || t <= start || t - start < 1 + p * k {
        return Err(VarError::TooShort {
            rows: t,
            p,
            k,
            needed: min_rows(p, k).max(start + p * k),
        });
    }
    let rows = t - start;
    let mut targets = Matrix::zeros(rows, k);
    let mut regressors = Matrix::zeros(rows, 1 + k * p);
    for r in 0..rows {
        let time = start + r;
        regressors[(r, 0)] = 1.0;
        for (j, col) in columns.iter().enumerate() {
            targets[(r, j)] = col[time];
            for lag in 1..=p {
                regressors[(r, 1 + (lag - 1) * k + j)] = col[time - lag];
            }
        }
    }
    Ok(Design {
        targets,
        regressors,
        p,
        k,
    })
}

/// Targets and regressors of a VAR(p) on a numeric table.
pub fn build_design(table: &TimeSeriesTable, p: usize) -> Result<(Matrix, Matrix), VarError> {
    let d = design_from(&table.numeric_columns()?, p, p)?;
    Ok((d.targets, d.regressors))
}

/// Fits a VAR(p) with optional zero constraints.
pub fn fit_var(
    table: &TimeSeriesTable,
    p: usize,
    constraints: &[Constraint],
) -> Result<VarModel, VarError> {
    fit_columns(&table.names(), &table.numeric_columns()?, p, constraints)
}

/// [`fit_var`] over raw columns.
pub fn fit_columns(
    names: &[String],
    columns: &[Vec<f64>],
    p: usize,
    constraints: &[Constraint],
) -> Result<VarModel, VarError> {
    let design = design_from(columns, p, p)?;
    fit_design(names, &design, constraints)
}

/// Regressor columns removed from each equation by `constraints`.
fn excluded_columns(
    names: &[String],
    design: &Design,
    constraints: &[Constraint],
) -> Result<Vec<BTreeSet<usize>>, VarError> {
    let pos = |n: &str| {
        names
            .iter()
            .position(|x| x == n)
            .ok_or_else(|| VarError::UnknownColumn(n.into()))
    };
    let mut excluded = vec![BTreeSet::new(); design.k];
    for c in constraints {
        let t = pos(&c.target)?;
        let s = pos(&c.source)?;
        for &lag in &c.lags {
            if lag == 0 || lag > design.p {
                return Err(VarError::LagOutOfRange { lag, p: design.p });
            }
            excluded[t].insert(design.column_of(s, lag));
        }
    }
    Ok(excluded)
}

/// Fits one equation using only `keep` regressor columns. Returns the full
/// coefficient vector (zeros at dropped columns) and the residuals.
pub(crate) fn fit_equation(
    names: &[String],
    design: &Design,
    target: usize,
    keep: &[usize],
) -> Result<(Vec<f64>, Vec<f64>), VarError> {
    let x = design.regressors.select_columns(keep);
    let y = design.targets.select_columns(&[target]);
    let ls = LeastSquares::fit(&x, &y).map_err(|e| VarError::RankDeficient {
        regressor: design.describe(keep[e.column], names),
    })?;
    let mut beta = vec![0.0; design.regressors.cols()];
    for (i, &c) in keep.iter().enumerate() {
        beta[c] = ls.coefficients[(i, 0)];
    }
    Ok((beta, ls.residuals.column(0)))
}

pub(crate) fn fit_design(
    names: &[String],
    design: &Design,
    constraints: &[Constraint],
) -> Result<VarModel, VarError> {
    let (k, p) = (design.k, design.p);
    let n_reg = design.regressors.cols();
    let t_eff = design.targets.rows();
    let excluded = excluded_columns(names, design, constraints)?;

    // Unconstrained equations share one factorisation.
    let free: Vec<usize> = (0..k).filter(|&i| excluded[i].is_empty()).collect();
    let mut betas = vec![vec![0.0; n_reg]; k];
    let mut residuals = Matrix::zeros(t_eff, k);
    if !free.is_empty() {
        let y = design.targets.select_columns(&free);
        let ls =
            LeastSquares::fit(&design.regressors, &y).map_err(|e| VarError::RankDeficient {
                regressor: design.describe(e.column, names),
            })?;
        for (c, &eq) in free.iter().enumerate() {
            for r in 0..n_reg {
                betas[eq][r] = ls.coefficients[(r, c)];
            }
            for t in 0..t_eff {
                residuals[(t, eq)] = ls.residuals[(t, c)];
            }
        }
    }
    for eq in (0..k).filter(|i| !excluded[*i].is_empty()) {
        let keep: Vec<usize> = (0..n_reg).filter(|c| !excluded[eq].contains(c)).collect();
        let (beta, res) = fit_equation(names, design, eq, &keep)?;
        betas[eq] = beta;
        for (t, r) in res.into_iter().enumerate() {
            residuals[(t, eq)] = r;
        }
    }

    let intercepts = betas.iter().map(|b| b[0]).collect();
    let coefficients = (1..=p)
        .map(|lag| {
            let mut a = Matrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    a[(i, j)] = betas[i][design.column_of(j, lag)];
                }
            }
            a
        })
        .collect();
    let ss = (0..k)
        .map(|i| {
            (0..t_eff)
                .map(|t| residuals[(t, i)] * residuals[(t, i)])
                .sum()
        })
        .collect();
    let mut cov = residuals.transpose().matmul(&residuals);
    for i in 0..k {
        for j in 0..k {
            cov[(i, j)] /= t_eff as f64;
        }
    }
    // exact symmetry
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(VarModel {
        names: names.to_vec(),
        p,
        t_eff,
        intercepts,
        coefficients,
        constraints: constraints.to_vec(),
        residuals,
        ss,
        residual_covariance: cov,
    })
}

/// Margin below 1 that the spectral radius must clear.
pub const STABILITY_MARGIN: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    pub spectral_radius: f64,
}

/// Stability from the eigenvalues of the companion matrix.
pub fn stability(model: &VarModel) -> Stability {
    stability_of(&model.coefficients)
}

pub fn stability_of(coefficients: &[Matrix]) -> Stability {
    let radius = linalg::spectral_radius(&companion_matrix(coefficients));
    Stability {
        stable: radius < 1.0 - STABILITY_MARGIN,
        spectral_radius: radius,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InformationCriterion {
    Aic,
    #[default]
    Bic,
}

/// Criterion value for a VAR fitted on a sample of `n` rows.
fn criterion_value(crit: InformationCriterion, ln_det: f64, n: usize, p: usize, k: usize) -> f64 {
    let params = (p * k * k) as f64;
    let n = n as f64;
    match crit {
        InformationCriterion::Aic => ln_det + 2.0 * params / n,
        InformationCriterion::Bic => ln_det + libm::log(n) * params / n,
    }
}

/// Lag order in `1..=p_max` minimising the criterion; every candidate is
/// fitted on the sample usable by `p_max`. Ties go to the smaller order.
pub fn select_lag(
    table: &TimeSeriesTable,
    p_max: usize,
    criterion: InformationCriterion,
) -> Result<usize, VarError> {
    select_lag_columns(&table.names(), &table.numeric_columns()?, p_max, criterion)
}

pub fn select_lag_columns(
    names: &[String],
    columns: &[Vec<f64>],
    p_max: usize,
    criterion: InformationCriterion,
) -> Result<usize, VarError> {
    if p_max == 0 {
        return Err(VarError::ZeroLag);
    }
    let k = columns.len();
    let mut best = (1, f64::INFINITY);
    for p in 1..=p_max {
        let design = design_from(columns, p, p_max)?;
        let model = fit_design(names, &design, &[])?;
        let ln_det = linalg::ln_det_spd(&model.residual_covariance).unwrap_or(f64::NEG_INFINITY);
        let value = criterion_value(criterion, ln_det, model.t_eff, p, k);
        if value < best.1 {
            best = (p, value);
        }
    }
    Ok(best.0)
}
