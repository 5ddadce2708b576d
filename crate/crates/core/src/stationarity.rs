//! Augmented Dickey-Fuller unit-root testing and differencing to the order
//! of integration.
//!
//! The test regression carries a constant and no trend:
//!
//! ```text
//! Δx_t = c + ρ·x_{t-1} + Σ_{i=1..k} φ_i·Δx_{t-i} + ε_t
//! ```
//!
//! `k` is picked by BIC over `0..=max_lags` on a common sample, then the
//! regression is refitted on all rows available for that `k`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::linalg::{LeastSquares, Matrix};

/// Significance levels with tabulated critical values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "1%")]
    OnePercent,
    #[default]
    #[serde(rename = "5%")]
    FivePercent,
    #[serde(rename = "10%")]
    TenPercent,
}

impl Significance {
    pub const ALL: [Significance; 3] = [Self::OnePercent, Self::FivePercent, Self::TenPercent];

    pub fn level(self) -> f64 {
        match self {
            Self::OnePercent => 0.01,
            Self::FivePercent => 0.05,
            Self::TenPercent => 0.10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::OnePercent => "1%",
            Self::FivePercent => "5%",
            Self::TenPercent => "10%",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim_end_matches('%') {
            "1" | "0.01" => Some(Self::OnePercent),
            "5" | "0.05" => Some(Self::FivePercent),
            "10" | "0.1" | "0.10" => Some(Self::TenPercent),
            _ => None,
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Response-surface coefficients (MacKinnon 2010) for the constant-only
/// Dickey-Fuller tau statistic with one variable:
/// `cv(T) = b0 + b1/T + b2/T² + b3/T³`.
pub const CRITICAL_VALUE_SURFACE: [(Significance, [f64; 4]); 3] = [
    (
        Significance::OnePercent,
        [-3.43035, -6.5393, -16.786, -79.433],
    ),
    (
        Significance::FivePercent,
        [-2.86154, -2.8903, -4.234, -40.040],
    ),
    (Significance::TenPercent, [-2.56677, -1.5384, -2.809, 0.0]),
];

/// Critical value of the tau statistic for `nobs` regression observations.
pub fn critical_value(level: Significance, nobs: usize) -> f64 {
    let (_, b) = CRITICAL_VALUE_SURFACE
        .iter()
        .find(|(s, _)| *s == level)
        .expect("every level is tabulated");
    let inv = 1.0 / nobs as f64;
    b[0] + b[1] * inv + b[2] * inv * inv + b[3] * inv * inv * inv
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    #[serde(rename = "1%")]
    pub one: f64,
    #[serde(rename = "5%")]
    pub five: f64,
    #[serde(rename = "10%")]
    pub ten: f64,
}

impl CriticalValues {
    pub fn for_nobs(nobs: usize) -> Self {
        Self {
            one: critical_value(Significance::OnePercent, nobs),
            five: critical_value(Significance::FivePercent, nobs),
            ten: critical_value(Significance::TenPercent, nobs),
        }
    }

    pub fn at(&self, level: Significance) -> f64 {
        match level {
            Significance::OnePercent => self.one,
            Significance::FivePercent => self.five,
            Significance::TenPercent => self.ten,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    /// t-ratio on the lagged level coefficient.
    pub statistic: f64,
    pub lags_used: usize,
    /// Observations in the final regression.
    pub nobs: usize,
    /// Always true: the regression has an intercept and no trend.
    pub constant_only: bool,
    pub critical_values: CriticalValues,
    pub alpha: Significance,
    pub reject_unit_root: bool,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StationarityError {
    #[error("series too short: {found} observations, need {needed}")]
    TooShort { needed: usize, found: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("test regression is singular")]
    Singular,
}

/// Minimum observations in the final test regression.
pub const MIN_REGRESSION_ROWS: usize = 20;

/// `d`-fold first difference; order 0 returns the input.
pub fn difference(x: &[f64], order: usize) -> Result<Vec<f64>, StationarityError> {
    if x.len() <= order {
        return Err(StationarityError::TooShort {
            needed: order + 1,
            found: x.len(),
        });
    }
    let mut out = x.to_vec();
    for _ in 0..order {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Upper bound on augmentation lags: ⌊12·(T/100)^{1/4}⌋.
pub fn schwert_max_lags(t: usize) -> usize {
    libm::floor(12.0 * libm::pow(t as f64 / 100.0, 0.25)) as usize
}

// Rows t in [first, T) of the ADF regression with k augmentation lags.
fn adf_design(x: &[f64], dx: &[f64], k: usize, first: usize) -> (Matrix, Matrix) {
    // dx[t-1] = x[t] - x[t-1]
    let t_len = x.len();
    let rows = t_len - first;
    let cols = 2 + k;
    let mut design = Matrix::zeros(rows, cols);
    let mut target = Matrix::zeros(rows, 1);
    for (r, t) in (first..t_len).enumerate() {
        target[(r, 0)] = dx[t - 1];
        design[(r, 0)] = 1.0;
        design[(r, 1)] = x[t - 1];
        for i in 1..=k {
            design[(r, 1 + i)] = dx[t - 1 - i];
        }
    }
    (design, target)
}

/// Augmented Dickey-Fuller test with a constant.
///
/// `max_lags = None` uses [`schwert_max_lags`]; the bound is lowered when
/// needed so that the final regression keeps [`MIN_REGRESSION_ROWS`] rows.
pub fn adf_test(
    x: &[f64],
    max_lags: Option<usize>,
    alpha: Significance,
) -> Result<AdfResult, StationarityError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StationarityError::NonFinite);
    }
    let t = x.len();
    if t < MIN_REGRESSION_ROWS + 2 {
        return Err(StationarityError::TooShort {
            needed: MIN_REGRESSION_ROWS + 2,
            found: t,
        });
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(StationarityError::ZeroVariance);
    }
    let dx = difference(x, 1)?;
    // Rows available with k lags: T - k - 1.
    let cap = t - 1 - MIN_REGRESSION_ROWS;
    let max_k = max_lags.unwrap_or_else(|| schwert_max_lags(t)).min(cap);

    // Lag choice on the common sample of max_k.
    let first = max_k + 1;
    let mut best: Option<(usize, f64)> = None;
    for k in 0..=max_k {
        let (design, target) = adf_design(x, &dx, k, first);
        let n = design.rows() as f64;
        let fit = match LeastSquares::fit(&design, &target) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let ssr = fit.ssr(0);
        if !(ssr > 0.0) {
            continue;
        }
        let bic = n * libm::log(ssr / n) + (k + 2) as f64 * libm::log(n);
        if best.is_none_or(|(_, b)| bic < b) {
            best = Some((k, bic));
        }
    }
    let k = best.map_or(0, |(k, _)| k);

    let (design, target) = adf_design(x, &dx, k, k + 1);
    let nobs = design.rows();
    let fit = LeastSquares::fit(&design, &target).map_err(|_| StationarityError::Singular)?;
    let dof = nobs - design.cols();
    let sigma2 = fit.ssr(0) / dof as f64;
    let se = libm::sqrt(sigma2 * fit.unscaled_variances()[1]);
    let rho = fit.coefficients[(1, 0)];
    let statistic = if se > 0.0 {
        rho / se
    } else if rho < 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    let critical_values = CriticalValues::for_nobs(nobs);
    Ok(AdfResult {
        statistic,
        lags_used: k,
        nobs,
        constant_only: true,
        critical_values,
        alpha,
        reject_unit_root: statistic < critical_values.at(alpha),
    })
}

/// Order of integration for one series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationEntry {
    pub order: usize,
    /// Test on the level, then on each difference tried.
    pub tests: Vec<AdfResult>,
    /// Set when the unit root survived even at `max_order`.
    pub saturated: bool,
    /// The `order`-times differenced series.
    #[serde(skip)]
    pub series: Vec<f64>,
}

/// Differences until the unit root is rejected, up to `max_order` times.
pub fn integration_order(
    x: &[f64],
    max_order: usize,
    alpha: Significance,
) -> Result<IntegrationEntry, StationarityError> {
    let mut tests = Vec::new();
    let mut series = x.to_vec();
    for d in 0..=max_order {
        if d > 0 {
            series = difference(&series, 1)?;
        }
        let res = adf_test(&series, None, alpha)?;
        let reject = res.reject_unit_root;
        tests.push(res);
        if reject {
            return Ok(IntegrationEntry {
                order: d,
                tests,
                saturated: false,
                series,
            });
        }
    }
    Ok(IntegrationEntry {
        order: max_order,
        tests,
        saturated: true,
        series,
    })
}

/// Stationarity findings for the columns of a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    pub columns: Vec<(String, IntegrationEntry)>,
    /// Order every column was differenced to.
    pub common_order: usize,
    /// True when the extra-lag model is used for testing.
    pub extra_lag_guard: bool,
}

impl IntegrationReport {
    /// Runs [`integration_order`] on each column and picks the common order.
    pub fn analyze(
        names: &[String],
        columns: &[Vec<f64>],
        max_order: usize,
        alpha: Significance,
    ) -> Result<(Self, Vec<Vec<f64>>), StationarityError> {
        let mut entries = Vec::with_capacity(columns.len());
        for (name, col) in names.iter().zip(columns) {
            entries.push((name.clone(), integration_order(col, max_order, alpha)?));
        }
        let common_order = entries.iter().map(|(_, e)| e.order).max().unwrap_or(0);
        let differenced = columns
            .iter()
            .map(|c| difference(c, common_order))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((
            Self {
                columns: entries,
                common_order,
                extra_lag_guard: common_order > 0,
            },
            differenced,
        ))
    }

    /// Report without any tests, for runs that skip the stationarity gate.
    pub fn skipped(names: &[String]) -> Self {
        Self {
            columns: names
                .iter()
                .map(|n| {
                    (
                        n.clone(),
                        IntegrationEntry {
                            order: 0,
                            tests: vec![],
                            saturated: false,
                            series: vec![],
                        },
                    )
                })
                .collect(),
            common_order: 0,
            extra_lag_guard: false,
        }
    }
}
