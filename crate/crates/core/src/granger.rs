//! Granger-noncausality testing.
//!
//! For a target variable and a candidate source, the target equation of a
//! VAR is fitted twice: once with every regressor and once with the source's
//! lags 1..p removed. The F statistic compares the two residual sums of
//! squares:
//!
//! ```text
//! F = ((SS_c - SS_f) / p) / (SS_f / (T - p + 1))
//! ```
//!
//! `discover` runs this for every ordered pair of a table, with optional
//! differencing to stationarity, lag-span selection and Benjamini-Hochberg
//! correction.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::distribution::f_ln_sf;
use crate::stationarity::{IntegrationReport, Significance, StationarityError};
use crate::table::{TableError, TimeSeriesTable};
use crate::var::{self, design_from, InformationCriterion, VarError};

pub use crate::distribution::f_pvalue;

/// Relative gap below which SS_c - SS_f is treated as zero.
pub const SS_CLAMP_RELATIVE: f64 = 1e-12;

/// SS_f at or below this fraction of the target's total sum of squares is
/// treated as an exact fit.
pub const DETERMINISTIC_RELATIVE: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FTestError {
    #[error("full model fits exactly (SS_f = 0): deterministic relation")]
    DeterministicRelation,
    #[error("constrained sum of squares {ss_c} is below the full one {ss_f}")]
    InvalidSums { ss_c: f64, ss_f: f64 },
    #[error("no residual degrees of freedom")]
    NoDegreesOfFreedom,
}

/// The F index comparing constrained and full sums of squares, with the
/// denominator normalised by `T - p + 1`.
pub fn f_statistic(ss_c: f64, ss_f: f64, p: usize, t: usize) -> Result<f64, FTestError> {
    f_statistic_with_df(ss_c, ss_f, p, (t + 1).saturating_sub(p))
}

fn f_statistic_with_df(ss_c: f64, ss_f: f64, p: usize, df2: usize) -> Result<f64, FTestError> {
    if df2 == 0 || p == 0 {
        return Err(FTestError::NoDegreesOfFreedom);
    }
    if !(ss_f > 0.0) {
        return Err(FTestError::DeterministicRelation);
    }
    let mut diff = ss_c - ss_f;
    if diff < 0.0 {
        if -diff <= SS_CLAMP_RELATIVE * ss_f {
            diff = 0.0;
        } else {
            return Err(FTestError::InvalidSums { ss_c, ss_f });
        }
    }
    Ok((diff / p as f64) / (ss_f / df2 as f64))
}

/// How the denominator degrees of freedom are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfConvention {
    /// `T_eff - p + 1`.
    #[default]
    Paper,
    /// `T_eff` minus the number of regressors in the full equation.
    Classical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum LagPolicy {
    Fixed(usize),
    InformationCriterion(InformationCriterion),
    /// Test every span in 1..=p_max and keep the one with the smallest
    /// p-value.
    #[default]
    ScanBest,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultipleTesting {
    #[default]
    None,
    BenjaminiHochberg,
}

/// Which variables enter the VAR for a pair test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Only the source and the target.
    #[default]
    Pairwise,
    /// Every column of the table.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub alpha: f64,
    /// Largest lag span; `None` means `min(10, T / 20)`.
    pub p_max: Option<usize>,
    pub lag_policy: LagPolicy,
    pub multiple_testing: MultipleTesting,
    pub auto_stationarity: bool,
    pub stationarity_alpha: Significance,
    pub max_integration_order: usize,
    pub conditioning: Conditioning,
    pub df_convention: DfConvention,
    /// Also test each variable's own lags (self-loops).
    pub include_self: bool,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            p_max: None,
            lag_policy: LagPolicy::ScanBest,
            multiple_testing: MultipleTesting::None,
            auto_stationarity: true,
            stationarity_alpha: Significance::FivePercent,
            max_integration_order: 2,
            conditioning: Conditioning::Pairwise,
            df_convention: DfConvention::Paper,
            include_self: true,
        }
    }
}

/// A field-level configuration problem.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<(), Vec<ConfigIssue>> {
        let mut issues = Vec::new();
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            issues.push(ConfigIssue::new(
                "alpha",
                "must lie strictly between 0 and 1",
            ));
        }
        if self.p_max == Some(0) {
            issues.push(ConfigIssue::new("p_max", "must be at least 1"));
        }
        if self.lag_policy == LagPolicy::Fixed(0) {
            issues.push(ConfigIssue::new("lag_policy.fixed", "must be at least 1"));
        }
        if self.max_integration_order > 2 {
            issues.push(ConfigIssue::new(
                "max_integration_order",
                "must be 0, 1 or 2",
            ));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    /// `p_max` or its default for a series of length `t`.
    pub fn effective_p_max(&self, t: usize) -> usize {
        self.p_max.unwrap_or_else(|| (t / 20).clamp(1, 10))
    }
}

/// One F test under a given degrees-of-freedom convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub convention: DfConvention,
    pub f_statistic: f64,
    pub df: (usize, usize),
    pub p_value: f64,
}

/// Outcome of one directed test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub source: String,
    pub target: String,
    /// Lag span whose source coefficients were constrained.
    pub p: usize,
    /// VAR order actually fitted (p, or p + 1 with the guard).
    pub model_order: usize,
    /// Rows in the regression.
    pub t_eff: usize,
    pub ss_full: f64,
    pub ss_constrained: f64,
    pub f_statistic: f64,
    pub df: (usize, usize),
    /// Adjusted when a multiple-testing correction is active.
    pub p_value: f64,
    pub raw_p_value: f64,
    pub significant: bool,
    /// Times the data was differenced before fitting.
    pub fitted_on: usize,
    pub extra_lag_guard: bool,
    /// The span was chosen by minimum p-value without a correction.
    pub selection_biased: bool,
    /// The same comparison under the other degrees-of-freedom convention.
    pub alternative: FTest,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GrangerError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("`{target}` is an exact function of the regressors when `{cause}` is included")]
    DeterministicRelation { cause: String, target: String },
    #[error("invalid configuration: {0:?}")]
    InvalidConfig(Vec<ConfigIssue>),
    #[error(transparent)]
    FTest(#[from] FTestError),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error(transparent)]
    Stationarity(#[from] StationarityError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Knobs shared by single tests and sweeps.
#[derive(Clone, Copy, Debug)]
struct TestSettings {
    guard: bool,
    convention: DfConvention,
    alpha: f64,
    fitted_on: usize,
}

struct Tested {
    result: GrangerResult,
    ln_p: f64,
}

fn degrees(convention: DfConvention, t_eff: usize, p: usize, n_regressors: usize) -> usize {
    match convention {
        DfConvention::Paper => (t_eff + 1).saturating_sub(p),
        DfConvention::Classical => t_eff.saturating_sub(n_regressors),
    }
}

/// Tests `source -> target` within the VAR over `columns`.
fn test_within(
    names: &[String],
    columns: &[Vec<f64>],
    source: usize,
    target: usize,
    p: usize,
    settings: TestSettings,
) -> Result<Tested, GrangerError> {
    let order = p + usize::from(settings.guard);
    let design = design_from(columns, order, order)?;
    let n_reg = design.regressors.cols();
    let all: Vec<usize> = (0..n_reg).collect();
    let dropped: Vec<usize> = (1..=p).map(|lag| design.column_of(source, lag)).collect();
    let kept: Vec<usize> = all
        .iter()
        .copied()
        .filter(|c| !dropped.contains(c))
        .collect();

    let (_, res_full) = var::fit_equation(names, &design, target, &all)?;
    let (_, res_con) = var::fit_equation(names, &design, target, &kept)?;
    let ss_full: f64 = res_full.iter().map(|r| r * r).sum();
    let ss_constrained: f64 = res_con.iter().map(|r| r * r).sum();

    let y = design.targets.column(target);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let deterministic = || GrangerError::DeterministicRelation {
        cause: names[source].clone(),
        target: names[target].clone(),
    };
    if ss_full <= DETERMINISTIC_RELATIVE * tss {
        return Err(deterministic());
    }

    let t_eff = design.targets.rows();
    let run = |convention: DfConvention| -> Result<(FTest, f64), GrangerError> {
        let df2 = degrees(convention, t_eff, p, n_reg);
        let f = f_statistic_with_df(ss_constrained, ss_full, p, df2).map_err(|e| match e {
            FTestError::DeterministicRelation => deterministic(),
            other => GrangerError::FTest(other),
        })?;
        let ln_p = f_ln_sf(f, p as f64, df2 as f64);
        let test = FTest {
            convention,
            f_statistic: f,
            df: (p, df2),
            p_value: libm::exp(ln_p).clamp(0.0, 1.0),
        };
        Ok((test, ln_p))
    };
    let (primary, ln_p) = run(settings.convention)?;
    let other = match settings.convention {
        DfConvention::Paper => DfConvention::Classical,
        DfConvention::Classical => DfConvention::Paper,
    };
    let (alternative, _) = run(other)?;
    Ok(Tested {
        ln_p,
        result: GrangerResult {
            source: names[source].clone(),
            target: names[target].clone(),
            p,
            model_order: order,
            t_eff,
            ss_full,
            ss_constrained: ss_constrained.max(ss_full),
            f_statistic: primary.f_statistic,
            df: primary.df,
            p_value: primary.p_value,
            raw_p_value: primary.p_value,
            significant: primary.p_value < settings.alpha,
            fitted_on: settings.fitted_on,
            extra_lag_guard: settings.guard,
            selection_biased: false,
            alternative,
        },
    })
}

/// Variables entering the VAR for a pair, and the positions of source and
/// target within them.
fn model_variables(
    k: usize,
    source: usize,
    target: usize,
    conditioning: Conditioning,
) -> (Vec<usize>, usize, usize) {
    match conditioning {
        Conditioning::Full => ((0..k).collect(), source, target),
        Conditioning::Pairwise if source == target => (vec![target], 0, 0),
        Conditioning::Pairwise => {
            let vars = if source < target {
                vec![source, target]
            } else {
                vec![target, source]
            };
            let s = vars.iter().position(|&v| v == source).unwrap_or(0);
            let t = vars.iter().position(|&v| v == target).unwrap_or(0);
            (vars, s, t)
        }
    }
}

/// Single bivariate test of `source -> target` at lag span `p`.
///
/// With `guard` set the VAR has order p + 1 and only lags 1..p of the
/// source are constrained. `source == target` tests the variable's own lags
/// in a univariate autoregression.
pub fn granger_test(
    table: &TimeSeriesTable,
    source: &str,
    target: &str,
    p: usize,
    guard: bool,
) -> Result<GrangerResult, GrangerError> {
    let names = table.names();
    let s = names
        .iter()
        .position(|n| n == source)
        .ok_or_else(|| GrangerError::UnknownColumn(source.into()))?;
    let t = names
        .iter()
        .position(|n| n == target)
        .ok_or_else(|| GrangerError::UnknownColumn(target.into()))?;
    let columns = table.numeric_columns()?;
    let settings = TestSettings {
        guard,
        convention: DfConvention::Paper,
        alpha: DiscoveryConfig::default().alpha,
        fitted_on: 0,
    };
    test_pair(&names, &columns, s, t, p, Conditioning::Pairwise, settings).map(|t| t.result)
}

fn test_pair(
    names: &[String],
    columns: &[Vec<f64>],
    source: usize,
    target: usize,
    p: usize,
    conditioning: Conditioning,
    settings: TestSettings,
) -> Result<Tested, GrangerError> {
    let (vars, s, t) = model_variables(columns.len(), source, target, conditioning);
    let sub_names: Vec<String> = vars.iter().map(|&v| names[v].clone()).collect();
    let sub_cols: Vec<Vec<f64>> = vars.iter().map(|&v| columns[v].clone()).collect();
    if p == 0 {
        return Err(VarError::ZeroLag.into());
    }
    test_within(&sub_names, &sub_cols, s, t, p, settings)
}

/// A pair whose test could not be computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub source: String,
    pub target: String,
    pub error: String,
    pub deterministic: bool,
}

/// Everything a discovery sweep produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    /// Sorted by (source, target).
    pub results: Vec<GrangerResult>,
    pub failures: Vec<PairFailure>,
    pub integration: IntegrationReport,
    pub p_max: usize,
}

impl Discovery {
    pub fn significant(&self) -> impl Iterator<Item = &GrangerResult> {
        self.results.iter().filter(|r| r.significant)
    }
}

fn run_policy(
    names: &[String],
    columns: &[Vec<f64>],
    source: usize,
    target: usize,
    config: &DiscoveryConfig,
    p_max: usize,
    settings: TestSettings,
) -> Result<GrangerResult, GrangerError> {
    match config.lag_policy {
        LagPolicy::Fixed(p) => test_pair(
            names,
            columns,
            source,
            target,
            p,
            config.conditioning,
            settings,
        )
        .map(|t| t.result),
        LagPolicy::InformationCriterion(crit) => {
            let (vars, _, _) = model_variables(columns.len(), source, target, config.conditioning);
            let sub_names: Vec<String> = vars.iter().map(|&v| names[v].clone()).collect();
            let sub_cols: Vec<Vec<f64>> = vars.iter().map(|&v| columns[v].clone()).collect();
            let p = var::select_lag_columns(&sub_names, &sub_cols, p_max, crit)?;
            test_pair(
                names,
                columns,
                source,
                target,
                p,
                config.conditioning,
                settings,
            )
            .map(|t| t.result)
        }
        LagPolicy::ScanBest => {
            let mut best: Option<Tested> = None;
            let mut first_err = None;
            for p in 1..=p_max {
                match test_pair(
                    names,
                    columns,
                    source,
                    target,
                    p,
                    config.conditioning,
                    settings,
                ) {
                    Ok(t) => {
                        if best.as_ref().is_none_or(|b| t.ln_p < b.ln_p) {
                            best = Some(t);
                        }
                    }
                    Err(e) => {
                        if first_err.is_none() {
                            first_err = Some(e);
                        }
                    }
                }
            }
            match best {
                Some(t) => {
                    let mut r = t.result;
                    r.selection_biased = config.multiple_testing == MultipleTesting::None;
                    Ok(r)
                }
                None => Err(first_err.unwrap_or(VarError::ZeroLag.into())),
            }
        }
    }
}

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn benjamini_hochberg(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let q = p_values[i] * m as f64 / (rank + 1) as f64;
        running = running.min(q);
        adjusted[i] = running.min(1.0).max(p_values[i]);
    }
    adjusted
}

/// Tests every ordered pair of columns (plus self-loops when configured).
pub fn discover(
    table: &TimeSeriesTable,
    config: &DiscoveryConfig,
) -> Result<Discovery, GrangerError> {
    config.validate().map_err(GrangerError::InvalidConfig)?;
    let names = table.names();
    let raw = table.numeric_columns()?;
    let (integration, columns) = if config.auto_stationarity && !raw.is_empty() {
        IntegrationReport::analyze(
            &names,
            &raw,
            config.max_integration_order,
            config.stationarity_alpha,
        )?
    } else {
        (IntegrationReport::skipped(&names), raw)
    };
    let t = columns.first().map_or(0, Vec::len);
    let p_max = match config.lag_policy {
        LagPolicy::Fixed(p) => p,
        _ => config.effective_p_max(t),
    };
    let settings = TestSettings {
        guard: integration.extra_lag_guard,
        convention: config.df_convention,
        alpha: config.alpha,
        fitted_on: integration.common_order,
    };

    let k = names.len();
    let mut pairs = Vec::new();
    if k >= 2 {
        for s in 0..k {
            for tg in 0..k {
                if s != tg || config.include_self {
                    pairs.push((s, tg));
                }
            }
        }
    }

    let run = |&(s, tg): &(usize, usize)| {
        (
            s,
            tg,
            run_policy(&names, &columns, s, tg, config, p_max, settings),
        )
    };
    #[cfg(feature = "parallel")]
    let outcomes: Vec<_> = {
        use rayon::prelude::*;
        pairs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<_> = pairs.iter().map(run).collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (s, tg, outcome) in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push(PairFailure {
                source: names[s].clone(),
                target: names[tg].clone(),
                deterministic: matches!(e, GrangerError::DeterministicRelation { .. }),
                error: e.to_string(),
            }),
        }
    }
    if config.multiple_testing == MultipleTesting::BenjaminiHochberg {
        let raw_p: Vec<f64> = results.iter().map(|r| r.raw_p_value).collect();
        for (r, q) in results.iter_mut().zip(benjamini_hochberg(&raw_p)) {
            r.p_value = q;
            r.significant = q < config.alpha;
        }
    }
    results.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    failures.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    Ok(Discovery {
        results,
        failures,
        integration: integration_without_series(integration),
        p_max,
    })
}

fn integration_without_series(mut report: IntegrationReport) -> IntegrationReport {
    for (_, e) in &mut report.columns {
        e.series = Vec::new();
    }
    report
}

/// Short human description, used in logs and CLI tables.
pub fn describe(result: &GrangerResult) -> String {
    format!(
        "{} -> {} (lag {}): F = {:.4}, p = {:.3e}{}",
        result.source,
        result.target,
        result.p,
        result.f_statistic,
        result.p_value,
        if result.significant { " *" } else { "" }
    )
}
