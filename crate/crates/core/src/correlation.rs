//! Contemporaneous pairwise scores: Pearson, Spearman rank and a bounded
//! Euclidean similarity, plus a histogram/moment summary for eyeballing
//! normality.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::table::{TableError, TimeSeriesTable};

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
    Euclidean,
}

impl CorrelationMethod {
    pub const ALL: [CorrelationMethod; 3] = [Self::Pearson, Self::Spearman, Self::Euclidean];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pearson => "pearson",
            Self::Spearman => "spearman",
            Self::Euclidean => "euclidean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Scores one pair of equal-length series.
    pub fn score(self, x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
        match self {
            Self::Pearson => pearson(x, y),
            Self::Spearman => spearman(x, y),
            Self::Euclidean => euclidean_similarity(x, y),
        }
    }
}

impl fmt::Display for CorrelationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CorrelationError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("correlation needs at least two columns")]
    TooFewColumns,
    #[error("degenerate range: all values equal {0}")]
    DegenerateRange(f64),
    #[error(transparent)]
    Table(#[from] TableError),
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(CorrelationError::TooShort {
            needed: 3,
            found: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CorrelationError::NonFinite);
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

// Sum of squared deviations with a compensating correction term.
fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let m = mean(x);
    let correction = x.iter().map(|v| v - m).sum::<f64>() / x.len() as f64;
    let d: Vec<f64> = x.iter().map(|v| v - m - correction).collect();
    let ss = d.iter().map(|v| v * v).sum();
    (d, ss)
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    let (dx, sx) = centered(x);
    let (dy, sy) = centered(y);
    if sx == 0.0 || sy == 0.0 {
        return Err(CorrelationError::ZeroVariance);
    }
    let sxy: f64 = dx.iter().zip(&dy).map(|(a, b)| a * b).sum();
    Ok((sxy / libm::sqrt(sx * sy)).clamp(-1.0, 1.0))
}

/// Sample Pearson coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    check_pair(x, y)?;
    pearson_unchecked(x, y)
}

/// Average (fractional) ranks starting at 1.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; ties get average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    check_pair(x, y)?;
    pearson_unchecked(&ranks(x), &ranks(y))
}

// Population z-scores; constant series map to zeros.
fn zscore(x: &[f64]) -> Vec<f64> {
    let (d, ss) = centered(x);
    if ss == 0.0 {
        return vec![0.0; x.len()];
    }
    let sd = libm::sqrt(ss / x.len() as f64);
    d.into_iter().map(|v| v / sd).collect()
}

/// `1 / (1 + d / sqrt(T))` where `d` is the Euclidean distance between the
/// z-scored series. Lies in (0, 1] and equals 1 for identical series.
pub fn euclidean_similarity(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    check_pair(x, y)?;
    let zx = zscore(x);
    let zy = zscore(y);
    let d2: f64 = zx.iter().zip(&zy).map(|(a, b)| (a - b) * (a - b)).sum();
    let d = libm::sqrt(d2);
    Ok(1.0 / (1.0 + d / libm::sqrt(x.len() as f64)))
}

/// Symmetric pairwise score matrix over a table's columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub method: CorrelationMethod,
    pub names: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    /// Zero-variance columns. Their off-diagonal scores are 0.
    pub degenerate: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.scores[i][j])
    }

    pub fn is_degenerate(&self, name: &str) -> bool {
        self.degenerate.iter().any(|d| d == name)
    }
}

/// Scores every pair of columns with `method`.
pub fn correlation_matrix(
    table: &TimeSeriesTable,
    method: CorrelationMethod,
) -> Result<CorrelationMatrix, CorrelationError> {
    if table.width() < 2 {
        return Err(CorrelationError::TooFewColumns);
    }
    let cols = table.numeric_columns()?;
    let names = table.names();
    let n = cols.len();
    let degenerate_idx: BTreeSet<usize> = (0..n)
        .filter(|&i| {
            let first = cols[i].first().copied();
            cols[i].iter().all(|v| Some(*v) == first)
        })
        .collect();
    let mut scores = vec![vec![0.0; n]; n];
    for i in 0..n {
        scores[i][i] = 1.0;
        for j in i + 1..n {
            let s = if degenerate_idx.contains(&i) || degenerate_idx.contains(&j) {
                // still validates lengths and finiteness
                check_pair(&cols[i], &cols[j])?;
                0.0
            } else {
                match method.score(&cols[i], &cols[j]) {
                    Ok(s) => s,
                    Err(CorrelationError::ZeroVariance) => 0.0,
                    Err(e) => return Err(e),
                }
            };
            scores[i][j] = s;
            scores[j][i] = s;
        }
    }
    Ok(CorrelationMatrix {
        method,
        degenerate: degenerate_idx.iter().map(|&i| names[i].clone()).collect(),
        names,
        scores,
    })
}

/// Histogram and moments of one series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalitySummary {
    pub min: f64,
    pub max: f64,
    /// Counts per equal-width bin over [min, max]; the last bin is closed.
    pub counts: Vec<usize>,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn normality_summary(x: &[f64], bins: usize) -> Result<NormalitySummary, CorrelationError> {
    if x.len() < 8 {
        return Err(CorrelationError::TooShort {
            needed: 8,
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CorrelationError::NonFinite);
    }
    let bins = bins.max(1);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(CorrelationError::DegenerateRange(min));
    }
    let width = (max - min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in x {
        let b = (((v - min) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let (d, m2) = centered(x);
    let n = x.len() as f64;
    let m2 = m2 / n;
    let m3 = d.iter().map(|v| v * v * v).sum::<f64>() / n;
    let m4 = d.iter().map(|v| v * v * v * v).sum::<f64>() / n;
    Ok(NormalitySummary {
        min,
        max,
        counts,
        skewness: m3 / libm::pow(m2, 1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}
