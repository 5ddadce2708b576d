//! Missing-value imputation and categorical encoding.
//!
//! Imputation methods act on numeric columns. Categorical columns are always
//! forward filled, whatever method is chosen, since mean and median have no
//! meaning for tokens.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::table::{Column, ColumnData, TableError, TimeSeriesTable};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    Mean,
    Median,
    ForwardFill,
    #[default]
    LinearInterpolation,
    DropRows,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    Ordinal,
    OneHot,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub imputation: Imputation,
    pub encoding: Encoding,
    pub selected_columns: Option<Vec<String>>,
}

/// How one categorical column was turned into numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnEncoding {
    /// Token to code, codes assigned in lexicographic token order from 0.
    Ordinal(BTreeMap<String, u32>),
    /// Names of the generated indicator columns, in token order.
    OneHot(Vec<String>),
}

/// Per encoded column, keyed by the original column name.
pub type EncodingMap = BTreeMap<String, ColumnEncoding>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PreprocessError {
    #[error("column `{0}` has no observed values to impute from")]
    AllMissing(String),
    #[error("encoding requires a table without missing cells (column `{0}`)")]
    MissingBeforeEncoding(String),
    #[error("one-hot column `{0}` collides with an existing column")]
    OneHotCollision(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// What preprocessing did to the table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    /// Cells filled in, per column.
    pub imputed_cells: BTreeMap<String, usize>,
    pub dropped_rows: usize,
    pub encoding: EncodingMap,
    pub rows: usize,
    pub columns: Vec<String>,
}

/// Column selection, imputation and encoding in one pass.
pub fn preprocess(
    table: &TimeSeriesTable,
    config: &PreprocessConfig,
) -> Result<(TimeSeriesTable, PreprocessReport), PreprocessError> {
    let selected = match &config.selected_columns {
        Some(names) => table.select(names)?,
        None => table.clone(),
    };
    let imputed_cells = selected
        .columns()
        .iter()
        .map(|c| (c.name.clone(), c.data.missing_count()))
        .collect();
    let before = selected.len();
    let imputed = impute(&selected, config.imputation)?;
    let dropped_rows = before - imputed.len();
    let imputed_cells = if config.imputation == Imputation::DropRows {
        selected
            .columns()
            .iter()
            .map(|c| (c.name.clone(), 0))
            .collect()
    } else {
        imputed_cells
    };
    let (encoded, encoding) = encode_categorical(&imputed, config.encoding)?;
    let report = PreprocessReport {
        imputed_cells,
        dropped_rows,
        encoding,
        rows: encoded.len(),
        columns: encoded.names(),
    };
    Ok((encoded, report))
}

/// Fills every missing cell. Non-missing cells are never touched.
pub fn impute(
    table: &TimeSeriesTable,
    method: Imputation,
) -> Result<TimeSeriesTable, PreprocessError> {
    for c in table.columns() {
        if !c.data.is_empty() && c.data.missing_count() == c.data.len() {
            return Err(PreprocessError::AllMissing(c.name.clone()));
        }
    }
    if method == Imputation::DropRows {
        let keep: Vec<bool> = (0..table.len())
            .map(|row| {
                table.columns().iter().all(|c| match &c.data {
                    ColumnData::Numeric(v) => v[row].is_some(),
                    ColumnData::Categorical(v) => v[row].is_some(),
                })
            })
            .collect();
        return Ok(table.retain_rows(&keep)?);
    }
    let columns = table
        .columns()
        .iter()
        .map(|c| {
            let data = match &c.data {
                ColumnData::Categorical(v) => {
                    ColumnData::Categorical(forward_fill(v).into_iter().map(Some).collect())
                }
                ColumnData::Numeric(v) => {
                    let filled = match method {
                        Imputation::Mean => fill_constant(v, mean_of(v)),
                        Imputation::Median => fill_constant(v, median_of(v)),
                        Imputation::ForwardFill => forward_fill(v),
                        Imputation::LinearInterpolation => interpolate(v),
                        Imputation::DropRows => unreachable!(),
                    };
                    ColumnData::Numeric(filled.into_iter().map(Some).collect())
                }
            };
            Column {
                name: c.name.clone(),
                data,
            }
        })
        .collect();
    Ok(table.with_columns(columns)?)
}

fn observed(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().filter_map(|x| *x).collect()
}

fn mean_of(v: &[Option<f64>]) -> f64 {
    let obs = observed(v);
    obs.iter().sum::<f64>() / obs.len() as f64
}

fn median_of(v: &[Option<f64>]) -> f64 {
    let mut obs = observed(v);
    obs.sort_by(f64::total_cmp);
    let n = obs.len();
    if n % 2 == 1 {
        obs[n / 2]
    } else {
        0.5 * (obs[n / 2 - 1] + obs[n / 2])
    }
}

fn fill_constant(v: &[Option<f64>], fill: f64) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(fill)).collect()
}

// Leading gaps take the first observed value.
fn forward_fill<T: Clone>(v: &[Option<T>]) -> Vec<T> {
    let first = v.iter().flatten().next().cloned();
    let mut last = first;
    v.iter()
        .map(|x| {
            if let Some(val) = x {
                last = Some(val.clone());
            }
            last.clone()
                .expect("column has at least one observed value")
        })
        .collect()
}

// Linear in row position; gaps before the first or after the last
// observation take the nearest observed value.
fn interpolate(v: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = v
        .iter()
        .enumerate()
        .filter_map(|(i, x)| x.map(|x| (i, x)))
        .collect();
    let mut out = vec![0.0; v.len()];
    let mut k = 0;
    for (i, slot) in out.iter_mut().enumerate() {
        if let Some(x) = v[i] {
            *slot = x;
            continue;
        }
        while k + 1 < known.len() && known[k + 1].0 < i {
            k += 1;
        }
        let (i0, x0) = known[k];
        *slot = if i < i0 {
            x0
        } else if k + 1 < known.len() {
            let (i1, x1) = known[k + 1];
            x0 + (x1 - x0) * (i - i0) as f64 / (i1 - i0) as f64
        } else {
            x0
        };
    }
    out
}

/// Turns categorical columns into numeric ones. Numeric columns pass through.
pub fn encode_categorical(
    table: &TimeSeriesTable,
    method: Encoding,
) -> Result<(TimeSeriesTable, EncodingMap), PreprocessError> {
    let mut map = EncodingMap::new();
    let existing: BTreeSet<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
    let mut columns = Vec::new();
    for c in table.columns() {
        let tokens = match &c.data {
            ColumnData::Numeric(_) => {
                columns.push(c.clone());
                continue;
            }
            ColumnData::Categorical(v) => v,
        };
        let tokens: Vec<&str> = tokens
            .iter()
            .map(|t| {
                t.as_deref()
                    .ok_or_else(|| PreprocessError::MissingBeforeEncoding(c.name.clone()))
            })
            .collect::<Result<_, _>>()?;
        let distinct: BTreeSet<&str> = tokens.iter().copied().collect();
        match method {
            Encoding::Ordinal => {
                let codes: BTreeMap<String, u32> = distinct
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (String::from(*t), i as u32))
                    .collect();
                let cells = tokens.iter().map(|t| Some(f64::from(codes[*t]))).collect();
                columns.push(Column::numeric(c.name.clone(), cells));
                map.insert(c.name.clone(), ColumnEncoding::Ordinal(codes));
            }
            Encoding::OneHot => {
                let mut names = Vec::with_capacity(distinct.len());
                for tok in &distinct {
                    let name = format!("{}={}", c.name, tok);
                    if existing.contains(name.as_str()) {
                        return Err(PreprocessError::OneHotCollision(name));
                    }
                    let cells = tokens
                        .iter()
                        .map(|t| Some(if t == tok { 1.0 } else { 0.0 }))
                        .collect();
                    columns.push(Column::numeric(name.clone(), cells));
                    names.push(name);
                }
                map.insert(c.name.clone(), ColumnEncoding::OneHot(names));
            }
        }
    }
    Ok((table.with_columns(columns)?, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::IndexKind;
    use alloc::string::ToString;

    fn numeric_table(cells: Vec<Option<f64>>) -> TimeSeriesTable {
        let n = cells.len() as i64;
        TimeSeriesTable::new(
            "t",
            IndexKind::Tick,
            (0..n).collect(),
            vec![Column::numeric("a", cells)],
        )
        .unwrap()
    }

    fn values(t: &TimeSeriesTable) -> Vec<f64> {
        t.numeric_column("a").unwrap()
    }

    #[test]
    fn mean_fills_gap() {
        let t = numeric_table(vec![Some(1.0), None, Some(3.0)]);
        assert_eq!(
            values(&impute(&t, Imputation::Mean).unwrap()),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn interpolation_uses_midpoint() {
        let t = numeric_table(vec![Some(1.0), None, Some(4.0)]);
        assert_eq!(
            values(&impute(&t, Imputation::LinearInterpolation).unwrap()),
            vec![1.0, 2.5, 4.0]
        );
    }

    #[test]
    fn interpolation_extends_boundaries() {
        let t = numeric_table(vec![None, Some(2.0), None, None, Some(8.0), None]);
        assert_eq!(
            values(&impute(&t, Imputation::LinearInterpolation).unwrap()),
            vec![2.0, 2.0, 4.0, 6.0, 8.0, 8.0]
        );
    }

    #[test]
    fn median_of_observed() {
        // sorted observed {1, 2, 9} -> middle element 2
        let t = numeric_table(vec![Some(1.0), Some(2.0), None, Some(9.0), None]);
        assert_eq!(
            values(&impute(&t, Imputation::Median).unwrap()),
            vec![1.0, 2.0, 2.0, 9.0, 2.0]
        );
    }

    #[test]
    fn forward_fill_backfills_leading() {
        let t = numeric_table(vec![None, Some(5.0), None, Some(7.0), None]);
        assert_eq!(
            values(&impute(&t, Imputation::ForwardFill).unwrap()),
            vec![5.0, 5.0, 5.0, 7.0, 7.0]
        );
    }

    #[test]
    fn drop_rows_removes_incomplete() {
        let t = TimeSeriesTable::new(
            "t",
            IndexKind::Tick,
            vec![0, 1, 2],
            vec![
                Column::numeric("a", vec![Some(1.0), None, Some(3.0)]),
                Column::categorical("b", vec![Some("x".into()), Some("y".into()), None]),
            ],
        )
        .unwrap();
        let out = impute(&t, Imputation::DropRows).unwrap();
        assert_eq!(out.index(), &[0]);
    }

    #[test]
    fn all_missing_column_is_an_error() {
        let t = numeric_table(vec![None, None]);
        assert_eq!(
            impute(&t, Imputation::Mean).unwrap_err(),
            PreprocessError::AllMissing("a".into())
        );
    }

    #[test]
    fn categorical_gaps_forward_fill_under_mean() {
        let t = TimeSeriesTable::new(
            "t",
            IndexKind::Tick,
            vec![0, 1, 2],
            vec![Column::categorical(
                "c",
                vec![None, Some("on".into()), None],
            )],
        )
        .unwrap();
        let out = impute(&t, Imputation::Mean).unwrap();
        assert_eq!(
            out.column("c").unwrap().data,
            ColumnData::Categorical(vec![Some("on".into()); 3])
        );
    }

    fn colour_table() -> TimeSeriesTable {
        TimeSeriesTable::new(
            "t",
            IndexKind::Tick,
            vec![0, 1, 2],
            vec![Column::categorical(
                "c",
                ["red", "blue", "red"]
                    .iter()
                    .map(|s| Some(s.to_string()))
                    .collect(),
            )],
        )
        .unwrap()
    }

    #[test]
    fn ordinal_codes_are_lexicographic() {
        let (out, map) = encode_categorical(&colour_table(), Encoding::Ordinal).unwrap();
        assert_eq!(out.numeric_column("c").unwrap(), vec![1.0, 0.0, 1.0]);
        let expected: BTreeMap<String, u32> = [("blue".to_string(), 0), ("red".to_string(), 1)]
            .into_iter()
            .collect();
        assert_eq!(map["c"], ColumnEncoding::Ordinal(expected));
    }

    #[test]
    fn one_hot_indicators() {
        let (out, map) = encode_categorical(&colour_table(), Encoding::OneHot).unwrap();
        assert_eq!(out.names(), vec!["c=blue", "c=red"]);
        assert_eq!(out.numeric_column("c=blue").unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(out.numeric_column("c=red").unwrap(), vec![1.0, 0.0, 1.0]);
        assert_eq!(
            map["c"],
            ColumnEncoding::OneHot(vec!["c=blue".into(), "c=red".into()])
        );
    }

    #[test]
    fn one_hot_collision() {
        let mut cols = colour_table().columns().to_vec();
        cols.push(Column::dense("c=red", &[0.0, 0.0, 0.0]));
        let t = colour_table().with_columns(cols).unwrap();
        assert_eq!(
            encode_categorical(&t, Encoding::OneHot).unwrap_err(),
            PreprocessError::OneHotCollision("c=red".into())
        );
    }

    #[test]
    fn numeric_tables_pass_through() {
        let t = numeric_table(vec![Some(1.0), Some(2.0)]);
        let (out, map) = encode_categorical(&t, Encoding::OneHot).unwrap();
        assert_eq!(out, t);
        assert!(map.is_empty());
    }
}
