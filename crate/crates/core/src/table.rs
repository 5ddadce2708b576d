//! Aligned multivariate time-series tables.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// How index values are to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    /// Plain integer ticks.
    Tick,
    /// Milliseconds since the Unix epoch, parsed from ISO-8601 text.
    EpochMillis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Cells of one column. Missing cells are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "cells", rename_all = "snake_case")]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn missing_count(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.iter().filter(|c| c.is_none()).count(),
            ColumnData::Categorical(v) => v.iter().filter(|c| c.is_none()).count(),
        }
    }

    fn retain_rows(&mut self, keep: &[bool]) {
        fn filter<T: Clone>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter()
                .zip(keep)
                .filter(|(_, k)| **k)
                .map(|(c, _)| c.clone())
                .collect()
        }
        match self {
            ColumnData::Numeric(v) => *v = filter(v, keep),
            ColumnData::Categorical(v) => *v = filter(v, keep),
        }
    }

    fn permute(&mut self, order: &[usize]) {
        match self {
            ColumnData::Numeric(v) => *v = order.iter().map(|&i| v[i]).collect(),
            ColumnData::Categorical(v) => *v = order.iter().map(|&i| v[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, cells: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Numeric(cells),
        }
    }

    /// A numeric column with every cell present.
    pub fn dense(name: impl Into<String>, values: &[f64]) -> Self {
        Self::numeric(name, values.iter().copied().map(Some).collect())
    }

    pub fn categorical(name: impl Into<String>, cells: Vec<Option<String>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Categorical(cells),
        }
    }

    pub fn kind(&self) -> ColumnKind {
        self.data.kind()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("column name must not be empty")]
    EmptyColumnName,
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("column `{name}` has {found} cells, expected {expected}")]
    LengthMismatch {
        name: String,
        found: usize,
        expected: usize,
    },
    #[error("index is not strictly increasing at row {row}")]
    IndexNotIncreasing { row: usize },
    #[error("duplicate index value {value}")]
    DuplicateIndex { value: i64 },
    #[error("table has no data rows")]
    NoRows,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is categorical; a numeric column is required")]
    NotNumeric(String),
    #[error("column `{name}` has {missing} missing cells")]
    HasMissing { name: String, missing: usize },
}

/// An aligned multivariate series: one strictly increasing index and a set
/// of named columns of equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesTable {
    source: String,
    index_kind: IndexKind,
    index: Vec<i64>,
    columns: Vec<Column>,
}

impl TimeSeriesTable {
    pub fn new(
        source: impl Into<String>,
        index_kind: IndexKind,
        index: Vec<i64>,
        columns: Vec<Column>,
    ) -> Result<Self, TableError> {
        let t = index.len();
        for w in index.windows(2).enumerate() {
            let (row, pair) = w;
            if pair[1] == pair[0] {
                return Err(TableError::DuplicateIndex { value: pair[0] });
            }
            if pair[1] < pair[0] {
                return Err(TableError::IndexNotIncreasing { row: row + 1 });
            }
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(TableError::EmptyColumnName);
            }
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
            if c.data.len() != t {
                return Err(TableError::LengthMismatch {
                    name: c.name.clone(),
                    found: c.data.len(),
                    expected: t,
                });
            }
        }
        Ok(Self {
            source: source.into(),
            index_kind,
            index,
            columns,
        })
    }

    /// Builds a table from rows that may be out of order; rows are sorted by
    /// index before validation.
    pub fn from_unsorted(
        source: impl Into<String>,
        index_kind: IndexKind,
        index: Vec<i64>,
        mut columns: Vec<Column>,
    ) -> Result<Self, TableError> {
        let mut order: Vec<usize> = (0..index.len()).collect();
        order.sort_by_key(|&i| index[i]);
        let sorted: Vec<i64> = order.iter().map(|&i| index[i]).collect();
        for c in &mut columns {
            if c.data.len() == index.len() {
                c.data.permute(&order);
            }
        }
        Self::new(source, index_kind, sorted, columns)
    }

    /// Dense numeric table indexed by ticks 0..T.
    pub fn from_numeric(names: &[&str], columns: &[Vec<f64>]) -> Result<Self, TableError> {
        assert_eq!(names.len(), columns.len(), "one name per column");
        let t = columns.first().map_or(0, Vec::len);
        let cols = names
            .iter()
            .zip(columns)
            .map(|(n, v)| Column::dense(*n, v))
            .collect();
        Self::new("memory", IndexKind::Tick, (0..t as i64).collect(), cols)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn index_kind(&self) -> IndexKind {
        self.index_kind
    }

    pub fn index(&self) -> &[i64] {
        &self.index
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Number of rows T.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Keeps the named columns, in the order given.
    pub fn select(&self, names: &[String]) -> Result<Self, TableError> {
        let mut cols = Vec::with_capacity(names.len());
        for n in names {
            let c = self
                .column(n)
                .ok_or_else(|| TableError::UnknownColumn(n.clone()))?;
            cols.push(c.clone());
        }
        Self::new(
            self.source.clone(),
            self.index_kind,
            self.index.clone(),
            cols,
        )
    }

    /// Replaces the column set, keeping the index.
    pub fn with_columns(&self, columns: Vec<Column>) -> Result<Self, TableError> {
        Self::new(
            self.source.clone(),
            self.index_kind,
            self.index.clone(),
            columns,
        )
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Keeps only rows whose flag is set.
    pub fn retain_rows(&self, keep: &[bool]) -> Result<Self, TableError> {
        assert_eq!(keep.len(), self.len());
        let index = self
            .index
            .iter()
            .zip(keep)
            .filter(|(_, k)| **k)
            .map(|(i, _)| *i)
            .collect();
        let mut columns = self.columns.clone();
        for c in &mut columns {
            c.data.retain_rows(keep);
        }
        Self::new(self.source.clone(), self.index_kind, index, columns)
    }

    pub fn is_fully_numeric(&self) -> bool {
        self.columns.iter().all(|c| c.kind() == ColumnKind::Numeric)
    }

    pub fn missing_cells(&self) -> usize {
        self.columns.iter().map(|c| c.data.missing_count()).sum()
    }

    /// Dense copies of all columns; fails on categorical or missing cells.
    pub fn numeric_columns(&self) -> Result<Vec<Vec<f64>>, TableError> {
        self.columns.iter().map(dense_values).collect()
    }

    /// Dense copy of one column.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>, TableError> {
        let c = self
            .column(name)
            .ok_or_else(|| TableError::UnknownColumn(name.into()))?;
        dense_values(c)
    }
}

fn dense_values(c: &Column) -> Result<Vec<f64>, TableError> {
    match &c.data {
        ColumnData::Categorical(_) => Err(TableError::NotNumeric(c.name.clone())),
        ColumnData::Numeric(v) => {
            let missing = v.iter().filter(|x| x.is_none()).count();
            if missing > 0 {
                return Err(TableError::HasMissing {
                    name: c.name.clone(),
                    missing,
                });
            }
            Ok(v.iter().map(|x| x.unwrap_or_default()).collect())
        }
    }
}
