//! The analysis steps shared by the CLI and the HTTP service.
//!
//! Both front ends call these functions and serialize their results with
//! [`crate::json::canonical`], so equal inputs give byte-equal documents.

use std::collections::BTreeMap;

use chrono::{SecondsFormat, Utc};
use kgforge_core::correlation::{
    correlation_matrix, CorrelationError, CorrelationMatrix, CorrelationMethod,
};
use kgforge_core::granger::{discover, ConfigIssue, Discovery, DiscoveryConfig, GrangerError};
use kgforge_core::kg::{build_graph, GraphError, KnowledgeGraph, Provenance};
use kgforge_core::preprocess::{preprocess, PreprocessConfig, PreprocessError, PreprocessReport};
use kgforge_core::table::{ColumnKind, IndexKind, TimeSeriesTable};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csv_io::{parse_csv, CsvError, CsvOptions};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("invalid configuration: {}", join_issues(.0))]
    InvalidConfig(Vec<ConfigIssue>),
    #[error("preprocessing failed: {0}")]
    Preprocess(#[from] PreprocessError),
    #[error("correlation failed: {0}")]
    Correlation(#[from] CorrelationError),
    #[error("causality discovery failed: {0}")]
    Granger(GrangerError),
    #[error("graph assembly failed: {0}")]
    Graph(#[from] GraphError),
}

impl From<GrangerError> for PipelineError {
    fn from(e: GrangerError) -> Self {
        match e {
            GrangerError::InvalidConfig(issues) => Self::InvalidConfig(issues),
            e => Self::Granger(e),
        }
    }
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Content address of an uploaded file.
pub fn dataset_id(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// Current UTC time as RFC 3339 with milliseconds.
pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    pub missing_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: String,
    pub rows: usize,
    pub index_kind: IndexKind,
    pub columns: Vec<ColumnSummary>,
}

/// A parsed upload and, once requested, its preprocessed form.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub id: String,
    pub raw: TimeSeriesTable,
    pub prepared: Option<Prepared>,
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub table: TimeSeriesTable,
    pub config: PreprocessConfig,
    pub report: PreprocessReport,
}

impl Dataset {
    pub fn load(bytes: &[u8], options: &CsvOptions) -> Result<Self, PipelineError> {
        Ok(Self {
            id: dataset_id(bytes),
            raw: parse_csv(bytes, options)?,
            prepared: None,
        })
    }

    pub fn report(&self) -> IngestReport {
        IngestReport {
            dataset: self.id.clone(),
            rows: self.raw.len(),
            index_kind: self.raw.index_kind(),
            columns: self
                .raw
                .columns()
                .iter()
                .map(|c| ColumnSummary {
                    name: c.name.clone(),
                    kind: c.kind(),
                    missing_count: c.data.missing_count(),
                })
                .collect(),
        }
    }

    /// Replaces any earlier preprocessed snapshot.
    pub fn preprocess(
        &mut self,
        config: PreprocessConfig,
    ) -> Result<&PreprocessReport, PipelineError> {
        let (table, report) = preprocess(&self.raw, &config)?;
        let prepared = self.prepared.insert(Prepared {
            table,
            config,
            report,
        });
        Ok(&prepared.report)
    }
}

pub fn correlate(
    prepared: &Prepared,
    method: CorrelationMethod,
) -> Result<CorrelationMatrix, PipelineError> {
    Ok(correlation_matrix(&prepared.table, method)?)
}

pub fn granger(prepared: &Prepared, config: &DiscoveryConfig) -> Result<Discovery, PipelineError> {
    Ok(discover(&prepared.table, config)?)
}

/// Settings for one graph build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphRequest {
    pub corr_threshold: f64,
    /// Significance level for causal edges; overrides `discovery.alpha`.
    pub alpha: f64,
    pub method: CorrelationMethod,
    pub discovery: DiscoveryConfig,
    /// Pins the provenance timestamp; the current time otherwise.
    pub created_at: Option<String>,
}

impl Default for GraphRequest {
    fn default() -> Self {
        Self {
            corr_threshold: 0.5,
            alpha: 0.05,
            method: CorrelationMethod::Pearson,
            discovery: DiscoveryConfig::default(),
            created_at: None,
        }
    }
}

impl GraphRequest {
    pub fn validate(&self) -> Result<(), Vec<ConfigIssue>> {
        let mut issues = Vec::new();
        if !(self.corr_threshold.is_finite() && self.corr_threshold >= 0.0) {
            issues.push(ConfigIssue::new(
                "corr_threshold",
                "must be a finite number >= 0",
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            issues.push(ConfigIssue::new(
                "alpha",
                "must lie strictly between 0 and 1",
            ));
        }
        if let Some(t) = &self.created_at {
            if chrono::DateTime::parse_from_rfc3339(t).is_err() {
                issues.push(ConfigIssue::new(
                    "created_at",
                    "must be an RFC 3339 timestamp",
                ));
            }
        }
        if let Err(more) = self.discovery_config().validate() {
            issues.extend(
                more.into_iter()
                    .filter(|i| i.field != "alpha")
                    .map(|i| ConfigIssue {
                        field: format!("discovery.{}", i.field),
                        message: i.message,
                    }),
            );
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    pub fn discovery_config(&self) -> DiscoveryConfig {
        DiscoveryConfig {
            alpha: self.alpha,
            ..self.discovery.clone()
        }
    }
}

/// Flattens a serializable value into dotted keys with scalar leaves.
/// Strings appear bare, everything else as JSON text.
pub fn flatten_config<T: Serialize>(prefix: &str, value: &T, out: &mut BTreeMap<String, String>) {
    fn walk(key: String, v: serde_json::Value, out: &mut BTreeMap<String, String>) {
        let join = |k: &str| {
            if key.is_empty() {
                k.to_string()
            } else {
                format!("{key}.{k}")
            }
        };
        match v {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    walk(join(&k), v, out);
                }
            }
            serde_json::Value::String(s) => {
                out.insert(key, s);
            }
            other => {
                out.insert(key, other.to_string());
            }
        }
    }
    if let Ok(v) = serde_json::to_value(value) {
        walk(prefix.to_string(), v, out);
    }
}

/// Correlation, discovery and assembly on a preprocessed dataset.
pub fn graph(
    dataset: &Dataset,
    prepared: &Prepared,
    request: &GraphRequest,
) -> Result<KnowledgeGraph, PipelineError> {
    request.validate().map_err(PipelineError::InvalidConfig)?;
    let matrix = correlation_matrix(&prepared.table, request.method)?;
    let discovery = discover(&prepared.table, &request.discovery_config())?;
    let mut config = BTreeMap::new();
    flatten_config("preprocess", &prepared.config, &mut config);
    let mut req = request.clone();
    req.discovery.alpha = req.alpha;
    req.created_at = None;
    flatten_config("", &req, &mut config);
    let provenance = Provenance {
        dataset: dataset.id.clone(),
        created_at: request.created_at.clone().unwrap_or_else(now),
        config,
        integration: Some(discovery.integration),
        query: None,
    };
    Ok(build_graph(
        &matrix,
        &discovery.results,
        request.corr_threshold,
        request.alpha,
        provenance,
    )?)
}
