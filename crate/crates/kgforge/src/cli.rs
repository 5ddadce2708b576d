//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fmt::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use kgforge_core::correlation::CorrelationMethod;
use kgforge_core::granger::{
    describe, Conditioning, DfConvention, DiscoveryConfig, LagPolicy, MultipleTesting,
};
use kgforge_core::preprocess::{Encoding, Imputation, PreprocessConfig};
use kgforge_core::synth::{builtin_spec, generate, planted_edges, ProcessSpec, BUILTIN_SPECS};
use kgforge_core::var::InformationCriterion;
use serde::de::DeserializeOwned;

use crate::csv_io::{write_csv, CsvOptions, DEFAULT_INDEX};
use crate::json::{canonical, to_json};
use crate::pipeline::{self, Dataset, GraphRequest};
use crate::server::{self, ServerConfig, DEFAULT_MAX_BODY_BYTES, DEFAULT_PORT};
use crate::turtle::{to_turtle, DEFAULT_BASE_IRI};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "kgforge",
    version,
    about = "Knowledge graphs from multivariate time series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a CSV file and report its columns.
    Ingest(IngestArgs),
    /// Pairwise correlation matrix.
    Correlate(CorrelateArgs),
    /// Granger-causality discovery over all column pairs.
    Granger(GrangerArgs),
    /// Build the knowledge graph.
    Graph(GraphArgs),
    /// Generate a synthetic dataset with planted relations.
    Synth(SynthArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file.
    pub file: PathBuf,
    /// Field delimiter.
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// Index column; pass an empty string to number the rows.
    #[arg(long, default_value = DEFAULT_INDEX)]
    pub index_column: String,
    /// Columns to read as categorical even if numeric.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the result here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Machine-readable JSON output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// mean, median, forward_fill, linear_interpolation or drop_rows.
    #[arg(long, value_parser = serde_value::<Imputation>, default_value = "linear_interpolation")]
    pub impute: Imputation,
    /// ordinal or one_hot.
    #[arg(long, value_parser = serde_value::<Encoding>, default_value = "ordinal")]
    pub encode: Encoding,
    /// Restrict the analysis to these columns.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
}

impl PreprocessArgs {
    fn config(&self) -> PreprocessConfig {
        PreprocessConfig {
            imputation: self.impute,
            encoding: self.encode,
            selected_columns: self.columns.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub prep: PreprocessArgs,
    /// pearson, spearman or euclidean.
    #[arg(long, value_parser = serde_value::<CorrelationMethod>, default_value = "pearson")]
    pub method: CorrelationMethod,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DiscoveryArgs {
    /// Largest lag span to consider.
    #[arg(long)]
    pub p_max: Option<usize>,
    /// fixed:N, aic, bic or scan_best.
    #[arg(long, value_parser = parse_lag_policy, default_value = "scan_best")]
    pub lag_policy: LagPolicy,
    /// none or benjamini_hochberg.
    #[arg(long, value_parser = serde_value::<MultipleTesting>, default_value = "none")]
    pub multiple_testing: MultipleTesting,
    /// pairwise or full.
    #[arg(long, value_parser = serde_value::<Conditioning>, default_value = "pairwise")]
    pub conditioning: Conditioning,
    /// paper or classical.
    #[arg(long, value_parser = serde_value::<DfConvention>, default_value = "paper")]
    pub df_convention: DfConvention,
    /// Skip the stationarity check and differencing.
    #[arg(long)]
    pub no_stationarity: bool,
    /// Do not test a variable's own lags.
    #[arg(long)]
    pub no_self_loops: bool,
}

impl DiscoveryArgs {
    fn config(&self, alpha: f64) -> DiscoveryConfig {
        DiscoveryConfig {
            alpha,
            p_max: self.p_max,
            lag_policy: self.lag_policy,
            multiple_testing: self.multiple_testing,
            auto_stationarity: !self.no_stationarity,
            conditioning: self.conditioning,
            df_convention: self.df_convention,
            include_self: !self.no_self_loops,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GrangerArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub prep: PreprocessArgs,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub discovery: DiscoveryArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Ttl,
    Json,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub prep: PreprocessArgs,
    /// Minimum |score| for a correlation edge.
    #[arg(long, default_value_t = 0.5)]
    pub corr_threshold: f64,
    /// Significance level for causal edges.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Correlation method for undirected edges.
    #[arg(long, value_parser = serde_value::<CorrelationMethod>, default_value = "pearson")]
    pub method: CorrelationMethod,
    #[command(flatten)]
    pub discovery: DiscoveryArgs,
    #[arg(long, value_enum, default_value = "ttl")]
    pub format: GraphFormat,
    /// Base IRI for Turtle subjects; must end in `/` or `#`.
    #[arg(long, default_value = DEFAULT_BASE_IRI)]
    pub base_iri: String,
    /// Fixed provenance timestamp (RFC 3339) for reproducible output.
    #[arg(long)]
    pub created_at: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `builtin:NAME` or a JSON process specification file.
    #[arg(long)]
    pub spec: String,
    /// Random seed; overrides the seed in a specification file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of rows; overrides the specification.
    #[arg(long)]
    pub t: Option<usize>,
    /// CSV destination; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth destination; defaults to `<out>.truth.json` next to the CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Listen port (KGF_PORT overrides).
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    /// Idle lifetime of a session in seconds (KGF_SESSION_TTL_SECONDS overrides).
    #[arg(long, default_value_t = 3600)]
    pub session_ttl: u64,
    /// Largest accepted request body (KGF_MAX_BODY_BYTES overrides).
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    pub max_body_bytes: usize,
    /// Built UI bundle to serve at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

/// Parses a snake_case enum value through its serde representation.
fn serde_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

pub fn parse_lag_policy(s: &str) -> Result<LagPolicy, String> {
    match s {
        "aic" => Ok(LagPolicy::InformationCriterion(InformationCriterion::Aic)),
        "bic" => Ok(LagPolicy::InformationCriterion(InformationCriterion::Bic)),
        "scan_best" => Ok(LagPolicy::ScanBest),
        _ => s
            .strip_prefix("fixed:")
            .and_then(|n| n.parse().ok())
            .filter(|&n: &usize| n > 0)
            .map(LagPolicy::Fixed)
            .ok_or_else(|| format!("expected fixed:N (N >= 1), aic, bic or scan_best, got `{s}`")),
    }
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Data(e)
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Correlate(a) => correlate(&a),
        Command::Granger(a) => granger(&a),
        Command::Graph(a) => graph(&a),
        Command::Synth(a) => synth(&a),
        Command::Serve(a) => serve(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(input: &InputArgs) -> Result<Dataset, Failure> {
    let delimiter = u8::try_from(input.delimiter)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| Failure::Usage("--delimiter must be one ASCII character".into()))?;
    let options = CsvOptions {
        delimiter,
        index_column: Some(input.index_column.clone()).filter(|s| !s.is_empty()),
        categorical: input.categorical.clone(),
    };
    let bytes = std::fs::read(&input.file)
        .with_context(|| format!("cannot read {}", input.file.display()))?;
    Dataset::load(&bytes, &options)
        .with_context(|| format!("{}", input.file.display()))
        .map_err(Failure::Data)
}

fn prepare(input: &InputArgs, prep: &PreprocessArgs) -> Result<Dataset, Failure> {
    let mut d = load(input)?;
    d.preprocess(prep.config())
        .map_err(|e| Failure::Data(e.into()))?;
    Ok(d)
}

fn data<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Data(e.into()))
}

fn ingest(a: &IngestArgs) -> Outcome {
    let report = load(&a.input)?.report();
    let text = if a.output.json {
        data(canonical(&report))? + "\n"
    } else {
        let mut s = format!(
            "dataset {}\nrows {}\nindex {:?}\n",
            report.dataset, report.rows, report.index_kind
        );
        for c in &report.columns {
            let _ = writeln!(s, "{}\t{:?}\t{} missing", c.name, c.kind, c.missing_count);
        }
        s
    };
    Ok(emit(a.output.out.as_deref(), &text)?)
}

fn correlate(a: &CorrelateArgs) -> Outcome {
    let d = prepare(&a.input, &a.prep)?;
    let m = data(pipeline::correlate(d.prepared.as_ref().unwrap(), a.method))?;
    let text = if a.output.json {
        data(canonical(&m))? + "\n"
    } else {
        let mut s = format!("{}\t{}\n", a.method.as_str(), m.names.join("\t"));
        for (name, row) in m.names.iter().zip(&m.scores) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(s, "{name}\t{}", cells.join("\t"));
        }
        for n in &m.degenerate {
            let _ = writeln!(s, "# {n} has zero variance");
        }
        s
    };
    Ok(emit(a.output.out.as_deref(), &text)?)
}

fn check<T>(r: Result<T, Vec<kgforge_core::granger::ConfigIssue>>) -> Result<T, Failure> {
    r.map_err(|issues| {
        Failure::Usage(
            issues
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        )
    })
}

fn granger(a: &GrangerArgs) -> Outcome {
    let config = a.discovery.config(a.alpha);
    check(config.validate())?;
    let d = prepare(&a.input, &a.prep)?;
    let result = data(pipeline::granger(d.prepared.as_ref().unwrap(), &config))?;
    let text = if a.output.json {
        data(canonical(&result))? + "\n"
    } else {
        let i = &result.integration;
        let mut s = format!(
            "differenced {} time(s); extra-lag guard {}; p_max {}\n",
            i.common_order,
            if i.extra_lag_guard { "on" } else { "off" },
            result.p_max
        );
        for r in &result.results {
            let _ = writeln!(s, "{}", describe(r));
        }
        for f in &result.failures {
            let _ = writeln!(s, "{} -> {}: {}", f.source, f.target, f.error);
        }
        s
    };
    Ok(emit(a.output.out.as_deref(), &text)?)
}

fn graph(a: &GraphArgs) -> Outcome {
    let request = GraphRequest {
        corr_threshold: a.corr_threshold,
        alpha: a.alpha,
        method: a.method,
        discovery: a.discovery.config(a.alpha),
        created_at: a.created_at.clone(),
    };
    check(request.validate())?;
    let format = if a.output.json {
        GraphFormat::Json
    } else {
        a.format
    };
    if format == GraphFormat::Ttl {
        crate::turtle::validate_base(&a.base_iri).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let d = prepare(&a.input, &a.prep)?;
    let g = data(pipeline::graph(&d, d.prepared.as_ref().unwrap(), &request))?;
    let text = match format {
        GraphFormat::Json => data(to_json(&g))?,
        GraphFormat::Ttl => data(to_turtle(&g, &a.base_iri))?,
    };
    Ok(emit(a.output.out.as_deref(), &text)?)
}

/// `data.csv` -> `data.truth.json`.
pub fn truth_path(csv: &Path) -> PathBuf {
    csv.with_extension("truth.json")
}

fn synth(a: &SynthArgs) -> Outcome {
    let mut spec: ProcessSpec = match a.spec.strip_prefix("builtin:") {
        Some(name) => builtin_spec(name, a.seed.unwrap_or(0)).ok_or_else(|| {
            Failure::Usage(format!(
                "unknown builtin `{name}`; available: {}",
                BUILTIN_SPECS.join(", ")
            ))
        })?,
        None => {
            let text = std::fs::read_to_string(&a.spec)
                .with_context(|| format!("cannot read {}", a.spec))?;
            data(crate::json::parse(&text).with_context(|| a.spec.clone()))?
        }
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(t) = a.t {
        spec.t = t;
    }
    let table = data(generate(&spec))?;
    let csv = data(write_csv(&table, DEFAULT_INDEX))?;
    emit(a.out.as_deref(), &csv)?;
    let truth = a.truth.clone().or_else(|| a.out.as_deref().map(truth_path));
    if let Some(p) = truth {
        let doc = serde_json::json!({ "spec": spec, "planted": planted_edges(&spec) });
        emit(Some(&p), &(data(canonical(&doc))? + "\n"))?;
    }
    Ok(())
}

fn env_override<T: std::str::FromStr>(name: &str, flag: T) -> Result<T, Failure> {
    match std::env::var(name) {
        Ok(v) => v
            .parse()
            .map_err(|_| Failure::Usage(format!("{name}=`{v}` is not valid"))),
        Err(_) => Ok(flag),
    }
}

fn serve(a: &ServeArgs) -> Outcome {
    let port = env_override("KGF_PORT", a.port)?;
    let ttl = env_override("KGF_SESSION_TTL_SECONDS", a.session_ttl)?;
    let max_body_bytes = env_override("KGF_MAX_BODY_BYTES", a.max_body_bytes)?;
    if ttl == 0 {
        return Err(Failure::Usage("session TTL must be positive".into()));
    }
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let config = ServerConfig {
        session_ttl: Duration::from_secs(ttl),
        max_body_bytes,
        ui_dir: a.ui_dir.clone(),
    };
    let rt = tokio::runtime::Runtime::new().context("cannot start runtime")?;
    rt.block_on(server::serve(SocketAddr::new(a.host, port), config))
        .context("server failed")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_policy_values() {
        assert_eq!(parse_lag_policy("fixed:3"), Ok(LagPolicy::Fixed(3)));
        assert_eq!(
            parse_lag_policy("bic"),
            Ok(LagPolicy::InformationCriterion(InformationCriterion::Bic))
        );
        assert!(parse_lag_policy("fixed:0").is_err());
        assert!(parse_lag_policy("best").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["kgforge"]), EXIT_USAGE);
        assert_eq!(run(["kgforge", "correlate"]), EXIT_USAGE);
        assert_eq!(
            run(["kgforge", "correlate", "x.csv", "--method", "kendall"]),
            EXIT_USAGE
        );
        assert_eq!(
            run(["kgforge", "granger", "x.csv", "--alpha", "3"]),
            EXIT_USAGE
        );
        assert_eq!(
            run(["kgforge", "synth", "--spec", "builtin:nope"]),
            EXIT_USAGE
        );
        assert_eq!(run(["kgforge", "--version"]), EXIT_OK);
    }

    #[test]
    fn truth_path_replaces_extension() {
        assert_eq!(
            truth_path(Path::new("/t/d.csv")),
            PathBuf::from("/t/d.truth.json")
        );
    }
}
