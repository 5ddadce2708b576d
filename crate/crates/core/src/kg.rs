//! Knowledge graphs of process parameters.
//!
//! Nodes are table columns. Undirected correlation edges carry a
//! contemporaneous score; directed causal edges carry the lag span, the F
//! statistic and the p-value of a Granger test.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationMatrix, CorrelationMethod};
use crate::granger::GrangerResult;
use crate::stationarity::IntegrationReport;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Correlation,
    Causal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edge {
    /// Undirected; stored with `a <= b`.
    Correlation {
        a: String,
        b: String,
        weight: f64,
        method: CorrelationMethod,
    },
    /// `a` is the source, `b` the target. `a == b` is a self-loop.
    Causal {
        a: String,
        b: String,
        weight: f64,
        lag: u32,
        p_value: f64,
    },
}

impl Edge {
    pub fn correlation(a: &str, b: &str, weight: f64, method: CorrelationMethod) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        Edge::Correlation {
            a: a.into(),
            b: b.into(),
            weight,
            method,
        }
    }

    pub fn causal(source: &str, target: &str, f_statistic: f64, lag: u32, p_value: f64) -> Self {
        Edge::Causal {
            a: source.into(),
            b: target.into(),
            weight: f_statistic,
            lag,
            p_value,
        }
    }

    pub fn kind(&self) -> EdgeKind {
        match self {
            Edge::Correlation { .. } => EdgeKind::Correlation,
            Edge::Causal { .. } => EdgeKind::Causal,
        }
    }

    pub fn endpoints(&self) -> (&str, &str) {
        match self {
            Edge::Correlation { a, b, .. } | Edge::Causal { a, b, .. } => (a, b),
        }
    }

    pub fn weight(&self) -> f64 {
        match self {
            Edge::Correlation { weight, .. } | Edge::Causal { weight, .. } => *weight,
        }
    }

    pub fn lag(&self) -> Option<u32> {
        match self {
            Edge::Causal { lag, .. } => Some(*lag),
            Edge::Correlation { .. } => None,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            Edge::Causal { p_value, .. } => Some(*p_value),
            Edge::Correlation { .. } => None,
        }
    }

    pub fn method(&self) -> Option<CorrelationMethod> {
        match self {
            Edge::Correlation { method, .. } => Some(*method),
            Edge::Causal { .. } => None,
        }
    }

    /// Identity of an edge: kind, endpoints, lag and method.
    pub fn key(&self) -> (EdgeKind, &str, &str, u32, Option<CorrelationMethod>) {
        let (a, b) = self.endpoints();
        (self.kind(), a, b, self.lag().unwrap_or(0), self.method())
    }
}

/// Where a graph came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    /// RFC 3339 timestamp.
    pub created_at: String,
    /// Flattened settings that produced the graph.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    #[serde(default)]
    pub integration: Option<IntegrationReport>,
    /// Set on graphs produced by [`filter`].
    #[serde(default)]
    pub query: Option<GraphQuery>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("column `{0}` is not part of the correlation matrix")]
    UniverseMismatch(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("edge endpoint `{0}` does not resolve to a node")]
    DanglingEdge(String),
    #[error("duplicate edge between `{0}` and `{1}`")]
    DuplicateEdge(String, String),
    #[error("correlation weight {0} outside [-1, 1]")]
    WeightOutOfRange(f64),
    #[error("causal lag must be at least 1")]
    ZeroLag,
    #[error("unknown node id `{0}` in query")]
    UnknownNode(String),
    #[error("query has no criteria")]
    EmptyQuery,
}

/// Lowercases, collapses runs of non-alphanumerics to `_` and trims them
/// from the ends. Empty results become `node`.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    let mut pending = false;
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() {
            if pending && !out.is_empty() {
                out.push('_');
            }
            pending = false;
            out.push(ch.to_ascii_lowercase());
        } else {
            pending = true;
        }
    }
    if out.is_empty() {
        out.push_str("node");
    }
    out
}

/// Assigns unique slugs to labels, suffixing `_2`, `_3`, ... on collisions.
pub fn assign_ids(labels: &[String]) -> Vec<String> {
    let mut used = BTreeSet::new();
    labels
        .iter()
        .map(|l| {
            let base = slug(l);
            let mut id = base.clone();
            let mut n = 2;
            while used.contains(&id) {
                id = format!("{base}_{n}");
                n += 1;
            }
            used.insert(id.clone());
            id
        })
        .collect()
}

impl KnowledgeGraph {
    /// Sorts nodes and edges into canonical order.
    pub fn canonicalize(&mut self) {
        self.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        self.edges.sort_by(edge_order);
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Id of the node labelled `label`.
    pub fn id_of(&self, label: &str) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.label == label)
            .map(|n| n.id.as_str())
    }

    pub fn edges_of_kind(&self, kind: EdgeKind) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.kind() == kind)
    }

    /// Checks node/edge invariants.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        let mut keys = BTreeSet::new();
        for e in &self.edges {
            let (a, b) = e.endpoints();
            for end in [a, b] {
                if !ids.contains(end) {
                    return Err(GraphError::DanglingEdge(end.into()));
                }
            }
            match e {
                Edge::Correlation { weight, .. } if !(weight.abs() <= 1.0) => {
                    return Err(GraphError::WeightOutOfRange(*weight));
                }
                Edge::Causal { lag: 0, .. } => return Err(GraphError::ZeroLag),
                _ => {}
            }
            let (kind, a, b, lag, method) = e.key();
            if !keys.insert((kind, String::from(a), String::from(b), lag, method)) {
                return Err(GraphError::DuplicateEdge(a.into(), b.into()));
            }
        }
        Ok(())
    }
}

fn edge_order(x: &Edge, y: &Edge) -> core::cmp::Ordering {
    x.key().cmp(&y.key())
}

/// Merges correlation and causality findings into one graph.
///
/// Correlation edges: every off-diagonal pair with `|score| >= corr_threshold`
/// whose columns are not degenerate. Causal edges: every result with
/// `p_value < alpha`.
pub fn build_graph(
    matrix: &CorrelationMatrix,
    causal: &[GrangerResult],
    corr_threshold: f64,
    alpha: f64,
    provenance: Provenance,
) -> Result<KnowledgeGraph, GraphError> {
    let ids = assign_ids(&matrix.names);
    let id_of: BTreeMap<&str, &str> = matrix
        .names
        .iter()
        .map(String::as_str)
        .zip(ids.iter().map(String::as_str))
        .collect();
    let lookup = |name: &str| {
        id_of
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UniverseMismatch(name.into()))
    };
    for r in causal {
        lookup(&r.source)?;
        lookup(&r.target)?;
    }

    let nodes = matrix
        .names
        .iter()
        .zip(&ids)
        .map(|(label, id)| {
            let mut attrs = BTreeMap::new();
            if matrix.is_degenerate(label) {
                attrs.insert("degenerate".into(), "true".into());
            }
            Node {
                id: id.clone(),
                label: label.clone(),
                attrs,
            }
        })
        .collect();

    let mut edges = Vec::new();
    let n = matrix.names.len();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&matrix.names[i], &matrix.names[j]);
            if matrix.is_degenerate(a) || matrix.is_degenerate(b) {
                continue;
            }
            let s = matrix.scores[i][j];
            if s.abs() >= corr_threshold {
                edges.push(Edge::correlation(&ids[i], &ids[j], s, matrix.method));
            }
        }
    }
    for r in causal {
        if r.p_value < alpha {
            edges.push(Edge::causal(
                lookup(&r.source)?,
                lookup(&r.target)?,
                r.f_statistic,
                r.p as u32,
                r.p_value,
            ));
        }
    }
    let mut g = KnowledgeGraph {
        nodes,
        edges,
        provenance,
    };
    g.canonicalize();
    g.validate()?;
    Ok(g)
}

/// Sub-graph selection criteria. Every present criterion must hold.
///
/// `max_p_value` and `lag_range` only constrain causal edges; correlation
/// edges carry neither attribute and are not filtered by them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphQuery {
    pub kinds: Option<Vec<EdgeKind>>,
    pub min_abs_weight: Option<f64>,
    pub max_p_value: Option<f64>,
    pub lag_range: Option<(u32, u32)>,
    pub nodes: Option<Vec<String>>,
    pub neighborhood_radius: Option<usize>,
}

impl GraphQuery {
    pub fn is_empty(&self) -> bool {
        self.kinds.is_none()
            && self.min_abs_weight.is_none()
            && self.max_p_value.is_none()
            && self.lag_range.is_none()
            && self.nodes.is_none()
            && self.neighborhood_radius.is_none()
    }

    fn edge_passes(&self, e: &Edge) -> bool {
        if let Some(kinds) = &self.kinds {
            if !kinds.contains(&e.kind()) {
                return false;
            }
        }
        if let Some(min) = self.min_abs_weight {
            if !(e.weight().abs() >= min) {
                return false;
            }
        }
        if let (Some(max), Some(p)) = (self.max_p_value, e.p_value()) {
            if !(p <= max) {
                return false;
            }
        }
        if let (Some((lo, hi)), Some(lag)) = (self.lag_range, e.lag()) {
            if lag < lo || lag > hi {
                return false;
            }
        }
        true
    }
}

/// Applies `query` to `graph`.
///
/// With `nodes` alone, keeps edges between listed nodes. With a
/// `neighborhood_radius`, first walks that many hops (ignoring direction)
/// from the listed nodes over edges that pass the other criteria, then
/// keeps edges among the nodes reached.
pub fn filter(graph: &KnowledgeGraph, query: &GraphQuery) -> Result<KnowledgeGraph, GraphError> {
    if query.is_empty() {
        return Err(GraphError::EmptyQuery);
    }
    let listed: Option<BTreeSet<&str>> = match &query.nodes {
        Some(ids) => {
            for id in ids {
                if graph.node(id).is_none() {
                    return Err(GraphError::UnknownNode(id.clone()));
                }
            }
            Some(ids.iter().map(String::as_str).collect())
        }
        None => None,
    };
    let passing: Vec<&Edge> = graph
        .edges
        .iter()
        .filter(|e| query.edge_passes(e))
        .collect();

    let allowed: Option<BTreeSet<&str>> = listed.as_ref().map(|start| {
        let radius = query.neighborhood_radius.unwrap_or(0);
        let mut adjacency: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in &passing {
            let (a, b) = e.endpoints();
            adjacency.entry(a).or_default().insert(b);
            adjacency.entry(b).or_default().insert(a);
        }
        let mut reached: BTreeSet<&str> = start.clone();
        let mut queue: VecDeque<(&str, usize)> = start.iter().map(|s| (*s, 0)).collect();
        while let Some((node, depth)) = queue.pop_front() {
            if depth == radius {
                continue;
            }
            if let Some(next) = adjacency.get(node) {
                for &nb in next {
                    if reached.insert(nb) {
                        queue.push_back((nb, depth + 1));
                    }
                }
            }
        }
        reached
    });

    let edges: Vec<Edge> = passing
        .into_iter()
        .filter(|e| {
            let (a, b) = e.endpoints();
            allowed
                .as_ref()
                .is_none_or(|set| set.contains(a) && set.contains(b))
        })
        .cloned()
        .collect();
    let mut keep: BTreeSet<&str> = BTreeSet::new();
    for e in &edges {
        let (a, b) = e.endpoints();
        keep.insert(a);
        keep.insert(b);
    }
    if let Some(l) = &listed {
        keep.extend(l.iter().copied());
    }
    let nodes = graph
        .nodes
        .iter()
        .filter(|n| keep.contains(n.id.as_str()))
        .cloned()
        .collect();
    let mut provenance = graph.provenance.clone();
    provenance.query = Some(query.clone());
    let mut out = KnowledgeGraph {
        nodes,
        edges,
        provenance,
    };
    out.canonicalize();
    Ok(out)
}
