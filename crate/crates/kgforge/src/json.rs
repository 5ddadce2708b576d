//! Canonical JSON documents.

use kgforge_core::kg::{Edge, KnowledgeGraph};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonError {
    #[error("edge {a} -> {b} has a non-finite value, which JSON cannot carry")]
    NonFinite { a: String, b: String },
    #[error("invalid JSON at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Serialize(#[from] serde_json::Error),
}

/// Compact JSON with object keys in byte order.
///
/// Values pass through [`serde_json::Value`], whose map is ordered, so
/// the output depends only on the value.
pub fn canonical<T: Serialize>(value: &T) -> Result<String, JsonError> {
    Ok(serde_json::to_string(&serde_json::to_value(value)?)?)
}

/// Deserializes with the failing field path in the error.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, JsonError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| JsonError::Parse {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

/// Canonical graph document: `{"edges":[..],"nodes":[..],"provenance":{..}}`
/// with nodes and edges in canonical order.
pub fn to_json(graph: &KnowledgeGraph) -> Result<String, JsonError> {
    let mut g = graph.clone();
    g.canonicalize();
    for e in &g.edges {
        let finite = match e {
            Edge::Correlation { weight, .. } => weight.is_finite(),
            Edge::Causal {
                weight, p_value, ..
            } => weight.is_finite() && p_value.is_finite(),
        };
        if !finite {
            let (a, b) = e.endpoints();
            return Err(JsonError::NonFinite {
                a: a.into(),
                b: b.into(),
            });
        }
    }
    canonical(&g)
}

pub fn from_json(text: &str) -> Result<KnowledgeGraph, JsonError> {
    parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgforge_core::correlation::CorrelationMethod;
    use kgforge_core::kg::{Node, Provenance};

    fn graph() -> KnowledgeGraph {
        KnowledgeGraph {
            nodes: vec![
                Node {
                    id: "b".into(),
                    label: "B".into(),
                    attrs: Default::default(),
                },
                Node {
                    id: "a".into(),
                    label: "A".into(),
                    attrs: Default::default(),
                },
            ],
            edges: vec![
                Edge::causal("b", "a", 3.25, 2, 0.1 + 0.2),
                Edge::correlation("b", "a", -0.7, CorrelationMethod::Pearson),
            ],
            provenance: Provenance {
                dataset: "sha256:ab".into(),
                created_at: "2024-05-01T00:00:00.000Z".into(),
                ..Default::default()
            },
        }
    }

    #[test]
    fn empty_graph_shape() {
        let text = to_json(&KnowledgeGraph::default()).unwrap();
        assert!(
            text.starts_with(r#"{"edges":[],"nodes":[],"provenance":{"#),
            "{text}"
        );
    }

    #[test]
    fn deterministic_and_round_trips() {
        let g = graph();
        let a = to_json(&g).unwrap();
        assert_eq!(a, to_json(&g).unwrap());
        let back = from_json(&a).unwrap();
        let mut expected = g.clone();
        expected.canonicalize();
        assert_eq!(back, expected);
        assert_eq!(to_json(&back).unwrap(), a);
        // nodes come out sorted by id
        assert!(a.find(r#""id":"a""#).unwrap() < a.find(r#""id":"b""#).unwrap());
    }

    #[test]
    fn rejects_non_finite() {
        let mut g = graph();
        g.edges.push(Edge::causal("a", "b", f64::INFINITY, 1, 0.0));
        assert!(matches!(to_json(&g), Err(JsonError::NonFinite { .. })));
    }

    #[test]
    fn parse_errors_name_the_field() {
        let e = parse::<kgforge_core::DiscoveryConfig>(r#"{"alpha":"x"}"#).unwrap_err();
        assert!(e.to_string().contains("alpha"), "{e}");
        let e = parse::<kgforge_core::DiscoveryConfig>(r#"{"alpah":0.1}"#).unwrap_err();
        assert!(e.to_string().contains("alpah"), "{e}");
    }
}
