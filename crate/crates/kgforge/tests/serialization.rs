//! Round trips of random graphs through Turtle and JSON, with an external
//! Turtle parser checking every document.

use std::collections::{BTreeMap, BTreeSet};

use kgforge::json::{from_json, to_json};
use kgforge::turtle::{from_turtle, to_turtle, triples, Term, DEFAULT_BASE_IRI};
use kgforge_core::correlation::CorrelationMethod;
use kgforge_core::kg::{Edge, KnowledgeGraph, Node, Provenance};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z_][a-z0-9_]{0,8}",
        r#"[ -~]{0,12}"#,
        "\\PC{0,8}",
        Just("a\"b\\c\nd\re\tf".to_string()),
        Just("100% = x/y#z".to_string()),
    ]
}

fn weight() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1.0f64..=1.0,
        Just(0.0),
        Just(-0.0),
        Just(1.0),
        Just(f64::MIN_POSITIVE)
    ]
}

fn graph() -> impl Strategy<Value = KnowledgeGraph> {
    (
        prop::collection::btree_set("[a-z0-9 _%/#.-]{1,10}", 1..6),
        prop::collection::vec(text(), 6),
        prop::collection::vec(
            (
                any::<prop::sample::Index>(),
                any::<prop::sample::Index>(),
                0usize..4,
                weight(),
                1u32..12,
                0.0f64..1.0,
                1e-3f64..1e6,
            ),
            0..12,
        ),
        prop::collection::btree_map("[a-z.%=]{1,6}", text(), 0..4),
        text(),
        prop::collection::btree_map("[a-z]{1,4}", text(), 0..3),
    )
        .prop_map(|(ids, labels, raw_edges, config, dataset, attrs)| {
            let ids: Vec<String> = ids.into_iter().collect();
            let nodes: Vec<Node> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| Node {
                    id: id.clone(),
                    label: labels[i].clone(),
                    attrs: if i == 0 {
                        attrs.clone()
                    } else {
                        BTreeMap::new()
                    },
                })
                .collect();
            let mut seen = BTreeSet::new();
            let mut edges = Vec::new();
            for (a, b, kind, w, lag, p, f) in raw_edges {
                let (a, b) = (&ids[a.index(ids.len())], &ids[b.index(ids.len())]);
                let e = match kind {
                    0 => Edge::causal(a, b, f, lag, p),
                    k => {
                        if a == b {
                            continue;
                        }
                        Edge::correlation(a, b, w, CorrelationMethod::ALL[k - 1])
                    }
                };
                let (kind, a, b, lag, method) = e.key();
                if seen.insert((kind, a.to_string(), b.to_string(), lag, method)) {
                    edges.push(e);
                }
            }
            let mut g = KnowledgeGraph {
                nodes,
                edges,
                provenance: Provenance {
                    dataset,
                    created_at: "2024-02-29T12:34:56.789Z".into(),
                    config,
                    integration: None,
                    query: None,
                },
            };
            g.canonicalize();
            g
        })
}

/// Triples as seen by the external parser, converted to our term model.
fn external(text: &str) -> BTreeSet<(Term, String, Term)> {
    oxttl::TurtleParser::new()
        .for_slice(text.as_bytes())
        .map(|t| {
            let t = t.expect("external parser rejected output");
            let subject = match t.subject {
                oxrdf::NamedOrBlankNode::NamedNode(n) => Term::Iri(n.into_string()),
                oxrdf::NamedOrBlankNode::BlankNode(b) => Term::Blank(b.into_string()),
            };
            let object = match t.object {
                oxrdf::Term::NamedNode(n) => Term::Iri(n.into_string()),
                oxrdf::Term::BlankNode(b) => Term::Blank(b.into_string()),
                oxrdf::Term::Literal(l) => {
                    let (value, datatype, lang) = l.destruct();
                    let datatype = datatype
                        .map(|d| d.into_string())
                        .filter(|d| d != "http://www.w3.org/2001/XMLSchema#string");
                    Term::Literal {
                        value,
                        datatype,
                        lang,
                    }
                }
                #[allow(unreachable_patterns)]
                _ => panic!("unexpected term"),
            };
            (subject, t.predicate.into_string(), object)
        })
        .collect()
}

fn ours(g: &KnowledgeGraph, base: &str) -> BTreeSet<(Term, String, Term)> {
    triples(g, base)
        .unwrap()
        .into_iter()
        .map(|t| (t.subject, t.predicate, t.object))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn turtle_round_trips(g in graph()) {
        for base in [DEFAULT_BASE_IRI, "http://plant.example/kg#"] {
            let text = to_turtle(&g, base).unwrap();
            prop_assert_eq!(&from_turtle(&text).unwrap(), &g);
            prop_assert_eq!(external(&text), ours(&g, base));
        }
    }

    #[test]
    fn json_round_trips(g in graph()) {
        let text = to_json(&g).unwrap();
        prop_assert_eq!(&from_json(&text).unwrap(), &g);
        prop_assert_eq!(to_json(&from_json(&text).unwrap()).unwrap(), text);
    }
}
