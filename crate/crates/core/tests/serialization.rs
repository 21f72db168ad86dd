use std::sync::Arc;

use proptest::prelude::*;

use setdyn::continuation::{linspace, sweep, Thresholds};
use setdyn::geometry::{BoxCover, WorkingDomain};
use setdyn::graph::{build_graph, NodeSet, TransitionGraph};
use setdyn::io::{parse_document, render_documents, to_json, Document, DualOutput};
use setdyn::minimal::{refine_to_depth, MinimalConfig};
use setdyn::models::{ModelSpec, SaturatingMap};

fn odd_domain() -> Arc<WorkingDomain> {
    // bounds that are not dyadic, so the float fields matter
    Arc::new(WorkingDomain::interval(-1.0 / 3.0, 0.7).unwrap())
}

fn cover(depth: u32) -> impl Strategy<Value = BoxCover> {
    let n = 1u32 << depth;
    proptest::collection::vec(0..n, 1..30).prop_map(move |b| BoxCover::from_flat(odd_domain(), depth, b).unwrap())
}

fn same_text<T: serde::Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug>(x: &T) {
    let text = to_json(x).unwrap();
    let back: T = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, x);
    assert_eq!(to_json(&back).unwrap(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn covers_round_trip(c in (1u32..10).prop_flat_map(cover)) {
        let text = to_json(&c).unwrap();
        let back: BoxCover = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.domain().lo[0].to_bits(), c.domain().lo[0].to_bits());
        prop_assert_eq!(parse_document(&text).unwrap(), Document::Cover(c));
    }

    #[test]
    fn graphs_round_trip(n in 1usize..30, rows in proptest::collection::vec(proptest::collection::vec(0u32..30, 0..5), 30), keep in proptest::collection::vec(any::<bool>(), 30)) {
        let cover = BoxCover::from_flat(odd_domain(), 5, (0..n as u32).collect()).unwrap();
        let adjacency = rows[..n].iter().map(|r| r.iter().map(|&w| w % n as u32).collect()).collect();
        let g = TransitionGraph::from_adjacency(cover, adjacency).unwrap();
        let nodes: NodeSet = (0..n as u32).filter(|&i| keep[i as usize] || i == 0).collect();
        let (sub, _) = g.induced(&nodes).unwrap();
        for graph in [g, sub.clone(), sub.dual()] {
            let text = to_json(&graph).unwrap();
            prop_assert_eq!(serde_json::from_str::<TransitionGraph>(&text).unwrap(), graph.clone());
            prop_assert_eq!(parse_document(&text).unwrap(), Document::Graph(Box::new(graph)));
        }
    }

    #[test]
    fn node_sets_round_trip(v in proptest::collection::vec(0u32..1000, 0..50)) {
        same_text(&NodeSet::new(v));
    }
}

fn saturating_spec() -> ModelSpec {
    ModelSpec::new("saturating").set("eps", 0.1)
}

#[test]
fn approximations_round_trip() {
    let domain = Arc::new(WorkingDomain::interval(-4.0, 4.0).unwrap());
    let map = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
    let cfg = MinimalConfig { start_depth: 4, ..Default::default() };
    let sets = refine_to_depth(&map, domain, &cfg, 8).unwrap();
    same_text(&sets);
    let text = to_json(&sets).unwrap();
    assert_eq!(parse_document(&text).unwrap(), Document::Approximations(sets.clone()));
    let dual =
        DualOutput { minimal: sets[0].clone(), dual_set: Some(sets[1].cover.clone()), globally_attractive: false };
    same_text(&dual);
    assert!(matches!(parse_document(&to_json(&dual).unwrap()).unwrap(), Document::Dual(_)));
}

#[test]
fn reports_round_trip_and_render_identically() {
    let domain = Arc::new(WorkingDomain::interval(-4.0, 4.0).unwrap());
    let cfg = MinimalConfig { start_depth: 4, max_depth: 7, ..Default::default() };
    let report =
        sweep(&saturating_spec(), "alpha", &linspace(1.6, 1.9, 7), domain, &cfg, &Thresholds::default()).unwrap();
    same_text(&report);
    let text = to_json(&report).unwrap();
    let doc = parse_document(&text).unwrap();
    assert_eq!(doc, Document::Report(Box::new(report.clone())));
    // thresholds travel with the report
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["continuity", "explosion", "delta"] {
        assert!(v["thresholds"][key].is_number(), "{key}");
    }
    let svg = render_documents(&[doc.clone()]).unwrap();
    assert_eq!(svg, render_documents(&[parse_document(&text).unwrap()]).unwrap());
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
}

#[test]
fn graph_of_a_model_round_trips() {
    let map = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
    let full = BoxCover::full(Arc::new(WorkingDomain::interval(-4.0, 4.0).unwrap()), 7).unwrap();
    let g = build_graph(&map, &full).unwrap();
    same_text(&g);
    assert_eq!(TransitionGraph::from_edge_list(full, &g.to_edge_list()).unwrap(), g);
}
