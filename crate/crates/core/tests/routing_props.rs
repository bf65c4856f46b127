use std::collections::BTreeSet;

use evnav_core::graph::{build_graph, shortest_path_tree, Edge, GraphConfig, Position, RoadClass, VelocityField};
use evnav_core::oracle::bellman_ford;
use proptest::prelude::*;

type RawEdge = (usize, usize, f64, usize);

/// A spanning tree (both directions when directed) keeps every node reachable.
fn graph_config(nodes: usize, directed: bool, parents: Vec<usize>, raw: Vec<RawEdge>) -> GraphConfig {
    let mut tree = Vec::new();
    for (v, p) in parents.into_iter().enumerate().map(|(i, p)| (i + 1, p)) {
        tree.push((p % v, v, 1.0 + v as f64 % 7.0, v % 3));
        if directed {
            tree.push((v, p % v, 2.0 + v as f64 % 5.0, (v + 1) % 3));
        }
    }
    let mut keys = BTreeSet::new();
    let edges = tree
        .into_iter()
        .chain(raw)
        .map(|(a, b, len, class)| (a % nodes, b % nodes, len, class))
        .filter(|&(a, b, _, _)| a != b && keys.insert(if directed { (a, b) } else { (a.min(b), a.max(b)) }))
        .map(|(from, to, length_km, class)| Edge {
            from,
            to,
            length_km,
            class: RoadClass::ALL[class],
        })
        .collect();
    GraphConfig {
        nodes,
        edges,
        evcs_nodes: vec![0],
        directed,
    }
}

fn graphs() -> impl Strategy<Value = GraphConfig> {
    (2usize..=30, any::<bool>()).prop_flat_map(|(nodes, directed)| {
        (
            prop::collection::vec(any::<usize>(), nodes - 1),
            prop::collection::vec((0..nodes, 0..nodes, 0.1..20.0f64, 0usize..3), 0..=2 * nodes),
        )
            .prop_map(move |(parents, raw)| graph_config(nodes, directed, parents, raw))
    })
}

fn field_for(graph: &evnav_core::graph::TrafficGraph, speeds: &[f64]) -> VelocityField {
    let mut f = VelocityField::class_means(graph);
    for (e, s) in f.speeds.iter_mut().zip(speeds.iter().cycle()) {
        *e = *s;
    }
    f
}

proptest! {
    #[test]
    fn dijkstra_matches_bellman_ford(
        cfg in graphs(),
        speeds in prop::collection::vec(5.0..120.0f64, 1..20),
        start in any::<prop::sample::Index>(),
    ) {
        let graph = build_graph(&cfg).unwrap();
        let field = field_for(&graph, &speeds);
        let s = start.index(graph.node_count());
        let fast = shortest_path_tree(&graph, &field, Position::Node(s)).unwrap().dist;
        let slow = bellman_ford(&graph, &field, Position::Node(s));
        for (a, b) in fast.iter().zip(&slow) {
            if a.is_infinite() || b.is_infinite() {
                prop_assert_eq!(a, b);
            } else {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0));
            }
        }
    }

    #[test]
    fn routes_are_connected_and_priced_consistently(
        cfg in graphs(),
        speeds in prop::collection::vec(5.0..120.0f64, 1..20),
        start in any::<prop::sample::Index>(),
    ) {
        let graph = build_graph(&cfg).unwrap();
        let field = field_for(&graph, &speeds);
        let s = start.index(graph.node_count());
        let tree = shortest_path_tree(&graph, &field, Position::Node(s)).unwrap();
        for target in 0..graph.node_count() {
            let Ok(route) = tree.route_to(&graph, target) else {
                prop_assert!(tree.time_to(target).is_infinite());
                continue;
            };
            prop_assert_eq!(route.node_seq[0], s);
            prop_assert_eq!(route.destination(), target);
            prop_assert_eq!(route.edges.len() + 1, route.node_seq.len());
            let mut km = 0.0;
            let mut minutes = 0.0;
            for (i, &e) in route.edges.iter().enumerate() {
                let edge = graph.edge(e);
                let (a, b) = (route.node_seq[i], route.node_seq[i + 1]);
                prop_assert!((edge.from == a && edge.to == b) || (!graph.is_directed() && edge.from == b && edge.to == a));
                km += edge.length_km;
                minutes += field.minutes(e, edge.length_km);
            }
            prop_assert!((route.distance - km).abs() <= 1e-9 * km.max(1.0));
            prop_assert!((route.expected_time - minutes).abs() <= 1e-9 * minutes.max(1.0));
            prop_assert!((route.expected_time - tree.time_to(target)).abs() <= 1e-9 * minutes.max(1.0));
        }
    }
}
