//! Property checks over randomly generated inputs.

use proptest::prelude::*;

use geolayer::cost::{Action, CostModel, CostParams, DemandMatrix, PlacementState};
use geolayer::dhd::{vertex_step, DhdParams, HeatGraph, HeatState};
use geolayer::graph::{extract_boundary, Partitioning, Pattern};
use geolayer::layered::{build_layers, LatencyThresholds};
use geolayer::routing::route_all;
use geolayer::wan::WanProfile;
use geolayer::workload::{synthetic_graph, GraphSpec};
use geolayer::{DcId, ItemId, PatternId, VertexId};

fn heat_case() -> impl Strategy<Value = (HeatGraph, Vec<f64>, f64, f64)> {
    (2usize..20).prop_flat_map(|n| {
        let edges = proptest::collection::vec((0..n, 0..n, 0.05f64..1.0), 1..3 * n);
        let heat = proptest::collection::vec(0.0f64..100.0, n);
        (Just(n), edges, heat, 0.01f64..1.0, 0.01f64..0.9)
    })
    .prop_map(|(n, edges, heat, alpha, gamma)| {
        let mut seen = std::collections::BTreeSet::new();
        let edges: Vec<_> = edges.into_iter().filter(|&(a, b, _)| a != b && seen.insert((a.min(b), a.max(b)))).collect();
        (HeatGraph::from_edges(n, &edges), heat, alpha, gamma)
    })
}

proptest! {
    #[test]
    fn heat_stays_non_negative_and_decays((g, heat, alpha, gamma) in heat_case()) {
        let p = DhdParams { alpha, gamma, ..DhdParams::default() };
        let mut st = HeatState::new(heat);
        for _ in 0..10 {
            let next = vertex_step(&g, &st, &p).unwrap();
            prop_assert!(next.heat.iter().all(|&h| h >= 0.0));
            let want = (1.0 - gamma) * st.total();
            prop_assert!((next.total() - want).abs() <= 1e-9 * want.max(1.0));
            st = next;
        }
    }

    #[test]
    fn heat_trajectory_is_bitwise_repeatable((g, heat, alpha, gamma) in heat_case()) {
        let p = DhdParams { alpha, gamma, ..DhdParams::default() };
        let run = |h: Vec<f64>| {
            let mut st = HeatState::new(h);
            for _ in 0..5 {
                st = vertex_step(&g, &st, &p).unwrap();
            }
            st.heat.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(heat.clone()), run(heat));
    }

    #[test]
    fn layers_partition_cross_edges(vertices in 6usize..40, dcs in 2usize..6, degree in 1.5f64..4.0, seed in 0u64..1000, interval in 20.0f64..150.0) {
        let wan = WanProfile::bundled("geo-6dc").unwrap().subset(&(0..dcs).map(DcId::from_index).collect::<Vec<_>>()).unwrap();
        let (graph, assignment) = synthetic_graph(&GraphSpec { vertices, dcs, avg_degree: degree, locality: 0.6, seed }).unwrap();
        let part = Partitioning::new(&graph, wan.dc_ids(), assignment).unwrap();
        let th = LatencyThresholds::for_profile(&wan, interval).unwrap();
        let lg = build_layers(&graph, &part, &wan, &th).unwrap();
        let total: usize = (1..=lg.layer_count()).map(|k| lg.layer(k).edges.len()).sum();
        prop_assert_eq!(total, extract_boundary(&graph, &part).cross_edges.len());
        // groups only ever merge going up
        for j in 1..=lg.layer_count() {
            for d in 0..dcs {
                let d = DcId::from_index(d);
                prop_assert!(lg.cluster_of(j - 1, d).iter().all(|e| lg.cluster_of(j, d).contains(e)));
            }
        }
        prop_assert_eq!(lg.roots().len() == 1, graph.is_connected());
    }

    #[test]
    fn marginal_gain_is_objective_difference(
        extra in proptest::collection::vec((0usize..7, 0usize..3), 0..8),
        reads in proptest::collection::vec(1.0f64..50.0, 3),
        writes in proptest::collection::vec(0.0f64..10.0, 7),
        pick in (0usize..7, 0usize..3, any::<bool>()),
    ) {
        let mut graph = geolayer::graph::Graph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        graph.set_item_sizes(1_000_000, 100_000);
        let wan = WanProfile::bundled("alibaba-5dc").unwrap().subset(&[DcId(0), DcId(1), DcId(2)]).unwrap();
        let part = Partitioning::new(&graph, wan.dc_ids(), vec![DcId(0), DcId(0), DcId(1), DcId(2)]).unwrap();
        let patterns = vec![
            Pattern::from_walk(PatternId(0), &graph, &[VertexId(0), VertexId(1), VertexId(2)], 1.0).unwrap(),
            Pattern::from_walk(PatternId(1), &graph, &[VertexId(2), VertexId(3)], 1.0).unwrap(),
        ];
        let mut demand = DemandMatrix::new();
        demand.add_pattern_read(&patterns[0], DcId(1), reads[0]);
        demand.add_pattern_read(&patterns[0], DcId(2), reads[1]);
        demand.add_pattern_read(&patterns[1], DcId(0), reads[2]);
        for (x, &w) in writes.iter().enumerate() {
            if w > 0.0 {
                demand.add_write(ItemId::from_index(x), part.home_of(&graph, ItemId::from_index(x)), w);
            }
        }
        let mut placement = PlacementState::home_only(&graph, &part);
        for (x, d) in extra {
            placement.add(ItemId::from_index(x), DcId::from_index(d));
        }
        let th = LatencyThresholds::uniform(100.0, 3).unwrap();
        let lg = build_layers(&graph, &part, &wan, &th).unwrap();
        let routing = route_all(&demand, &patterns, &placement, &lg, &wan, &graph).unwrap();
        let model = CostModel::new(&graph, &wan, &patterns, CostParams::default());
        let (x, d, add) = (ItemId::from_index(pick.0), DcId::from_index(pick.1), pick.2);
        let action = if add { Action::AddReplica { item: x, dc: d } } else { Action::RemoveReplica { item: x, dc: d } };
        let before = model.total_objective(&placement, &routing, &demand).unwrap().total;
        let gain = model.marginal_gain(action, &placement, &routing, &demand);
        let (mut p2, mut r2) = (placement.clone(), routing.clone());
        match model.apply(action, &mut p2, &mut r2, &demand) {
            Ok(_) => {
                let after = model.total_objective(&p2, &r2, &demand).unwrap().total;
                let gain = gain.unwrap();
                prop_assert!((gain - (before - after)).abs() <= 1e-9 * before.abs().max(1.0), "gain {} vs {}", gain, before - after);
            }
            Err(_) => prop_assert!(gain.is_err()),
        }
    }
}
