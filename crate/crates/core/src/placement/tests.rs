use super::*;
use crate::cost::{CostParams, RoutingState};
use crate::graph::{Graph, Pattern};
use crate::layered::{build_layers, LatencyThresholds};
use crate::routing::{route_all, route_online, RoutingError};
use crate::wan::{DataCenter, LinkProfile};
use crate::workload::{aggregate, generate, synthetic_graph, GraphSpec, WorkloadSpec};

/// Sites 0-1 at 50 ms, 2 at 150 ms from both, 3 at 250 ms from all.
fn wan4() -> WanProfile {
    let rtt = [[0.0, 50.0, 150.0, 250.0], [50.0, 0.0, 150.0, 250.0], [150.0, 150.0, 0.0, 250.0], [250.0, 250.0, 250.0, 0.0]];
    let dcs = (0..4).map(|i| DataCenter { id: format!("s{i}"), region: "r".into(), store_price: 0.02, read_price: 0.4, write_price: 5.0 }).collect();
    let mut links = Vec::new();
    for row in rtt {
        for r in row {
            links.push(LinkProfile { rtt_ms: r, bandwidth_mbps: 100.0, price_per_gb: 0.09 });
        }
    }
    WanProfile::new(dcs, links).unwrap()
}

struct Ring {
    graph: Graph,
    part: Partitioning,
    wan: WanProfile,
    layered: LayeredGraph,
}

/// Ring of 8 vertices, two per site, 1 MB vertices.
fn ring() -> Ring {
    let edges: Vec<(usize, usize, f64)> = (0..8).map(|i| (i, (i + 1) % 8, 1.0)).collect();
    let mut graph = Graph::from_edges(8, &edges).unwrap();
    graph.set_item_sizes(1_000_000, 10_000);
    let wan = wan4();
    let part = Partitioning::new(&graph, wan.dc_ids(), (0..8).map(|v| DcId((v / 2) as u16)).collect()).unwrap();
    let layered = build_layers(&graph, &part, &wan, &LatencyThresholds::uniform(100.0, 4).unwrap()).unwrap();
    Ring { graph, part, wan, layered }
}

fn walk(g: &Graph, id: u32, vs: &[u32], eta: f64) -> Pattern {
    Pattern::from_walk(PatternId(id), g, &vs.iter().map(|&v| VertexId(v)).collect::<Vec<_>>(), eta).unwrap()
}

fn no_precache() -> PlacementParams {
    PlacementParams { theta_quantile: None, ..PlacementParams::default() }
}

#[test]
fn sink_bucket_arithmetic() {
    let r = ring();
    let patterns = vec![walk(&r.graph, 0, &[0, 1], 0.875)];
    let model = CostModel::new(&r.graph, &r.wan, &patterns, CostParams::default());
    let dist = sink_patterns(&model, &r.layered, &DemandMatrix::new(), 0.4);
    assert_eq!(dist.layer_of(PatternId(0)), Some(4));
}

#[test]
fn tight_requirement_sinks_to_the_origin() {
    let r = ring();
    // items live at site 3, read from site 0 with a 40 ms budget
    let patterns = vec![walk(&r.graph, 0, &[6, 7], 0.1)];
    let mut demand = DemandMatrix::new();
    demand.add_pattern_read(&patterns[0], DcId(0), 1.0);
    let model = CostModel::new(&r.graph, &r.wan, &patterns, CostParams::default());
    let ctx = PlacementContext { model, part: &r.part, layered: &r.layered, demand: &demand };
    let base = PlacementState::home_only(&r.graph, &r.part);
    let (placement, log) = place_all(ctx, &base, &no_precache()).unwrap();
    for &x in &patterns[0].items {
        assert!(placement.holds(x, DcId(0)));
    }
    let sink_layers: Vec<usize> = log.entries.iter().filter(|e| e.action == CommitAction::Sink).map(|e| e.layer).collect();
    assert_eq!(sink_layers, vec![4, 3, 2, 1]);
    let routing = route_all(&demand, &patterns, &placement, &r.layered, &r.wan, &r.graph).unwrap();
    let report = model.check_constraints(&placement, &routing, &demand, 0.4).unwrap();
    assert_eq!(report.count('d'), 0);
}

#[test]
fn loose_requirement_stays_on_top() {
    let r = ring();
    let patterns = vec![walk(&r.graph, 0, &[6, 7], 1.0)];
    let mut demand = DemandMatrix::new();
    demand.add_pattern_read(&patterns[0], DcId(0), 0.01);
    // association priced low enough that a copy does not pay off
    let model = CostModel::new(&r.graph, &r.wan, &patterns, CostParams { association_scale: 1e-6, ..CostParams::default() });
    let ctx = PlacementContext { model, part: &r.part, layered: &r.layered, demand: &demand };
    let base = PlacementState::home_only(&r.graph, &r.part);
    let (placement, log) = place_all(ctx, &base, &PlacementParams { gamma_max: 2.0, ..no_precache() }).unwrap();
    assert_eq!(log.count(CommitAction::Sink), 0);
    assert_eq!(placement, base);
}

#[test]
fn unread_pattern_has_negative_gain() {
    let r = ring();
    let patterns = vec![walk(&r.graph, 0, &[6, 7], 1.0)];
    let model = CostModel::new(&r.graph, &r.wan, &patterns, CostParams::default());
    let base = PlacementState::home_only(&r.graph, &r.part);
    let g = replication_gain(&model, &base, &DemandMatrix::new(), &patterns[0].items, &[(DcId(0), 0.0)]);
    assert!(g < 0.0);
}

#[test]
fn hot_pattern_gain_matches_objective_difference_in_sign() {
    let r = ring();
    let patterns = vec![walk(&r.graph, 0, &[6, 7], 1.0)];
    let mut demand = DemandMatrix::new();
    demand.add_pattern_read(&patterns[0], DcId(0), 5_000.0);
    let model = CostModel::new(&r.graph, &r.wan, &patterns, CostParams::default());
    let before = PlacementState::home_only(&r.graph, &r.part);
    let gain = replication_gain(&model, &before, &demand, &patterns[0].items, &[(DcId(0), 5_000.0)]);
    let mut after = before.clone();
    for &x in &patterns[0].items {
        after.add(x, DcId(0));
    }
    let cost = |p: &PlacementState| {
        let routing = route_all(&demand, &patterns, p, &r.layered, &r.wan, &r.graph).unwrap();
        model.total_objective(p, &routing, &demand).unwrap().total
    };
    assert!(gain > 0.0);
    assert!(cost(&before) - cost(&after) > 0.0);
}

#[test]
fn gain_is_zero_when_already_local() {
    let r = ring();
    let patterns = vec![walk(&r.graph, 0, &[0, 1], 1.0)];
    let model = CostModel::new(&r.graph, &r.wan, &patterns, CostParams::default());
    let base = PlacementState::home_only(&r.graph, &r.part);
    let mut demand = DemandMatrix::new();
    demand.add_pattern_read(&patterns[0], DcId(0), 10.0);
    assert_eq!(replication_gain(&model, &base, &demand, &patterns[0].items, &[(DcId(0), 10.0)]), 0.0);
}

fn ids(v: &[u32]) -> Vec<ItemId> {
    v.iter().map(|&x| ItemId(x)).collect()
}

#[test]
fn venn_of_three_overlapping_sets() {
    let cells = decompose_overlaps(&[ids(&[1, 2, 4, 7]), ids(&[2, 3, 5, 7]), ids(&[4, 5, 6, 7])]);
    assert_eq!(cells.len(), 7);
    let mut all: Vec<ItemId> = cells.iter().flat_map(|(_, c)| c.iter().copied()).collect();
    all.sort_unstable();
    assert_eq!(all, ids(&[1, 2, 3, 4, 5, 6, 7]));
}

#[test]
fn venn_of_disjoint_and_identical_sets() {
    assert_eq!(decompose_overlaps(&[ids(&[1, 2]), ids(&[3]), ids(&[4, 5])]).len(), 3);
    let same = decompose_overlaps(&[ids(&[1, 2]), ids(&[1, 2])]);
    assert_eq!(same, vec![(vec![0, 1], ids(&[1, 2]))]);
}

#[test]
fn single_candidate_wins() {
    let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
    let c = Candidate { id: 7, seeds: BTreeMap::new(), access: 0.0 };
    let out = regional_competition(&g, &[ItemId(0)], &[c], &DhdParams::default(), 1e-6, 50).unwrap();
    assert_eq!(out.winner, 7);
    assert!(regional_competition(&g, &[ItemId(0)], &[], &DhdParams::default(), 1e-6, 50).is_err());
}

#[test]
fn adjacent_holder_beats_distant_one() {
    // region is vertex 0; A holds vertex 1 next to it, B holds vertex 3 two
    // weak hops away
    let g = Graph::from_edges(4, &[(0, 1, 1.0), (0, 2, 0.1), (2, 3, 0.1)]).unwrap();
    let a = Candidate { id: 0, seeds: BTreeMap::from([(VertexId(1), 1.0)]), access: 0.0 };
    let b = Candidate { id: 1, seeds: BTreeMap::from([(VertexId(3), 1.0)]), access: 0.0 };
    let out = regional_competition(&g, &[ItemId(0)], &[b.clone(), a.clone()], &DhdParams::default(), 1e-6, 50).unwrap();
    assert_eq!(out.winner, 0);
    assert!(out.scores[1] > out.scores[0]);
    assert!(!out.by_access);
}

#[test]
fn no_reach_falls_back_to_access() {
    let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
    let a = Candidate { id: 0, seeds: BTreeMap::new(), access: 1.0 };
    let b = Candidate { id: 1, seeds: BTreeMap::new(), access: 3.0 };
    let out = regional_competition(&g, &[ItemId(0)], &[a, b], &DhdParams::default(), 1e-6, 50).unwrap();
    assert_eq!(out.winner, 1);
    assert!(out.by_access);
}

#[test]
fn empty_pattern_set_keeps_home_copies() {
    let r = ring();
    let patterns: Vec<Pattern> = Vec::new();
    let demand = DemandMatrix::new();
    let model = CostModel::new(&r.graph, &r.wan, &patterns, CostParams::default());
    let ctx = PlacementContext { model, part: &r.part, layered: &r.layered, demand: &demand };
    let base = PlacementState::home_only(&r.graph, &r.part);
    let (placement, log) = place_all(ctx, &base, &PlacementParams::default()).unwrap();
    assert_eq!(placement, base);
    assert!(log.entries.is_empty());
}

struct Toy {
    graph: Graph,
    part: Partitioning,
    wan: WanProfile,
    layered: LayeredGraph,
    patterns: Vec<Pattern>,
    demand: DemandMatrix,
}

/// Three sites, 8 patterns over a 30-vertex graph.
fn toy(seed: u64) -> Toy {
    let (mut graph, assignment) = synthetic_graph(&GraphSpec { vertices: 30, dcs: 3, avg_degree: 3.0, locality: 0.7, seed }).unwrap();
    graph.set_item_sizes(200_000, 20_000);
    let wan = WanProfile::bundled("alibaba-5dc").unwrap().subset(&[DcId(0), DcId(1), DcId(2)]).unwrap();
    let part = Partitioning::new(&graph, wan.dc_ids(), assignment).unwrap();
    let thresholds = LatencyThresholds::for_profile(&wan, 50.0).unwrap();
    let layered = build_layers(&graph, &part, &wan, &thresholds).unwrap();
    let spec = WorkloadSpec { patterns: 8, reads: 600, writes: 40, gamma_max: 0.4, seed, ..WorkloadSpec::default() };
    let w = generate(&graph, &part, &thresholds, &spec).unwrap();
    let demand = aggregate(&w.trace, &w.patterns, 0..u64::MAX);
    Toy { graph, part, wan, layered, patterns: w.patterns, demand }
}

fn run_toy(t: &Toy, params: &PlacementParams) -> (PlacementState, PlacementLog) {
    let model = CostModel::new(&t.graph, &t.wan, &t.patterns, CostParams::default());
    let ctx = PlacementContext { model, part: &t.part, layered: &t.layered, demand: &t.demand };
    place_all(ctx, &PlacementState::home_only(&t.graph, &t.part), params).unwrap()
}

#[test]
fn toy_log_obeys_accept_rule_and_replays() {
    for seed in 1..6 {
        let t = toy(seed);
        let (placement, log) = run_toy(&t, &PlacementParams::default());
        assert!(log.accept_rule_violations().is_empty());
        let replayed = log.replay(&PlacementState::home_only(&t.graph, &t.part), &t.patterns).unwrap();
        assert_eq!(replayed, placement);
    }
}

#[test]
fn toy_meets_every_pattern_deadline() {
    for seed in 1..6 {
        let t = toy(seed);
        let (placement, _) = run_toy(&t, &PlacementParams::default());
        let routing = route_all(&t.demand, &t.patterns, &placement, &t.layered, &t.wan, &t.graph).unwrap();
        let model = CostModel::new(&t.graph, &t.wan, &t.patterns, CostParams::default());
        let report = model.check_constraints(&placement, &routing, &t.demand, 0.4).unwrap();
        assert_eq!(report.count('d'), 0, "seed {seed}: {:?}", report.violations);
        assert_eq!(report.count('a'), 0);
    }
}

#[test]
fn placement_is_deterministic() {
    let t = toy(3);
    assert_eq!(run_toy(&t, &PlacementParams::default()), run_toy(&t, &PlacementParams::default()));
}

#[test]
fn log_csv_has_header_and_rows() {
    let t = toy(2);
    let (_, log) = run_toy(&t, &PlacementParams::default());
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some(LOG_HEADER));
    assert_eq!(text.lines().count(), log.entries.len() + 1);
}

#[test]
fn full_quantile_caches_nothing() {
    let t = toy(1);
    let base = PlacementState::home_only(&t.graph, &t.part);
    for d in 0..3 {
        let r = precache_hot(&t.graph, &t.part, &base, &t.demand, DcId(d), &DhdParams::default(), 1.0).unwrap();
        assert!(r.items.is_empty());
    }
}

#[test]
fn precache_sets_shrink_with_quantile() {
    let t = toy(4);
    let base = PlacementState::home_only(&t.graph, &t.part);
    let mut prev: Option<Vec<ItemId>> = None;
    for q in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let r = precache_hot(&t.graph, &t.part, &base, &t.demand, DcId(0), &DhdParams::default(), q).unwrap();
        if let Some(p) = &prev {
            assert!(r.items.iter().all(|x| p.contains(x)));
        }
        prev = Some(r.items);
    }
}

#[test]
fn uniform_heat_ties_break_by_id() {
    let g = HeatGraphFixture::path(5);
    let hot = select_hot(&g, &[1.0; 5], 0.6);
    assert_eq!(hot.vertices, vec![VertexId(0), VertexId(1)]);
    assert_eq!(hot.edges.len(), 1);
}

struct HeatGraphFixture;

impl HeatGraphFixture {
    fn path(n: usize) -> crate::dhd::HeatGraph {
        let edges: Vec<(usize, usize, f64)> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        crate::dhd::HeatGraph::from_edges(n, &edges)
    }
}

/// Vertex 0 is hot and home, 1 hangs off it, 2 is isolated. 1 and 2 are cached.
fn cache_fixture(theta_c: f64) -> (Graph, CacheState) {
    let graph = Graph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
    let g = crate::dhd::HeatGraph::whole(&graph);
    let result = PrecacheResult { dc: DcId(0), items: vec![ItemId(1), ItemId(2)], graph: g, heat: crate::dhd::HeatState::new(vec![10.0, 1.0, 1.0]) };
    let cache = CacheState::new(&result, &graph, 0.1).with_threshold(theta_c);
    (graph, cache)
}

#[test]
fn zero_threshold_evicts_nothing() {
    let (graph, mut cache) = cache_fixture(0.0);
    for _ in 0..20 {
        assert!(evict_cold(&mut cache, &graph, &[], &DhdParams::default()).unwrap().is_empty());
    }
}

#[test]
fn idle_cache_decays_until_empty() {
    let (graph, mut cache) = cache_fixture(0.5);
    let mut evicted = Vec::new();
    for _ in 0..60 {
        evicted.extend(evict_cold(&mut cache, &graph, &[], &DhdParams::default()).unwrap());
    }
    evicted.sort_unstable();
    assert_eq!(evicted, vec![ItemId(1), ItemId(2)]);
    assert!(cache.cached.is_empty());
}

#[test]
fn neighbour_of_hot_item_outlives_isolated_one() {
    let (graph, mut cache) = cache_fixture(0.5);
    let mut round_evicted = BTreeMap::new();
    for round in 0..40 {
        for x in evict_cold(&mut cache, &graph, &[(ItemId(0), 5.0)], &DhdParams::default()).unwrap() {
            round_evicted.insert(x, round);
        }
    }
    let isolated = round_evicted[&ItemId(2)];
    assert!(round_evicted.get(&ItemId(1)).is_none_or(|&r| r > isolated));
}

#[test]
fn delete_drops_every_copy_and_route() {
    let mut r = ring();
    let patterns = vec![walk(&r.graph, 0, &[0, 1], 1.0), walk(&r.graph, 1, &[2, 3], 1.0)];
    let mut placement = PlacementState::home_only(&r.graph, &r.part);
    let x = r.graph.vertex_item(VertexId(0));
    for d in 1..4 {
        placement.add(x, DcId(d));
    }
    let mut demand = DemandMatrix::new();
    demand.add_pattern_read(&patterns[0], DcId(2), 1.0);
    demand.add_pattern_read(&patterns[1], DcId(2), 1.0);
    let mut routing = route_all(&demand, &patterns, &placement, &r.layered, &r.wan, &r.graph).unwrap();
    let out = apply_update(Update::Delete(x), &mut r.graph, &mut r.part, &mut placement, &mut routing, &patterns, &r.layered).unwrap();
    assert_eq!(out.cleanup, vec![DcId(0), DcId(1), DcId(2), DcId(3)]);
    assert!(placement.holders(x).is_empty());
    assert!(routing.get(PatternId(0), DcId(2)).is_none());
    assert!(routing.get(PatternId(1), DcId(2)).is_some());
    assert_eq!(route_online(&patterns[0], DcId(2), &placement, &r.layered, &r.wan, &r.graph), Err(RoutingError::MissingItem(x)));
    let again = apply_update(Update::Delete(x), &mut r.graph, &mut r.part, &mut placement, &mut routing, &patterns, &r.layered);
    assert!(matches!(again, Err(PlacementError::UnknownItem(_))));
}

#[test]
fn inserted_unread_vertex_gets_no_replicas() {
    let mut r = ring();
    let mut placement = PlacementState::home_only(&r.graph, &r.part);
    let mut routing = RoutingState::new();
    let update = Update::InsertVertex { label: "new".into(), dc: DcId(2), size_bytes: 100 };
    let out = apply_update(update, &mut r.graph, &mut r.part, &mut placement, &mut routing, &[], &r.layered).unwrap();
    let x = out.items[0];
    assert_eq!(placement.holders(x), DcSet::single(DcId(2)));
    let patterns = vec![walk(&r.graph, 0, &[6, 7], 0.1)];
    let mut demand = DemandMatrix::new();
    demand.add_pattern_read(&patterns[0], DcId(0), 3.0);
    let model = CostModel::new(&r.graph, &r.wan, &patterns, CostParams::default());
    let ctx = PlacementContext { model, part: &r.part, layered: &r.layered, demand: &demand };
    let (after, _) = place_all(ctx, &placement, &PlacementParams::default()).unwrap();
    assert_eq!(after.holders(x), DcSet::single(DcId(2)));
}
