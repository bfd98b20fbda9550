//! Request routing. Online requests escalate through the site groups layer
//! by layer; offline analytics jobs pick which sites keep their data and
//! migrate the rest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use crate::cost::{DemandMatrix, PlacementState, RoutingState};
use crate::graph::{Graph, ItemKind, Pattern};
use crate::ids::{DcId, DcSet, ItemId, PatternId, VertexId};
use crate::layered::LayeredGraph;
use crate::wan::{WanProfile, BYTES_PER_GB};

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("item {0} has no live replica")]
    MissingItem(ItemId),
    #[error("request names no items")]
    EmptyRequest,
    #[error("unknown pattern {0}")]
    UnknownPattern(PatternId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutePlan {
    pub pattern: PatternId,
    pub origin: DcId,
    /// Server per item, aligned with the pattern's items.
    pub servers: Vec<DcId>,
    /// Bytes returned by each serving site, ascending by site.
    pub parts: Vec<(DcId, u64)>,
    pub latency: f64,
    pub wan_bytes: u64,
    /// Group levels consulted beyond the local site, in order. A value of
    /// `layer_count + 1` marks a search over every site.
    pub levels_visited: Vec<usize>,
}

impl RoutePlan {
    pub fn serving_sites(&self) -> DcSet {
        self.servers.iter().copied().collect()
    }
}

fn finish_plan(graph: &Graph, wan: &WanProfile, pattern: &Pattern, origin: DcId, servers: Vec<DcId>, levels_visited: Vec<usize>) -> RoutePlan {
    let mut parts: BTreeMap<DcId, u64> = BTreeMap::new();
    for (&x, &d) in pattern.items.iter().zip(&servers) {
        *parts.entry(d).or_insert(0) += graph.item_size(x);
    }
    let parts: Vec<(DcId, u64)> = parts.into_iter().collect();
    let latency = wan.pattern_latency(origin, &parts);
    let wan_bytes = parts.iter().filter(|(d, _)| *d != origin).map(|(_, b)| b).sum();
    RoutePlan { pattern: pattern.id, origin, servers, parts, latency, wan_bytes, levels_visited }
}

fn check_live(pattern: &Pattern, placement: &PlacementState) -> Result<(), RoutingError> {
    if pattern.items.is_empty() {
        return Err(RoutingError::EmptyRequest);
    }
    for &x in &pattern.items {
        if !placement.is_live(x) || placement.holders(x).is_empty() {
            return Err(RoutingError::MissingItem(x));
        }
    }
    Ok(())
}

/// Serves what the origin holds locally, then escalates one group level at
/// a time. Within a level it repeatedly picks the site holding the most
/// still-missing items (ties: lower RTT to the origin, then lower id).
pub fn route_online(
    pattern: &Pattern,
    origin: DcId,
    placement: &PlacementState,
    layered: &LayeredGraph,
    wan: &WanProfile,
    graph: &Graph,
) -> Result<RoutePlan, RoutingError> {
    check_live(pattern, placement)?;
    let n = pattern.items.len();
    let mut servers: Vec<Option<DcId>> = vec![None; n];
    let mut remaining = 0;
    for (i, &x) in pattern.items.iter().enumerate() {
        if placement.holds(x, origin) {
            servers[i] = Some(origin);
        } else {
            remaining += 1;
        }
    }
    let mut visited = Vec::new();
    let top = layered.layer_count();
    let all: DcSet = (0..wan.dc_count()).map(DcId::from_index).collect();
    for level in 1..=top + 1 {
        if remaining == 0 {
            break;
        }
        visited.push(level);
        let cluster = if level <= top { layered.cluster_of(level, origin) } else { all };
        loop {
            let mut best: Option<(usize, f64, DcId)> = None;
            for d in cluster.iter() {
                let count = pattern.items.iter().zip(&servers).filter(|(&x, s)| s.is_none() && placement.holds(x, d)).count();
                if count == 0 {
                    continue;
                }
                let rtt = wan.link(d, origin).rtt_s();
                let better = match best {
                    None => true,
                    Some((bc, br, _)) => count > bc || (count == bc && rtt < br),
                };
                if better {
                    best = Some((count, rtt, d));
                }
            }
            let Some((_, _, d)) = best else { break };
            for (i, &x) in pattern.items.iter().enumerate() {
                if servers[i].is_none() && placement.holds(x, d) {
                    servers[i] = Some(d);
                    remaining -= 1;
                }
            }
        }
    }
    let servers: Vec<DcId> = servers.into_iter().map(|s| s.expect("every live item has a holder")).collect();
    Ok(finish_plan(graph, wan, pattern, origin, servers, visited))
}

/// Routes every request class of `demand` online.
pub fn route_all(
    demand: &DemandMatrix,
    patterns: &[Pattern],
    placement: &PlacementState,
    layered: &LayeredGraph,
    wan: &WanProfile,
    graph: &Graph,
) -> Result<RoutingState, RoutingError> {
    let mut routing = RoutingState::new();
    for (p, y, _) in demand.requests() {
        let pattern = patterns.get(p.index()).ok_or(RoutingError::UnknownPattern(p))?;
        let plan = route_online(pattern, y, placement, layered, wan, graph)?;
        routing.set(p, y, plan.servers);
    }
    Ok(routing)
}

/// Each item served by a uniformly chosen holder.
pub fn route_random(
    pattern: &Pattern,
    origin: DcId,
    placement: &PlacementState,
    wan: &WanProfile,
    graph: &Graph,
    rng: &mut impl Rng,
) -> Result<RoutePlan, RoutingError> {
    check_live(pattern, placement)?;
    let servers = pattern
        .items
        .iter()
        .map(|&x| {
            let holders: Vec<DcId> = placement.holders(x).iter().collect();
            *holders.choose(rng).expect("checked non-empty")
        })
        .collect();
    Ok(finish_plan(graph, wan, pattern, origin, servers, Vec::new()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OfflineParams {
    /// Iterations of the analytics job (iota).
    pub iterations: u32,
    /// Bytes per inter-site message.
    pub msg_bytes: u64,
    /// Migration threshold as a share of the job's inter-site message volume.
    pub xi_fraction: f64,
}

impl Default for OfflineParams {
    fn default() -> Self {
        OfflineParams { iterations: 10, msg_bytes: 1_000, xi_fraction: 0.2 }
    }
}

/// What one site contributes to an offline job.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteStats {
    pub dc: DcId,
    /// Bytes of requested items the site holds.
    pub local_bytes: u64,
    /// Requested vertices held here that also have copies elsewhere.
    pub replica_vertices: usize,
    /// Requested vertices held here with a requested neighbour not held here.
    pub boundary_vertices: usize,
}

/// True when the site should ship its data away rather than take part:
/// iota * msg * (replicas + boundary) - local bytes > (1 - eta) * xi.
pub fn migration_test(stats: &SiteStats, params: &OfflineParams, eta: f64, xi: f64) -> bool {
    let messages = params.iterations as f64 * params.msg_bytes as f64 * (stats.replica_vertices + stats.boundary_vertices) as f64;
    messages - stats.local_bytes as f64 > (1.0 - eta) * xi
}

#[derive(Clone, Debug, PartialEq)]
pub struct Migration {
    pub item: ItemId,
    pub from: DcId,
    pub to: DcId,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyPlan {
    pub request_id: u64,
    pub retained: Vec<DcId>,
    /// Final site of every requested item.
    pub location: BTreeMap<ItemId, DcId>,
    pub migrations: Vec<Migration>,
    pub replica_vertices: usize,
    pub boundary_vertices: usize,
    /// The layered plan cost more than gathering everything at one site.
    pub gathered: bool,
}

impl AssemblyPlan {
    pub fn migration_bytes(&self) -> u64 {
        self.migrations.iter().map(|m| m.bytes).sum()
    }

    /// Share of requested edges that had to move.
    pub fn migrated_edge_ratio(&self, graph: &Graph) -> f64 {
        let edges = self.location.keys().filter(|&&x| matches!(graph.item(x).kind, ItemKind::Edge(_))).count();
        if edges == 0 {
            return 0.0;
        }
        let moved = self.migrations.iter().filter(|m| matches!(graph.item(m.item).kind, ItemKind::Edge(_))).count();
        moved as f64 / edges as f64
    }

    pub fn write_csv(&self, out: &mut impl Write, graph: &Graph, params: &OfflineParams) -> std::io::Result<()> {
        writeln!(out, "request_id,item_id,server_dc,bytes")?;
        for (&x, &d) in &self.location {
            writeln!(out, "{},{},{},{}", self.request_id, x, d, graph.item_size(x))?;
        }
        writeln!(out, "summary,{},{},{}", self.retained.len(), self.migration_bytes(), estimate_offline_comm(self, params))
    }
}

/// Bytes moved before the job plus per-iteration messages across sites.
pub fn estimate_offline_comm(plan: &AssemblyPlan, params: &OfflineParams) -> f64 {
    plan.migration_bytes() as f64 + params.iterations as f64 * params.msg_bytes as f64 * (plan.replica_vertices + plan.boundary_vertices) as f64
}

fn requested_vertices(graph: &Graph, items: &[ItemId]) -> BTreeSet<VertexId> {
    items
        .iter()
        .filter_map(|&x| match graph.item(x).kind {
            ItemKind::Vertex(v) => Some(v),
            ItemKind::Edge(_) => None,
        })
        .collect()
}

/// Requested vertices whose requested neighbours sit at another site.
fn layout_boundary(graph: &Graph, vertices: &BTreeSet<VertexId>, location: &BTreeMap<ItemId, DcId>) -> usize {
    vertices
        .iter()
        .filter(|&&v| {
            let here = location[&graph.vertex_item(v)];
            graph.neighbors(v).iter().any(|&(w, _)| vertices.contains(&w) && location[&graph.vertex_item(w)] != here)
        })
        .count()
}

fn site_stats(graph: &Graph, placement: &PlacementState, items: &[ItemId], vertices: &BTreeSet<VertexId>, d: DcId) -> SiteStats {
    let local_bytes = items.iter().filter(|&&x| placement.holds(x, d)).map(|&x| graph.item_size(x)).sum();
    let mut replica_vertices = 0;
    let mut boundary_vertices = 0;
    for &v in vertices {
        let x = graph.vertex_item(v);
        if !placement.holds(x, d) {
            continue;
        }
        if placement.holders(x).len() > 1 {
            replica_vertices += 1;
        }
        if graph.neighbors(v).iter().any(|&(w, _)| vertices.contains(&w) && !placement.holds(graph.vertex_item(w), d)) {
            boundary_vertices += 1;
        }
    }
    SiteStats { dc: d, local_bytes, replica_vertices, boundary_vertices }
}

/// Plan that moves every requested item to `target`.
pub fn gather_plan(request_id: u64, items: &[ItemId], placement: &PlacementState, graph: &Graph, wan: &WanProfile, target: DcId) -> Result<AssemblyPlan, RoutingError> {
    let mut location = BTreeMap::new();
    let mut migrations = Vec::new();
    for &x in items {
        if !placement.is_live(x) || placement.holders(x).is_empty() {
            return Err(RoutingError::MissingItem(x));
        }
        if !placement.holds(x, target) {
            let from = cheapest_source(placement.holders(x), target, wan);
            migrations.push(Migration { item: x, from, to: target, bytes: graph.item_size(x) });
        }
        location.insert(x, target);
    }
    Ok(AssemblyPlan { request_id, retained: vec![target], location, migrations, replica_vertices: 0, boundary_vertices: 0, gathered: true })
}

/// Cheapest single-site gather; ties go to the lower site id.
pub fn best_gather_plan(request_id: u64, items: &[ItemId], placement: &PlacementState, graph: &Graph, wan: &WanProfile) -> Result<AssemblyPlan, RoutingError> {
    let mut best: Option<(u64, AssemblyPlan)> = None;
    for d in 0..wan.dc_count() {
        let plan = gather_plan(request_id, items, placement, graph, wan, DcId::from_index(d))?;
        let bytes = plan.migration_bytes();
        if best.as_ref().is_none_or(|(b, _)| bytes < *b) {
            best = Some((bytes, plan));
        }
    }
    best.map(|(_, p)| p).ok_or(RoutingError::EmptyRequest)
}

fn cheapest_source(holders: DcSet, to: DcId, wan: &WanProfile) -> DcId {
    let mut best: Option<(f64, f64, DcId)> = None;
    for d in holders.iter() {
        let price = if d == to { 0.0 } else { wan.link(d, to).price_per_gb };
        let rtt = wan.link(d, to).rtt_s();
        if best.is_none_or(|(bp, br, _)| price < bp || (price == bp && rtt < br)) {
            best = Some((price, rtt, d));
        }
    }
    best.expect("holders non-empty").2
}

/// Offline assembly for the requested items.
///
/// Every site holding requested data runs the migration test against the
/// threshold of the layer its data would cross. Items held only at migrating
/// sites go to a retained site in the smallest enclosing group: by id hash
/// within a first-level group, otherwise to the cheapest destination (then
/// least loaded, then lowest id). Items already at a retained site stay at
/// the retained holder with the most requested data. If the result would
/// cost more than gathering everything at one site, the gather plan is used.
pub fn route_offline(
    request_id: u64,
    items: &[ItemId],
    placement: &PlacementState,
    layered: &LayeredGraph,
    graph: &Graph,
    wan: &WanProfile,
    params: &OfflineParams,
) -> Result<AssemblyPlan, RoutingError> {
    if items.is_empty() {
        return Err(RoutingError::EmptyRequest);
    }
    let mut items: Vec<ItemId> = items.to_vec();
    items.sort_unstable();
    items.dedup();
    let mut candidates = DcSet::EMPTY;
    for &x in &items {
        if !placement.is_live(x) || placement.holders(x).is_empty() {
            return Err(RoutingError::MissingItem(x));
        }
        candidates = candidates.union(placement.holders(x));
    }
    let vertices = requested_vertices(graph, &items);
    let stats: Vec<SiteStats> = candidates.iter().map(|d| site_stats(graph, placement, &items, &vertices, d)).collect();
    let volume: f64 =
        stats.iter().map(|s| params.iterations as f64 * params.msg_bytes as f64 * (s.replica_vertices + s.boundary_vertices) as f64).sum();
    let xi = params.xi_fraction * volume;
    let top_mean = layered.top_populated_layer().and_then(|k| layered.mean_latency(k));

    let top = layered.layer_count();
    let mut retained = DcSet::EMPTY;
    for s in &stats {
        let crossing = (1..=top).find(|&lvl| layered.cluster_of(lvl, s.dc).iter().any(|d| d != s.dc && candidates.contains(d)));
        let eta = match (crossing.and_then(|lvl| layered.mean_latency(lvl)), top_mean) {
            (Some(m), Some(t)) if t > 0.0 => (m / t).clamp(0.0, 1.0),
            _ => 1.0,
        };
        if crossing.is_none() || !migration_test(s, params, eta, xi) {
            retained.insert(s.dc);
        }
    }
    if retained.is_empty() {
        let best = stats.iter().max_by(|a, b| a.local_bytes.cmp(&b.local_bytes).then(b.dc.cmp(&a.dc))).expect("candidates non-empty");
        retained.insert(best.dc);
    }

    let local_count: BTreeMap<DcId, usize> = retained.iter().map(|d| (d, items.iter().filter(|&&x| placement.holds(x, d)).count())).collect();
    let mut location = BTreeMap::new();
    let mut migrations = Vec::new();
    let mut load: BTreeMap<DcId, u64> = retained.iter().map(|d| (d, 0)).collect();
    let mut pending = Vec::new();
    for &x in &items {
        let held_retained: Vec<DcId> = placement.holders(x).iter().filter(|&d| retained.contains(d)).collect();
        if let Some(&d) = held_retained.iter().max_by(|a, b| local_count[a].cmp(&local_count[b]).then(b.cmp(a))) {
            location.insert(x, d);
            *load.get_mut(&d).unwrap() += graph.item_size(x);
        } else {
            pending.push(x);
        }
    }
    let all: DcSet = (0..wan.dc_count()).map(DcId::from_index).collect();
    for x in pending {
        let holders = placement.holders(x);
        let size = graph.item_size(x);
        let mut chosen = None;
        for level in 1..=top + 1 {
            let mut reach = DcSet::EMPTY;
            for h in holders.iter() {
                reach = reach.union(if level <= top { layered.cluster_of(level, h) } else { all });
            }
            let targets: Vec<DcId> = reach.iter().filter(|&d| retained.contains(d)).collect();
            if targets.is_empty() {
                continue;
            }
            let dest = if level == 1 {
                targets[x.index() % targets.len()]
            } else {
                let cost = |d: DcId| size as f64 / BYTES_PER_GB * wan.link(cheapest_source(holders, d, wan), d).price_per_gb;
                *targets
                    .iter()
                    .min_by(|&&a, &&b| cost(a).total_cmp(&cost(b)).then(load[&a].cmp(&load[&b])).then(a.cmp(&b)))
                    .expect("non-empty")
            };
            chosen = Some(dest);
            break;
        }
        let dest = chosen.expect("some site is retained");
        let from = cheapest_source(holders, dest, wan);
        migrations.push(Migration { item: x, from, to: dest, bytes: size });
        location.insert(x, dest);
        *load.get_mut(&dest).unwrap() += size;
    }
    let boundary_vertices = layout_boundary(graph, &vertices, &location);
    let plan = AssemblyPlan { request_id, retained: retained.iter().collect(), location, migrations, replica_vertices: 0, boundary_vertices, gathered: false };
    let gather = best_gather_plan(request_id, &items, placement, graph, wan)?;
    if estimate_offline_comm(&gather, params) < estimate_offline_comm(&plan, params) {
        return Ok(gather);
    }
    Ok(plan)
}

/// Writes one online plan in the shared plan CSV layout.
pub fn write_route_csv(out: &mut impl Write, request_id: u64, plan: &RoutePlan, pattern: &Pattern, graph: &Graph) -> std::io::Result<()> {
    writeln!(out, "request_id,item_id,server_dc,bytes")?;
    for (&x, &d) in pattern.items.iter().zip(&plan.servers) {
        writeln!(out, "{},{},{},{}", request_id, x, d, graph.item_size(x))?;
    }
    writeln!(out, "summary,{},{},{}", plan.parts.len(), plan.wan_bytes, plan.latency)
}
