//! Heat-driven pre-caching at a single site and online eviction of the
//! cached copies.

use std::collections::{BTreeMap, BTreeSet};

use crate::cost::{DemandMatrix, PlacementState};
use crate::dhd::{heat_quantile, run_to_steady, source_step, vertex_step, DhdParams, HeatGraph, HeatState, HotSubgraph, SourceState};
use crate::graph::{Graph, ItemKind, Partitioning};
use crate::ids::{DcId, ItemId, VertexId};

use super::PlacementError;

#[derive(Clone, Debug, PartialEq)]
pub struct PrecacheResult {
    pub dc: DcId,
    /// Items to copy to the site, ascending. Items already there are left out.
    pub items: Vec<ItemId>,
    pub graph: HeatGraph,
    pub heat: HeatState,
}

/// Read heat per vertex as seen from `dc`: vertex reads plus half of each
/// incident edge's reads.
fn vertex_reads(graph: &Graph, demand: &DemandMatrix, dc: DcId) -> BTreeMap<VertexId, f64> {
    let mut out: BTreeMap<VertexId, f64> = BTreeMap::new();
    for (&(x, y), &r) in &demand.reads {
        if y != dc || r <= 0.0 {
            continue;
        }
        match graph.item(x).kind {
            ItemKind::Vertex(v) => *out.entry(v).or_insert(0.0) += r,
            ItemKind::Edge(e) => {
                let edge = graph.edge(e);
                *out.entry(edge.u).or_insert(0.0) += r / 2.0;
                *out.entry(edge.v).or_insert(0.0) += r / 2.0;
            }
        }
    }
    out
}

/// Vertices visible from `dc`: its own, the ones it reads, and their
/// immediate neighbours.
pub fn precache_domain(graph: &Graph, part: &Partitioning, demand: &DemandMatrix, dc: DcId) -> Vec<VertexId> {
    let mut domain: BTreeSet<VertexId> = part.vertices_of(dc).into_iter().collect();
    for v in vertex_reads(graph, demand, dc).into_keys() {
        domain.insert(v);
        domain.extend(graph.neighbors(v).iter().map(|&(w, _)| w));
    }
    domain.into_iter().collect()
}

/// Steady heat over the site's visible graph. Read vertices are sources
/// boosted by their read counts and also seed the initial heat.
pub fn steady_heat(graph: &Graph, part: &Partitioning, demand: &DemandMatrix, dc: DcId, params: &DhdParams) -> Result<(HeatGraph, HeatState), PlacementError> {
    let domain = precache_domain(graph, part, demand, dc);
    let g = HeatGraph::induced(graph, &domain);
    let reads = vertex_reads(graph, demand, dc);
    let accesses: Vec<f64> = domain.iter().map(|v| reads.get(v).copied().unwrap_or(0.0)).collect();
    let sources: BTreeSet<usize> = (0..domain.len()).filter(|&i| accesses[i] > 0.0).collect();
    let sources = source_step(&SourceState::new(domain.len(), sources), 0, &accesses, params);
    let steady = run_to_steady(&g, &HeatState::new(accesses), &sources, params)?;
    Ok((g, steady.state))
}

/// The `1 - q` share of vertices with the most heat (ties to the lower
/// vertex id), keeping only positive heat, plus the edges among them.
pub fn select_hot(g: &HeatGraph, heat: &[f64], q: f64) -> HotSubgraph {
    let n = g.len();
    let keep = n - ((q.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).filter(|&i| heat[i] > 0.0).collect();
    order.sort_by(|&a, &b| heat[b].total_cmp(&heat[a]).then(g.vertices[a].cmp(&g.vertices[b])));
    order.truncate(keep);
    let mut hot = vec![false; n];
    for &i in &order {
        hot[i] = true;
    }
    let mut vertices: Vec<VertexId> = order.iter().map(|&i| g.vertices[i]).collect();
    vertices.sort_unstable();
    let mut edges: Vec<_> = g.edges.iter().filter(|&&(a, b, _)| hot[a] && hot[b]).map(|&(_, _, e)| e).collect();
    edges.sort_unstable();
    HotSubgraph { vertices, edges }
}

/// Items of the hot subgraph at quantile `q` that `dc` does not hold yet.
pub fn precache_hot(
    graph: &Graph,
    part: &Partitioning,
    placement: &PlacementState,
    demand: &DemandMatrix,
    dc: DcId,
    params: &DhdParams,
    q: f64,
) -> Result<PrecacheResult, PlacementError> {
    let (g, heat) = steady_heat(graph, part, demand, dc, params)?;
    let hot = select_hot(&g, &heat.heat, q);
    let mut items: Vec<ItemId> = hot.vertices.iter().map(|&v| graph.vertex_item(v)).chain(hot.edges.iter().map(|&e| graph.edge_item(e))).collect();
    items.retain(|&x| placement.is_live(x) && !placement.holds(x, dc));
    items.sort_unstable();
    Ok(PrecacheResult { dc, items, graph: g, heat })
}

/// Share of pre-cached copies that `eval` actually reads at their site,
/// pooled over all sites. `None` when nothing was cached.
pub fn hit_rate(results: &[PrecacheResult], eval: &DemandMatrix) -> Option<f64> {
    let cached: usize = results.iter().map(|r| r.items.len()).sum();
    if cached == 0 {
        return None;
    }
    let hits = results.iter().map(|r| r.items.iter().filter(|&&x| eval.read_rate(x, r.dc) > 0.0).count()).sum::<usize>();
    Some(hits as f64 / cached as f64)
}

/// Cached copies at one site and the heat that keeps them alive.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheState {
    pub dc: DcId,
    pub graph: HeatGraph,
    pub heat: HeatState,
    pub theta_c: f64,
    pub cached: BTreeSet<ItemId>,
    index: BTreeMap<VertexId, usize>,
}

impl CacheState {
    /// Starts from a pre-caching result. The eviction threshold is the
    /// `theta_c_quantile` of the cached vertices' heat and stays fixed.
    pub fn new(result: &PrecacheResult, graph: &Graph, theta_c_quantile: f64) -> Self {
        let index: BTreeMap<VertexId, usize> = result.graph.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let cached: BTreeSet<ItemId> = result.items.iter().copied().collect();
        let heats: Vec<f64> = cached
            .iter()
            .flat_map(|&x| graph.item_vertices(x))
            .flatten()
            .filter_map(|v| index.get(&v).map(|&i| result.heat.heat[i]))
            .collect();
        let theta_c = if heats.is_empty() { 0.0 } else { heat_quantile(&heats, theta_c_quantile) };
        CacheState { dc: result.dc, graph: result.graph.clone(), heat: result.heat.clone(), theta_c, cached, index }
    }

    pub fn with_threshold(mut self, theta_c: f64) -> Self {
        self.theta_c = theta_c;
        self
    }

    pub fn heat_of(&self, v: VertexId) -> Option<f64> {
        self.index.get(&v).map(|&i| self.heat.heat[i])
    }
}

/// Adds the batch's reads as heat, runs one diffusion sweep and evicts
/// cached copies whose heat fell below the threshold. A cached edge goes
/// with either endpoint. Returns the evicted items, ascending.
pub fn evict_cold(cache: &mut CacheState, graph: &Graph, batch: &[(ItemId, f64)], params: &DhdParams) -> Result<Vec<ItemId>, PlacementError> {
    for &(x, r) in batch {
        let vs: Vec<VertexId> = graph.item_vertices(x).into_iter().flatten().collect();
        let share = r / vs.len() as f64;
        for v in vs {
            if let Some(&i) = cache.index.get(&v) {
                cache.heat.heat[i] += share;
            }
        }
    }
    cache.heat = vertex_step(&cache.graph, &cache.heat, params)?;
    let cold = |v: VertexId| cache.index.get(&v).is_some_and(|&i| cache.heat.heat[i] < cache.theta_c);
    let mut evicted = Vec::new();
    for &x in &cache.cached {
        let out = match graph.item(x).kind {
            ItemKind::Vertex(v) => cold(v),
            ItemKind::Edge(e) => {
                let edge = graph.edge(e);
                cold(edge.u) || cold(edge.v)
            }
        };
        if out {
            evicted.push(x);
        }
    }
    for x in &evicted {
        cache.cached.remove(x);
    }
    Ok(evicted)
}
