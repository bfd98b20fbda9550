//! Latency layers over the cross-partition edges, the bridge subgraphs that
//! merge lower-layer components, and the data center groups they induce.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{extract_boundary, Graph, Partitioning};
use crate::ids::{DcId, DcSet, EdgeId, VertexId};
use crate::wan::WanProfile;

#[derive(Debug, Error, PartialEq)]
pub enum LayerError {
    #[error("latency thresholds must be positive and strictly increasing")]
    BadThresholds,
    #[error("layer interval must be positive, got {0} ms")]
    BadInterval(f64),
    #[error("partition has {part} data centers but the WAN profile has {wan}")]
    DcMismatch { part: usize, wan: usize },
}

/// Cut points t_1 < ... < t_{h-1} in seconds. Layer k covers
/// [t_{k-1}, t_k) with t_0 = 0 and t_h = infinity.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyThresholds {
    cuts: Vec<f64>,
}

impl LatencyThresholds {
    pub fn new(cuts: Vec<f64>) -> Result<Self, LayerError> {
        let mut prev = 0.0;
        for &c in &cuts {
            if !(c.is_finite() && c > prev) {
                return Err(LayerError::BadThresholds);
            }
            prev = c;
        }
        Ok(LatencyThresholds { cuts })
    }

    /// `layers` layers of `interval_ms` each, the last one unbounded.
    pub fn uniform(interval_ms: f64, layers: usize) -> Result<Self, LayerError> {
        if !(interval_ms.is_finite() && interval_ms > 0.0) {
            return Err(LayerError::BadInterval(interval_ms));
        }
        let cuts = (1..layers.max(1)).map(|i| interval_ms * i as f64 / 1000.0).collect();
        LatencyThresholds::new(cuts)
    }

    /// Enough uniform layers that the slowest link sits below the top layer.
    pub fn for_profile(wan: &WanProfile, interval_ms: f64) -> Result<Self, LayerError> {
        if !(interval_ms.is_finite() && interval_ms > 0.0) {
            return Err(LayerError::BadInterval(interval_ms));
        }
        let slowest_ms = wan.max_rtt_s() * 1000.0;
        let layers = (slowest_ms / interval_ms).floor() as usize + 2;
        LatencyThresholds::uniform(interval_ms, layers)
    }

    /// Number of layers h.
    pub fn layer_count(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn layer_of(&self, latency: f64) -> usize {
        self.cuts.iter().take_while(|&&c| latency >= c).count() + 1
    }

    /// [lower, upper) of layer `k` (1-based).
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k <= 1 { 0.0 } else { self.cuts[k - 2] };
        let hi = self.cuts.get(k - 1).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }
}

pub fn layer_of_latency(latency: f64, thresholds: &LatencyThresholds) -> usize {
    thresholds.layer_of(latency)
}

/// Latency of every cross-partition edge: the RTT of the link between the
/// endpoints' data centers (slower direction if asymmetric).
pub fn assign_latency(graph: &Graph, part: &Partitioning, wan: &WanProfile) -> BTreeMap<EdgeId, f64> {
    extract_boundary(graph, part)
        .cross_edges
        .into_iter()
        .map(|e| {
            let edge = graph.edge(e);
            let (a, b) = (part.dc_of(edge.u), part.dc_of(edge.v));
            (e, wan.link(a, b).rtt_s().max(wan.link(b, a).rtt_s()))
        })
        .collect()
}

/// Cross edges of one latency layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGraph {
    /// 1-based.
    pub index: usize,
    pub edges: Vec<EdgeId>,
    pub boundary_vertices: BTreeSet<VertexId>,
    /// Edges joining vertices that were already connected below this layer,
    /// attached to the node owning that component.
    pub attached: Vec<(EdgeId, Node)>,
}

/// A connected piece of one data center's local subgraph.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalComponent {
    pub id: usize,
    pub dc: DcId,
    pub vertices: Vec<VertexId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Local(usize),
    Bridge(usize),
}

/// Layer edges that merge two or more lower components into one.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeSubgraph {
    pub id: usize,
    pub layer: usize,
    pub edges: Vec<EdgeId>,
    /// The merged lower components (the cluster this subgraph links).
    pub members: Vec<Node>,
    pub parent: Option<usize>,
    pub dcs: DcSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster<'a> {
    pub linking: usize,
    pub members: &'a [Node],
}

#[derive(Clone, Debug)]
pub struct LayeredGraph {
    pub thresholds: LatencyThresholds,
    pub edge_latency: BTreeMap<EdgeId, f64>,
    pub layers: Vec<LayerGraph>,
    pub locals: Vec<LocalComponent>,
    pub bridges: Vec<BridgeSubgraph>,
    local_parent: Vec<Option<usize>>,
    /// dc_group[j][d]: group of site d once layers 1..=j are joined.
    dc_group: Vec<Vec<usize>>,
    group_dcs: Vec<Vec<DcSet>>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    /// Keeps the smaller root.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

pub fn build_layers(graph: &Graph, part: &Partitioning, wan: &WanProfile, thresholds: &LatencyThresholds) -> Result<LayeredGraph, LayerError> {
    if part.dc_count() != wan.dc_count() {
        return Err(LayerError::DcMismatch { part: part.dc_count(), wan: wan.dc_count() });
    }
    let edge_latency = assign_latency(graph, part, wan);
    let h = thresholds.layer_count();
    let mut layers: Vec<LayerGraph> =
        (1..=h).map(|index| LayerGraph { index, edges: Vec::new(), boundary_vertices: BTreeSet::new(), attached: Vec::new() }).collect();
    for (&e, &lat) in &edge_latency {
        let k = thresholds.layer_of(lat);
        let layer = &mut layers[k - 1];
        layer.edges.push(e);
        let edge = graph.edge(e);
        layer.boundary_vertices.insert(edge.u);
        layer.boundary_vertices.insert(edge.v);
    }
    let mut out = build_bridge_subgraphs(graph, part, thresholds.clone(), edge_latency, layers);
    out.dc_group = Vec::with_capacity(h + 1);
    out.group_dcs = Vec::with_capacity(h + 1);
    let n = part.dc_count();
    let mut uf = UnionFind::new(n);
    for j in 0..=h {
        if j > 0 {
            for &e in &out.layers[j - 1].edges {
                let edge = graph.edge(e);
                uf.union(part.dc_of(edge.u).index(), part.dc_of(edge.v).index());
            }
        }
        let mut roots: BTreeMap<usize, usize> = BTreeMap::new();
        let mut groups = vec![0; n];
        let mut sets: Vec<DcSet> = Vec::new();
        for (d, slot) in groups.iter_mut().enumerate() {
            let r = uf.find(d);
            let g = *roots.entry(r).or_insert_with(|| {
                sets.push(DcSet::EMPTY);
                sets.len() - 1
            });
            *slot = g;
            sets[g].insert(DcId::from_index(d));
        }
        out.dc_group.push(groups);
        out.group_dcs.push(sets);
    }
    Ok(out)
}

/// Groups each layer's edges into bridge subgraphs over the components of
/// the graph aggregated from all lower layers.
pub fn build_bridge_subgraphs(
    graph: &Graph,
    part: &Partitioning,
    thresholds: LatencyThresholds,
    edge_latency: BTreeMap<EdgeId, f64>,
    mut layers: Vec<LayerGraph>,
) -> LayeredGraph {
    let n = graph.vertex_count();
    let mut uf = UnionFind::new(n);
    for edge in graph.edges() {
        if part.dc_of(edge.u) == part.dc_of(edge.v) {
            uf.union(edge.u.index(), edge.v.index());
        }
    }
    let mut locals: Vec<LocalComponent> = Vec::new();
    let mut top: BTreeMap<usize, Node> = BTreeMap::new();
    for v in 0..n {
        let r = uf.find(v);
        let node = *top.entry(r).or_insert_with(|| {
            locals.push(LocalComponent { id: locals.len(), dc: part.dc_of(VertexId::from_index(v)), vertices: Vec::new() });
            Node::Local(locals.len() - 1)
        });
        if let Node::Local(c) = node {
            locals[c].vertices.push(VertexId::from_index(v));
        }
    }
    let mut local_parent = vec![None; locals.len()];
    let mut bridges: Vec<BridgeSubgraph> = Vec::new();

    for layer in layers.iter_mut() {
        // contracted endpoints, before any merge at this layer
        let ends: Vec<(EdgeId, usize, usize)> = layer
            .edges
            .iter()
            .map(|&e| {
                let edge = graph.edge(e);
                (e, uf.find(edge.u.index()), uf.find(edge.v.index()))
            })
            .collect();
        let mut local_uf: BTreeMap<usize, usize> = BTreeMap::new();
        fn lfind(m: &mut BTreeMap<usize, usize>, x: usize) -> usize {
            let mut r = x;
            while let Some(&p) = m.get(&r) {
                if p == r {
                    break;
                }
                r = p;
            }
            m.insert(x, r);
            r
        }
        for &(_, a, b) in &ends {
            local_uf.entry(a).or_insert(a);
            local_uf.entry(b).or_insert(b);
            let (ra, rb) = (lfind(&mut local_uf, a), lfind(&mut local_uf, b));
            if ra != rb {
                local_uf.insert(ra.max(rb), ra.min(rb));
            }
        }
        let mut groups: BTreeMap<usize, (Vec<EdgeId>, BTreeSet<usize>)> = BTreeMap::new();
        for &(e, a, b) in &ends {
            let g = lfind(&mut local_uf, a);
            let entry = groups.entry(g).or_default();
            entry.0.push(e);
            entry.1.insert(a);
            entry.1.insert(b);
        }
        let mut ordered: Vec<(Vec<EdgeId>, BTreeSet<usize>)> = groups.into_values().collect();
        ordered.sort_by_key(|(edges, _)| edges[0]);
        for (edges, roots) in ordered {
            if roots.len() < 2 {
                let owner = top[roots.iter().next().expect("group has a root")];
                layer.attached.extend(edges.into_iter().map(|e| (e, owner)));
                continue;
            }
            let id = bridges.len();
            let mut members: Vec<Node> = roots.iter().map(|r| top[r]).collect();
            members.sort();
            let mut dcs = DcSet::EMPTY;
            for m in &members {
                match *m {
                    Node::Local(c) => {
                        local_parent[c] = Some(id);
                        dcs.insert(locals[c].dc);
                    }
                    Node::Bridge(b) => {
                        bridges[b].parent = Some(id);
                        dcs = dcs.union(bridges[b].dcs);
                    }
                }
            }
            let first = *roots.iter().next().unwrap();
            for &r in roots.iter().skip(1) {
                uf.union(first, r);
            }
            top.retain(|r, _| !roots.contains(r));
            top.insert(uf.find(first), Node::Bridge(id));
            bridges.push(BridgeSubgraph { id, layer: layer.index, edges, members, parent: None, dcs });
        }
    }
    LayeredGraph { thresholds, edge_latency, layers, locals, bridges, local_parent, dc_group: Vec::new(), group_dcs: Vec::new() }
}

impl LayeredGraph {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, k: usize) -> &LayerGraph {
        &self.layers[k - 1]
    }

    pub fn clusters(&self, k: usize) -> Vec<Cluster<'_>> {
        self.bridges.iter().filter(|b| b.layer == k).map(|b| Cluster { linking: b.id, members: &b.members }).collect()
    }

    pub fn parent(&self, node: Node) -> Option<usize> {
        match node {
            Node::Local(c) => self.local_parent[c],
            Node::Bridge(b) => self.bridges[b].parent,
        }
    }

    pub fn layer_of_node(&self, node: Node) -> usize {
        match node {
            Node::Local(_) => 0,
            Node::Bridge(b) => self.bridges[b].layer,
        }
    }

    /// Vertices covered by a node.
    pub fn node_vertices(&self, node: Node) -> BTreeSet<VertexId> {
        match node {
            Node::Local(c) => self.locals[c].vertices.iter().copied().collect(),
            Node::Bridge(b) => self.bridges[b].members.iter().flat_map(|&m| self.node_vertices(m)).collect(),
        }
    }

    /// Nodes that are components of the graph aggregated up to layer `k`:
    /// those formed at layer <= k whose parent (if any) sits above k.
    pub fn components_at(&self, k: usize) -> Vec<Node> {
        let mut out: Vec<Node> = (0..self.locals.len()).map(Node::Local).chain((0..self.bridges.len()).map(Node::Bridge)).collect();
        out.retain(|&n| self.layer_of_node(n) <= k && self.parent(n).is_none_or(|p| self.bridges[p].layer > k));
        out
    }

    /// Roots of the hierarchy forest.
    pub fn roots(&self) -> Vec<Node> {
        self.components_at(self.layer_count())
    }

    /// Site groups: level 0 is one group per site; level j joins sites
    /// linked by cross edges of layers 1..=j.
    pub fn group_of(&self, level: usize, dc: DcId) -> usize {
        self.dc_group[level][dc.index()]
    }

    pub fn group_dcs(&self, level: usize, group: usize) -> DcSet {
        self.group_dcs[level][group]
    }

    pub fn group_count(&self, level: usize) -> usize {
        self.group_dcs[level].len()
    }

    /// Sites sharing `dc`'s group at `level`.
    pub fn cluster_of(&self, level: usize, dc: DcId) -> DcSet {
        self.group_dcs(level, self.group_of(level, dc))
    }

    /// Groups one level down that make up `group`.
    pub fn child_groups(&self, level: usize, group: usize) -> Vec<usize> {
        assert!(level > 0);
        let mut out: Vec<usize> = self.group_dcs(level, group).iter().map(|d| self.group_of(level - 1, d)).collect();
        out.dedup();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Mean latency of the cross edges in layer `k`, if any.
    pub fn mean_latency(&self, k: usize) -> Option<f64> {
        let edges = &self.layers[k - 1].edges;
        if edges.is_empty() {
            return None;
        }
        Some(edges.iter().map(|e| self.edge_latency[e]).sum::<f64>() / edges.len() as f64)
    }

    /// Highest layer holding at least one edge.
    pub fn top_populated_layer(&self) -> Option<usize> {
        self.layers.iter().rev().find(|l| !l.edges.is_empty()).map(|l| l.index)
    }

    /// Human-readable dump of layers and bridge subgraphs.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for layer in &self.layers {
            let (lo, hi) = self.thresholds.bounds(layer.index);
            let _ = writeln!(s, "layer {} [{lo}, {hi}) edges={} boundary={}", layer.index, layer.edges.len(), layer.boundary_vertices.len());
            for b in self.bridges.iter().filter(|b| b.layer == layer.index) {
                let members: Vec<String> = b
                    .members
                    .iter()
                    .map(|m| match m {
                        Node::Local(c) => format!("L{c}"),
                        Node::Bridge(x) => format!("B{x}"),
                    })
                    .collect();
                let edges: Vec<String> = b.edges.iter().map(|e| e.to_string()).collect();
                let _ = writeln!(s, "  bridge {} edges=[{}] members=[{}] sites={:?}", b.id, edges.join(" "), members.join(" "), b.dcs.iter().map(|d| d.0).collect::<Vec<_>>());
            }
            if !layer.attached.is_empty() {
                let _ = writeln!(s, "  attached={}", layer.attached.len());
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wan::{DataCenter, LinkProfile};

    pub(crate) fn six_site_wan() -> WanProfile {
        // rtt (ms): 0-1 50, 2-3 60, 0-2 150, 1-3 170, 4-5 40, 0-4 250, others 280
        let n = 6;
        let dcs = (0..n)
            .map(|i| DataCenter { id: format!("dc{}", i + 1), region: "r".into(), store_price: 0.02, read_price: 0.4, write_price: 5.0 })
            .collect();
        let rtt = |a: usize, b: usize| -> f64 {
            let (a, b) = (a.min(b), a.max(b));
            match (a, b) {
                (0, 1) => 50.0,
                (2, 3) => 60.0,
                (0, 2) => 150.0,
                (1, 3) => 170.0,
                (4, 5) => 40.0,
                (0, 4) => 250.0,
                _ => 280.0,
            }
        };
        let mut links = Vec::new();
        for a in 0..n {
            for b in 0..n {
                links.push(LinkProfile { rtt_ms: if a == b { 0.0 } else { rtt(a, b) }, bandwidth_mbps: 100.0, price_per_gb: 0.05 });
            }
        }
        WanProfile::new(dcs, links).unwrap()
    }

    /// Eighteen vertices, three per site; vertex labels are 1-based.
    pub(crate) fn eighteen_vertex_fixture() -> (Graph, Partitioning, WanProfile) {
        let wan = six_site_wan();
        let mut edges = Vec::new();
        for d in 0..6 {
            let b = 3 * d;
            edges.push((b, b + 1));
            edges.push((b + 1, b + 2));
        }
        // cross edges: (1,4), (4,2) between sites 1 and 2
        edges.push((0, 3));
        edges.push((3, 1));
        edges.push((7, 10)); // sites 3-4
        edges.push((13, 16)); // sites 5-6
        edges.push((2, 8)); // sites 1-3
        edges.push((5, 11)); // sites 2-4
        edges.push((1, 12)); // sites 1-5
        let labels = (1..=18).map(|i| i.to_string()).collect();
        let g = Graph::from_labelled(labels, &edges.into_iter().map(|(a, b)| (a, b, 1.0)).collect::<Vec<_>>()).unwrap();
        let assignment = (0..18).map(|v| DcId((v / 3) as u16)).collect();
        let part = Partitioning::new(&g, wan.dc_ids(), assignment).unwrap();
        (g, part, wan)
    }

    #[test]
    fn layer_lookup_examples() {
        let t = LatencyThresholds::uniform(100.0, 4).unwrap();
        assert_eq!(t.layer_of(0.1), 2);
        assert_eq!(t.layer_of(0.05), 1);
        assert_eq!(t.layer_of(0.25), 3);
        assert_eq!(t.layer_of(0.35), 4);
        assert_eq!(t.layer_of(0.3), 4);
        assert_eq!(t.layer_of(10.0), 4);
        assert_eq!(t.bounds(4), (0.3, f64::INFINITY));
    }

    #[test]
    fn bad_thresholds_rejected() {
        assert_eq!(LatencyThresholds::new(vec![0.2, 0.1]), Err(LayerError::BadThresholds));
        assert!(LatencyThresholds::uniform(0.0, 3).is_err());
    }

    #[test]
    fn profile_layers_cover_slowest_link() {
        let wan = WanProfile::bundled("alibaba-5dc").unwrap();
        let t = LatencyThresholds::for_profile(&wan, 100.0).unwrap();
        assert_eq!(t.layer_count(), 4);
        assert_eq!(t.layer_of(0.069), 1);
        assert_eq!(t.layer_of(0.136), 2);
        assert_eq!(t.layer_of(0.256), 3);
    }

    #[test]
    fn eighteen_vertex_example() {
        let (g, part, wan) = eighteen_vertex_fixture();
        let boundary = extract_boundary(&g, &part);
        assert!(part.vertices_of(DcId(0)).len() == 3 && (0..6).all(|d| !part.vertices_of(DcId(d)).is_empty()));
        let e14 = g.edge_between(g.find_vertex("1").unwrap(), g.find_vertex("4").unwrap()).unwrap();
        let e42 = g.edge_between(g.find_vertex("4").unwrap(), g.find_vertex("2").unwrap()).unwrap();
        assert!(boundary.cross_edges.contains(&e14) && boundary.cross_edges.contains(&e42));

        let t = LatencyThresholds::uniform(100.0, 4).unwrap();
        let lg = build_layers(&g, &part, &wan, &t).unwrap();
        let first = lg.bridges.iter().find(|b| b.edges.contains(&e14)).unwrap();
        assert_eq!(first.layer, 1);
        assert!(first.edges.contains(&e42));
        assert_eq!(first.dcs, [DcId(0), DcId(1)].into_iter().collect());
        // layer 1: {1,2}, {3,4}, {5,6}; layer 2 joins {1,2} with {3,4}; layer 3 adds {5,6}
        assert_eq!(lg.clusters(1).len(), 3);
        assert_eq!(lg.clusters(2).len(), 1);
        assert_eq!(lg.clusters(3).len(), 1);
        assert_eq!(lg.roots().len(), 1);
        assert_eq!(lg.group_count(1), 3);
        assert_eq!(lg.group_count(2), 2);
        assert_eq!(lg.group_count(3), 1);
    }

    #[test]
    fn no_cross_edges_means_every_site_is_a_root() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let wan = six_site_wan().subset(&[DcId(0), DcId(1)]).unwrap();
        let part = Partitioning::new(&g, wan.dc_ids(), vec![DcId(0), DcId(0), DcId(1), DcId(1)]).unwrap();
        let lg = build_layers(&g, &part, &wan, &LatencyThresholds::uniform(100.0, 3).unwrap()).unwrap();
        assert!(lg.bridges.is_empty());
        assert!(lg.layers.iter().all(|l| l.edges.is_empty()));
        assert_eq!(lg.roots(), vec![Node::Local(0), Node::Local(1)]);
    }

    #[test]
    fn edge_within_merged_component_is_attached() {
        // 0-1 and 2-3 join at layer 1, layer 2 joins the pairs, and the
        // layer 3 edge 0-3 merges nothing new.
        let wan = six_site_wan().subset(&[DcId(0), DcId(1), DcId(2), DcId(3)]).unwrap();
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0), (0, 2, 1.0), (1, 3, 1.0), (0, 3, 1.0)]).unwrap();
        let part = Partitioning::new(&g, wan.dc_ids(), (0..4).map(DcId).collect()).unwrap();
        let lg = build_layers(&g, &part, &wan, &LatencyThresholds::uniform(100.0, 4).unwrap()).unwrap();
        assert_eq!(lg.bridges.len(), 3);
        assert_eq!(lg.bridges[2].layer, 2);
        assert_eq!(lg.bridges[2].edges.len(), 2);
        assert_eq!(lg.layer(3).attached, vec![(EdgeId(4), Node::Bridge(2))]);
        assert_eq!(lg.roots(), vec![Node::Bridge(2)]);
    }

    #[test]
    fn child_groups_partition_parent() {
        let (g, part, wan) = eighteen_vertex_fixture();
        let lg = build_layers(&g, &part, &wan, &LatencyThresholds::uniform(100.0, 4).unwrap()).unwrap();
        for level in 1..=lg.layer_count() {
            for grp in 0..lg.group_count(level) {
                let mut union = DcSet::EMPTY;
                for c in lg.child_groups(level, grp) {
                    union = union.union(lg.group_dcs(level - 1, c));
                }
                assert_eq!(union, lg.group_dcs(level, grp));
            }
        }
    }
}
