//! Graph data model: vertices, edges, the data items they become, and the
//! partitioning of vertices onto data centers.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ids::{DcId, EdgeId, ItemId, PatternId, VertexId, MAX_DCS};

pub const DEFAULT_VERTEX_BYTES: u64 = 4_096;
pub const DEFAULT_EDGE_BYTES: u64 = 512;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("vertex {0} has no data center assignment")]
    UnassignedVertex(String),
    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },
    #[error("self loop on vertex {0}")]
    SelfLoop(String),
    #[error("duplicate edge {0} - {1}")]
    DuplicateEdge(String, String),
    #[error("vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("edge weight must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("unknown data center label {0}")]
    UnknownDc(String),
    #[error("too many data centers ({0}, limit {MAX_DCS})")]
    TooManyDcs(usize),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("no edge between vertices {0} and {1}")]
    NotAnEdge(VertexId, VertexId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemKind {
    Vertex(VertexId),
    Edge(EdgeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataItem {
    pub id: ItemId,
    pub kind: ItemKind,
    pub size_bytes: u64,
}

/// Undirected edge; `u`/`v` keep the orientation they had in the source file.
/// `weight` is the thermal conductivity used by heat diffusion.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub u: VertexId,
    pub v: VertexId,
    pub weight: f64,
}

impl Edge {
    pub fn other(&self, x: VertexId) -> VertexId {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Clone, Debug)]
pub struct Graph {
    labels: Vec<String>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(VertexId, EdgeId)>>,
    items: Vec<DataItem>,
    vertex_item: Vec<ItemId>,
    edge_item: Vec<ItemId>,
}

impl Graph {
    /// Builds a graph over `vertex_count` vertices labelled by their index.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize, f64)]) -> Result<Graph, GraphError> {
        let labels = (0..vertex_count).map(|i| i.to_string()).collect();
        Graph::from_labelled(labels, edges)
    }

    pub fn from_labelled(labels: Vec<String>, edges: &[(usize, usize, f64)]) -> Result<Graph, GraphError> {
        let n = labels.len();
        let mut g = Graph {
            adjacency: vec![Vec::new(); n],
            labels,
            edges: Vec::with_capacity(edges.len()),
            items: Vec::with_capacity(n + edges.len()),
            vertex_item: Vec::with_capacity(n),
            edge_item: Vec::with_capacity(edges.len()),
        };
        let mut seen = HashSet::new();
        for &(u, v, w) in edges {
            if u >= n {
                return Err(GraphError::VertexOutOfRange(u));
            }
            if v >= n {
                return Err(GraphError::VertexOutOfRange(v));
            }
            if u == v {
                return Err(GraphError::SelfLoop(g.labels[u].clone()));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::BadWeight(w));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::DuplicateEdge(g.labels[u].clone(), g.labels[v].clone()));
            }
            let e = EdgeId::from_index(g.edges.len());
            g.edges.push(Edge { u: VertexId::from_index(u), v: VertexId::from_index(v), weight: w });
            g.adjacency[u].push((VertexId::from_index(v), e));
            g.adjacency[v].push((VertexId::from_index(u), e));
        }
        for v in 0..n {
            let id = ItemId::from_index(g.items.len());
            g.items.push(DataItem { id, kind: ItemKind::Vertex(VertexId::from_index(v)), size_bytes: DEFAULT_VERTEX_BYTES });
            g.vertex_item.push(id);
        }
        for e in 0..g.edges.len() {
            let id = ItemId::from_index(g.items.len());
            g.items.push(DataItem { id, kind: ItemKind::Edge(EdgeId::from_index(e)), size_bytes: DEFAULT_EDGE_BYTES });
            g.edge_item.push(id);
        }
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn label(&self, v: VertexId) -> &str {
        &self.labels[v.index()]
    }

    pub fn find_vertex(&self, label: &str) -> Option<VertexId> {
        self.labels.iter().position(|l| l == label).map(VertexId::from_index)
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.index()]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        &self.adjacency[v.index()]
    }

    pub fn edge_between(&self, u: VertexId, v: VertexId) -> Option<EdgeId> {
        self.adjacency[u.index()].iter().find(|(w, _)| *w == v).map(|&(_, e)| e)
    }

    pub fn item(&self, id: ItemId) -> &DataItem {
        &self.items[id.index()]
    }

    pub fn get_item(&self, id: ItemId) -> Option<&DataItem> {
        self.items.get(id.index())
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn item_size(&self, id: ItemId) -> u64 {
        self.items[id.index()].size_bytes
    }

    pub fn vertex_item(&self, v: VertexId) -> ItemId {
        self.vertex_item[v.index()]
    }

    pub fn edge_item(&self, e: EdgeId) -> ItemId {
        self.edge_item[e.index()]
    }

    /// Vertices touched by an item: the vertex itself or both edge endpoints.
    pub fn item_vertices(&self, id: ItemId) -> [Option<VertexId>; 2] {
        match self.items[id.index()].kind {
            ItemKind::Vertex(v) => [Some(v), None],
            ItemKind::Edge(e) => {
                let edge = &self.edges[e.index()];
                [Some(edge.u), Some(edge.v)]
            }
        }
    }

    pub fn set_item_sizes(&mut self, vertex_bytes: u64, edge_bytes: u64) {
        for item in &mut self.items {
            item.size_bytes = match item.kind {
                ItemKind::Vertex(_) => vertex_bytes,
                ItemKind::Edge(_) => edge_bytes,
            };
        }
    }

    pub fn set_item_size(&mut self, id: ItemId, bytes: u64) {
        self.items[id.index()].size_bytes = bytes;
    }

    pub fn set_edge_weight(&mut self, e: EdgeId, w: f64) -> Result<(), GraphError> {
        if !(w.is_finite() && w > 0.0) {
            return Err(GraphError::BadWeight(w));
        }
        self.edges[e.index()].weight = w;
        Ok(())
    }

    pub fn insert_vertex(&mut self, label: String, size_bytes: u64) -> (VertexId, ItemId) {
        let v = VertexId::from_index(self.labels.len());
        self.labels.push(label);
        self.adjacency.push(Vec::new());
        let id = ItemId::from_index(self.items.len());
        self.items.push(DataItem { id, kind: ItemKind::Vertex(v), size_bytes });
        self.vertex_item.push(id);
        (v, id)
    }

    pub fn insert_edge(&mut self, u: VertexId, v: VertexId, weight: f64, size_bytes: u64) -> Result<(EdgeId, ItemId), GraphError> {
        let n = self.labels.len();
        if u.index() >= n {
            return Err(GraphError::VertexOutOfRange(u.index()));
        }
        if v.index() >= n {
            return Err(GraphError::VertexOutOfRange(v.index()));
        }
        if u == v {
            return Err(GraphError::SelfLoop(self.labels[u.index()].clone()));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(GraphError::BadWeight(weight));
        }
        if self.edge_between(u, v).is_some() {
            return Err(GraphError::DuplicateEdge(self.labels[u.index()].clone(), self.labels[v.index()].clone()));
        }
        let e = EdgeId::from_index(self.edges.len());
        self.edges.push(Edge { u, v, weight });
        self.adjacency[u.index()].push((v, e));
        self.adjacency[v.index()].push((u, e));
        let id = ItemId::from_index(self.items.len());
        self.items.push(DataItem { id, kind: ItemKind::Edge(e), size_bytes });
        self.edge_item.push(id);
        Ok((e, id))
    }

    /// Component label for every vertex, numbered by smallest member.
    pub fn components(&self) -> Vec<usize> {
        let n = self.vertex_count();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            queue.push_back(s);
            while let Some(x) = queue.pop_front() {
                for &(w, _) in &self.adjacency[x] {
                    if comp[w.index()] == usize::MAX {
                        comp[w.index()] = next;
                        queue.push_back(w.index());
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }
}

/// Assignment of every vertex to one data center.
#[derive(Clone, Debug, PartialEq)]
pub struct Partitioning {
    dc_labels: Vec<String>,
    assignment: Vec<DcId>,
}

impl Partitioning {
    pub fn new(graph: &Graph, dc_labels: Vec<String>, assignment: Vec<DcId>) -> Result<Partitioning, GraphError> {
        if dc_labels.len() > MAX_DCS {
            return Err(GraphError::TooManyDcs(dc_labels.len()));
        }
        if assignment.len() != graph.vertex_count() {
            let missing = graph.label(VertexId::from_index(assignment.len().min(graph.vertex_count().saturating_sub(1))));
            return Err(GraphError::UnassignedVertex(missing.to_string()));
        }
        if let Some(bad) = assignment.iter().find(|d| d.index() >= dc_labels.len()) {
            return Err(GraphError::UnknownDc(bad.to_string()));
        }
        Ok(Partitioning { dc_labels, assignment })
    }

    /// Partition with data centers labelled `dc0`, `dc1`, ...
    pub fn from_assignment(graph: &Graph, dc_count: usize, assignment: Vec<DcId>) -> Result<Partitioning, GraphError> {
        let labels = (0..dc_count).map(|i| format!("dc{i}")).collect();
        Partitioning::new(graph, labels, assignment)
    }

    pub fn dc_count(&self) -> usize {
        self.dc_labels.len()
    }

    pub fn dc_labels(&self) -> &[String] {
        &self.dc_labels
    }

    pub fn dc_of(&self, v: VertexId) -> DcId {
        self.assignment[v.index()]
    }

    pub fn assignment(&self) -> &[DcId] {
        &self.assignment
    }

    /// Home data center of an item. A cross-partition edge lives with its
    /// lower-numbered endpoint.
    pub fn home_of(&self, graph: &Graph, item: ItemId) -> DcId {
        match graph.item(item).kind {
            ItemKind::Vertex(v) => self.dc_of(v),
            ItemKind::Edge(e) => {
                let edge = graph.edge(e);
                self.dc_of(edge.u.min(edge.v))
            }
        }
    }

    pub fn vertices_of(&self, dc: DcId) -> Vec<VertexId> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == dc)
            .map(VertexId::from_index)
            .collect()
    }

    pub fn is_cross(&self, graph: &Graph, e: EdgeId) -> bool {
        let edge = graph.edge(e);
        self.dc_of(edge.u) != self.dc_of(edge.v)
    }

    /// Re-indexes data centers to follow `order` (typically the WAN profile's
    /// table). Labels not present in `order` are an error; data centers in
    /// `order` without vertices are allowed.
    pub fn with_dc_order(&self, order: &[String]) -> Result<Partitioning, GraphError> {
        if order.len() > MAX_DCS {
            return Err(GraphError::TooManyDcs(order.len()));
        }
        let index: HashMap<&str, usize> = order.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut remap = Vec::with_capacity(self.dc_labels.len());
        for label in &self.dc_labels {
            match index.get(label.as_str()) {
                Some(&i) => remap.push(DcId::from_index(i)),
                None => return Err(GraphError::UnknownDc(label.clone())),
            }
        }
        Ok(Partitioning {
            dc_labels: order.to_vec(),
            assignment: self.assignment.iter().map(|d| remap[d.index()]).collect(),
        })
    }

    /// Assigns a freshly inserted vertex.
    pub fn push_vertex(&mut self, dc: DcId) {
        self.assignment.push(dc);
    }
}

/// Per-DC view derived from a partitioning.
#[derive(Clone, Debug, PartialEq)]
pub struct Boundary {
    /// Vertices of each DC with at least one neighbour elsewhere.
    pub vertices: Vec<BTreeSet<VertexId>>,
    /// Edges whose endpoints live in different DCs, ascending.
    pub cross_edges: Vec<EdgeId>,
    /// Edges with both endpoints in the DC.
    pub internal_edges: Vec<Vec<EdgeId>>,
}

pub fn extract_boundary(graph: &Graph, part: &Partitioning) -> Boundary {
    let mut vertices = vec![BTreeSet::new(); part.dc_count()];
    let mut internal_edges = vec![Vec::new(); part.dc_count()];
    let mut cross_edges = Vec::new();
    for (i, edge) in graph.edges().iter().enumerate() {
        let e = EdgeId::from_index(i);
        let (du, dv) = (part.dc_of(edge.u), part.dc_of(edge.v));
        if du == dv {
            internal_edges[du.index()].push(e);
        } else {
            cross_edges.push(e);
            vertices[du.index()].insert(edge.u);
            vertices[dv.index()].insert(edge.v);
        }
    }
    Boundary { vertices, cross_edges, internal_edges }
}

fn read_file(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io { path: path.to_path_buf(), source })
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((i + 1, line.split_whitespace().collect()))
        }
    })
}

/// Loads `u v [weight]` edge lines and `vertex dc` partition lines.
/// Vertex ids are assigned in order of first appearance in the edge file;
/// data center ids in order of first appearance in the partition file.
pub fn load_graph(edge_path: &Path, partition_path: &Path) -> Result<(Graph, Partitioning), GraphError> {
    let edge_text = read_file(edge_path)?;
    let part_text = read_file(partition_path)?;

    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |label: &str, labels: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(label) {
            return i;
        }
        labels.push(label.to_string());
        index.insert(label.to_string(), labels.len() - 1);
        labels.len() - 1
    };

    let mut edges = Vec::new();
    for (line, fields) in data_lines(&edge_text) {
        let parse_err = |msg: String| GraphError::Parse { path: edge_path.to_path_buf(), line, msg };
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err(format!("expected `u v [weight]`, got {} fields", fields.len())));
        }
        let w = match fields.get(2) {
            Some(s) => s.parse::<f64>().map_err(|_| parse_err(format!("bad weight `{s}`")))?,
            None => 1.0,
        };
        let u = intern(fields[0], &mut labels);
        let v = intern(fields[1], &mut labels);
        edges.push((u, v, w));
    }

    let mut dc_labels: Vec<String> = Vec::new();
    let mut raw_assignment: BTreeMap<usize, usize> = BTreeMap::new();
    for (line, fields) in data_lines(&part_text) {
        let parse_err = |msg: String| GraphError::Parse { path: partition_path.to_path_buf(), line, msg };
        if fields.len() != 2 {
            return Err(parse_err(format!("expected `vertex dc`, got {} fields", fields.len())));
        }
        let v = intern(fields[0], &mut labels);
        let dc = match dc_labels.iter().position(|l| l == fields[1]) {
            Some(i) => i,
            None => {
                dc_labels.push(fields[1].to_string());
                dc_labels.len() - 1
            }
        };
        if raw_assignment.insert(v, dc).is_some() {
            return Err(parse_err(format!("vertex {} assigned twice", fields[0])));
        }
    }

    let graph = Graph::from_labelled(labels, &edges)?;
    let mut assignment = Vec::with_capacity(graph.vertex_count());
    for v in 0..graph.vertex_count() {
        match raw_assignment.get(&v) {
            Some(&dc) => assignment.push(DcId::from_index(dc)),
            None => return Err(GraphError::UnassignedVertex(graph.label(VertexId::from_index(v)).to_string())),
        }
    }
    let components = graph.component_count();
    if components > 1 {
        return Err(GraphError::Disconnected { components });
    }
    let part = Partitioning::new(&graph, dc_labels, assignment)?;
    Ok((graph, part))
}

/// A multi-hop query: the vertices and edges of one or more connected paths,
/// plus a latency tolerance factor `eta` in (0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub id: PatternId,
    /// Sorted, de-duplicated.
    pub items: Vec<ItemId>,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PatternViolation {
    #[error("pattern has no items")]
    Empty,
    #[error("eta {0} outside (0, 1]")]
    EtaOutOfRange(f64),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("edge item {edge} present without endpoint item {missing}")]
    DanglingEdge { edge: ItemId, missing: ItemId },
    #[error("item {0} is not connected to the rest of the pattern")]
    Disconnected(ItemId),
}

impl Pattern {
    pub fn new(id: PatternId, mut items: Vec<ItemId>, eta: f64) -> Pattern {
        items.sort_unstable();
        items.dedup();
        Pattern { id, items, eta }
    }

    /// Pattern covering a walk: its vertices plus the edges between
    /// consecutive steps.
    pub fn from_walk(id: PatternId, graph: &Graph, walk: &[VertexId], eta: f64) -> Result<Pattern, GraphError> {
        let mut items = Vec::with_capacity(walk.len() * 2);
        for (i, &v) in walk.iter().enumerate() {
            if v.index() >= graph.vertex_count() {
                return Err(GraphError::VertexOutOfRange(v.index()));
            }
            items.push(graph.vertex_item(v));
            if i > 0 {
                let e = graph.edge_between(walk[i - 1], v).ok_or(GraphError::NotAnEdge(walk[i - 1], v))?;
                items.push(graph.edge_item(e));
            }
        }
        Ok(Pattern::new(id, items, eta))
    }

    pub fn size_bytes(&self, graph: &Graph) -> u64 {
        self.items.iter().map(|&x| graph.item_size(x)).sum()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    /// Vertices touched by the pattern, including edge endpoints.
    pub fn vertices(&self, graph: &Graph) -> BTreeSet<VertexId> {
        self.items.iter().flat_map(|&x| graph.item_vertices(x)).flatten().collect()
    }
}

/// Checks that a pattern's items form one connected structure: every edge
/// item brings its endpoint items, and all items are reachable from the first.
pub fn validate_pattern(graph: &Graph, pattern: &Pattern) -> Result<(), PatternViolation> {
    if pattern.items.is_empty() {
        return Err(PatternViolation::Empty);
    }
    if !(pattern.eta > 0.0 && pattern.eta <= 1.0) {
        return Err(PatternViolation::EtaOutOfRange(pattern.eta));
    }
    for &x in &pattern.items {
        if graph.get_item(x).is_none() {
            return Err(PatternViolation::UnknownItem(x));
        }
    }
    let vertex_set: BTreeSet<VertexId> = pattern
        .items
        .iter()
        .filter_map(|&x| match graph.item(x).kind {
            ItemKind::Vertex(v) => Some(v),
            ItemKind::Edge(_) => None,
        })
        .collect();
    let mut adj: BTreeMap<VertexId, Vec<VertexId>> = vertex_set.iter().map(|&v| (v, Vec::new())).collect();
    for &x in &pattern.items {
        if let ItemKind::Edge(e) = graph.item(x).kind {
            let edge = graph.edge(e);
            for end in [edge.u, edge.v] {
                if !vertex_set.contains(&end) {
                    return Err(PatternViolation::DanglingEdge { edge: x, missing: graph.vertex_item(end) });
                }
            }
            adj.get_mut(&edge.u).unwrap().push(edge.v);
            adj.get_mut(&edge.v).unwrap().push(edge.u);
        }
    }
    let start = *vertex_set.iter().next().ok_or(PatternViolation::Empty)?;
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[&v] {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    if let Some(&v) = vertex_set.iter().find(|v| !seen.contains(v)) {
        return Err(PatternViolation::Disconnected(graph.vertex_item(v)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn path_graph(n: usize) -> Graph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn items_are_vertices_then_edges() {
        let g = path_graph(4);
        assert_eq!(g.item_count(), 7);
        assert_eq!(g.vertex_item(VertexId(3)), ItemId(3));
        assert_eq!(g.edge_item(EdgeId(0)), ItemId(4));
        assert_eq!(g.item(ItemId(5)).kind, ItemKind::Edge(EdgeId(1)));
    }

    #[test]
    fn load_assigns_ids_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let e = write_tmp(&dir, "g.edges", "# comment\nb a\na c 2.5\n");
        let p = write_tmp(&dir, "g.part", "a east\nb west\nc east\n");
        let (g, part) = load_graph(&e, &p).unwrap();
        assert_eq!(g.label(VertexId(0)), "b");
        assert_eq!(g.label(VertexId(1)), "a");
        assert_eq!(g.edge(EdgeId(1)).weight, 2.5);
        assert_eq!(g.edge(EdgeId(0)).weight, 1.0);
        assert_eq!(part.dc_labels(), &["east".to_string(), "west".to_string()]);
        assert_eq!(part.dc_of(VertexId(0)), DcId(1));
    }

    #[test]
    fn load_rejects_unassigned_vertex() {
        let dir = tempfile::tempdir().unwrap();
        let e = write_tmp(&dir, "g.edges", "a b\nb c\n");
        let p = write_tmp(&dir, "g.part", "a x\nb x\n");
        match load_graph(&e, &p) {
            Err(GraphError::UnassignedVertex(v)) => assert_eq!(v, "c"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_disconnected() {
        let dir = tempfile::tempdir().unwrap();
        let e = write_tmp(&dir, "g.edges", "a b\nc d\n");
        let p = write_tmp(&dir, "g.part", "a x\nb x\nc y\nd y\n");
        assert!(matches!(load_graph(&e, &p), Err(GraphError::Disconnected { components: 2 })));
    }

    #[test]
    fn load_reports_missing_file_path() {
        let err = load_graph(Path::new("/nonexistent/g.edges"), Path::new("/nonexistent/g.part")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/g.edges"));
    }

    #[test]
    fn boundary_of_two_dc_split() {
        // 0-1-2-3 with {0,1} in dc0 and {2,3} in dc1
        let g = path_graph(4);
        let part = Partitioning::from_assignment(&g, 2, vec![DcId(0), DcId(0), DcId(1), DcId(1)]).unwrap();
        let b = extract_boundary(&g, &part);
        assert_eq!(b.cross_edges, vec![EdgeId(1)]);
        assert_eq!(b.vertices[0], BTreeSet::from([VertexId(1)]));
        assert_eq!(b.vertices[1], BTreeSet::from([VertexId(2)]));
        assert_eq!(b.internal_edges[0], vec![EdgeId(0)]);
    }

    #[test]
    fn cross_edge_homed_at_smaller_endpoint() {
        let g = path_graph(4);
        let part = Partitioning::from_assignment(&g, 2, vec![DcId(0), DcId(0), DcId(1), DcId(1)]).unwrap();
        assert_eq!(part.home_of(&g, g.edge_item(EdgeId(1))), DcId(0));
        assert_eq!(part.home_of(&g, g.edge_item(EdgeId(2))), DcId(1));
    }

    #[test]
    fn single_dc_has_no_boundary() {
        let g = path_graph(5);
        let part = Partitioning::from_assignment(&g, 1, vec![DcId(0); 5]).unwrap();
        let b = extract_boundary(&g, &part);
        assert!(b.cross_edges.is_empty());
        assert!(b.vertices[0].is_empty());
    }

    #[test]
    fn reorder_dcs_to_profile() {
        let g = path_graph(3);
        let part = Partitioning::new(&g, vec!["b".into(), "a".into()], vec![DcId(0), DcId(1), DcId(1)]).unwrap();
        let re = part.with_dc_order(&["a".into(), "c".into(), "b".into()]).unwrap();
        assert_eq!(re.dc_of(VertexId(0)), DcId(2));
        assert_eq!(re.dc_of(VertexId(1)), DcId(0));
        assert!(part.with_dc_order(&["a".into()]).is_err());
    }

    #[test]
    fn walk_pattern_is_valid() {
        let g = path_graph(5);
        let p = Pattern::from_walk(PatternId(0), &g, &[VertexId(1), VertexId(2), VertexId(3)], 0.5).unwrap();
        assert_eq!(p.items.len(), 5);
        assert_eq!(validate_pattern(&g, &p), Ok(()));
    }

    #[test]
    fn disconnected_pattern_rejected() {
        let g = path_graph(6);
        let p = Pattern::new(PatternId(0), vec![ItemId(0), ItemId(5)], 0.5);
        assert_eq!(validate_pattern(&g, &p), Err(PatternViolation::Disconnected(ItemId(5))));
    }

    #[test]
    fn dangling_edge_rejected() {
        let g = path_graph(3);
        let e0 = g.edge_item(EdgeId(0));
        let p = Pattern::new(PatternId(0), vec![ItemId(0), e0], 0.5);
        assert_eq!(validate_pattern(&g, &p), Err(PatternViolation::DanglingEdge { edge: e0, missing: ItemId(1) }));
    }

    #[test]
    fn eta_range_checked() {
        let g = path_graph(2);
        let p = Pattern::new(PatternId(0), vec![ItemId(0)], 0.0);
        assert_eq!(validate_pattern(&g, &p), Err(PatternViolation::EtaOutOfRange(0.0)));
    }

    #[test]
    fn insert_items_append() {
        let mut g = path_graph(2);
        let (v, item) = g.insert_vertex("new".into(), 10);
        assert_eq!(v, VertexId(2));
        assert_eq!(item, ItemId(3));
        let (_, eitem) = g.insert_edge(VertexId(1), v, 1.0, 5).unwrap();
        assert_eq!(eitem, ItemId(4));
        assert!(g.insert_edge(VertexId(1), v, 1.0, 5).is_err());
        assert!(g.is_connected());
    }
}
