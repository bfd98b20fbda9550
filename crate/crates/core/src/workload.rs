//! Synthetic graphs and request traces: multi-hop random-walk patterns with
//! Zipf-skewed popularity, a share of written items, and per-pattern latency
//! requirements snapped to the latency layers.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use thiserror::Error;

use crate::cost::DemandMatrix;
use crate::graph::{Graph, GraphError, Partitioning, Pattern};
use crate::ids::{DcId, ItemId, PatternId, VertexId};
use crate::layered::LatencyThresholds;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload parameter: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WriteMode {
    /// `write_fraction` of the pattern items receive all `writes` records.
    Items,
    /// `write_fraction` of all records are writes (to any pattern item).
    Requests,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub patterns: usize,
    pub hops: usize,
    /// Popularity skew for walk sources, patterns and origins.
    pub zipf_exponent: f64,
    pub reads: usize,
    pub writes: usize,
    pub write_fraction: f64,
    pub write_mode: WriteMode,
    /// Distinct origin sites per pattern.
    pub origins_per_pattern: usize,
    /// Largest latency requirement allowed, seconds.
    pub gamma_max: f64,
    /// Fixes which vertices and sites are popular.
    pub ranking_seed: u64,
    /// Drives everything else.
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            patterns: 50,
            hops: 2,
            zipf_exponent: 1.0,
            reads: 2_000,
            writes: 200,
            write_fraction: 0.3,
            write_mode: WriteMode::Items,
            origins_per_pattern: 2,
            gamma_max: 0.4,
            ranking_seed: 7,
            seed: 11,
        }
    }
}

impl WorkloadSpec {
    fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::BadSpec(m.to_string()));
        if self.patterns == 0 {
            return bad("need at least one pattern");
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf exponent must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return bad("write fraction must lie in [0, 1]");
        }
        if self.write_mode == WriteMode::Requests && self.write_fraction >= 1.0 {
            return bad("write fraction of requests must be below 1");
        }
        if self.origins_per_pattern == 0 {
            return bad("patterns need at least one origin");
        }
        if !(self.gamma_max > 0.0) {
            return bad("gamma_max must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Read,
    Write,
}

/// One request. Reads name a pattern, writes name an item.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub seq: u64,
    pub origin: DcId,
    pub op: Op,
    pub object: u32,
    /// Latency requirement of the pattern, reads only.
    pub req_latency_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub patterns: Vec<Pattern>,
    /// Sites issuing each pattern.
    pub origins: Vec<Vec<DcId>>,
    pub trace: Vec<TraceRecord>,
}

fn zipf_index(rng: &mut ChaCha8Rng, dist: &Zipf<f64>) -> usize {
    dist.sample(rng) as usize - 1
}

/// Random walk of up to `hops` steps that never steps straight back.
pub fn random_walk(graph: &Graph, start: VertexId, hops: usize, rng: &mut impl Rng) -> Vec<VertexId> {
    let mut walk = vec![start];
    let mut prev: Option<VertexId> = None;
    let mut cur = start;
    for _ in 0..hops {
        let options: Vec<VertexId> = graph.neighbors(cur).iter().map(|&(w, _)| w).filter(|&w| Some(w) != prev).collect();
        let Some(&next) = options.choose(rng) else { break };
        prev = Some(cur);
        cur = next;
        walk.push(cur);
    }
    walk
}

/// Latency requirement for a pattern assigned to layer `k`: the middle of
/// that layer's interval (the unbounded top layer uses the previous width).
pub fn layer_requirement(thresholds: &LatencyThresholds, k: usize) -> f64 {
    let (lo, hi) = thresholds.bounds(k);
    if hi.is_finite() {
        (lo + hi) / 2.0
    } else {
        let width = if k >= 2 {
            let (plo, phi) = thresholds.bounds(k - 1);
            phi - plo
        } else {
            0.1
        };
        lo + width / 2.0
    }
}

pub fn generate(graph: &Graph, part: &Partitioning, thresholds: &LatencyThresholds, spec: &WorkloadSpec) -> Result<Workload, WorkloadError> {
    spec.validate()?;
    let n = graph.vertex_count();
    let dcs = part.dc_count();
    if n == 0 || dcs == 0 {
        return Err(WorkloadError::BadSpec("empty graph".into()));
    }
    let mut ranking_rng = ChaCha8Rng::seed_from_u64(spec.ranking_seed);
    let mut vertex_rank: Vec<VertexId> = (0..n).map(VertexId::from_index).collect();
    vertex_rank.shuffle(&mut ranking_rng);
    let mut dc_rank: Vec<DcId> = (0..dcs).map(DcId::from_index).collect();
    dc_rank.shuffle(&mut ranking_rng);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vertex_zipf = Zipf::new(n as f64, spec.zipf_exponent).map_err(|e| WorkloadError::BadSpec(e.to_string()))?;
    let dc_zipf = Zipf::new(dcs as f64, spec.zipf_exponent).map_err(|e| WorkloadError::BadSpec(e.to_string()))?;
    let pattern_zipf = Zipf::new(spec.patterns as f64, spec.zipf_exponent).map_err(|e| WorkloadError::BadSpec(e.to_string()))?;

    let eligible: Vec<usize> = (1..=thresholds.layer_count()).filter(|&k| layer_requirement(thresholds, k) <= spec.gamma_max).collect();
    if eligible.is_empty() {
        return Err(WorkloadError::BadSpec("gamma_max is below every layer's requirement".into()));
    }

    let mut patterns = Vec::with_capacity(spec.patterns);
    let mut origins = Vec::with_capacity(spec.patterns);
    let wanted_origins = spec.origins_per_pattern.min(dcs);
    for i in 0..spec.patterns {
        let source = vertex_rank[zipf_index(&mut rng, &vertex_zipf)];
        let walk = random_walk(graph, source, spec.hops, &mut rng);
        let k = *eligible.choose(&mut rng).expect("non-empty");
        let eta = (layer_requirement(thresholds, k) / spec.gamma_max).min(1.0);
        patterns.push(Pattern::from_walk(PatternId::from_index(i), graph, &walk, eta)?);
        let mut set = BTreeSet::new();
        while set.len() < wanted_origins {
            set.insert(dc_rank[zipf_index(&mut rng, &dc_zipf)]);
        }
        origins.push(set.into_iter().collect::<Vec<_>>());
    }

    let pattern_items: Vec<ItemId> = patterns.iter().flat_map(|p| p.items.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let (written, write_count) = match spec.write_mode {
        WriteMode::Items => {
            let count = (spec.write_fraction * pattern_items.len() as f64).ceil() as usize;
            let mut chosen: Vec<ItemId> = pattern_items.choose_multiple(&mut rng, count).copied().collect();
            chosen.sort_unstable();
            (chosen, if count == 0 { 0 } else { spec.writes })
        }
        WriteMode::Requests => {
            let w = (spec.reads as f64 * spec.write_fraction / (1.0 - spec.write_fraction)).round() as usize;
            (pattern_items.clone(), w)
        }
    };

    let total = spec.reads + write_count;
    let mut trace = Vec::with_capacity(total);
    let (mut reads_left, mut writes_left) = (spec.reads, write_count);
    for seq in 0..total as u64 {
        let is_write = writes_left > 0 && rng.random_range(0..reads_left + writes_left) < writes_left;
        if is_write {
            writes_left -= 1;
            let item = *written.choose(&mut rng).expect("written items exist");
            trace.push(TraceRecord { seq, origin: part.home_of(graph, item), op: Op::Write, object: item.0, req_latency_ms: None });
        } else {
            reads_left -= 1;
            let p = zipf_index(&mut rng, &pattern_zipf);
            let origin = *origins[p].choose(&mut rng).expect("pattern has origins");
            let req = patterns[p].eta * spec.gamma_max * 1000.0;
            trace.push(TraceRecord { seq, origin, op: Op::Read, object: p as u32, req_latency_ms: Some(req) });
        }
    }
    Ok(Workload { patterns, origins, trace })
}

/// Demand over the records whose `seq` falls in `window`.
pub fn aggregate(trace: &[TraceRecord], patterns: &[Pattern], window: Range<u64>) -> DemandMatrix {
    let mut demand = DemandMatrix::new();
    for rec in trace.iter().filter(|r| window.contains(&r.seq)) {
        match rec.op {
            Op::Read => {
                if let Some(p) = patterns.get(rec.object as usize) {
                    demand.add_pattern_read(p, rec.origin, 1.0);
                }
            }
            Op::Write => demand.add_write(ItemId(rec.object), rec.origin, 1.0),
        }
    }
    demand
}

pub const TRACE_HEADER: &str = "seq,origin_dc,op,object_id,req_latency_ms";

pub fn write_trace(out: &mut impl Write, trace: &[TraceRecord], dc_labels: &[String]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in trace {
        let op = match r.op {
            Op::Read => "read",
            Op::Write => "write",
        };
        let req = r.req_latency_ms.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", r.seq, dc_labels[r.origin.index()], op, r.object, req)?;
    }
    Ok(())
}

pub fn read_trace(input: impl BufRead, dc_labels: &[String]) -> Result<Vec<TraceRecord>, WorkloadError> {
    let index: BTreeMap<&str, usize> = dc_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if i == 0 {
            if line.trim() != TRACE_HEADER {
                return Err(WorkloadError::Parse { line: line_no, msg: "unexpected header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| WorkloadError::Parse { line: line_no, msg: msg.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err("expected five fields"));
        }
        let seq = f[0].parse().map_err(|_| err("bad seq"))?;
        let origin = DcId::from_index(*index.get(f[1]).ok_or_else(|| err("unknown origin"))?);
        let op = match f[2] {
            "read" => Op::Read,
            "write" => Op::Write,
            _ => return Err(err("op must be read or write")),
        };
        let object = f[3].parse().map_err(|_| err("bad object id"))?;
        let req_latency_ms = if f[4].is_empty() { None } else { Some(f[4].parse().map_err(|_| err("bad latency"))?) };
        out.push(TraceRecord { seq, origin, op, object, req_latency_ms });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    pub vertices: usize,
    pub dcs: usize,
    pub avg_degree: f64,
    /// Probability that an edge stays within one site.
    pub locality: f64,
    pub seed: u64,
}

/// Connected random graph with vertices split evenly across sites in
/// contiguous blocks. Edge weights are 1.
pub fn synthetic_graph(spec: &GraphSpec) -> Result<(Graph, Vec<DcId>), WorkloadError> {
    if spec.vertices < 2 || spec.dcs == 0 || spec.dcs > spec.vertices {
        return Err(WorkloadError::BadSpec("need at least two vertices and one vertex per site".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.vertices;
    let assignment: Vec<DcId> = (0..n).map(|v| DcId::from_index(v * spec.dcs / n)).collect();
    let members: Vec<Vec<usize>> = (0..spec.dcs).map(|d| (0..n).filter(|&v| assignment[v].index() == d).collect()).collect();
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let mut add = |a: usize, b: usize, edges: &mut Vec<(usize, usize, f64)>| {
        if a != b && seen.insert((a.min(b), a.max(b))) {
            edges.push((a, b, 1.0));
            true
        } else {
            false
        }
    };
    for v in 1..n {
        let same: Vec<usize> = members[assignment[v].index()].iter().copied().filter(|&u| u < v).collect();
        let u = if !same.is_empty() && rng.random_bool(spec.locality.clamp(0.0, 1.0)) { *same.choose(&mut rng).unwrap() } else { rng.random_range(0..v) };
        add(u, v, &mut edges);
    }
    let target = ((spec.avg_degree * n as f64) / 2.0).round() as usize;
    let mut attempts = 0;
    while edges.len() < target && attempts < target * 20 {
        attempts += 1;
        let a = rng.random_range(0..n);
        let b = if rng.random_bool(spec.locality.clamp(0.0, 1.0)) {
            *members[assignment[a].index()].choose(&mut rng).unwrap()
        } else {
            rng.random_range(0..n)
        };
        add(a, b, &mut edges);
    }
    let graph = Graph::from_edges(n, &edges)?;
    Ok((graph, assignment))
}
