//! Scenario runner: load, layer, generate demand, place, route, account.

pub mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::{place_random_k, place_top_k, route_all_random};
use crate::cost::{CostBreakdown, CostModel, CostParams, DemandMatrix, PlacementState, RoutingState};
use crate::dhd::DhdParams;
use crate::graph::{load_graph, Graph, Partitioning};
use crate::ids::{DcId, EdgeId, ItemId, VertexId};
use crate::layered::{build_layers, LatencyThresholds, LayeredGraph};
use crate::oracle::{gap, solve_exact};
use crate::placement::log::PlacementLog;
use crate::placement::precache::{evict_cold, hit_rate, precache_hot, steady_heat, CacheState, PrecacheResult};
use crate::placement::{place_all, PlacementContext, PlacementParams};
use crate::routing::{best_gather_plan, estimate_offline_comm, route_all, route_offline, OfflineParams};
use crate::wan::{load_wan_profile, WanProfile};
use crate::workload::{aggregate, generate, synthetic_graph, GraphSpec, Op, Workload, WorkloadSpec, WriteMode};

pub use config::{Config, Strategy};
pub use report::{compare, read_metrics, CompareRow, REPORT_FILES};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("config: cannot open {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{stage}: {msg}")]
    Pipeline { stage: &'static str, msg: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("i/o on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl SimError {
    /// Process exit code for this class of failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::MissingFile(_) => 2,
            SimError::Pipeline { .. } => 3,
            SimError::Schema(_) => 4,
            SimError::Io { .. } => 1,
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> SimError {
    move |e| SimError::Pipeline { stage, msg: e.to_string() }
}

const STREAM_GRAPH: u64 = 1;
const STREAM_RANKING: u64 = 2;
const STREAM_WORKLOAD: u64 = 3;
const STREAM_BASELINE: u64 = 4;

/// Seed of a named sub-stream derived from the scenario seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Everything a strategy needs, built once from the config.
pub struct Scenario {
    pub config: Config,
    pub wan: WanProfile,
    pub graph: Graph,
    pub part: Partitioning,
    pub thresholds: LatencyThresholds,
    pub layered: LayeredGraph,
    pub workload: Workload,
    pub demand: DemandMatrix,
}

fn existing(cfg: &Config, rel: &str) -> Result<PathBuf, SimError> {
    let p = cfg.resolve(rel);
    if p.is_file() {
        Ok(p)
    } else {
        Err(SimError::MissingFile(p))
    }
}

impl Scenario {
    pub fn build(config: Config) -> Result<Scenario, SimError> {
        let mut wan = match (&config.wan.file, &config.wan.profile) {
            (Some(f), _) => load_wan_profile(&existing(&config, f)?).map_err(|e| SimError::Config(format!("wan: {e}")))?,
            (None, Some(name)) => WanProfile::bundled(name).map_err(|e| SimError::Config(format!("wan: {e}")))?,
            (None, None) => unreachable!("validated"),
        };
        if let Some(keep) = &config.wan.dcs {
            let ids = keep
                .iter()
                .map(|id| wan.find_dc(id).ok_or_else(|| SimError::Config(format!("wan.dcs: unknown site `{id}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            wan = wan.subset(&ids).map_err(|e| SimError::Config(format!("wan.dcs: {e}")))?;
        }

        let g = &config.graph;
        let (mut graph, part) = match (&g.edges, &g.partition, g.vertices) {
            (Some(e), Some(p), _) => {
                let (graph, part) = load_graph(&existing(&config, e)?, &existing(&config, p)?).map_err(stage("graph"))?;
                let part = part.with_dc_order(&wan.dc_ids()).map_err(stage("graph"))?;
                (graph, part)
            }
            (_, _, Some(vertices)) => {
                let spec = GraphSpec { vertices, dcs: wan.dc_count(), avg_degree: g.avg_degree, locality: g.locality, seed: sub_seed(config.seed, STREAM_GRAPH) };
                let (graph, assignment) = synthetic_graph(&spec).map_err(stage("graph"))?;
                let part = Partitioning::new(&graph, wan.dc_ids(), assignment).map_err(stage("graph"))?;
                (graph, part)
            }
            _ => unreachable!("validated"),
        };
        graph.set_item_sizes(g.vertex_bytes, g.edge_bytes);

        let thresholds = LatencyThresholds::for_profile(&wan, config.layers.layer_interval_ms).map_err(stage("layers"))?;
        let layered = build_layers(&graph, &part, &wan, &thresholds).map_err(stage("layers"))?;

        let w = &config.workload;
        let spec = WorkloadSpec {
            patterns: w.patterns,
            hops: w.hops,
            zipf_exponent: w.zipf_exponent,
            reads: w.reads,
            writes: w.writes,
            write_fraction: w.write_fraction,
            write_mode: WriteMode::Items,
            origins_per_pattern: w.origins_per_pattern,
            gamma_max: config.placement.gamma_max_ms / 1000.0,
            ranking_seed: sub_seed(config.seed, STREAM_RANKING),
            seed: sub_seed(config.seed, STREAM_WORKLOAD),
        };
        let workload = generate(&graph, &part, &thresholds, &spec).map_err(stage("workload"))?;
        let demand = aggregate(&workload.trace, &workload.patterns, 0..u64::MAX);
        Ok(Scenario { config, wan, graph, part, thresholds, layered, workload, demand })
    }

    pub fn gamma_max(&self) -> f64 {
        self.config.placement.gamma_max_ms / 1000.0
    }

    pub fn cost_params(&self) -> CostParams {
        let c = &self.config.cost;
        CostParams { lambda1: c.lambda1, lambda2: c.lambda2, association_scale: c.association_scale }
    }

    pub fn dhd_params(&self) -> DhdParams {
        let d = &self.config.dhd;
        DhdParams { alpha: d.alpha, gamma: d.gamma, beta: d.beta, ..DhdParams::default() }
    }

    pub fn placement_params(&self) -> PlacementParams {
        let q = self.config.placement.theta_quantile;
        PlacementParams { gamma_max: self.gamma_max(), dhd: self.dhd_params(), theta_quantile: (q >= 0.0).then_some(q), ..PlacementParams::default() }
    }

    pub fn offline_params(&self) -> OfflineParams {
        let r = &self.config.routing;
        OfflineParams { iterations: r.iterations, msg_bytes: r.msg_bytes, xi_fraction: r.xi_fraction }
    }

    pub fn model(&self) -> CostModel<'_> {
        CostModel::new(&self.graph, &self.wan, &self.workload.patterns, self.cost_params())
    }

    /// Placement and routing chosen by `strategy` for the full demand.
    pub fn solve(&self, strategy: Strategy) -> Result<(PlacementState, RoutingState, Option<PlacementLog>), SimError> {
        let pats = &self.workload.patterns;
        let base_seed = sub_seed(self.config.seed, STREAM_BASELINE);
        match strategy {
            Strategy::Geolayer => {
                let ctx = PlacementContext { model: self.model(), part: &self.part, layered: &self.layered, demand: &self.demand };
                let base = PlacementState::home_only(&self.graph, &self.part);
                let (placement, log) = place_all(ctx, &base, &self.placement_params()).map_err(stage("placement"))?;
                let routing = route_all(&self.demand, pats, &placement, &self.layered, &self.wan, &self.graph).map_err(stage("routing"))?;
                Ok((placement, routing, Some(log)))
            }
            Strategy::Random3 => {
                let k = 3.min(self.wan.dc_count());
                let placement = place_random_k(&self.graph, &self.part, k, base_seed).map_err(stage("baselines"))?;
                let routing = route_all_random(&self.demand, pats, &placement, &self.wan, &self.graph, base_seed).map_err(stage("baselines"))?;
                Ok((placement, routing, None))
            }
            Strategy::Top3 => {
                let placement = place_top_k(&self.graph, self.wan.dc_count(), &self.demand, 3).map_err(stage("baselines"))?;
                let routing = route_all_random(&self.demand, pats, &placement, &self.wan, &self.graph, base_seed).map_err(stage("baselines"))?;
                Ok((placement, routing, None))
            }
        }
    }

    /// Items of an analytics job seeded by a pattern: the pattern's
    /// vertices, their neighbours and every edge among them.
    pub fn job_items(&self, pattern: usize) -> Vec<ItemId> {
        let mut vs: BTreeSet<VertexId> = self.workload.patterns[pattern].vertices(&self.graph);
        let seeds: Vec<VertexId> = vs.iter().copied().collect();
        for v in seeds {
            vs.extend(self.graph.neighbors(v).iter().map(|&(w, _)| w));
        }
        let mut items: Vec<ItemId> = vs.iter().map(|&v| self.graph.vertex_item(v)).collect();
        for (i, e) in self.graph.edges().iter().enumerate() {
            if vs.contains(&e.u) && vs.contains(&e.v) {
                items.push(self.graph.edge_item(EdgeId::from_index(i)));
            }
        }
        items.sort_unstable();
        items
    }

    /// Pre-caching from the first half of the trace, judged on the second.
    pub fn precache_at(&self, q: f64, train: &DemandMatrix) -> Result<Vec<PrecacheResult>, SimError> {
        let base = PlacementState::home_only(&self.graph, &self.part);
        (0..self.wan.dc_count())
            .map(|d| precache_hot(&self.graph, &self.part, &base, train, DcId::from_index(d), &self.dhd_params(), q).map_err(stage("precache")))
            .collect()
    }

    pub fn split_demand(&self) -> (DemandMatrix, DemandMatrix) {
        let n = self.workload.trace.len() as u64;
        let half = n / 2;
        (aggregate(&self.workload.trace, &self.workload.patterns, 0..half), aggregate(&self.workload.trace, &self.workload.patterns, half..n))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RequestRow {
    pub pattern: u32,
    pub origin: DcId,
    pub rate: f64,
    pub parts: usize,
    pub latency: f64,
    pub requirement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MigrationRow {
    pub job: u64,
    pub items: usize,
    pub retained: usize,
    pub migration_bytes: u64,
    pub migrated_edge_ratio: f64,
    pub offline_comm: f64,
    pub gather_comm: f64,
    pub gathered: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HitRow {
    pub quantile: f64,
    pub cached: usize,
    pub hits: usize,
    pub hit_rate: Option<f64>,
    pub evicted: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapRow {
    pub cost: f64,
    pub optimum: f64,
    pub gap_percent: f64,
    pub leaves: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub strategy: Strategy,
    pub cost: CostBreakdown,
    /// Violation counts for clauses a to e.
    pub violations: [usize; 5],
    pub replicas: usize,
    pub requests: Vec<RequestRow>,
    /// (from, to) -> (read bytes, sync bytes).
    pub wan: BTreeMap<(DcId, DcId), (f64, f64)>,
    pub migration: Vec<MigrationRow>,
    pub hitrate: Vec<HitRow>,
    pub gap: Option<GapRow>,
    pub log: Option<PlacementLog>,
}

impl Report {
    /// Rate-weighted mean pattern latency, seconds.
    pub fn mean_latency(&self) -> f64 {
        let (num, den) = self.requests.iter().fold((0.0, 0.0), |(n, d), r| (n + r.rate * r.latency, d + r.rate));
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    pub fn max_latency(&self) -> f64 {
        self.requests.iter().map(|r| r.latency).fold(0.0, f64::max)
    }

    pub fn wan_bytes(&self) -> f64 {
        self.wan.values().map(|(r, s)| r + s).sum()
    }
}

pub const QUANTILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

const EVICTION_BATCH: usize = 200;

/// Hit rates over the standard quantile grid, with eviction replayed on the
/// second half of the trace at each quantile.
pub fn hitrate_sweep(sc: &Scenario) -> Result<Vec<HitRow>, SimError> {
    let (train, eval) = sc.split_demand();
    let half = sc.workload.trace.len() as u64 / 2;
    let later: Vec<_> = sc.workload.trace.iter().filter(|r| r.seq >= half && r.op == Op::Read).collect();
    let mut rows = Vec::new();
    for q in QUANTILES {
        let results = sc.precache_at(q, &train)?;
        let cached = results.iter().map(|r| r.items.len()).sum();
        let hits = results.iter().map(|r| r.items.iter().filter(|&&x| eval.read_rate(x, r.dc) > 0.0).count()).sum();
        let mut evicted = 0;
        for res in &results {
            let mut cache = CacheState::new(res, &sc.graph, sc.config.placement.theta_c_quantile);
            for chunk in later.chunks(EVICTION_BATCH) {
                let batch: Vec<(ItemId, f64)> = chunk
                    .iter()
                    .filter(|r| r.origin == res.dc)
                    .flat_map(|r| sc.workload.patterns[r.object as usize].items.iter().map(|&x| (x, 1.0)))
                    .collect();
                evicted += evict_cold(&mut cache, &sc.graph, &batch, &sc.dhd_params()).map_err(stage("precache"))?.len();
            }
        }
        rows.push(HitRow { quantile: q, cached, hits, hit_rate: hit_rate(&results, &eval), evicted });
    }
    Ok(rows)
}

pub fn run(sc: &Scenario, strategy: Strategy) -> Result<Report, SimError> {
    let (placement, routing, log) = sc.solve(strategy)?;
    let model = sc.model();
    let cost = model.total_objective(&placement, &routing, &sc.demand).map_err(stage("cost"))?;
    let check = model.check_constraints(&placement, &routing, &sc.demand, sc.gamma_max()).map_err(stage("cost"))?;
    let violations = ['a', 'b', 'c', 'd', 'e'].map(|c| check.count(c));

    let mut requests = Vec::new();
    let mut wan: BTreeMap<(DcId, DcId), (f64, f64)> = BTreeMap::new();
    for (p, y, r) in sc.demand.requests() {
        let servers = routing.get(p, y).ok_or_else(|| SimError::Pipeline { stage: "routing", msg: format!("no route for ({p}, {y})") })?;
        let parts = model.serving_bytes(p, servers).map_err(stage("cost"))?;
        for &(d, b) in &parts {
            if d != y {
                wan.entry((d, y)).or_default().0 += r * b as f64;
            }
        }
        let latency = sc.wan.pattern_latency(y, &parts);
        let pat = &sc.workload.patterns[p.index()];
        requests.push(RequestRow { pattern: p.0, origin: y, rate: r, parts: parts.len(), latency, requirement: pat.eta * sc.gamma_max() });
    }
    for (&(x, y), &w) in &sc.demand.writes {
        if !placement.is_live(x) {
            continue;
        }
        for d in placement.holders(x).iter().filter(|&d| d != y) {
            wan.entry((y, d)).or_default().1 += w * sc.graph.item_size(x) as f64;
        }
    }

    let params = sc.offline_params();
    let mut migration = Vec::new();
    for j in 0..sc.config.routing.offline_jobs.min(sc.workload.patterns.len()) {
        let items = sc.job_items(j);
        let plan = route_offline(j as u64, &items, &placement, &sc.layered, &sc.graph, &sc.wan, &params).map_err(stage("routing"))?;
        let gather = best_gather_plan(j as u64, &items, &placement, &sc.graph, &sc.wan).map_err(stage("routing"))?;
        migration.push(MigrationRow {
            job: j as u64,
            items: items.len(),
            retained: plan.retained.len(),
            migration_bytes: plan.migration_bytes(),
            migrated_edge_ratio: plan.migrated_edge_ratio(&sc.graph),
            offline_comm: estimate_offline_comm(&plan, &params),
            gather_comm: estimate_offline_comm(&gather, &params),
            gathered: plan.gathered,
        });
    }

    let hitrate = hitrate_sweep(sc)?;

    let gap = if sc.config.oracle.enabled { Some(oracle_gap(sc, cost.total)?) } else { None };

    Ok(Report {
        strategy,
        cost,
        violations,
        replicas: placement.total_replicas(),
        requests,
        wan,
        migration,
        hitrate,
        gap,
        log: log.filter(|_| sc.config.placement.log),
    })
}

pub fn oracle_gap(sc: &Scenario, cost: f64) -> Result<GapRow, SimError> {
    let sol = solve_exact(&sc.graph, &sc.part, &sc.wan, &sc.workload.patterns, &sc.demand, &sc.cost_params(), sc.gamma_max()).map_err(stage("oracle"))?;
    let g = gap(cost, sol.cost.total).map_err(stage("oracle"))?;
    Ok(GapRow { cost, optimum: sol.cost.total, gap_percent: g, leaves: sol.leaves })
}

/// Steady heat per site over the full demand, as `dc,vertex,heat` lines.
pub fn dump_heat(sc: &Scenario) -> Result<String, SimError> {
    let mut out = String::from("dc,vertex,heat\n");
    for d in 0..sc.wan.dc_count() {
        let dc = DcId::from_index(d);
        let (g, heat) = steady_heat(&sc.graph, &sc.part, &sc.demand, dc, &sc.dhd_params()).map_err(stage("precache"))?;
        for (v, h) in g.vertices.iter().zip(&heat.heat) {
            out.push_str(&format!("{},{},{}\n", sc.wan.dc(dc).id, sc.graph.label(*v), h));
        }
    }
    Ok(out)
}

/// Loads the config, runs it and writes the report files into `out_dir`.
pub fn run_to_dir(config_path: &Path, strategy: Option<Strategy>, out_dir: &Path, dump_layers: bool, dump_heat_csv: bool) -> Result<Report, SimError> {
    let mut cfg = Config::load(config_path)?;
    if let Some(s) = strategy {
        cfg.strategy = s;
    }
    let strategy = cfg.strategy;
    let sc = Scenario::build(cfg)?;
    let rep = run(&sc, strategy)?;
    report::write_all(&sc, &rep, out_dir)?;
    if dump_layers {
        report::write_file(&out_dir.join("layers.txt"), &sc.layered.dump())?;
    }
    if dump_heat_csv {
        report::write_file(&out_dir.join("heat.csv"), &dump_heat(&sc)?)?;
    }
    Ok(rep)
}
