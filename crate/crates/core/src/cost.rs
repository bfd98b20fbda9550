//! Replica placement and request routing state, demand, and the
//! storage / read / write / association cost objective.
//!
//! Demand rates are counts per billing window; storage is charged for one
//! window at the monthly price.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{Graph, Partitioning, Pattern};
use crate::ids::{DcId, DcSet, ItemId, PatternId};
use crate::wan::{WanProfile, BYTES_PER_GB};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("no routing for pattern {pattern} from {origin}")]
    MissingRoute { pattern: PatternId, origin: DcId },
    #[error("pattern {pattern} from {origin}: routing has {got} servers for {want} items")]
    RouteShape { pattern: PatternId, origin: DcId, got: usize, want: usize },
    #[error("item {item} routed to {server}, which holds no replica")]
    UnheldServer { item: ItemId, server: DcId },
    #[error("unknown pattern {0}")]
    UnknownPattern(PatternId),
    #[error("cannot remove the last replica of item {0}")]
    LastReplica(ItemId),
    #[error("item {item} has no replica at {dc}")]
    NoSuchReplica { item: ItemId, dc: DcId },
    #[error("item {0} already has a replica at that site")]
    DuplicateReplica(ItemId),
}

/// Which data centers hold each item (delta in the objective).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacementState {
    replicas: Vec<DcSet>,
    removed: Vec<bool>,
}

impl PlacementState {
    pub fn empty(item_count: usize) -> Self {
        PlacementState { replicas: vec![DcSet::EMPTY; item_count], removed: vec![false; item_count] }
    }

    /// Every item stored only at its home data center.
    pub fn home_only(graph: &Graph, part: &Partitioning) -> Self {
        let mut s = PlacementState::empty(graph.item_count());
        for item in graph.items() {
            s.replicas[item.id.index()] = DcSet::single(part.home_of(graph, item.id));
        }
        s
    }

    pub fn from_sets(replicas: Vec<DcSet>) -> Self {
        let n = replicas.len();
        PlacementState { replicas, removed: vec![false; n] }
    }

    pub fn item_count(&self) -> usize {
        self.replicas.len()
    }

    pub fn holders(&self, x: ItemId) -> DcSet {
        self.replicas[x.index()]
    }

    pub fn holds(&self, x: ItemId, d: DcId) -> bool {
        self.replicas[x.index()].contains(d)
    }

    pub fn is_live(&self, x: ItemId) -> bool {
        x.index() < self.replicas.len() && !self.removed[x.index()]
    }

    pub fn live_items(&self) -> impl Iterator<Item = ItemId> + '_ {
        (0..self.replicas.len()).filter(|&i| !self.removed[i]).map(ItemId::from_index)
    }

    pub fn live_count(&self) -> usize {
        self.removed.iter().filter(|r| !**r).count()
    }

    /// Returns true if the replica is new.
    pub fn add(&mut self, x: ItemId, d: DcId) -> bool {
        self.replicas[x.index()].insert(d)
    }

    pub fn remove(&mut self, x: ItemId, d: DcId) -> Result<(), CostError> {
        let set = &mut self.replicas[x.index()];
        if !set.contains(d) {
            return Err(CostError::NoSuchReplica { item: x, dc: d });
        }
        if set.len() == 1 {
            return Err(CostError::LastReplica(x));
        }
        set.remove(d);
        Ok(())
    }

    /// Appends a newly inserted item stored at `home`.
    pub fn push_item(&mut self, home: DcId) -> ItemId {
        self.replicas.push(DcSet::single(home));
        self.removed.push(false);
        ItemId::from_index(self.replicas.len() - 1)
    }

    /// Drops every copy of an item. Returns the sites that held it.
    pub fn delete(&mut self, x: ItemId) -> DcSet {
        let held = self.replicas[x.index()];
        self.replicas[x.index()] = DcSet::EMPTY;
        self.removed[x.index()] = true;
        held
    }

    pub fn total_replicas(&self) -> usize {
        self.live_items().map(|x| self.holders(x).len()).sum()
    }

    /// Items held at `d`, ascending.
    pub fn items_at(&self, d: DcId) -> Vec<ItemId> {
        self.live_items().filter(|&x| self.holds(x, d)).collect()
    }

    /// Live items with no replica at all.
    pub fn orphans(&self) -> Vec<ItemId> {
        self.live_items().filter(|&x| self.holders(x).is_empty()).collect()
    }
}

/// Server choice for every item of every routed request (sigma), keyed by
/// (pattern, origin). Servers are aligned with `Pattern::items`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoutingState {
    routes: BTreeMap<(PatternId, DcId), Vec<DcId>>,
}

impl RoutingState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, pattern: PatternId, origin: DcId, servers: Vec<DcId>) {
        self.routes.insert((pattern, origin), servers);
    }

    pub fn get(&self, pattern: PatternId, origin: DcId) -> Option<&[DcId]> {
        self.routes.get(&(pattern, origin)).map(Vec::as_slice)
    }

    pub fn get_mut(&mut self, pattern: PatternId, origin: DcId) -> Option<&mut Vec<DcId>> {
        self.routes.get_mut(&(pattern, origin))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(PatternId, DcId), &Vec<DcId>)> {
        self.routes.iter()
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// Keeps only the request classes for which `keep` holds.
    pub fn retain(&mut self, mut keep: impl FnMut(PatternId, DcId) -> bool) {
        self.routes.retain(|&(p, y), _| keep(p, y));
    }

    /// Sites serving at least one item of the request (rho).
    pub fn serving_set(&self, pattern: PatternId, origin: DcId) -> DcSet {
        self.get(pattern, origin).map(|s| s.iter().copied().collect()).unwrap_or_default()
    }
}

/// Aggregated demand over one window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandMatrix {
    /// R_xy: item reads by origin.
    pub reads: BTreeMap<(ItemId, DcId), f64>,
    /// W_xy: item writes by origin.
    pub writes: BTreeMap<(ItemId, DcId), f64>,
    /// R_py: pattern reads by origin.
    pub pattern_reads: BTreeMap<(PatternId, DcId), f64>,
}

impl DemandMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `rate` reads of a pattern; each of its items accrues the same.
    pub fn add_pattern_read(&mut self, pattern: &Pattern, origin: DcId, rate: f64) {
        *self.pattern_reads.entry((pattern.id, origin)).or_insert(0.0) += rate;
        for &x in &pattern.items {
            *self.reads.entry((x, origin)).or_insert(0.0) += rate;
        }
    }

    pub fn add_write(&mut self, item: ItemId, origin: DcId, rate: f64) {
        *self.writes.entry((item, origin)).or_insert(0.0) += rate;
    }

    pub fn reads_of(&self, x: ItemId) -> impl Iterator<Item = (DcId, f64)> + '_ {
        self.reads.range((x, DcId(0))..=(x, DcId(u16::MAX))).map(|(&(_, y), &r)| (y, r))
    }

    pub fn writes_of(&self, x: ItemId) -> impl Iterator<Item = (DcId, f64)> + '_ {
        self.writes.range((x, DcId(0))..=(x, DcId(u16::MAX))).map(|(&(_, y), &w)| (y, w))
    }

    pub fn pattern_origins(&self, p: PatternId) -> impl Iterator<Item = (DcId, f64)> + '_ {
        self.pattern_reads.range((p, DcId(0))..=(p, DcId(u16::MAX))).map(|(&(_, y), &r)| (y, r))
    }

    pub fn read_rate(&self, x: ItemId, y: DcId) -> f64 {
        self.reads.get(&(x, y)).copied().unwrap_or(0.0)
    }

    pub fn total_reads(&self, x: ItemId) -> f64 {
        self.reads_of(x).map(|(_, r)| r).sum()
    }

    pub fn total_writes(&self, x: ItemId) -> f64 {
        self.writes_of(x).map(|(_, w)| w).sum()
    }

    /// Requests with positive rate, in key order.
    pub fn requests(&self) -> impl Iterator<Item = (PatternId, DcId, f64)> + '_ {
        self.pattern_reads.iter().filter(|(_, &r)| r > 0.0).map(|(&(p, y), &r)| (p, y, r))
    }

    /// Element-wise sum, used to check that aggregation is linear.
    pub fn merged(&self, other: &DemandMatrix) -> DemandMatrix {
        let mut out = self.clone();
        for (k, v) in &other.reads {
            *out.reads.entry(*k).or_insert(0.0) += v;
        }
        for (k, v) in &other.writes {
            *out.writes.entry(*k).or_insert(0.0) += v;
        }
        for (k, v) in &other.pattern_reads {
            *out.pattern_reads.entry(*k).or_insert(0.0) += v;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Dollars per unit of association penalty.
    pub association_scale: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { lambda1: 0.5, lambda2: 0.5, association_scale: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub storage: f64,
    pub read: f64,
    pub write: f64,
    pub association: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub const CSV_HEADER: &'static str = "C_S,C_R,C_W,C_A,total";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.storage, self.read, self.write, self.association, self.total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintViolation {
    /// (a) a routed server holds no replica, or a request is unrouted.
    Routing { pattern: PatternId, origin: DcId, item: Option<ItemId>, server: Option<DcId> },
    /// (b) a serving site lacks an item it is credited with.
    Association { pattern: PatternId, origin: DcId, dc: DcId },
    /// (c) demand-weighted average item latency over the bound.
    AverageLatency { average: f64, bound: f64 },
    /// (d) a request's straggler latency over its pattern's bound.
    PatternLatency { pattern: PatternId, origin: DcId, latency: f64, bound: f64 },
    /// (e) a live item has no replica.
    Orphan { item: ItemId },
}

impl ConstraintViolation {
    pub fn clause(&self) -> char {
        match self {
            ConstraintViolation::Routing { .. } => 'a',
            ConstraintViolation::Association { .. } => 'b',
            ConstraintViolation::AverageLatency { .. } => 'c',
            ConstraintViolation::PatternLatency { .. } => 'd',
            ConstraintViolation::Orphan { .. } => 'e',
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<ConstraintViolation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, clause: char) -> usize {
        self.violations.iter().filter(|v| v.clause() == clause).count()
    }
}

/// Candidate change to a (placement, routing) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    Noop,
    /// New replica at `dc`; requests from `dc` that read the item switch to it.
    AddReplica { item: ItemId, dc: DcId },
    /// Drop a replica; requests it served move to the nearest remaining holder.
    RemoveReplica { item: ItemId, dc: DcId },
    /// Serve one item of one request from `to`.
    Reroute { pattern: PatternId, origin: DcId, item: ItemId, to: DcId },
}

/// Everything needed to price a state.
#[derive(Clone, Copy)]
pub struct CostModel<'a> {
    pub graph: &'a Graph,
    pub wan: &'a WanProfile,
    /// Indexed by pattern id.
    pub patterns: &'a [Pattern],
    pub params: CostParams,
}

impl<'a> CostModel<'a> {
    pub fn new(graph: &'a Graph, wan: &'a WanProfile, patterns: &'a [Pattern], params: CostParams) -> Self {
        CostModel { graph, wan, patterns, params }
    }

    pub fn pattern(&self, p: PatternId) -> Result<&'a Pattern, CostError> {
        match self.patterns.get(p.index()) {
            Some(pat) if pat.id == p => Ok(pat),
            _ => Err(CostError::UnknownPattern(p)),
        }
    }

    fn size_gb(&self, x: ItemId) -> f64 {
        self.graph.item_size(x) as f64 / BYTES_PER_GB
    }

    /// Storage charge of one replica of `x` at `d`.
    pub fn replica_storage(&self, x: ItemId, d: DcId) -> f64 {
        self.size_gb(x) * self.wan.dc(d).store_price
    }

    /// Per-read cost of serving `x` to `origin` from `server`.
    pub fn unit_read(&self, x: ItemId, origin: DcId, server: DcId) -> f64 {
        let read = self.wan.dc(server).read_op_cost();
        if origin == server {
            read
        } else {
            read + self.size_gb(x) * self.wan.link(server, origin).price_per_gb
        }
    }

    /// Per-write cost of propagating a write of `x` from `origin` to replica `d`.
    pub fn unit_sync(&self, x: ItemId, origin: DcId, d: DcId) -> f64 {
        self.wan.dc(d).write_op_cost() + self.size_gb(x) * self.wan.link(origin, d).price_per_gb
    }

    /// Write-side cost of keeping a replica of `x` at `d` under `demand`.
    pub fn replica_write(&self, x: ItemId, d: DcId, demand: &DemandMatrix) -> f64 {
        let mut c = 0.0;
        for (y, w) in demand.writes_of(x) {
            if y != d {
                c += w * self.unit_sync(x, y, d);
            }
        }
        c
    }

    pub fn storage_cost(&self, placement: &PlacementState) -> f64 {
        let mut total = 0.0;
        for x in placement.live_items() {
            for d in placement.holders(x).iter() {
                total += self.replica_storage(x, d);
            }
        }
        total
    }

    pub fn read_cost(&self, routing: &RoutingState, demand: &DemandMatrix) -> Result<f64, CostError> {
        let mut total = 0.0;
        for (p, y, r) in demand.requests() {
            total += self.request_read(p, y, r, self.route_of(routing, p, y)?)?;
        }
        Ok(total)
    }

    pub fn write_cost(&self, placement: &PlacementState, demand: &DemandMatrix) -> f64 {
        let mut total = 0.0;
        for (&(x, y), &w) in &demand.writes {
            if !placement.is_live(x) {
                continue;
            }
            let mut per_write = self.wan.dc(y).write_op_cost();
            for d in placement.holders(x).iter() {
                if d != y {
                    per_write += self.unit_sync(x, y, d);
                }
            }
            total += w * per_write;
        }
        total
    }

    pub fn association_penalty(&self, routing: &RoutingState, demand: &DemandMatrix) -> Result<f64, CostError> {
        let mut total = 0.0;
        for (p, y, r) in demand.requests() {
            total += self.request_association(p, y, r, self.route_of(routing, p, y)?)?;
        }
        Ok(total)
    }

    pub fn total_objective(&self, placement: &PlacementState, routing: &RoutingState, demand: &DemandMatrix) -> Result<CostBreakdown, CostError> {
        for (p, y, _) in demand.requests() {
            let servers = self.route_of(routing, p, y)?;
            let pat = self.pattern(p)?;
            for (&x, &d) in pat.items.iter().zip(servers) {
                if !placement.holds(x, d) {
                    return Err(CostError::UnheldServer { item: x, server: d });
                }
            }
        }
        let storage = self.storage_cost(placement);
        let read = self.read_cost(routing, demand)?;
        let write = self.write_cost(placement, demand);
        let association = self.association_penalty(routing, demand)?;
        Ok(CostBreakdown { storage, read, write, association, total: storage + read + write + association })
    }

    fn route_of<'r>(&self, routing: &'r RoutingState, p: PatternId, y: DcId) -> Result<&'r [DcId], CostError> {
        let servers = routing.get(p, y).ok_or(CostError::MissingRoute { pattern: p, origin: y })?;
        let want = self.pattern(p)?.items.len();
        if servers.len() != want {
            return Err(CostError::RouteShape { pattern: p, origin: y, got: servers.len(), want });
        }
        Ok(servers)
    }

    /// Read cost of one request class at rate `r`.
    pub fn request_read(&self, p: PatternId, y: DcId, r: f64, servers: &[DcId]) -> Result<f64, CostError> {
        let pat = self.pattern(p)?;
        let mut total = 0.0;
        for (&x, &d) in pat.items.iter().zip(servers) {
            total += r * self.unit_read(x, y, d);
        }
        Ok(total)
    }

    /// Bytes each serving site returns for one request, ascending by site.
    pub fn serving_bytes(&self, p: PatternId, servers: &[DcId]) -> Result<Vec<(DcId, u64)>, CostError> {
        let pat = self.pattern(p)?;
        let mut parts: BTreeMap<DcId, u64> = BTreeMap::new();
        for (&x, &d) in pat.items.iter().zip(servers) {
            *parts.entry(d).or_insert(0) += self.graph.item_size(x);
        }
        Ok(parts.into_iter().collect())
    }

    /// Association penalty of one request class at rate `r`.
    pub fn request_association(&self, p: PatternId, y: DcId, r: f64, servers: &[DcId]) -> Result<f64, CostError> {
        let parts = self.serving_bytes(p, servers)?;
        Ok(association_units(self.wan, y, &parts, r, &self.params))
    }

    /// Straggler latency of one request.
    pub fn request_latency(&self, p: PatternId, y: DcId, servers: &[DcId]) -> Result<f64, CostError> {
        Ok(self.wan.pattern_latency(y, &self.serving_bytes(p, servers)?))
    }

    pub fn check_constraints(&self, placement: &PlacementState, routing: &RoutingState, demand: &DemandMatrix, gamma_max: f64) -> Result<FeasibilityReport, CostError> {
        let mut violations = Vec::new();
        let mut weighted = 0.0;
        for (p, y, r) in demand.requests() {
            let pat = self.pattern(p)?;
            let servers = match routing.get(p, y) {
                Some(s) if s.len() == pat.items.len() => s,
                _ => {
                    violations.push(ConstraintViolation::Routing { pattern: p, origin: y, item: None, server: None });
                    continue;
                }
            };
            for (&x, &d) in pat.items.iter().zip(servers) {
                if !placement.holds(x, d) {
                    violations.push(ConstraintViolation::Routing { pattern: p, origin: y, item: Some(x), server: Some(d) });
                }
                weighted += r * self.wan.request_latency(y, d, self.graph.item_size(x));
            }
            for d in routing.serving_set(p, y).iter() {
                let credited_ok = pat.items.iter().zip(servers).filter(|(_, &s)| s == d).all(|(&x, _)| placement.holds(x, d));
                if !credited_ok {
                    violations.push(ConstraintViolation::Association { pattern: p, origin: y, dc: d });
                }
            }
            let latency = self.request_latency(p, y, servers)?;
            let bound = pat.eta * gamma_max;
            if latency > bound + 1e-12 {
                violations.push(ConstraintViolation::PatternLatency { pattern: p, origin: y, latency, bound });
            }
        }
        let live = placement.live_count();
        if live > 0 {
            let average = weighted / live as f64;
            if average > gamma_max + 1e-12 {
                violations.push(ConstraintViolation::AverageLatency { average, bound: gamma_max });
            }
        }
        for item in placement.orphans() {
            violations.push(ConstraintViolation::Orphan { item });
        }
        Ok(FeasibilityReport { violations })
    }

    /// Applies an action in place. Returns the requests whose routing changed.
    pub fn apply(&self, action: Action, placement: &mut PlacementState, routing: &mut RoutingState, demand: &DemandMatrix) -> Result<Vec<(PatternId, DcId)>, CostError> {
        let mut touched = Vec::new();
        match action {
            Action::Noop => {}
            Action::AddReplica { item, dc } => {
                if !placement.add(item, dc) {
                    return Err(CostError::DuplicateReplica(item));
                }
                for (p, y, _) in demand.requests() {
                    if y != dc {
                        continue;
                    }
                    let pat = self.pattern(p)?;
                    if let (Ok(i), Some(servers)) = (pat.items.binary_search(&item), routing.get_mut(p, y)) {
                        if servers[i] != dc {
                            servers[i] = dc;
                            touched.push((p, y));
                        }
                    }
                }
            }
            Action::RemoveReplica { item, dc } => {
                placement.remove(item, dc)?;
                let remaining = placement.holders(item);
                let size = self.graph.item_size(item);
                for (p, y, _) in demand.requests() {
                    let pat = self.pattern(p)?;
                    if let (Ok(i), Some(servers)) = (pat.items.binary_search(&item), routing.get_mut(p, y)) {
                        if servers[i] == dc {
                            servers[i] = nearest_holder(self.wan, remaining, y, size);
                            touched.push((p, y));
                        }
                    }
                }
            }
            Action::Reroute { pattern, origin, item, to } => {
                if !placement.holds(item, to) {
                    return Err(CostError::UnheldServer { item, server: to });
                }
                let pat = self.pattern(pattern)?;
                let i = pat.items.binary_search(&item).map_err(|_| CostError::UnheldServer { item, server: to })?;
                let servers = routing.get_mut(pattern, origin).ok_or(CostError::MissingRoute { pattern, origin })?;
                if servers[i] != to {
                    servers[i] = to;
                    touched.push((pattern, origin));
                }
            }
        }
        Ok(touched)
    }

    /// Cost reduction from applying `action`: positive means the objective
    /// goes down. Only the terms the action touches are priced.
    pub fn marginal_gain(&self, action: Action, placement: &PlacementState, routing: &RoutingState, demand: &DemandMatrix) -> Result<f64, CostError> {
        let mut after_placement = placement.clone();
        let mut after_routing = routing.clone();
        let touched = self.apply(action, &mut after_placement, &mut after_routing, demand)?;

        let mut delta_fixed = 0.0;
        match action {
            Action::AddReplica { item, dc } => {
                delta_fixed += self.replica_storage(item, dc) + self.replica_write(item, dc, demand);
            }
            Action::RemoveReplica { item, dc } => {
                delta_fixed -= self.replica_storage(item, dc) + self.replica_write(item, dc, demand);
            }
            _ => {}
        }

        let mut before = 0.0;
        let mut after = 0.0;
        for (p, y) in touched {
            let r = demand.pattern_reads.get(&(p, y)).copied().unwrap_or(0.0);
            let old = self.route_of(routing, p, y)?;
            let new = self.route_of(&after_routing, p, y)?;
            before += self.request_read(p, y, r, old)? + self.request_association(p, y, r, old)?;
            after += self.request_read(p, y, r, new)? + self.request_association(p, y, r, new)?;
        }
        Ok(before - after - delta_fixed)
    }
}

/// Association penalty of serving one request class from `parts`.
pub fn association_units(wan: &WanProfile, origin: DcId, parts: &[(DcId, u64)], r: f64, params: &CostParams) -> f64 {
    if parts.is_empty() {
        return 0.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &(d, b) in parts {
        let l = wan.request_latency(origin, d, b);
        lo = lo.min(l);
        hi = hi.max(l);
    }
    let spread = if lo > 0.0 { (hi - lo) / lo } else { 0.0 };
    r * (params.lambda1 * (parts.len() as f64 - 1.0) + params.lambda2 * spread) * params.association_scale
}

/// Holder with the lowest latency to `origin` for an item of `size` bytes;
/// ties go to the lower site id.
pub fn nearest_holder(wan: &WanProfile, holders: DcSet, origin: DcId, size: u64) -> DcId {
    let mut best: Option<(f64, DcId)> = None;
    for d in holders.iter() {
        let l = wan.request_latency(origin, d, size);
        if best.is_none_or(|(bl, _)| l < bl) {
            best = Some((l, d));
        }
    }
    best.map(|(_, d)| d).expect("item has at least one holder")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{EdgeId, VertexId};
    use crate::wan::PriceBook;

    pub(crate) struct Fixture {
        pub graph: Graph,
        pub part: Partitioning,
        pub wan: WanProfile,
        pub patterns: Vec<Pattern>,
    }

    /// Path 0-1-2-3 over us-east (0,1), us-west (2), london (3).
    pub(crate) fn fixture() -> Fixture {
        let mut graph = Graph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        graph.set_item_sizes(1_000_000, 100_000);
        let wan = WanProfile::bundled("alibaba-5dc").unwrap().subset(&[DcId(0), DcId(1), DcId(2)]).unwrap();
        let part = Partitioning::new(&graph, wan.dc_ids(), vec![DcId(0), DcId(0), DcId(1), DcId(2)]).unwrap();
        let patterns = vec![
            Pattern::from_walk(PatternId(0), &graph, &[VertexId(0), VertexId(1), VertexId(2)], 1.0).unwrap(),
            Pattern::from_walk(PatternId(1), &graph, &[VertexId(2), VertexId(3)], 0.8).unwrap(),
        ];
        Fixture { graph, part, wan, patterns }
    }

    fn home_routing(f: &Fixture, placement: &PlacementState, demand: &DemandMatrix) -> RoutingState {
        let mut r = RoutingState::new();
        for (p, y, _) in demand.requests() {
            let servers = f.patterns[p.index()].items.iter().map(|&x| nearest_holder(&f.wan, placement.holders(x), y, 0)).collect();
            r.set(p, y, servers);
        }
        r
    }

    #[test]
    fn one_gigabyte_month_of_storage() {
        let mut graph = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        graph.set_item_sizes(1_000_000_000, 0);
        let wan = WanProfile::bundled("alibaba-5dc").unwrap();
        let part = Partitioning::new(&graph, wan.dc_ids(), vec![DcId(0), DcId(0)]).unwrap();
        let mut placement = PlacementState::home_only(&graph, &part);
        placement.add(ItemId(1), DcId(1));
        placement.delete(graph.edge_item(EdgeId(0)));
        let m = CostModel::new(&graph, &wan, &[], CostParams::default());
        // item 0 at one site, item 1 at two
        assert!((m.storage_cost(&placement) - 0.016 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn million_remote_reads_of_a_megabyte() {
        let f = fixture();
        let m = CostModel::new(&f.graph, &f.wan, &f.patterns, CostParams::default());
        let per_read = m.unit_read(ItemId(0), DcId(1), DcId(0));
        let p = PriceBook::lookup("alibaba").unwrap();
        let expected = p.get_per_million + 1e6 * 0.001 * p.transfer_per_gb;
        assert!((1e6 * per_read - expected).abs() < 1e-9);
        assert!((expected - 43.10).abs() < 1e-9);
    }

    #[test]
    fn single_local_server_has_no_penalty() {
        let f = fixture();
        let params = CostParams::default();
        assert_eq!(association_units(&f.wan, DcId(0), &[(DcId(0), 100)], 5.0, &params), 0.0);
        assert_eq!(association_units(&f.wan, DcId(0), &[(DcId(1), 100)], 5.0, &params), 0.0);
    }

    #[test]
    fn two_server_penalty_with_spread() {
        // latencies 0.1 and 0.3: spread 2, penalty R(0.5 + 0.5*2)
        let dcs = (0..3)
            .map(|i| crate::wan::DataCenter { id: format!("d{i}"), region: "r".into(), store_price: 0.0, read_price: 0.0, write_price: 0.0 })
            .collect();
        let mk = |rtt| crate::wan::LinkProfile { rtt_ms: rtt, bandwidth_mbps: f64::INFINITY, price_per_gb: 0.0 };
        let links = vec![mk(0.0), mk(100.0), mk(300.0), mk(100.0), mk(0.0), mk(50.0), mk(300.0), mk(50.0), mk(0.0)];
        let wan = WanProfile::new(dcs, links).unwrap();
        let pen = association_units(&wan, DcId(0), &[(DcId(1), 1), (DcId(2), 1)], 4.0, &CostParams::default());
        assert!((pen - 4.0 * (0.5 + 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn local_plus_remote_has_zero_spread() {
        let f = fixture();
        let pen = association_units(&f.wan, DcId(0), &[(DcId(0), 10), (DcId(1), 10)], 2.0, &CostParams::default());
        assert!((pen - 2.0 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn write_charges_origin_and_remote_replicas() {
        let f = fixture();
        let m = CostModel::new(&f.graph, &f.wan, &f.patterns, CostParams::default());
        let mut placement = PlacementState::home_only(&f.graph, &f.part);
        let mut demand = DemandMatrix::new();
        demand.add_write(ItemId(0), DcId(0), 10.0);
        let base = m.write_cost(&placement, &demand);
        assert!((base - 10.0 * 1.4e-6).abs() < 1e-18);
        placement.add(ItemId(0), DcId(1));
        let grown = m.write_cost(&placement, &demand);
        assert!((grown - base - 10.0 * m.unit_sync(ItemId(0), DcId(0), DcId(1))).abs() < 1e-15);
    }

    #[test]
    fn noop_gain_is_zero() {
        let f = fixture();
        let m = CostModel::new(&f.graph, &f.wan, &f.patterns, CostParams::default());
        let placement = PlacementState::home_only(&f.graph, &f.part);
        let mut demand = DemandMatrix::new();
        demand.add_pattern_read(&f.patterns[0], DcId(2), 3.0);
        let routing = home_routing(&f, &placement, &demand);
        assert_eq!(m.marginal_gain(Action::Noop, &placement, &routing, &demand).unwrap(), 0.0);
    }

    #[test]
    fn unread_replica_has_negative_gain() {
        let f = fixture();
        let m = CostModel::new(&f.graph, &f.wan, &f.patterns, CostParams::default());
        let placement = PlacementState::home_only(&f.graph, &f.part);
        let demand = DemandMatrix::new();
        let routing = RoutingState::new();
        let g = m.marginal_gain(Action::AddReplica { item: ItemId(3), dc: DcId(0) }, &placement, &routing, &demand).unwrap();
        assert!(g < 0.0);
    }

    #[test]
    fn hot_local_replica_gain_matches_full_recompute() {
        let f = fixture();
        let m = CostModel::new(&f.graph, &f.wan, &f.patterns, CostParams::default());
        let placement = PlacementState::home_only(&f.graph, &f.part);
        let mut demand = DemandMatrix::new();
        demand.add_pattern_read(&f.patterns[1], DcId(0), 500.0);
        let routing = home_routing(&f, &placement, &demand);
        let action = Action::AddReplica { item: ItemId(3), dc: DcId(0) };
        let gain = m.marginal_gain(action, &placement, &routing, &demand).unwrap();
        let before = m.total_objective(&placement, &routing, &demand).unwrap().total;
        let (mut p2, mut r2) = (placement.clone(), routing.clone());
        m.apply(action, &mut p2, &mut r2, &demand).unwrap();
        let after = m.total_objective(&p2, &r2, &demand).unwrap().total;
        assert!(gain > 0.0);
        assert!((gain - (before - after)).abs() <= 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn remove_last_replica_rejected() {
        let f = fixture();
        let mut placement = PlacementState::home_only(&f.graph, &f.part);
        assert_eq!(placement.remove(ItemId(0), DcId(0)), Err(CostError::LastReplica(ItemId(0))));
    }

    #[test]
    fn routing_to_non_holder_is_error() {
        let f = fixture();
        let m = CostModel::new(&f.graph, &f.wan, &f.patterns, CostParams::default());
        let placement = PlacementState::home_only(&f.graph, &f.part);
        let mut demand = DemandMatrix::new();
        demand.add_pattern_read(&f.patterns[1], DcId(0), 1.0);
        let mut routing = RoutingState::new();
        routing.set(PatternId(1), DcId(0), vec![DcId(0); 3]);
        assert!(matches!(m.total_objective(&placement, &routing, &demand), Err(CostError::UnheldServer { .. })));
        let report = m.check_constraints(&placement, &routing, &demand, 1.0).unwrap();
        assert!(report.count('a') > 0);
    }

    #[test]
    fn average_latency_bound_is_literal() {
        let f = fixture();
        let m = CostModel::new(&f.graph, &f.wan, &f.patterns, CostParams::default());
        let placement = PlacementState::home_only(&f.graph, &f.part);
        let mut demand = DemandMatrix::new();
        demand.add_pattern_read(&f.patterns[1], DcId(0), 1000.0);
        let routing = home_routing(&f, &placement, &demand);
        let report = m.check_constraints(&placement, &routing, &demand, 1.0).unwrap();
        assert_eq!(report.count('c'), 1);
        let mut light = DemandMatrix::new();
        light.add_pattern_read(&f.patterns[1], DcId(0), 0.01);
        let routing = home_routing(&f, &placement, &light);
        assert_eq!(m.check_constraints(&placement, &routing, &light, 1.0).unwrap().count('c'), 0);
    }
}
