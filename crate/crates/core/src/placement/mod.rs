//! Overlap-centric replica placement.
//!
//! Decisions run top-down over the site-group hierarchy built by the
//! layered graph. A group "holds" an object (a pattern or an overlap region)
//! when a copy of it must end up at one of the group's sites. At each
//! holder the object is pushed into child groups: forcibly where an origin
//! would otherwise miss its latency requirement, wholesale when full
//! replication pays for itself, and region by region otherwise, with child
//! groups competing for each region through heat diffusion. Objects that
//! reach a single site are stored there.

mod competition;
pub mod log;
pub mod maintenance;
pub mod precache;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cost::{nearest_holder, CostError, CostModel, DemandMatrix, PlacementState};
use crate::dhd::{DhdError, DhdParams};
use crate::graph::{GraphError, Partitioning};
use crate::ids::{DcId, DcSet, ItemId, PatternId, VertexId};
use crate::layered::LayeredGraph;
use crate::wan::WanProfile;

pub use competition::{neighbourhood, regional_competition, Candidate, CompetitionOutcome};
pub use log::{CommitAction, LogEntry, ObjectRef, PlacementLog, Region, LOG_HEADER};
pub use maintenance::{apply_update, Update, UpdateOutcome};
pub use precache::{evict_cold, precache_hot, select_hot, CacheState, PrecacheResult};

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dhd(#[from] DhdError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("region competition needs at least one candidate")]
    NoCandidate,
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("unknown pattern {0}")]
    UnknownPattern(PatternId),
    #[error("unknown region {0}")]
    UnknownRegion(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacementParams {
    /// Gamma_max in seconds.
    pub gamma_max: f64,
    pub dhd: DhdParams,
    /// Heat quantile for the final pre-caching pass; `None` skips it.
    pub theta_quantile: Option<f64>,
    /// Competition stops once a sweep moves less heat than this out of the
    /// held vertices.
    pub competition_tol: f64,
    pub competition_sweeps: usize,
}

impl Default for PlacementParams {
    fn default() -> Self {
        PlacementParams { gamma_max: 0.4, dhd: DhdParams::default(), theta_quantile: Some(0.55), competition_tol: 1e-6, competition_sweeps: 50 }
    }
}

/// Read-only inputs shared by the placement phases.
#[derive(Clone, Copy)]
pub struct PlacementContext<'a> {
    pub model: CostModel<'a>,
    pub part: &'a Partitioning,
    pub layered: &'a LayeredGraph,
    pub demand: &'a DemandMatrix,
}

/// Deepest group level at which every site in `origin`'s group can return
/// `bytes` within `bound`. Level 0 (the origin alone) always qualifies.
pub fn rest_level(layered: &LayeredGraph, wan: &WanProfile, origin: DcId, bytes: u64, bound: f64) -> usize {
    let mut level = 0;
    for j in 1..=layered.layer_count() {
        let ok = layered.cluster_of(j, origin).iter().all(|d| wan.request_latency(origin, d, bytes) <= bound + 1e-12);
        if !ok {
            break;
        }
        level = j;
    }
    level
}

/// Where each pattern comes to rest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatternDistribution {
    /// `queues[k - 1]`: patterns whose requirement falls in layer k's interval.
    pub queues: Vec<Vec<PatternId>>,
    /// Group level each requesting origin of a pattern can tolerate.
    pub rest: BTreeMap<(PatternId, DcId), usize>,
}

impl PatternDistribution {
    pub fn layer_of(&self, p: PatternId) -> Option<usize> {
        self.queues.iter().position(|q| q.contains(&p)).map(|i| i + 1)
    }
}

pub fn sink_patterns(model: &CostModel, layered: &LayeredGraph, demand: &DemandMatrix, gamma_max: f64) -> PatternDistribution {
    let mut queues = vec![Vec::new(); layered.layer_count()];
    for p in model.patterns {
        queues[layered.thresholds.layer_of(p.eta * gamma_max) - 1].push(p.id);
    }
    let mut rest = BTreeMap::new();
    for (p, y, _) in demand.requests() {
        if let Ok(pat) = model.pattern(p) {
            let k = rest_level(layered, model.wan, y, pat.size_bytes(model.graph), pat.eta * gamma_max);
            rest.insert((p, y), k);
        }
    }
    PatternDistribution { queues, rest }
}

/// Surrogate gain of fully replicating `items` into a child group whose
/// requesting origins are `origins`: saved remote reads and responder count,
/// minus the storage and synchronisation of one copy at the busiest origin.
/// The baseline is every origin reading from its nearest current holder.
pub fn replication_gain(model: &CostModel, placement: &PlacementState, demand: &DemandMatrix, items: &[ItemId], origins: &[(DcId, f64)]) -> f64 {
    let Some(&(rep, _)) = origins.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))) else {
        return 0.0;
    };
    let assoc = model.params.lambda1 * model.params.association_scale;
    let mut gain = 0.0;
    for &x in items {
        let holders = placement.holders(x);
        if holders.is_empty() {
            continue;
        }
        let size = model.graph.item_size(x);
        let mut after = holders;
        if after.insert(rep) {
            gain -= model.replica_storage(x, rep) + model.replica_write(x, rep, demand);
        }
        for &(y, r) in origins {
            let from = nearest_holder(model.wan, holders, y, size);
            let to = nearest_holder(model.wan, after, y, size);
            if from != to {
                gain += r * (model.unit_read(x, y, from) - model.unit_read(x, y, to)) + r * assoc;
            }
        }
    }
    gain
}

/// Splits the union of `sets` into cells of items sharing the same
/// membership signature. Cells come back ordered by their smallest item.
pub fn decompose_overlaps(sets: &[Vec<ItemId>]) -> Vec<(Vec<usize>, Vec<ItemId>)> {
    let mut signature: BTreeMap<ItemId, Vec<usize>> = BTreeMap::new();
    for (i, set) in sets.iter().enumerate() {
        for &x in set {
            let sig = signature.entry(x).or_default();
            if sig.last() != Some(&i) {
                sig.push(i);
            }
        }
    }
    let mut cells: BTreeMap<Vec<usize>, Vec<ItemId>> = BTreeMap::new();
    for (x, sig) in signature {
        cells.entry(sig).or_default().push(x);
    }
    let mut out: Vec<(Vec<usize>, Vec<ItemId>)> = cells.into_iter().collect();
    out.sort_by_key(|(_, items)| items[0]);
    out
}

#[derive(Clone, Debug)]
struct Obj {
    object: ObjectRef,
    items: Vec<ItemId>,
    contrib: BTreeSet<PatternId>,
    /// A copy must land inside the holding group.
    must_land: bool,
    gain: f64,
}

struct Planner<'a> {
    ctx: PlacementContext<'a>,
    params: &'a PlacementParams,
    placement: PlacementState,
    log: PlacementLog,
    rest: BTreeMap<(PatternId, DcId), usize>,
    pattern_reads: BTreeMap<PatternId, Vec<(DcId, f64)>>,
}

impl<'a> Planner<'a> {
    fn top(&self) -> usize {
        self.ctx.layered.layer_count()
    }

    fn rate(&self, obj: &Obj, y: DcId) -> f64 {
        obj.contrib.iter().map(|p| self.ctx.demand.pattern_reads.get(&(*p, y)).copied().unwrap_or(0.0)).sum()
    }

    fn origins_in(&self, obj: &Obj, sites: DcSet) -> Vec<(DcId, f64)> {
        let mut seen = DcSet::EMPTY;
        for p in &obj.contrib {
            for &(y, _) in self.pattern_reads.get(p).map(Vec::as_slice).unwrap_or(&[]) {
                if sites.contains(y) {
                    seen.insert(y);
                }
            }
        }
        seen.iter().map(|y| (y, self.rate(obj, y))).filter(|&(_, r)| r > 0.0).collect()
    }

    fn rest_of(&self, obj: &Obj, y: DcId) -> usize {
        obj.contrib.iter().filter_map(|p| self.rest.get(&(*p, y)).copied()).min().unwrap_or(self.top())
    }

    fn reachable(&self, items: &[ItemId], y: DcId, k: usize) -> bool {
        let cluster = self.ctx.layered.cluster_of(k, y);
        items.iter().all(|&x| !self.placement.holders(x).intersection(cluster).is_empty())
    }

    fn child_sites(&self, level: usize, child: usize) -> DcSet {
        self.ctx.layered.group_dcs(level - 1, child)
    }

    fn gain_into(&self, obj: &Obj, level: usize, child: usize) -> f64 {
        let origins = self.origins_in(obj, self.child_sites(level, child));
        replication_gain(&self.ctx.model, &self.placement, self.ctx.demand, &obj.items, &origins)
    }

    /// Whether `obj` may stay served by existing copies rather than landing
    /// in a child group.
    fn can_stay(&self, obj: &Obj, level: usize, group: DcSet, origins: &[(DcId, f64)], promised: &BTreeSet<ItemId>) -> bool {
        let lands = !obj.must_land || obj.items.iter().all(|x| promised.contains(x) || !self.placement.holders(*x).intersection(group).is_empty());
        lands
            && origins.iter().all(|&(y, _)| {
                let k = self.rest_of(obj, y);
                let cluster = self.ctx.layered.cluster_of(k, y);
                obj.items.iter().all(|x| !self.placement.holders(*x).intersection(cluster).is_empty() || (k >= level && promised.contains(x)))
            })
    }

    /// Full replication is considered for patterns read more than written.
    fn replication_allowed(&self, obj: &Obj) -> bool {
        match obj.object {
            ObjectRef::Pattern(p) => {
                let reads: f64 = self.pattern_reads.get(&p).map(|v| v.iter().map(|&(_, r)| r).sum()).unwrap_or(0.0);
                let writes: f64 = obj.items.iter().map(|&x| self.ctx.demand.total_writes(x)).sum();
                reads > writes
            }
            _ => true,
        }
    }

    fn push(&mut self, next: &mut BTreeMap<usize, Vec<Obj>>, level: usize, group: usize, child: usize, obj: &Obj, gain: f64, action: CommitAction) {
        self.log.record(level, group, child, obj.object, gain, action);
        next.entry(child).or_default().push(Obj { must_land: true, gain, ..obj.clone() });
    }

    fn process_holder(&mut self, level: usize, group: usize, objs: Vec<Obj>, next: &mut BTreeMap<usize, Vec<Obj>>) -> Result<(), PlacementError> {
        let layered = self.ctx.layered;
        let sites = layered.group_dcs(level, group);
        let mut promised: BTreeSet<ItemId> = BTreeSet::new();
        let mut promised_to: BTreeMap<usize, BTreeSet<ItemId>> = BTreeMap::new();
        let mut pending: Vec<(Obj, BTreeSet<usize>)> = Vec::new();

        for obj in objs {
            let origins = self.origins_in(&obj, sites);
            let mut forced = BTreeSet::new();
            let mut free = BTreeSet::new();
            for &(y, _) in &origins {
                let child = layered.group_of(level - 1, y);
                let k = self.rest_of(&obj, y);
                if k < level && !self.reachable(&obj.items, y, k) {
                    forced.insert(child);
                } else {
                    free.insert(child);
                }
            }
            for &c in &forced {
                free.remove(&c);
                let gain = self.gain_into(&obj, level, c);
                self.push(next, level, group, c, &obj, gain, CommitAction::Sink);
                promised.extend(obj.items.iter().copied());
                promised_to.entry(c).or_default().extend(obj.items.iter().copied());
            }
            if free.is_empty() {
                continue;
            }
            if self.replication_allowed(&obj) {
                let total: f64 = free.iter().map(|&c| self.gain_into(&obj, level, c)).sum();
                if total >= 0.0 {
                    for &c in &free {
                        self.push(next, level, group, c, &obj, total, CommitAction::Replicate);
                        promised.extend(obj.items.iter().copied());
                        promised_to.entry(c).or_default().extend(obj.items.iter().copied());
                    }
                    continue;
                }
            }
            pending.push((obj, free));
        }
        if pending.is_empty() {
            return Ok(());
        }

        let sets: Vec<Vec<ItemId>> = pending.iter().map(|(o, _)| o.items.clone()).collect();
        for (members, items) in decompose_overlaps(&sets) {
            let mut contrib = BTreeSet::new();
            let mut must_land = false;
            let mut children = BTreeSet::new();
            for &m in &members {
                contrib.extend(pending[m].0.contrib.iter().copied());
                must_land |= pending[m].0.must_land;
                children.extend(pending[m].1.iter().copied());
            }
            let whole = members.len() == 1 && items.len() == pending[members[0]].0.items.len();
            let mut region = Obj { object: ObjectRef::Region(u32::MAX), items, contrib, must_land, gain: 0.0 };
            let reach: DcSet = children.iter().fold(DcSet::EMPTY, |acc, &c| acc.union(self.child_sites(level, c)));
            let origins = self.origins_in(&region, reach);
            let cands: Vec<usize> = children.iter().copied().filter(|&c| origins.iter().any(|&(y, _)| layered.group_of(level - 1, y) == c)).collect();
            if cands.is_empty() {
                continue;
            }
            region.object = if whole {
                pending[members[0]].0.object
            } else {
                let total: f64 = origins.iter().map(|&(_, r)| r).sum();
                ObjectRef::Region(self.log.add_region(region.items.clone(), region.contrib.iter().copied().collect(), total))
            };
            let gains: Vec<f64> = cands.iter().map(|&c| self.gain_into(&region, level, c)).collect();
            let total: f64 = gains.iter().sum();
            if cands.len() > 1 && total >= 0.0 {
                for &c in &cands {
                    self.push(next, level, group, c, &region, total, CommitAction::Replicate);
                    promised_to.entry(c).or_default().extend(region.items.iter().copied());
                }
                promised.extend(region.items.iter().copied());
                continue;
            }
            let w = if cands.len() == 1 { 0 } else { self.compete(&region, level, &cands, &promised_to)? };
            if gains[w] >= 0.0 || !self.can_stay(&region, level, sites, &origins, &promised) {
                self.push(next, level, group, cands[w], &region, gains[w], CommitAction::Compete);
                promised.extend(region.items.iter().copied());
                promised_to.entry(cands[w]).or_default().extend(region.items.iter().copied());
            }
        }
        Ok(())
    }

    fn compete(&self, region: &Obj, level: usize, cands: &[usize], promised_to: &BTreeMap<usize, BTreeSet<ItemId>>) -> Result<usize, PlacementError> {
        let graph = self.ctx.model.graph;
        let ball = neighbourhood(graph, &region.items, 2);
        let mut candidates = Vec::with_capacity(cands.len());
        for &c in cands {
            let sites = self.child_sites(level, c);
            let promised = promised_to.get(&c);
            let mut seeds = BTreeMap::new();
            for &v in &ball {
                let x = graph.vertex_item(v);
                let held = !self.placement.holders(x).intersection(sites).is_empty() || promised.is_some_and(|s| s.contains(&x));
                if held {
                    let reads: f64 = sites.iter().map(|y| self.ctx.demand.read_rate(x, y)).sum();
                    seeds.insert(v, reads.max(1.0));
                }
            }
            let access = sites.iter().map(|y| self.rate(region, y)).sum();
            candidates.push(Candidate { id: c, seeds, access });
        }
        let outcome = regional_competition(graph, &region.items, &candidates, &self.params.dhd, self.params.competition_tol, self.params.competition_sweeps)?;
        Ok(cands.iter().position(|&c| c == outcome.winner).expect("winner is a candidate"))
    }
}

/// Runs placement from `base` (normally home copies only).
pub fn place_all(ctx: PlacementContext, base: &PlacementState, params: &PlacementParams) -> Result<(PlacementState, PlacementLog), PlacementError> {
    let dist = sink_patterns(&ctx.model, ctx.layered, ctx.demand, params.gamma_max);
    let mut pattern_reads: BTreeMap<PatternId, Vec<(DcId, f64)>> = BTreeMap::new();
    for (p, y, r) in ctx.demand.requests() {
        pattern_reads.entry(p).or_default().push((y, r));
    }
    let mut planner = Planner { ctx, params, placement: base.clone(), log: PlacementLog::default(), rest: dist.rest, pattern_reads };

    let top = ctx.layered.layer_count();
    let mut held: BTreeMap<usize, Vec<Obj>> = BTreeMap::new();
    for p in ctx.model.patterns {
        let Some(origins) = planner.pattern_reads.get(&p.id) else { continue };
        let items: Vec<ItemId> = p.items.iter().copied().filter(|&x| base.is_live(x)).collect();
        if items.is_empty() {
            continue;
        }
        let mut groups = BTreeSet::new();
        for &(y, _) in origins {
            groups.insert(ctx.layered.group_of(top, y));
        }
        for g in groups {
            let obj = Obj { object: ObjectRef::Pattern(p.id), items: items.clone(), contrib: BTreeSet::from([p.id]), must_land: false, gain: 0.0 };
            held.entry(g).or_default().push(obj);
        }
    }
    for level in (1..=top).rev() {
        let mut next: BTreeMap<usize, Vec<Obj>> = BTreeMap::new();
        for (g, objs) in std::mem::take(&mut held) {
            let mut out = BTreeMap::new();
            planner.process_holder(level, g, objs, &mut out)?;
            for (c, objs) in out {
                next.entry(c).or_default().extend(objs);
            }
        }
        held = next;
    }
    for (d, objs) in held {
        let dc = DcId::from_index(d);
        for obj in objs {
            for &x in &obj.items {
                planner.placement.add(x, dc);
            }
            planner.log.record(0, d, d, obj.object, obj.gain, CommitAction::Store);
        }
    }

    let Planner { mut placement, mut log, .. } = planner;
    if let Some(q) = params.theta_quantile {
        for d in 0..ctx.model.wan.dc_count() {
            let dc = DcId::from_index(d);
            let cached = precache_hot(ctx.model.graph, ctx.part, &placement, ctx.demand, dc, &params.dhd, q)?;
            for &x in &cached.items {
                let gain = replication_gain(&ctx.model, &placement, ctx.demand, &[x], &[(dc, ctx.demand.read_rate(x, dc))]);
                placement.add(x, dc);
                log.record(0, d, d, ObjectRef::Item(x), gain, CommitAction::Precache);
            }
        }
    }
    Ok((placement, log))
}

/// Vertices touched by `items`.
pub(crate) fn item_vertices(graph: &crate::graph::Graph, items: &[ItemId]) -> BTreeSet<VertexId> {
    items.iter().flat_map(|&x| graph.item_vertices(x)).flatten().collect()
}

#[cfg(test)]
mod tests;
