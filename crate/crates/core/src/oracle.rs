//! Exhaustive optimum for tiny instances, and a standalone objective
//! evaluator used to cross-check the cost model.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::cost::{CostBreakdown, CostParams, DemandMatrix, PlacementState, RoutingState};
use crate::graph::{Graph, Partitioning, Pattern};
use crate::ids::{DcId, DcSet, ItemId, PatternId};
use crate::wan::WanProfile;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{bits} placement bits exceed the enumeration bound of 30")]
    TooLarge { bits: usize },
    #[error("no placement satisfies constraint ({clause})")]
    Infeasible { clause: char },
    #[error("optimal cost is zero; gap undefined")]
    ZeroOptimum,
    #[error("request ({pattern}, {origin}) has no route")]
    MissingRoute { pattern: PatternId, origin: DcId },
    #[error("item {item} routed to {server}, which holds no replica")]
    UnheldServer { item: ItemId, server: DcId },
    #[error("unknown pattern {0}")]
    UnknownPattern(PatternId),
}

pub const MAX_BITS: usize = 30;

/// Objective computed directly from prices and links. Kept separate from
/// the cost model on purpose; it walks items, sites and requests in the
/// same order so the two agree to the last bit.
pub fn evaluate(
    graph: &Graph,
    wan: &WanProfile,
    patterns: &[Pattern],
    params: &CostParams,
    placement: &PlacementState,
    routing: &RoutingState,
    demand: &DemandMatrix,
) -> Result<CostBreakdown, OracleError> {
    let gb = |x: ItemId| graph.items()[x.index()].size_bytes as f64 / 1e9;
    let latency = |origin: DcId, server: DcId, bytes: u64| {
        if origin == server {
            0.0
        } else {
            let l = wan.link(server, origin);
            l.rtt_ms / 1000.0 + bytes as f64 * 8.0 / (l.bandwidth_mbps * 1e6)
        }
    };

    let mut storage = 0.0;
    for i in 0..placement.item_count() {
        let x = ItemId::from_index(i);
        if !placement.is_live(x) {
            continue;
        }
        for d in 0..wan.dc_count() {
            let d = DcId::from_index(d);
            if placement.holds(x, d) {
                storage += gb(x) * wan.dc(d).store_price;
            }
        }
    }

    let mut read = 0.0;
    let mut association = 0.0;
    for (&(p, y), &r) in &demand.pattern_reads {
        if r <= 0.0 {
            continue;
        }
        let pattern = patterns.get(p.index()).filter(|pat| pat.id == p).ok_or(OracleError::UnknownPattern(p))?;
        let servers = routing.get(p, y).filter(|s| s.len() == pattern.items.len()).ok_or(OracleError::MissingRoute { pattern: p, origin: y })?;
        let mut sub = 0.0;
        let mut parts: BTreeMap<DcId, u64> = BTreeMap::new();
        for (&x, &d) in pattern.items.iter().zip(servers) {
            if !placement.holds(x, d) {
                return Err(OracleError::UnheldServer { item: x, server: d });
            }
            let mut unit = wan.dc(d).read_price / 1e6;
            if d != y {
                unit += gb(x) * wan.link(d, y).price_per_gb;
            }
            sub += r * unit;
            *parts.entry(d).or_insert(0) += graph.items()[x.index()].size_bytes;
        }
        read += sub;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (&d, &b) in &parts {
            let l = latency(y, d, b);
            lo = lo.min(l);
            hi = hi.max(l);
        }
        let spread = if lo > 0.0 { (hi - lo) / lo } else { 0.0 };
        association += r * (params.lambda1 * (parts.len() as f64 - 1.0) + params.lambda2 * spread) * params.association_scale;
    }

    let mut write = 0.0;
    for (&(x, y), &w) in &demand.writes {
        if !placement.is_live(x) {
            continue;
        }
        let mut per_write = wan.dc(y).write_price / 1e6;
        for d in 0..wan.dc_count() {
            let d = DcId::from_index(d);
            if d != y && placement.holds(x, d) {
                per_write += wan.dc(d).write_price / 1e6 + gb(x) * wan.link(y, d).price_per_gb;
            }
        }
        write += w * per_write;
    }

    Ok(CostBreakdown { storage, read, write, association, total: storage + read + write + association })
}

/// (C - C*) / C* in percent.
pub fn gap(cost: f64, optimum: f64) -> Result<f64, OracleError> {
    if optimum == 0.0 {
        return Err(OracleError::ZeroOptimum);
    }
    Ok((cost - optimum) / optimum * 100.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub placement: PlacementState,
    pub routing: RoutingState,
    pub cost: CostBreakdown,
    /// Complete placements whose routing was evaluated.
    pub leaves: u64,
}

struct Request {
    pattern: PatternId,
    origin: DcId,
    rate: f64,
    bound: f64,
    /// Positions into the oracle's item list.
    items: Vec<usize>,
}

#[derive(Clone, Debug)]
struct RequestBest {
    cost: f64,
    /// Sum over items of r times the item's latency.
    weighted_latency: f64,
    servers: Vec<DcId>,
}

struct Search<'a> {
    graph: &'a Graph,
    wan: &'a WanProfile,
    params: &'a CostParams,
    gamma_max: f64,
    items: Vec<ItemId>,
    homes: Vec<DcId>,
    /// Storage plus write cost of a replica set, per item, indexed by the
    /// bitmask of extra (non-home) sites.
    option_cost: Vec<Vec<f64>>,
    option_set: Vec<Vec<DcSet>>,
    min_option: Vec<f64>,
    requests: Vec<Request>,
    floor: f64,
    memo: Vec<HashMap<u64, Option<RequestBest>>>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>, Vec<RequestBest>)>,
    leaves: u64,
    binding: Option<char>,
}

impl Search<'_> {
    fn dcs(&self) -> usize {
        self.wan.dc_count()
    }

    fn request_best(&self, req: &Request, holders: &[DcSet]) -> Option<RequestBest> {
        let choices: Vec<Vec<DcId>> = req.items.iter().map(|&i| holders[i].iter().collect()).collect();
        let mut idx = vec![0usize; choices.len()];
        let mut best: Option<RequestBest> = None;
        loop {
            let servers: Vec<DcId> = idx.iter().zip(&choices).map(|(&k, c)| c[k]).collect();
            let mut parts: BTreeMap<DcId, u64> = BTreeMap::new();
            let mut read = 0.0;
            let mut weighted = 0.0;
            for (&i, &d) in req.items.iter().zip(&servers) {
                let x = self.items[i];
                let size = self.graph.item_size(x);
                *parts.entry(d).or_insert(0) += size;
                let mut unit = self.wan.dc(d).read_op_cost();
                if d != req.origin {
                    unit += size as f64 / 1e9 * self.wan.link(d, req.origin).price_per_gb;
                }
                read += req.rate * unit;
                weighted += req.rate * self.wan.request_latency(req.origin, d, size);
            }
            let parts: Vec<(DcId, u64)> = parts.into_iter().collect();
            if self.wan.pattern_latency(req.origin, &parts) <= req.bound + 1e-12 {
                let cost = read + crate::cost::association_units(self.wan, req.origin, &parts, req.rate, self.params);
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    best = Some(RequestBest { cost, weighted_latency: weighted, servers });
                }
            }
            // next assignment in lexicographic order
            let mut k = idx.len();
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < choices[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn key(&self, req: &Request, holders: &[DcSet]) -> u64 {
        let d = self.dcs();
        req.items.iter().fold(0u64, |acc, &i| (acc << d) | holders[i].bits())
    }

    fn leaf(&mut self, fixed: f64) {
        self.leaves += 1;
        let holders: Vec<DcSet> = self.chosen.iter().enumerate().map(|(i, &m)| self.option_set[i][m]).collect();
        let mut total = fixed;
        let mut weighted = 0.0;
        let mut picks = Vec::with_capacity(self.requests.len());
        for r in 0..self.requests.len() {
            let key = self.key(&self.requests[r], &holders);
            let best = match self.memo[r].get(&key) {
                Some(b) => b.clone(),
                None => {
                    let b = self.request_best(&self.requests[r], &holders);
                    self.memo[r].insert(key, b.clone());
                    b
                }
            };
            let Some(b) = best else {
                self.binding.get_or_insert('d');
                return;
            };
            total += b.cost;
            weighted += b.weighted_latency;
            picks.push(b);
        }
        if !self.items.is_empty() && weighted / self.items.len() as f64 > self.gamma_max + 1e-12 {
            self.binding.get_or_insert('c');
            return;
        }
        if self.best.as_ref().is_none_or(|(c, _, _)| total < *c) {
            self.best = Some((total, self.chosen.clone(), picks));
        }
    }

    fn dfs(&mut self, i: usize, fixed: f64) {
        if i == self.items.len() {
            self.leaf(fixed);
            return;
        }
        let rest: f64 = self.min_option[i..].iter().sum();
        if let Some((c, _, _)) = &self.best {
            if fixed + rest + self.floor > *c {
                return;
            }
        }
        for m in 0..self.option_cost[i].len() {
            let here = self.option_cost[i][m];
            let rest_after: f64 = self.min_option[i + 1..].iter().sum();
            if let Some((c, _, _)) = &self.best {
                if fixed + here + rest_after + self.floor > *c {
                    continue;
                }
            }
            self.chosen[i] = m;
            self.dfs(i + 1, fixed + here);
        }
    }
}

/// Minimum of the objective over every placement that keeps home copies,
/// with each request routed optimally for that placement under the
/// per-pattern deadline. The average-latency constraint is checked on the
/// resulting routing. Ties keep the lexicographically first placement.
pub fn solve_exact(
    graph: &Graph,
    part: &Partitioning,
    wan: &WanProfile,
    patterns: &[Pattern],
    demand: &DemandMatrix,
    params: &CostParams,
    gamma_max: f64,
) -> Result<ExactSolution, OracleError> {
    let dcs = wan.dc_count();
    let bits = graph.item_count() * dcs;
    if bits > MAX_BITS {
        return Err(OracleError::TooLarge { bits });
    }
    let items: Vec<ItemId> = graph.items().iter().map(|i| i.id).collect();
    let homes: Vec<DcId> = items.iter().map(|&x| part.home_of(graph, x)).collect();

    let mut option_cost = Vec::with_capacity(items.len());
    let mut option_set = Vec::with_capacity(items.len());
    for (i, &x) in items.iter().enumerate() {
        let others: Vec<DcId> = (0..dcs).map(DcId::from_index).filter(|&d| d != homes[i]).collect();
        let size_gb = graph.item_size(x) as f64 / 1e9;
        let mut costs = Vec::with_capacity(1 << others.len());
        let mut sets = Vec::with_capacity(1 << others.len());
        for m in 0..(1usize << others.len()) {
            let mut set = DcSet::single(homes[i]);
            for (b, &d) in others.iter().enumerate() {
                if m >> b & 1 == 1 {
                    set.insert(d);
                }
            }
            let mut c = 0.0;
            for d in set.iter() {
                c += size_gb * wan.dc(d).store_price;
            }
            for (y, w) in demand.writes_of(x) {
                let mut per = wan.dc(y).write_op_cost();
                for d in set.iter().filter(|&d| d != y) {
                    per += wan.dc(d).write_op_cost() + size_gb * wan.link(y, d).price_per_gb;
                }
                c += w * per;
            }
            costs.push(c);
            sets.push(set);
        }
        option_cost.push(costs);
        option_set.push(sets);
    }
    let min_option = option_cost.iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect();

    let mut requests = Vec::new();
    for (p, y, r) in demand.requests() {
        let pat = patterns.get(p.index()).filter(|pat| pat.id == p).ok_or(OracleError::UnknownPattern(p))?;
        let idx = pat.items.iter().map(|x| x.index()).collect();
        requests.push(Request { pattern: p, origin: y, rate: r, bound: pat.eta * gamma_max, items: idx });
    }

    let mut search = Search {
        graph,
        wan,
        params,
        gamma_max,
        memo: vec![HashMap::new(); requests.len()],
        chosen: vec![0; items.len()],
        items,
        homes,
        option_cost,
        option_set,
        min_option,
        requests,
        floor: 0.0,
        best: None,
        leaves: 0,
        binding: None,
    };
    // Every request costs at least its best routing with all sites holding everything.
    let everywhere: Vec<DcSet> = vec![(0..dcs).map(DcId::from_index).collect(); search.items.len()];
    let mut floor = 0.0;
    for r in &search.requests {
        match search.request_best(r, &everywhere) {
            Some(b) => floor += b.cost,
            None => return Err(OracleError::Infeasible { clause: 'd' }),
        }
    }
    search.floor = floor;
    search.dfs(0, 0.0);

    let Some((_, chosen, picks)) = search.best else {
        return Err(OracleError::Infeasible { clause: search.binding.unwrap_or('d') });
    };
    let placement = PlacementState::from_sets(chosen.iter().enumerate().map(|(i, &m)| search.option_set[i][m]).collect());
    debug_assert!(search.homes.iter().enumerate().all(|(i, &h)| placement.holds(ItemId::from_index(i), h)));
    let mut routing = RoutingState::new();
    for (req, pick) in search.requests.iter().zip(picks) {
        routing.set(req.pattern, req.origin, pick.servers);
    }
    let cost = evaluate(graph, wan, patterns, params, &placement, &routing, demand)?;
    Ok(ExactSolution { placement, routing, cost, leaves: search.leaves })
}
