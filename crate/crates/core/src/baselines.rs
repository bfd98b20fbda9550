//! Comparison strategies: replicas at k random sites or at the k busiest
//! readers, both served by random routing.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cost::{DemandMatrix, PlacementState, RoutingState};
use crate::graph::{Graph, Partitioning, Pattern};
use crate::ids::{DcId, DcSet, ItemId};
use crate::routing::{route_random, RoutingError};
use crate::wan::WanProfile;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("k = {k} exceeds the {dcs} available sites")]
    TooManyReplicas { k: usize, dcs: usize },
    #[error("k must be at least 1")]
    ZeroReplicas,
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// Home copy plus `k - 1` further sites drawn uniformly without replacement.
pub fn place_random_k(graph: &Graph, part: &Partitioning, k: usize, seed: u64) -> Result<PlacementState, BaselineError> {
    let dcs = part.dc_count();
    if k == 0 {
        return Err(BaselineError::ZeroReplicas);
    }
    if k > dcs {
        return Err(BaselineError::TooManyReplicas { k, dcs });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::with_capacity(graph.item_count());
    for item in graph.items() {
        let home = part.home_of(graph, item.id);
        let others: Vec<DcId> = (0..dcs).map(DcId::from_index).filter(|&d| d != home).collect();
        let mut set = DcSet::single(home);
        for i in sample(&mut rng, others.len(), k - 1) {
            set.insert(others[i]);
        }
        sets.push(set);
    }
    Ok(PlacementState::from_sets(sets))
}

/// The `k` sites with the most reads of each item, ties to the lower id.
/// The home copy is not kept unless it ranks.
pub fn place_top_k(graph: &Graph, dc_count: usize, demand: &DemandMatrix, k: usize) -> Result<PlacementState, BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroReplicas);
    }
    let k = k.min(dc_count);
    let sets = (0..graph.item_count())
        .map(|i| {
            let x = ItemId::from_index(i);
            let mut ranked: Vec<(DcId, f64)> = (0..dc_count).map(|d| (DcId::from_index(d), demand.read_rate(x, DcId::from_index(d)))).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.into_iter().take(k).map(|(d, _)| d).collect()
        })
        .collect();
    Ok(PlacementState::from_sets(sets))
}

/// Random routing for every request class in `demand`, seeded once.
pub fn route_all_random(
    demand: &DemandMatrix,
    patterns: &[Pattern],
    placement: &PlacementState,
    wan: &WanProfile,
    graph: &Graph,
    seed: u64,
) -> Result<RoutingState, BaselineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut routing = RoutingState::new();
    for (p, y, _) in demand.requests() {
        let pattern = patterns.get(p.index()).ok_or(RoutingError::UnknownPattern(p))?;
        let plan = route_random(pattern, y, placement, wan, graph, &mut rng)?;
        routing.set(p, y, plan.servers);
    }
    Ok(routing)
}
