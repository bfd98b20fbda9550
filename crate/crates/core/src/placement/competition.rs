use std::collections::{BTreeMap, BTreeSet};

use crate::dhd::{edge_transfer, vertex_step, DhdParams, HeatGraph, HeatState};
use crate::graph::Graph;
use crate::ids::{ItemId, VertexId};

use super::{item_vertices, PlacementError};

/// One child group bidding for a region.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: usize,
    /// Initial heat on the vertices the candidate already holds.
    pub seeds: BTreeMap<VertexId, f64>,
    /// Read rate of the candidate's origins for the region.
    pub access: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompetitionOutcome {
    /// Id of the winning candidate.
    pub winner: usize,
    /// Heat that reached the region, per candidate in input order.
    pub scores: Vec<f64>,
    /// No heat reached the region; decided on access rate.
    pub by_access: bool,
}

/// Vertices within `hops` of the vertices touched by `items`.
pub fn neighbourhood(graph: &Graph, items: &[ItemId], hops: usize) -> BTreeSet<VertexId> {
    let mut ball = item_vertices(graph, items);
    let mut frontier: Vec<VertexId> = ball.iter().copied().collect();
    for _ in 0..hops {
        let mut next = Vec::new();
        for v in frontier {
            for &(w, _) in graph.neighbors(v) {
                if ball.insert(w) {
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    ball
}

/// Each candidate's held vertices diffuse heat over the two-hop
/// neighbourhood of the region until the flow out of them dies down. The
/// candidate whose heat reaches the region the most wins; equal heat goes
/// to the earlier candidate. When nothing reaches the region the highest
/// access rate wins.
pub fn regional_competition(
    graph: &Graph,
    region: &[ItemId],
    candidates: &[Candidate],
    params: &DhdParams,
    tol: f64,
    max_sweeps: usize,
) -> Result<CompetitionOutcome, PlacementError> {
    if candidates.is_empty() {
        return Err(PlacementError::NoCandidate);
    }
    if candidates.len() == 1 {
        return Ok(CompetitionOutcome { winner: candidates[0].id, scores: vec![0.0], by_access: false });
    }
    let target = item_vertices(graph, region);
    let domain: Vec<VertexId> = neighbourhood(graph, region, 2).into_iter().collect();
    let g = HeatGraph::induced(graph, &domain);
    let index: BTreeMap<VertexId, usize> = domain.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let target_idx: Vec<usize> = target.iter().map(|v| index[v]).collect();

    let mut scores = Vec::with_capacity(candidates.len());
    for c in candidates {
        let mut heat = vec![0.0; g.len()];
        let mut held = vec![false; g.len()];
        for (v, &h) in &c.seeds {
            if let Some(&i) = index.get(v) {
                heat[i] = h;
                held[i] = true;
            }
        }
        let mut state = HeatState::new(heat);
        for _ in 0..max_sweeps {
            let mut out = 0.0;
            for u in (0..g.len()).filter(|&u| held[u]) {
                for &(w, _) in g.neighbors(u) {
                    if !held[w] {
                        out += edge_transfer(&g, &state, u, w, params);
                    }
                }
            }
            if out < tol {
                break;
            }
            state = vertex_step(&g, &state, params)?;
        }
        scores.push(target_idx.iter().map(|&i| state.heat[i]).sum::<f64>());
    }

    let best = argmax(&scores);
    if scores[best] > 0.0 {
        return Ok(CompetitionOutcome { winner: candidates[best].id, scores, by_access: false });
    }
    let access: Vec<f64> = candidates.iter().map(|c| c.access).collect();
    Ok(CompetitionOutcome { winner: candidates[argmax(&access)].id, scores, by_access: true })
}

/// First index of the maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
