//! Directional heat diffusion: heat flows only from hotter vertices to
//! strictly cooler neighbours, decays by `gamma` each step, and is fed by
//! access-driven sources.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::Graph;
use crate::ids::{EdgeId, VertexId};

#[derive(Debug, Error, PartialEq)]
pub enum DhdError {
    #[error("invalid diffusion parameter: {0}")]
    BadParams(&'static str),
    #[error("state has {got} entries, graph has {want} vertices")]
    Dimension { got: usize, want: usize },
    #[error("steady-state system is singular")]
    Singular,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhdParams {
    /// Diffusion rate.
    pub alpha: f64,
    /// Decay per step.
    pub gamma: f64,
    /// Source injection gain.
    pub beta: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Source half-life in steps.
    pub half_life: f64,
    /// Source boost per access.
    pub delta_q: f64,
}

impl Default for DhdParams {
    fn default() -> Self {
        DhdParams { alpha: 0.5, gamma: 0.1, beta: 0.3, tol: 1e-8, max_iters: 200, half_life: 10.0, delta_q: 0.1 }
    }
}

impl DhdParams {
    pub fn validate(&self) -> Result<(), DhdError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(DhdError::BadParams("alpha must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(DhdError::BadParams("gamma must lie in (0, 1)"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(DhdError::BadParams("beta must be non-negative"));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(DhdError::BadParams("tolerance and iteration cap must be positive"));
        }
        if !(self.half_life > 0.0) {
            return Err(DhdError::BadParams("half-life must be positive"));
        }
        Ok(())
    }

    /// Source decay rate ln 2 / half-life.
    pub fn decay_rate(&self) -> f64 {
        std::f64::consts::LN_2 / self.half_life
    }
}

/// Weighted undirected graph on dense local indices.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatGraph {
    adj: Vec<Vec<(usize, f64)>>,
    /// Original vertex for each local index, when built from a `Graph`.
    pub vertices: Vec<VertexId>,
    /// Original edge for each local edge, ascending.
    pub edges: Vec<(usize, usize, EdgeId)>,
}

impl HeatGraph {
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> HeatGraph {
        let mut adj = vec![Vec::new(); n];
        let mut local_edges = Vec::with_capacity(edges.len());
        for (i, &(u, v, w)) in edges.iter().enumerate() {
            adj[u].push((v, w));
            adj[v].push((u, w));
            local_edges.push((u, v, EdgeId::from_index(i)));
        }
        HeatGraph { adj, vertices: (0..n).map(VertexId::from_index).collect(), edges: local_edges }
    }

    /// Subgraph induced by `vertices` (kept in the given order).
    pub fn induced(graph: &Graph, vertices: &[VertexId]) -> HeatGraph {
        let index: BTreeMap<VertexId, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut adj = vec![Vec::new(); vertices.len()];
        let mut edges = Vec::new();
        for (i, &v) in vertices.iter().enumerate() {
            for &(w, e) in graph.neighbors(v) {
                if let Some(&j) = index.get(&w) {
                    adj[i].push((j, graph.edge(e).weight));
                    if i < j {
                        edges.push((i, j, e));
                    }
                }
            }
        }
        edges.sort_by_key(|&(_, _, e)| e);
        HeatGraph { adj, vertices: vertices.to_vec(), edges }
    }

    pub fn whole(graph: &Graph) -> HeatGraph {
        let vertices: Vec<VertexId> = (0..graph.vertex_count()).map(VertexId::from_index).collect();
        HeatGraph::induced(graph, &vertices)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adj[u]
    }

    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.vertices.iter().position(|&x| x == v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatState {
    pub heat: Vec<f64>,
    pub step: usize,
}

impl HeatState {
    pub fn new(heat: Vec<f64>) -> Self {
        HeatState { heat, step: 0 }
    }

    pub fn zeros(n: usize) -> Self {
        HeatState::new(vec![0.0; n])
    }

    pub fn total(&self) -> f64 {
        self.heat.iter().sum()
    }
}

/// Heat sources O and their current intensities Q.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceState {
    pub sources: BTreeSet<usize>,
    pub q0: f64,
    pub q: Vec<f64>,
}

impl SourceState {
    /// Sources start at 1/|O| each.
    pub fn new(n: usize, sources: BTreeSet<usize>) -> Self {
        let q0 = if sources.is_empty() { 0.0 } else { 1.0 / sources.len() as f64 };
        let mut q = vec![0.0; n];
        for &s in &sources {
            q[s] = q0;
        }
        SourceState { sources, q0, q }
    }

    pub fn none(n: usize) -> Self {
        SourceState::new(n, BTreeSet::new())
    }
}

/// Number of strictly cooler neighbours of `u`.
pub fn lower_neighbors(g: &HeatGraph, state: &HeatState, u: usize) -> usize {
    g.neighbors(u).iter().filter(|&&(w, _)| state.heat[w] < state.heat[u]).count()
}

/// Heat moved along u -> v in one step.
pub fn edge_transfer(g: &HeatGraph, state: &HeatState, u: usize, v: usize, params: &DhdParams) -> f64 {
    let diff = state.heat[u] - state.heat[v];
    if diff <= 0.0 {
        return 0.0;
    }
    let n_out = lower_neighbors(g, state, u);
    if n_out == 0 {
        return 0.0;
    }
    let a: f64 = g.neighbors(u).iter().filter(|&&(w, _)| w == v).map(|&(_, a)| a).sum();
    params.alpha * a / n_out as f64 * diff
}

fn check_dim(g: &HeatGraph, state: &HeatState) -> Result<(), DhdError> {
    if state.heat.len() != g.len() {
        return Err(DhdError::Dimension { got: state.heat.len(), want: g.len() });
    }
    Ok(())
}

/// One source-free step computed vertex by vertex from the previous state.
pub fn vertex_step(g: &HeatGraph, state: &HeatState, params: &DhdParams) -> Result<HeatState, DhdError> {
    check_dim(g, state)?;
    let n = g.len();
    let h = &state.heat;
    let mut inflow = vec![0.0; n];
    let mut outflow = vec![0.0; n];
    for u in 0..n {
        let n_out = g.neighbors(u).iter().filter(|&&(w, _)| h[w] < h[u]).count();
        if n_out == 0 {
            continue;
        }
        for &(w, a) in g.neighbors(u) {
            if h[w] < h[u] {
                let t = params.alpha * a / n_out as f64 * (h[u] - h[w]);
                outflow[u] += t;
                inflow[w] += t;
            }
        }
    }
    let heat = (0..n).map(|v| (1.0 - params.gamma) * (h[v] + inflow[v] - outflow[v])).collect();
    Ok(HeatState { heat, step: state.step + 1 })
}

/// State-dependent diffusion operator as sparse rows (diagonal included).
/// Rows sum to zero, so `L h` is the net inflow at each vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionOperator {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl DiffusionOperator {
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, c)| c * h[j]).sum()).collect()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        self.rows.iter().map(|row| row.iter().map(|&(_, c)| c.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                m[(i, j)] += c;
            }
        }
        m
    }
}

pub fn diffusion_operator(g: &HeatGraph, state: &HeatState) -> Result<DiffusionOperator, DhdError> {
    check_dim(g, state)?;
    let n = g.len();
    let h = &state.heat;
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for u in 0..n {
        let n_out = g.neighbors(u).iter().filter(|&&(w, _)| h[w] < h[u]).count();
        if n_out == 0 {
            continue;
        }
        for &(w, a) in g.neighbors(u) {
            if h[w] < h[u] {
                let c = a / n_out as f64;
                *rows[u].entry(u).or_insert(0.0) -= c;
                *rows[u].entry(w).or_insert(0.0) += c;
                *rows[w].entry(w).or_insert(0.0) -= c;
                *rows[w].entry(u).or_insert(0.0) += c;
            }
        }
    }
    Ok(DiffusionOperator { rows: rows.into_iter().map(|r| r.into_iter().collect()).collect() })
}

/// Next source intensities at step `k`: decayed initial value plus a boost
/// per access, for source vertices only.
pub fn source_step(sources: &SourceState, k: usize, accesses: &[f64], params: &DhdParams) -> SourceState {
    let base = sources.q0 * (-params.decay_rate() * k as f64).exp();
    let mut q = vec![0.0; sources.q.len()];
    for &s in &sources.sources {
        q[s] = base + params.delta_q * accesses.get(s).copied().unwrap_or(0.0);
    }
    SourceState { sources: sources.sources.clone(), q0: sources.q0, q }
}

/// One step in matrix form: H' = (1 - gamma)(H + alpha L H) + beta Q.
pub fn system_step(g: &HeatGraph, state: &HeatState, sources: &SourceState, params: &DhdParams) -> Result<HeatState, DhdError> {
    let op = diffusion_operator(g, state)?;
    if sources.q.len() != g.len() {
        return Err(DhdError::Dimension { got: sources.q.len(), want: g.len() });
    }
    let lh = op.apply(&state.heat);
    let heat = (0..g.len()).map(|v| (1.0 - params.gamma) * (state.heat[v] + params.alpha * lh[v]) + params.beta * sources.q[v]).collect();
    Ok(HeatState { heat, step: state.step + 1 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    pub state: HeatState,
    pub iterations: usize,
    /// Max-norm change in the final iteration.
    pub residual: f64,
    pub converged: bool,
}

/// Iterates `system_step` with the sources held fixed until the max-norm
/// change drops below `tol` or `max_iters` is reached.
pub fn run_to_steady(g: &HeatGraph, init: &HeatState, sources: &SourceState, params: &DhdParams) -> Result<SteadyState, DhdError> {
    run_to_steady_traced(g, init, sources, params, |_| {})
}

pub fn run_to_steady_traced(
    g: &HeatGraph,
    init: &HeatState,
    sources: &SourceState,
    params: &DhdParams,
    mut trace: impl FnMut(&HeatState),
) -> Result<SteadyState, DhdError> {
    params.validate()?;
    check_dim(g, init)?;
    let mut state = init.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=params.max_iters {
        let next = system_step(g, &state, sources, params)?;
        residual = next.heat.iter().zip(&state.heat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        state = next;
        trace(&state);
        if residual < params.tol {
            return Ok(SteadyState { state, iterations: it, residual, converged: true });
        }
    }
    Ok(SteadyState { state, iterations: params.max_iters, residual, converged: false })
}

/// Solves (gamma I - alpha (1 - gamma) L) H = beta Q with L frozen at the
/// ordering of `state`.
pub fn closed_form_steady(g: &HeatGraph, state: &HeatState, sources: &SourceState, params: &DhdParams) -> Result<Vec<f64>, DhdError> {
    params.validate()?;
    let n = g.len();
    let l = diffusion_operator(g, state)?.to_dense();
    let m = DMatrix::<f64>::identity(n, n) * params.gamma - l * (params.alpha * (1.0 - params.gamma));
    let rhs = DVector::from_iterator(n, sources.q.iter().map(|q| params.beta * q));
    let x = m.lu().solve(&rhs).ok_or(DhdError::Singular)?;
    Ok(x.iter().copied().collect())
}

/// Largest alpha for which the contraction condition holds at `state`:
/// gamma / ((1 - gamma) ||L||_inf). Infinite when L vanishes.
pub fn alpha_bound(g: &HeatGraph, state: &HeatState, params: &DhdParams) -> Result<f64, DhdError> {
    let norm = diffusion_operator(g, state)?.inf_norm();
    Ok(bound_for_norm(params.gamma, norm))
}

pub fn bound_for_norm(gamma: f64, norm: f64) -> f64 {
    if norm == 0.0 {
        f64::INFINITY
    } else {
        gamma / ((1.0 - gamma) * norm)
    }
}

/// Value such that roughly a `1 - q` share of `values` lies at or above it.
/// `q = 1` yields +infinity.
pub fn heat_quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = (q.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize;
    sorted.get(idx).copied().unwrap_or(f64::INFINITY)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HotSubgraph {
    pub vertices: Vec<VertexId>,
    pub edges: Vec<EdgeId>,
}

/// Vertices with positive heat at or above `theta`, plus the edges between them.
pub fn extract_hot_subgraph(g: &HeatGraph, state: &HeatState, theta: f64) -> HotSubgraph {
    let hot: Vec<bool> = state.heat.iter().map(|&h| h > 0.0 && h >= theta).collect();
    let mut vertices: Vec<VertexId> = (0..g.len()).filter(|&i| hot[i]).map(|i| g.vertices[i]).collect();
    vertices.sort_unstable();
    let mut edges: Vec<EdgeId> = g.edges.iter().filter(|&&(a, b, _)| hot[a] && hot[b]).map(|&(_, _, e)| e).collect();
    edges.sort_unstable();
    HotSubgraph { vertices, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> HeatGraph {
        HeatGraph::from_edges(2, &[(0, 1, 1.0)])
    }

    #[test]
    fn two_vertex_transfer() {
        let g = pair();
        let s = HeatState::new(vec![10.0, 0.0]);
        let p = DhdParams::default();
        assert_eq!(edge_transfer(&g, &s, 0, 1, &p), 5.0);
        assert_eq!(edge_transfer(&g, &s, 1, 0, &p), 0.0);
        let next = vertex_step(&g, &s, &p).unwrap();
        assert!((next.heat[0] - 4.5).abs() < 1e-12 && (next.heat[1] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn no_cooler_neighbour_no_transfer() {
        let g = HeatGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let s = HeatState::new(vec![1.0, 1.0, 1.0]);
        let p = DhdParams::default();
        let next = vertex_step(&g, &s, &p).unwrap();
        assert!(next.heat.iter().all(|&h| (h - 0.9).abs() < 1e-15));
    }

    #[test]
    fn sourceless_total_decays() {
        let g = HeatGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 0.3), (0, 2, 0.7)]);
        let s = HeatState::new(vec![3.0, 1.0, 0.0, 2.0]);
        let p = DhdParams::default();
        let next = vertex_step(&g, &s, &p).unwrap();
        assert!((next.total() - 0.9 * s.total()).abs() < 1e-12);
    }

    #[test]
    fn matrix_and_vertex_forms_agree() {
        let g = HeatGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 0.3), (0, 2, 0.7)]);
        let s = HeatState::new(vec![3.0, 1.0, 0.0, 2.0]);
        let p = DhdParams::default();
        let a = vertex_step(&g, &s, &p).unwrap();
        let b = system_step(&g, &s, &SourceState::none(4), &p).unwrap();
        for (x, y) in a.heat.iter().zip(&b.heat) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn source_decays_by_half_life() {
        let p = DhdParams::default();
        let s = SourceState::new(3, BTreeSet::from([0, 2]));
        assert_eq!(s.q0, 0.5);
        let later = source_step(&s, 10, &[0.0, 5.0, 2.0], &p);
        assert!((later.q[0] - 0.25).abs() < 1e-12);
        assert_eq!(later.q[1], 0.0);
        assert!((later.q[2] - (0.25 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn alpha_bound_examples() {
        assert!((bound_for_norm(0.1, 0.1) - 1.0 / 0.9).abs() < 1e-12);
        assert!((bound_for_norm(0.1, 1.0) - 0.1 / 0.9).abs() < 1e-12);
        assert!(0.5 < bound_for_norm(0.1, 0.1));
        assert!(0.5 > bound_for_norm(0.1, 1.0));
    }

    #[test]
    fn steady_state_matches_closed_form() {
        let g = HeatGraph::from_edges(3, &[(0, 1, 0.2), (1, 2, 0.2)]);
        let p = DhdParams { alpha: 0.05, ..DhdParams::default() };
        let src = SourceState::new(3, BTreeSet::from([0]));
        let st = run_to_steady(&g, &HeatState::zeros(3), &src, &p).unwrap();
        assert!(st.converged, "{st:?}");
        let exact = closed_form_steady(&g, &st.state, &src, &p).unwrap();
        for (a, b) in st.state.heat.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn quantile_edges() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(heat_quantile(&v, 0.0), 1.0);
        assert_eq!(heat_quantile(&v, 0.5), 3.0);
        assert_eq!(heat_quantile(&v, 1.0), f64::INFINITY);
    }

    #[test]
    fn hot_subgraph_threshold() {
        let g = HeatGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);
        let s = HeatState::new(vec![5.0, 4.0, 0.0, 3.0]);
        let all = extract_hot_subgraph(&g, &s, 0.0);
        assert_eq!(all.vertices, vec![VertexId(0), VertexId(1), VertexId(3)]);
        assert_eq!(all.edges, vec![EdgeId(0)]);
        let none = extract_hot_subgraph(&g, &s, 6.0);
        assert!(none.vertices.is_empty() && none.edges.is_empty());
    }

    #[test]
    fn bad_params_rejected() {
        let g = pair();
        let p = DhdParams { gamma: 1.0, ..DhdParams::default() };
        assert!(run_to_steady(&g, &HeatState::zeros(2), &SourceState::none(2), &p).is_err());
    }
}
