//! Inserts and deletes between placement runs.

use crate::cost::{PlacementState, RoutingState};
use crate::graph::{Graph, ItemKind, Partitioning, Pattern};
use crate::ids::{DcId, ItemId, VertexId};
use crate::layered::LayeredGraph;

use super::PlacementError;

#[derive(Clone, Debug, PartialEq)]
pub enum Update {
    InsertVertex { label: String, dc: DcId, size_bytes: u64 },
    InsertEdge { u: VertexId, v: VertexId, weight: f64, size_bytes: u64 },
    Delete(ItemId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    /// Inserted item, or every deleted item (a vertex takes its live edges along).
    pub items: Vec<ItemId>,
    /// Sites whose copies were dropped, home first, then outward by the
    /// group level at which they join the home site.
    pub cleanup: Vec<DcId>,
}

/// Inserts land at their home site only; the next placement run picks them
/// up once they are read. Deletes drop every copy and every routing row of
/// a pattern that contained the item.
pub fn apply_update(
    update: Update,
    graph: &mut Graph,
    part: &mut Partitioning,
    placement: &mut PlacementState,
    routing: &mut RoutingState,
    patterns: &[Pattern],
    layered: &LayeredGraph,
) -> Result<UpdateOutcome, PlacementError> {
    match update {
        Update::InsertVertex { label, dc, size_bytes } => {
            let (_, x) = graph.insert_vertex(label, size_bytes);
            part.push_vertex(dc);
            let y = placement.push_item(dc);
            debug_assert_eq!(x, y);
            Ok(UpdateOutcome { items: vec![x], cleanup: Vec::new() })
        }
        Update::InsertEdge { u, v, weight, size_bytes } => {
            let (e, x) = graph.insert_edge(u, v, weight, size_bytes)?;
            let home = part.home_of(graph, graph.edge_item(e));
            let y = placement.push_item(home);
            debug_assert_eq!(x, y);
            Ok(UpdateOutcome { items: vec![x], cleanup: Vec::new() })
        }
        Update::Delete(x) => {
            if graph.get_item(x).is_none() || !placement.is_live(x) {
                return Err(PlacementError::UnknownItem(x));
            }
            let mut doomed = vec![x];
            if let ItemKind::Vertex(v) = graph.item(x).kind {
                for &(_, e) in graph.neighbors(v) {
                    let ex = graph.edge_item(e);
                    if placement.is_live(ex) {
                        doomed.push(ex);
                    }
                }
            }
            let home = part.home_of(graph, x);
            let held = placement.holders(x);
            let mut cleanup: Vec<DcId> = held.iter().collect();
            cleanup.sort_by_key(|&d| (d != home, join_level(layered, home, d), d));
            for &item in &doomed {
                placement.delete(item);
            }
            routing.retain(|p, _| patterns.get(p.index()).is_none_or(|pat| !doomed.iter().any(|&d| pat.contains(d))));
            doomed.sort_unstable();
            Ok(UpdateOutcome { items: doomed, cleanup })
        }
    }
}

/// Lowest group level at which `a` and `b` share a group.
fn join_level(layered: &LayeredGraph, a: DcId, b: DcId) -> usize {
    (0..=layered.layer_count()).find(|&j| layered.group_of(j, a) == layered.group_of(j, b)).unwrap_or(usize::MAX)
}
