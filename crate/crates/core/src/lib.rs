//! Placement, routing and pre-caching of graph data across geo-distributed
//! data centers, organised by a hierarchy of WAN latency layers.

pub mod baselines;
pub mod cost;
pub mod dhd;
pub mod graph;
pub mod ids;
pub mod layered;
pub mod oracle;
pub mod placement;
pub mod routing;
pub mod sim;
pub mod wan;
pub mod workload;

pub use ids::{DcId, DcSet, EdgeId, ItemId, PatternId, VertexId};
