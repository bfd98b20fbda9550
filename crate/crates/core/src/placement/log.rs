use std::fmt;
use std::io::Write;

use crate::cost::PlacementState;
use crate::graph::Pattern;
use crate::ids::{DcId, ItemId, PatternId};

use super::PlacementError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectRef {
    Pattern(PatternId),
    Region(u32),
    Item(ItemId),
}

impl ObjectRef {
    pub fn kind(&self) -> &'static str {
        match self {
            ObjectRef::Pattern(_) => "pattern",
            ObjectRef::Region(_) => "region",
            ObjectRef::Item(_) => "item",
        }
    }

    pub fn id(&self) -> u32 {
        match *self {
            ObjectRef::Pattern(p) => p.0,
            ObjectRef::Region(r) => r,
            ObjectRef::Item(x) => x.0,
        }
    }
}

/// Why a decision was committed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CommitAction {
    /// Forced copy into a child group to meet a latency requirement.
    Sink,
    /// Full replication accepted on a non-negative gain.
    Replicate,
    /// Region won by one child group.
    Compete,
    /// Replicas written at a site.
    Store,
    Precache,
    Evict,
}

impl fmt::Display for CommitAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommitAction::Sink => "sink",
            CommitAction::Replicate => "replicate",
            CommitAction::Compete => "compete",
            CommitAction::Store => "store",
            CommitAction::Precache => "precache",
            CommitAction::Evict => "evict",
        })
    }
}

/// Disjoint cell of an overlap decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: u32,
    pub items: Vec<ItemId>,
    pub patterns: Vec<PatternId>,
    /// Combined read rate of the contributing patterns.
    pub read_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub seq: u64,
    /// Group level of the deciding holder (0 for site-level actions).
    pub layer: usize,
    /// Holder group at that level.
    pub cluster: usize,
    /// Child group (or site, at level 0) receiving the object.
    pub target: usize,
    pub object: ObjectRef,
    pub gain: f64,
    pub action: CommitAction,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlacementLog {
    pub entries: Vec<LogEntry>,
    pub regions: Vec<Region>,
}

pub const LOG_HEADER: &str = "seq,layer,cluster,target,kind,object_id,gain,action";

impl PlacementLog {
    pub fn record(&mut self, layer: usize, cluster: usize, target: usize, object: ObjectRef, gain: f64, action: CommitAction) {
        let seq = self.entries.len() as u64;
        self.entries.push(LogEntry { seq, layer, cluster, target, object, gain, action });
    }

    pub fn add_region(&mut self, items: Vec<ItemId>, patterns: Vec<PatternId>, read_rate: f64) -> u32 {
        let id = self.regions.len() as u32;
        self.regions.push(Region { id, items, patterns, read_rate });
        id
    }

    pub fn region(&self, id: u32) -> Option<&Region> {
        self.regions.get(id as usize)
    }

    pub fn items_of(&self, object: ObjectRef, patterns: &[Pattern]) -> Result<Vec<ItemId>, PlacementError> {
        match object {
            ObjectRef::Pattern(p) => patterns.get(p.index()).map(|pat| pat.items.clone()).ok_or(PlacementError::UnknownPattern(p)),
            ObjectRef::Region(r) => self.region(r).map(|reg| reg.items.clone()).ok_or(PlacementError::UnknownRegion(r)),
            ObjectRef::Item(x) => Ok(vec![x]),
        }
    }

    /// Rebuilds the final placement from `base` by re-applying every
    /// site-level entry in order.
    pub fn replay(&self, base: &PlacementState, patterns: &[Pattern]) -> Result<PlacementState, PlacementError> {
        let mut state = base.clone();
        for e in &self.entries {
            let dc = DcId::from_index(e.target);
            match e.action {
                CommitAction::Store | CommitAction::Precache => {
                    for x in self.items_of(e.object, patterns)? {
                        state.add(x, dc);
                    }
                }
                CommitAction::Evict => {
                    for x in self.items_of(e.object, patterns)? {
                        state.remove(x, dc)?;
                    }
                }
                _ => {}
            }
        }
        Ok(state)
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{LOG_HEADER}")?;
        for e in &self.entries {
            writeln!(out, "{},{},{},{},{},{},{},{}", e.seq, e.layer, e.cluster, e.target, e.object.kind(), e.object.id(), e.gain, e.action)?;
        }
        Ok(())
    }

    /// Entries whose replication was accepted with a negative recorded gain.
    pub fn accept_rule_violations(&self) -> Vec<&LogEntry> {
        self.entries.iter().filter(|e| e.action == CommitAction::Replicate && !(e.gain >= 0.0)).collect()
    }

    pub fn count(&self, action: CommitAction) -> usize {
        self.entries.iter().filter(|e| e.action == action).count()
    }
}
