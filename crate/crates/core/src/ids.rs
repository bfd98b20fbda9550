//! Dense identifiers shared by every module.

use std::fmt;

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident, $inner:ty) => {
        $(#[$meta])*
        #[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub $inner);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }

            pub fn from_index(i: usize) -> Self {
                Self(i as $inner)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(
    /// Vertex index, assigned in order of first appearance in the edge list.
    VertexId,
    u32
);
dense_id!(
    /// Edge index, assigned in edge-list order.
    EdgeId,
    u32
);
dense_id!(
    /// Storable object: every vertex and every edge is one item.
    ItemId,
    u32
);
dense_id!(
    /// Index into the WAN profile's data center table.
    DcId,
    u16
);
dense_id!(PatternId, u32);

/// Set of data centers as a bitmask. Deployments are limited to 64 sites.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DcSet(u64);

pub const MAX_DCS: usize = 64;

impl DcSet {
    pub const EMPTY: DcSet = DcSet(0);

    pub fn single(dc: DcId) -> Self {
        DcSet(1u64 << dc.0)
    }

    pub fn from_bits(bits: u64) -> Self {
        DcSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, dc: DcId) -> bool {
        self.0 & (1u64 << dc.0) != 0
    }

    pub fn insert(&mut self, dc: DcId) -> bool {
        let had = self.contains(dc);
        self.0 |= 1u64 << dc.0;
        !had
    }

    pub fn remove(&mut self, dc: DcId) -> bool {
        let had = self.contains(dc);
        self.0 &= !(1u64 << dc.0);
        had
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: DcSet) -> DcSet {
        DcSet(self.0 | other.0)
    }

    pub fn intersection(self, other: DcSet) -> DcSet {
        DcSet(self.0 & other.0)
    }

    /// Members in ascending order.
    pub fn iter(self) -> impl Iterator<Item = DcId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let tz = bits.trailing_zeros();
            bits &= bits - 1;
            Some(DcId(tz as u16))
        })
    }

    pub fn first(self) -> Option<DcId> {
        self.iter().next()
    }
}

impl FromIterator<DcId> for DcSet {
    fn from_iter<T: IntoIterator<Item = DcId>>(iter: T) -> Self {
        let mut s = DcSet::EMPTY;
        for d in iter {
            s.insert(d);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dcset_iterates_ascending() {
        let s: DcSet = [DcId(5), DcId(1), DcId(63)].into_iter().collect();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![DcId(1), DcId(5), DcId(63)]);
        assert_eq!(s.len(), 3);
        assert_eq!(s.first(), Some(DcId(1)));
    }

    #[test]
    fn dcset_insert_remove() {
        let mut s = DcSet::EMPTY;
        assert!(s.insert(DcId(2)));
        assert!(!s.insert(DcId(2)));
        assert!(s.remove(DcId(2)));
        assert!(s.is_empty());
    }
}
