//! World genealogy and per-node divergence times.
//!
//! [`GlobalWorldMap`] records the parent of every world. Worlds are numbered
//! densely from 1 as they are forked, so the parent table is a plain vector
//! indexed by world id. [`LocalWorldMap`] records, for one node, the first
//! timepoint at which the node was written in each world.

use rustc_hash::FxHashMap;

use crate::codec::{put_time, put_u64, put_varint, Reader};
use crate::error::{Error, Result};
use crate::model::{NodeId, Timepoint, WorldId};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GlobalWorldMap {
    /// `parents[i]` is the parent of world `i + 1`.
    parents: Vec<WorldId>,
}

impl GlobalWorldMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of registered worlds, root included.
    pub fn world_count(&self) -> u64 {
        self.parents.len() as u64 + 1
    }

    pub fn contains(&self, w: WorldId) -> bool {
        w.0 < self.world_count()
    }

    pub fn check(&self, w: WorldId) -> Result<()> {
        if self.contains(w) {
            Ok(())
        } else {
            Err(Error::UnknownWorld(w))
        }
    }

    /// Forks a new world off `parent`. Nothing is copied.
    pub fn diverge(&mut self, parent: WorldId) -> Result<WorldId> {
        self.check(parent)?;
        let w = WorldId(self.world_count());
        self.parents.push(parent);
        Ok(w)
    }

    /// Parent of `w`; `None` for the root and for unregistered worlds.
    pub fn parent(&self, w: WorldId) -> Option<WorldId> {
        if w.is_root() {
            return None;
        }
        self.parents.get((w.0 - 1) as usize).copied()
    }

    /// Number of parent hops from `w` to the root.
    pub fn depth(&self, w: WorldId) -> Result<usize> {
        self.check(w)?;
        Ok(self.ancestors(w).count() - 1)
    }

    /// `w` followed by its parent, grandparent, ... up to and including the root.
    pub fn ancestors(&self, w: WorldId) -> impl Iterator<Item = WorldId> + '_ {
        std::iter::successors(Some(w), move |&cur| self.parent(cur))
    }

    /// `varint count ‖ (world, parent)*` as 8-byte big-endian pairs.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 16 * self.parents.len());
        put_varint(&mut out, self.parents.len() as u64);
        for (i, parent) in self.parents.iter().enumerate() {
            put_u64(&mut out, i as u64 + 1);
            put_u64(&mut out, parent.0);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let n = r.len(16)?;
        let mut parents = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let world = r.u64()?;
            let parent = r.u64()?;
            if world != i + 1 {
                return Err(Error::decode(format!("expected world {}, found {world}", i + 1)));
            }
            // Parents are always forked before their children; this also rules out cycles.
            if parent >= world {
                return Err(Error::decode(format!("world {world} has parent {parent}")));
            }
            parents.push(WorldId(parent));
        }
        r.finish()?;
        Ok(GlobalWorldMap { parents })
    }
}

#[derive(Clone, Debug)]
pub struct LocalWorldMap {
    owner: NodeId,
    divergence: FxHashMap<WorldId, Timepoint>,
    dirty: bool,
}

impl PartialEq for LocalWorldMap {
    fn eq(&self, other: &Self) -> bool {
        self.owner == other.owner && self.divergence == other.divergence
    }
}

impl LocalWorldMap {
    pub fn new(owner: NodeId) -> Self {
        LocalWorldMap {
            owner,
            divergence: FxHashMap::default(),
            dirty: false,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.divergence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.divergence.is_empty()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    pub(crate) fn mark_clean(&mut self) {
        self.dirty = false;
    }

    /// First timepoint at which the node was written in `w`.
    pub fn divergence(&self, w: WorldId) -> Option<Timepoint> {
        self.divergence.get(&w).copied()
    }

    /// Records a write at `t` in `w`, keeping the earliest timepoint.
    pub fn mark(&mut self, w: WorldId, t: Timepoint) {
        self.dirty = true;
        self.divergence
            .entry(w)
            .and_modify(|s| *s = (*s).min(t))
            .or_insert(t);
    }

    pub fn worlds(&self) -> impl Iterator<Item = (WorldId, Timepoint)> + '_ {
        self.divergence.iter().map(|(&w, &t)| (w, t))
    }

    /// `varint count ‖ (world, biased timepoint)*`, sorted by world.
    pub fn encode(&self) -> Vec<u8> {
        let mut entries: Vec<_> = self.worlds().collect();
        entries.sort_unstable();
        let mut out = Vec::with_capacity(10 + 16 * entries.len());
        put_varint(&mut out, entries.len() as u64);
        for (w, t) in entries {
            put_u64(&mut out, w.0);
            put_time(&mut out, t);
        }
        out
    }

    pub fn decode(owner: NodeId, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let n = r.len(16)?;
        let mut map = LocalWorldMap::new(owner);
        map.divergence.reserve(n);
        let mut prev = None;
        for _ in 0..n {
            let w = WorldId(r.u64()?);
            if prev.is_some_and(|p| p >= w) {
                return Err(Error::decode("world map entries not strictly increasing"));
            }
            prev = Some(w);
            map.divergence.insert(w, r.time()?);
        }
        r.finish()?;
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn w(v: u64) -> WorldId {
        WorldId(v)
    }

    #[test]
    fn fork_ladder_and_sibling() {
        let mut g = GlobalWorldMap::new();
        assert_eq!(g.diverge(w(0)).unwrap(), w(1));
        assert_eq!(g.diverge(w(1)).unwrap(), w(2));
        assert_eq!(g.diverge(w(0)).unwrap(), w(3));
        assert_eq!(g.ancestors(w(2)).collect::<Vec<_>>(), vec![w(2), w(1), w(0)]);
        assert_eq!(g.ancestors(w(3)).collect::<Vec<_>>(), vec![w(3), w(0)]);
        // w2 and w3 are incomparable: neither is an ancestor of the other.
        assert!(!g.ancestors(w(2)).any(|a| a == w(3)));
        assert!(!g.ancestors(w(3)).any(|a| a == w(2)));
    }

    #[test]
    fn root_has_no_parent() {
        let g = GlobalWorldMap::new();
        assert_eq!(g.parent(WorldId::ROOT), None);
        assert_eq!(g.parent(w(5)), None);
        assert_eq!(g.depth(WorldId::ROOT).unwrap(), 0);
    }

    #[test]
    fn unknown_parent_is_rejected() {
        let mut g = GlobalWorldMap::new();
        assert!(matches!(g.diverge(w(1)), Err(Error::UnknownWorld(_))));
        assert!(matches!(g.depth(w(1)), Err(Error::UnknownWorld(_))));
    }

    #[test]
    fn flat_fan_out_is_one_hop() {
        let mut g = GlobalWorldMap::new();
        for _ in 0..50 {
            let child = g.diverge(WorldId::ROOT).unwrap();
            assert_eq!(g.depth(child).unwrap(), 1);
        }
    }

    #[test]
    fn stair_parents() {
        let mut g = GlobalWorldMap::new();
        let mut last = WorldId::ROOT;
        for _ in 0..100 {
            last = g.diverge(last).unwrap();
        }
        for m in 1..=100 {
            assert_eq!(g.parent(w(m)), Some(w(m - 1)));
        }
        assert_eq!(g.depth(last).unwrap(), 100);
    }

    #[test]
    fn random_genealogy_reaches_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = GlobalWorldMap::new();
        let mut log = vec![];
        for _ in 0..500 {
            let parent = w(rng.gen_range(0..g.world_count()));
            let child = g.diverge(parent).unwrap();
            log.push((child, parent));
        }
        let diverges = log.len();
        for wid in 0..g.world_count() {
            let chain: Vec<_> = g.ancestors(w(wid)).collect();
            assert_eq!(*chain.last().unwrap(), WorldId::ROOT);
            assert!(chain.len() - 1 <= diverges);
            // each hop matches the construction log
            for pair in chain.windows(2) {
                assert!(log.contains(&(pair[0], pair[1])));
            }
        }
        let back = GlobalWorldMap::decode(&g.encode()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn gwim_decode_rejects_forward_parent() {
        let mut bytes = vec![1];
        put_u64(&mut bytes, 1);
        put_u64(&mut bytes, 1);
        assert!(GlobalWorldMap::decode(&bytes).is_err());
    }

    #[test]
    fn divergence_is_minimum_write() {
        let mut lwim = LocalWorldMap::new(NodeId(1));
        assert_eq!(lwim.divergence(w(2)), None);
        lwim.mark(w(0), Timepoint(50));
        lwim.mark(w(0), Timepoint(30));
        lwim.mark(w(0), Timepoint(40));
        assert_eq!(lwim.divergence(w(0)), Some(Timepoint(30)));
        assert!(lwim.is_dirty());
    }

    #[test]
    fn divergence_tracks_write_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut lwim = LocalWorldMap::new(NodeId(1));
        let mut log: Vec<(WorldId, Timepoint)> = vec![];
        for _ in 0..2000 {
            let entry = (w(rng.gen_range(0..10)), Timepoint(rng.gen_range(-500..500)));
            lwim.mark(entry.0, entry.1);
            log.push(entry);
        }
        for wid in 0..10 {
            let expected = log.iter().filter(|e| e.0 == w(wid)).map(|e| e.1).min();
            assert_eq!(lwim.divergence(w(wid)), expected);
        }
        let back = LocalWorldMap::decode(NodeId(1), &lwim.encode()).unwrap();
        assert_eq!(back, lwim);
    }
}
