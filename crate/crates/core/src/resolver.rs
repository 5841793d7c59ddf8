//! State chunk insertion and resolution across time and worlds.
//!
//! Writes always land in the local timeline of the target world. Reads look up
//! the node's divergence time in the requested world; if the requested time is
//! at or after it, the answer comes from that world's time tree, otherwise the
//! lookup moves to the parent world and repeats. A world therefore shares its
//! parent's past for every node it has not written, and nothing is copied on
//! fork.
//!
//! All functions operate on one [`ChunkSpace`] holding every chunk of the node
//! in question, plus a read view of the [`GlobalWorldMap`]. Callers provide
//! the locking.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ChunkKey, NodeId, StateChunk, Timepoint, WorldId};
use crate::storage::{Chunk, ChunkSpace};
use crate::time_tree::TimeTree;
use crate::world_index::{GlobalWorldMap, LocalWorldMap};

/// Work done by one resolution: parent hops walked and time trees probed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub hops: usize,
    pub probes: usize,
}

/// A chunk together with the (time, world) it is physically stored at.
#[derive(Clone, Debug, PartialEq)]
pub struct Located {
    pub chunk: Arc<StateChunk>,
    pub time: Timepoint,
    pub world: WorldId,
}

pub(crate) fn world_map(space: &mut ChunkSpace, node: NodeId) -> Result<Option<Arc<LocalWorldMap>>> {
    let key = ChunkKey::world_map(node);
    match space.get(&key)? {
        None => Ok(None),
        Some(Chunk::WorldMap(m)) => Ok(Some(m)),
        Some(other) => Err(Error::corruption(key, format!("expected world map, found {:?}", other.kind()))),
    }
}

pub(crate) fn time_tree(space: &mut ChunkSpace, node: NodeId, world: WorldId) -> Result<Option<Arc<TimeTree>>> {
    let key = ChunkKey::time_tree(node, world);
    match space.get(&key)? {
        None => Ok(None),
        Some(Chunk::TimeTree(t)) => Ok(Some(t)),
        Some(other) => Err(Error::corruption(key, format!("expected time tree, found {:?}", other.kind()))),
    }
}

pub(crate) fn state(space: &mut ChunkSpace, key: ChunkKey) -> Result<Option<Arc<StateChunk>>> {
    match space.get(&key)? {
        None => Ok(None),
        Some(Chunk::State(c)) => Ok(Some(c)),
        Some(other) => Err(Error::corruption(key, format!("expected state chunk, found {:?}", other.kind()))),
    }
}

/// Stores `chunk` as the state of `node` at (`time`, `world`), replacing any
/// chunk already at that exact key, and updates the node's time tree and
/// world map. Never touches other worlds.
pub fn insert_chunk(
    space: &mut ChunkSpace,
    gwim: &GlobalWorldMap,
    node: NodeId,
    time: Timepoint,
    world: WorldId,
    chunk: Arc<StateChunk>,
) -> Result<()> {
    gwim.check(world)?;
    space.put_dirty(ChunkKey::state(node, time, world), Chunk::State(chunk));

    let tree_key = ChunkKey::time_tree(node, world);
    match space.get_mut(&tree_key)? {
        Some(Chunk::TimeTree(tree)) => {
            Arc::make_mut(tree).insert(time);
        }
        Some(other) => {
            return Err(Error::corruption(tree_key, format!("expected time tree, found {:?}", other.kind())))
        }
        None => {
            let mut tree = TimeTree::new(node, world);
            tree.insert(time);
            space.put_dirty(tree_key, Chunk::TimeTree(Arc::new(tree)));
        }
    }

    let map_key = ChunkKey::world_map(node);
    match space.get_mut(&map_key)? {
        Some(Chunk::WorldMap(map)) => Arc::make_mut(map).mark(world, time),
        Some(other) => {
            return Err(Error::corruption(map_key, format!("expected world map, found {:?}", other.kind())))
        }
        None => {
            let mut map = LocalWorldMap::new(node);
            map.mark(world, time);
            space.put_dirty(map_key, Chunk::WorldMap(Arc::new(map)));
        }
    }
    Ok(())
}

/// Finds the chunk that defines `node` at (`time`, `world`), tombstones included.
pub fn locate(
    space: &mut ChunkSpace,
    gwim: &GlobalWorldMap,
    node: NodeId,
    time: Timepoint,
    world: WorldId,
    trace: &mut Trace,
) -> Result<Option<Located>> {
    locate_impl(space, gwim, node, time, world, trace, false)
}

/// `exclusive_floor` deliberately breaks the floor lookup (strictly before
/// `time`); it exists only so verification tooling can prove it catches bugs.
pub(crate) fn locate_impl(
    space: &mut ChunkSpace,
    gwim: &GlobalWorldMap,
    node: NodeId,
    time: Timepoint,
    world: WorldId,
    trace: &mut Trace,
    exclusive_floor: bool,
) -> Result<Option<Located>> {
    gwim.check(world)?;
    let Some(lwim) = world_map(space, node)? else {
        return Ok(None);
    };
    let mut current = world;
    loop {
        match lwim.divergence(current) {
            Some(since) if time >= since => {
                trace.probes += 1;
                let tree_key = ChunkKey::time_tree(node, current);
                let tree = time_tree(space, node, current)?
                    .ok_or_else(|| Error::corruption(tree_key, "world map entry without time tree"))?;
                let probe = if exclusive_floor { Timepoint(time.0.saturating_sub(1)) } else { time };
                let at = tree.floor(probe).ok_or_else(|| {
                    Error::corruption(tree_key, format!("no entry at or before {time}, divergence {since}"))
                })?;
                let key = ChunkKey::state(node, at, current);
                let chunk = state(space, key)?
                    .ok_or_else(|| Error::corruption(key, "indexed state chunk is missing"))?;
                return Ok(Some(Located {
                    chunk,
                    time: at,
                    world: current,
                }));
            }
            _ => match gwim.parent(current) {
                Some(parent) => {
                    trace.hops += 1;
                    current = parent;
                }
                None => return Ok(None),
            },
        }
    }
}

/// The state of `node` seen from (`time`, `world`); `None` if the node does not
/// exist there or was deleted.
pub fn resolve(
    space: &mut ChunkSpace,
    gwim: &GlobalWorldMap,
    node: NodeId,
    time: Timepoint,
    world: WorldId,
    trace: &mut Trace,
) -> Result<Option<Arc<StateChunk>>> {
    Ok(locate(space, gwim, node, time, world, trace)?
        .filter(|l| !l.chunk.is_tombstone())
        .map(|l| l.chunk))
}

/// Where a [`WorkingCopy`] was taken from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// The chunk stored exactly at the write viewpoint.
    Local,
    /// A chunk from an earlier time or an ancestor world.
    Inherited { time: Timepoint, world: WorldId },
    /// Nothing resolved (or a tombstone did); the copy starts empty.
    Fresh,
}

/// A private, mutable copy of a node's state at one viewpoint. Nothing is
/// stored until it is passed to [`commit`].
#[derive(Clone, Debug)]
pub struct WorkingCopy {
    node: NodeId,
    time: Timepoint,
    world: WorldId,
    origin: Origin,
    base: Option<Arc<StateChunk>>,
    chunk: StateChunk,
}

impl WorkingCopy {
    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn chunk(&self) -> &StateChunk {
        &self.chunk
    }

    pub fn chunk_mut(&mut self) -> &mut StateChunk {
        &mut self.chunk
    }

    /// Whether committing would change what any read observes.
    pub fn is_modified(&self) -> bool {
        match &self.base {
            Some(base) => **base != self.chunk,
            None => self.chunk != StateChunk::new(),
        }
    }
}

pub fn resolve_for_write(
    space: &mut ChunkSpace,
    gwim: &GlobalWorldMap,
    node: NodeId,
    time: Timepoint,
    world: WorldId,
    trace: &mut Trace,
) -> Result<WorkingCopy> {
    resolve_for_write_impl(space, gwim, node, time, world, trace, false)
}

pub(crate) fn resolve_for_write_impl(
    space: &mut ChunkSpace,
    gwim: &GlobalWorldMap,
    node: NodeId,
    time: Timepoint,
    world: WorldId,
    trace: &mut Trace,
    exclusive_floor: bool,
) -> Result<WorkingCopy> {
    let located = locate_impl(space, gwim, node, time, world, trace, exclusive_floor)?;
    let (origin, base) = match located {
        Some(l) if l.chunk.is_tombstone() => (Origin::Fresh, None),
        Some(l) if l.time == time && l.world == world => (Origin::Local, Some(l.chunk)),
        Some(l) => (
            Origin::Inherited {
                time: l.time,
                world: l.world,
            },
            Some(l.chunk),
        ),
        None => (Origin::Fresh, None),
    };
    let chunk = base.as_deref().cloned().unwrap_or_default();
    Ok(WorkingCopy {
        node,
        time,
        world,
        origin,
        base,
        chunk,
    })
}

/// Stores a working copy at its viewpoint. Returns `false`, writing nothing,
/// when the copy is unmodified.
pub fn commit(space: &mut ChunkSpace, gwim: &GlobalWorldMap, copy: WorkingCopy) -> Result<bool> {
    if !copy.is_modified() {
        return Ok(false);
    }
    insert_chunk(space, gwim, copy.node, copy.time, copy.world, Arc::new(copy.chunk))?;
    Ok(true)
}
