//! The developer-facing graph session.
//!
//! A [`Graph`] owns the chunk storage, the world genealogy and the node id
//! allocator. Nodes are addressed through [`NodeHandle`]s, which bind a node to
//! a viewpoint (world, time); every read and write through a handle is
//! interpreted at that viewpoint.
//!
//! Chunks are spread over a fixed number of shards by node id. Each shard is
//! one [`ChunkSpace`] behind a mutex, so operations on a node are mutually
//! exclusive while operations on nodes in different shards run in parallel.
//! Lock order is meta, then worlds, then shards in ascending index.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::codec::{put_u64, put_varint, Reader};
use crate::error::{Error, Result};
use crate::model::{AttributeValue, ChunkKey, NodeId, StateChunk, Timepoint, WorldId};
use crate::resolver::{self, Located, Origin, Trace};
use crate::storage::{Backend, Chunk, ChunkSpace, MemoryBackend, DEFAULT_CACHE_CAPACITY};
use crate::world_index::GlobalWorldMap;

pub const DEFAULT_SHARDS: usize = 16;

#[derive(Clone, Debug)]
pub struct GraphConfig {
    /// Clean chunks kept in memory across all shards; 0 disables caching.
    pub cache_capacity: usize,
    pub shards: usize,
    /// Makes every floor lookup strictly exclusive. Only for testing the
    /// verification harness.
    #[doc(hidden)]
    pub inject_floor_fault: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            shards: DEFAULT_SHARDS,
            inject_floor_fault: false,
        }
    }
}

impl GraphConfig {
    pub fn uncached() -> Self {
        GraphConfig {
            cache_capacity: 0,
            ..Self::default()
        }
    }
}

/// A node seen from one viewpoint. Travel returns a new handle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeHandle {
    pub node: NodeId,
    pub world: WorldId,
    pub time: Timepoint,
}

impl NodeHandle {
    pub fn new(node: NodeId, world: WorldId, time: Timepoint) -> Self {
        NodeHandle { node, world, time }
    }

    pub fn travel_in_time(self, time: Timepoint) -> Self {
        NodeHandle { time, ..self }
    }
}

/// Targets of a relation at a viewpoint. Targets that do not exist there are
/// listed separately instead of failing the lookup.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Related {
    pub nodes: Vec<NodeHandle>,
    pub unresolved: Vec<NodeId>,
}

impl Related {
    pub fn ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|h| h.node).collect()
    }
}

/// Cumulative operation counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    /// State chunks stored, tombstones included.
    pub state_writes: u64,
    pub resolves: u64,
    pub hops: u64,
    pub probes: u64,
}

#[derive(Default)]
struct Counters {
    state_writes: AtomicU64,
    resolves: AtomicU64,
    hops: AtomicU64,
    probes: AtomicU64,
}

impl Counters {
    fn record(&self, trace: Trace) {
        self.resolves.fetch_add(1, Ordering::Relaxed);
        self.hops.fetch_add(trace.hops as u64, Ordering::Relaxed);
        self.probes.fetch_add(trace.probes as u64, Ordering::Relaxed);
    }

    fn wrote(&self) {
        self.state_writes.fetch_add(1, Ordering::Relaxed);
    }
}

struct Meta {
    next_node: u64,
    indexes: BTreeMap<String, NodeId>,
    dirty: bool,
}

impl Default for Meta {
    fn default() -> Self {
        Meta {
            next_node: 1,
            indexes: BTreeMap::new(),
            dirty: false,
        }
    }
}

impl Meta {
    /// `varint next_node ‖ varint count ‖ (varint len, name, u64 node)*`
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_varint(&mut out, self.next_node);
        put_varint(&mut out, self.indexes.len() as u64);
        for (name, node) in &self.indexes {
            put_varint(&mut out, name.len() as u64);
            out.extend_from_slice(name.as_bytes());
            put_u64(&mut out, node.0);
        }
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let next_node = r.varint()?;
        let n = r.len(9)?;
        let mut indexes = BTreeMap::new();
        for _ in 0..n {
            let name = r.string()?;
            let node = NodeId(r.u64()?);
            if node.0 >= next_node || indexes.insert(name, node).is_some() {
                return Err(Error::decode("invalid index registry"));
            }
        }
        r.finish()?;
        Ok(Meta {
            next_node,
            indexes,
            dirty: false,
        })
    }
}

struct Worlds {
    map: GlobalWorldMap,
    dirty: bool,
}

pub struct Graph {
    backend: Arc<dyn Backend>,
    config: GraphConfig,
    shards: Box<[Mutex<ChunkSpace>]>,
    meta: Mutex<Meta>,
    worlds: RwLock<Worlds>,
    connected: AtomicBool,
    counters: Counters,
}

impl Graph {
    pub fn new(backend: Arc<dyn Backend>, config: GraphConfig) -> Self {
        let shards = config.shards.max(1);
        let per_shard = if config.cache_capacity == 0 {
            0
        } else {
            config.cache_capacity.div_ceil(shards)
        };
        Graph {
            shards: (0..shards)
                .map(|_| Mutex::new(ChunkSpace::new(backend.clone(), per_shard)))
                .collect(),
            backend,
            config,
            meta: Mutex::new(Meta::default()),
            worlds: RwLock::new(Worlds {
                map: GlobalWorldMap::new(),
                dirty: false,
            }),
            connected: AtomicBool::new(false),
            counters: Counters::default(),
        }
    }

    /// An unconnected graph over a fresh in-memory backend.
    pub fn in_memory(config: GraphConfig) -> Self {
        Self::new(Arc::new(MemoryBackend::new()), config)
    }

    /// `new` followed by `connect`.
    pub fn open(backend: Arc<dyn Backend>, config: GraphConfig) -> Result<Self> {
        let graph = Self::new(backend, config);
        graph.connect()?;
        Ok(graph)
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn is_connected(&self) -> bool {
        self.connected.load(Ordering::Acquire)
    }

    /// Loads the world genealogy and id allocator from the backend. Must be
    /// called before any other operation; calling it again is a no-op.
    pub fn connect(&self) -> Result<()> {
        if self.is_connected() {
            return Ok(());
        }
        let (gwim, meta) = {
            let mut space = self.shards[0].lock();
            (space.get(&ChunkKey::global_world_map())?, space.get(&ChunkKey::meta())?)
        };
        let gwim = match gwim {
            None => GlobalWorldMap::new(),
            Some(Chunk::GlobalWorldMap(g)) => (*g).clone(),
            Some(other) => {
                return Err(Error::corruption(
                    ChunkKey::global_world_map(),
                    format!("expected world map, found {:?}", other.kind()),
                ))
            }
        };
        let meta = match meta {
            None => Meta::default(),
            Some(Chunk::Meta(bytes)) => Meta::decode(&bytes).map_err(|e| e.at_key(ChunkKey::meta()))?,
            Some(other) => {
                return Err(Error::corruption(
                    ChunkKey::meta(),
                    format!("expected metadata, found {:?}", other.kind()),
                ))
            }
        };
        let mut meta_guard = self.meta.lock();
        let mut worlds = self.worlds.write();
        *meta_guard = meta;
        *worlds = Worlds { map: gwim, dirty: false };
        self.connected.store(true, Ordering::Release);
        Ok(())
    }

    /// Ends the unit of work: writes every modified chunk and flushes the
    /// backend once. Returns the number of chunks written.
    pub fn save(&self) -> Result<usize> {
        self.ensure_connected()?;
        let mut meta = self.meta.lock();
        let mut worlds = self.worlds.write();
        let mut shards: Vec<_> = self.shards.iter().map(|s| s.lock()).collect();
        if worlds.dirty {
            shards[0].put_dirty(
                ChunkKey::global_world_map(),
                Chunk::GlobalWorldMap(Arc::new(worlds.map.clone())),
            );
        }
        if meta.dirty {
            shards[0].put_dirty(ChunkKey::meta(), Chunk::Meta(Arc::new(meta.encode())));
        }
        let mut written = 0;
        for space in &shards {
            written += space.write_dirty()?;
        }
        if written > 0 {
            self.backend.flush()?;
        }
        for space in &mut shards {
            space.mark_saved();
        }
        worlds.dirty = false;
        meta.dirty = false;
        Ok(written)
    }

    pub fn stats(&self) -> Stats {
        Stats {
            state_writes: self.counters.state_writes.load(Ordering::Relaxed),
            resolves: self.counters.resolves.load(Ordering::Relaxed),
            hops: self.counters.hops.load(Ordering::Relaxed),
            probes: self.counters.probes.load(Ordering::Relaxed),
        }
    }

    /// Dirty chunks across all shards, excluding unsaved session metadata.
    pub fn dirty_chunks(&self) -> usize {
        self.shards.iter().map(|s| s.lock().dirty_len()).sum()
    }

    fn ensure_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::NotConnected)
        }
    }

    fn with_node<R>(&self, node: NodeId, f: impl FnOnce(&mut ChunkSpace, &GlobalWorldMap) -> Result<R>) -> Result<R> {
        self.ensure_connected()?;
        let worlds = self.worlds.read();
        let mut space = self.shards[(node.0 % self.shards.len() as u64) as usize].lock();
        f(&mut space, &worlds.map)
    }

    // ---- worlds ----

    /// Forks a new world from `parent`. Nothing is copied.
    pub fn diverge(&self, parent: WorldId) -> Result<WorldId> {
        self.ensure_connected()?;
        let mut worlds = self.worlds.write();
        let w = worlds.map.diverge(parent)?;
        worlds.dirty = true;
        Ok(w)
    }

    pub fn world_count(&self) -> Result<u64> {
        self.ensure_connected()?;
        Ok(self.worlds.read().map.world_count())
    }

    pub fn world_parent(&self, world: WorldId) -> Result<Option<WorldId>> {
        self.ensure_connected()?;
        let worlds = self.worlds.read();
        worlds.map.check(world)?;
        Ok(worlds.map.parent(world))
    }

    pub fn world_depth(&self, world: WorldId) -> Result<usize> {
        self.ensure_connected()?;
        self.worlds.read().map.depth(world)
    }

    // ---- chunk level ----

    /// Stores `chunk` verbatim as the state of `node` at (`time`, `world`).
    pub fn insert_chunk(&self, node: NodeId, time: Timepoint, world: WorldId, chunk: StateChunk) -> Result<()> {
        self.with_node(node, |space, gwim| {
            resolver::insert_chunk(space, gwim, node, time, world, Arc::new(chunk))
        })?;
        self.counters.wrote();
        Ok(())
    }

    pub fn locate(&self, node: NodeId, time: Timepoint, world: WorldId) -> Result<(Option<Located>, Trace)> {
        let mut trace = Trace::default();
        let located = self.with_node(node, |space, gwim| {
            resolver::locate_impl(space, gwim, node, time, world, &mut trace, self.config.inject_floor_fault)
        })?;
        self.counters.record(trace);
        Ok((located, trace))
    }

    pub fn resolve_traced(
        &self,
        node: NodeId,
        time: Timepoint,
        world: WorldId,
    ) -> Result<(Option<Arc<StateChunk>>, Trace)> {
        let (located, trace) = self.locate(node, time, world)?;
        Ok((located.filter(|l| !l.chunk.is_tombstone()).map(|l| l.chunk), trace))
    }

    pub fn resolve(&self, node: NodeId, time: Timepoint, world: WorldId) -> Result<Option<Arc<StateChunk>>> {
        self.resolve_traced(node, time, world).map(|(chunk, _)| chunk)
    }

    // ---- nodes ----

    /// Allocates a node and stores an empty state for it at (`time`, `world`).
    pub fn create_node(&self, world: WorldId, time: Timepoint) -> Result<NodeHandle> {
        self.ensure_connected()?;
        self.worlds.read().map.check(world)?;
        let node = {
            let mut meta = self.meta.lock();
            let node = NodeId(meta.next_node);
            meta.next_node += 1;
            meta.dirty = true;
            node
        };
        self.insert_chunk(node, time, world, StateChunk::new())?;
        Ok(NodeHandle { node, world, time })
    }

    /// Binds `node` to a viewpoint without checking that it exists there.
    pub fn node(&self, node: NodeId, world: WorldId, time: Timepoint) -> NodeHandle {
        NodeHandle { node, world, time }
    }

    /// The node's state at the handle's viewpoint, `None` if it does not exist there.
    pub fn read(&self, h: &NodeHandle) -> Result<Option<Arc<StateChunk>>> {
        self.resolve(h.node, h.time, h.world)
    }

    pub fn exists(&self, h: &NodeHandle) -> Result<bool> {
        Ok(self.read(h)?.is_some())
    }

    pub fn travel_in_world(&self, h: &NodeHandle, world: WorldId) -> Result<NodeHandle> {
        self.ensure_connected()?;
        self.worlds.read().map.check(world)?;
        Ok(NodeHandle { world, ..*h })
    }

    /// Copy-on-write mutation at the handle's viewpoint. With `must_exist`,
    /// a node that does not resolve there is an error; otherwise it starts empty.
    fn modify<R>(&self, h: &NodeHandle, must_exist: bool, f: impl FnOnce(&mut StateChunk) -> Result<R>) -> Result<R> {
        let mut trace = Trace::default();
        let (out, wrote) = self.with_node(h.node, |space, gwim| {
            let mut copy = resolver::resolve_for_write_impl(
                space,
                gwim,
                h.node,
                h.time,
                h.world,
                &mut trace,
                self.config.inject_floor_fault,
            )?;
            if must_exist && copy.origin() == Origin::Fresh {
                return Err(Error::NodeNotFound {
                    node: h.node,
                    world: h.world,
                    time: h.time,
                });
            }
            let out = f(copy.chunk_mut())?;
            Ok((out, resolver::commit(space, gwim, copy)?))
        })?;
        self.counters.record(trace);
        if wrote {
            self.counters.wrote();
        }
        Ok(out)
    }

    pub fn set_attribute(&self, h: &NodeHandle, name: &str, value: impl Into<AttributeValue>) -> Result<()> {
        let value = value.into();
        self.modify(h, true, |c| c.set_attribute(name, value).map(drop))
    }

    pub fn remove_attribute(&self, h: &NodeHandle, name: &str) -> Result<Option<AttributeValue>> {
        self.modify(h, true, |c| Ok(c.remove_attribute(name)))
    }

    /// `None` if the attribute is unset or the node does not exist at the viewpoint.
    pub fn get_attribute(&self, h: &NodeHandle, name: &str) -> Result<Option<AttributeValue>> {
        Ok(self.read(h)?.and_then(|c| c.attribute(name).cloned()))
    }

    /// Returns `false` if `target` was already in the relation.
    pub fn add_relation(&self, h: &NodeHandle, name: &str, target: NodeId) -> Result<bool> {
        self.modify(h, true, |c| c.add_to_relation(name, target))
    }

    /// Returns `false`, changing nothing, if `target` was not in the relation.
    pub fn remove_relation(&self, h: &NodeHandle, name: &str, target: NodeId) -> Result<bool> {
        self.modify(h, true, |c| Ok(c.remove_from_relation(name, target)))
    }

    pub fn get_relation(&self, h: &NodeHandle, name: &str) -> Result<Related> {
        let Some(chunk) = self.read(h)? else {
            return Ok(Related::default());
        };
        self.bind(chunk.relation(name), h.world, h.time)
    }

    fn bind(&self, ids: &[NodeId], world: WorldId, time: Timepoint) -> Result<Related> {
        let mut related = Related::default();
        for &node in ids {
            if self.resolve(node, time, world)?.is_some() {
                related.nodes.push(NodeHandle { node, world, time });
            } else {
                related.unresolved.push(node);
            }
        }
        Ok(related)
    }

    /// Marks the node deleted from the handle's viewpoint on. Earlier states
    /// stay readable. Returns `false` if the node already did not exist there.
    pub fn delete_node(&self, h: &NodeHandle) -> Result<bool> {
        let deleted = self.with_node(h.node, |space, gwim| {
            let mut trace = Trace::default();
            let located = resolver::locate_impl(
                space,
                gwim,
                h.node,
                h.time,
                h.world,
                &mut trace,
                self.config.inject_floor_fault,
            )?;
            self.counters.record(trace);
            match located {
                Some(l) if !l.chunk.is_tombstone() => {
                    resolver::insert_chunk(space, gwim, h.node, h.time, h.world, Arc::new(StateChunk::tombstone()))?;
                    Ok(true)
                }
                _ => Ok(false),
            }
        })?;
        if deleted {
            self.counters.wrote();
        }
        Ok(deleted)
    }

    // ---- indexes ----

    /// Names of all registered indexes.
    pub fn indexes(&self) -> Result<Vec<String>> {
        self.ensure_connected()?;
        Ok(self.meta.lock().indexes.keys().cloned().collect())
    }

    /// The node backing an index, created on first use.
    fn index_node(&self, index: &str, create: bool) -> Result<NodeId> {
        self.ensure_connected()?;
        if index.is_empty() {
            return Err(Error::EmptyName);
        }
        let mut meta = self.meta.lock();
        if let Some(&node) = meta.indexes.get(index) {
            return Ok(node);
        }
        if !create {
            return Err(Error::UnknownIndex(index.to_owned()));
        }
        let node = NodeId(meta.next_node);
        meta.next_node += 1;
        meta.indexes.insert(index.to_owned(), node);
        meta.dirty = true;
        Ok(node)
    }

    fn indexed_value(&self, h: &NodeHandle, attribute: &str) -> Result<AttributeValue> {
        let chunk = self.read(h)?.ok_or(Error::NodeNotFound {
            node: h.node,
            world: h.world,
            time: h.time,
        })?;
        chunk.attribute(attribute).cloned().ok_or_else(|| {
            Error::InvalidArgument(format!("node {} has no attribute {attribute:?} at this viewpoint", h.node))
        })
    }

    /// Adds the node under the current value of `attribute` to `index`, at the
    /// handle's viewpoint. The index is itself a node and versions like one.
    /// Returns `false` if the node was already listed under that value.
    pub fn index_add(&self, index: &str, h: &NodeHandle, attribute: &str) -> Result<bool> {
        let value = self.indexed_value(h, attribute)?;
        let index_node = self.index_node(index, true)?;
        let at = NodeHandle { node: index_node, ..*h };
        self.modify(&at, false, |c| c.add_to_relation(&bucket(&value), h.node))
    }

    /// Removes the node from the bucket of the current value of `attribute`.
    pub fn index_remove(&self, index: &str, h: &NodeHandle, attribute: &str) -> Result<bool> {
        let index_node = self.index_node(index, false)?;
        let value = self.indexed_value(h, attribute)?;
        let at = NodeHandle { node: index_node, ..*h };
        self.modify(&at, false, |c| Ok(c.remove_from_relation(&bucket(&value), h.node)))
    }

    /// Nodes listed under exactly `value` as seen from (`world`, `time`).
    pub fn index_find(
        &self,
        index: &str,
        value: &AttributeValue,
        world: WorldId,
        time: Timepoint,
    ) -> Result<Vec<NodeHandle>> {
        let index_node = self.index_node(index, false)?;
        let Some(chunk) = self.resolve(index_node, time, world)? else {
            return Ok(Vec::new());
        };
        Ok(self.bind(chunk.relation(&bucket(value)), world, time)?.nodes)
    }
}

/// Relation name holding the bucket for `value`; the type tag keeps values of
/// different types apart.
fn bucket(value: &AttributeValue) -> String {
    match value {
        AttributeValue::Enum { ordinal, registry } => format!("{}:{registry}#{ordinal}", value.type_tag()),
        AttributeValue::Double(v) => format!("{}:{:016x}", value.type_tag(), v.to_bits()),
        other => format!("{}:{other}", other.type_tag()),
    }
}
