//! Chunk persistence and the unit of work.
//!
//! A [`ChunkSpace`] sits between the engine and a [`Backend`]. Chunks are
//! loaded on demand and kept decoded in memory. Modified chunks are dirty and
//! pinned in memory until [`ChunkSpace::save`] writes them out; afterwards they
//! join an LRU cache of clean chunks and become eligible for eviction.

mod backend;
mod append_log;

use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use rustc_hash::{FxBuildHasher, FxHashMap};

pub use self::backend::{Backend, BackendInfo, CountingBackend, Durability, MemoryBackend};
pub use self::append_log::{LogBackend, LogOptions};
use crate::error::{Error, Result};
use crate::model::{ChunkKey, ChunkKind, StateChunk};
use crate::time_tree::TimeTree;
use crate::world_index::{GlobalWorldMap, LocalWorldMap};

pub const DEFAULT_CACHE_CAPACITY: usize = 100_000;

/// A decoded chunk. Cloning is cheap; mutation goes through `Arc::make_mut`.
#[derive(Clone, Debug)]
pub enum Chunk {
    State(Arc<StateChunk>),
    TimeTree(Arc<TimeTree>),
    WorldMap(Arc<LocalWorldMap>),
    GlobalWorldMap(Arc<GlobalWorldMap>),
    /// Opaque session metadata, interpreted by the graph layer.
    Meta(Arc<Vec<u8>>),
}

impl Chunk {
    pub fn kind(&self) -> ChunkKind {
        match self {
            Chunk::State(_) => ChunkKind::State,
            Chunk::TimeTree(_) => ChunkKind::TimeTree,
            Chunk::WorldMap(_) => ChunkKind::WorldMap,
            Chunk::GlobalWorldMap(_) => ChunkKind::GlobalWorldMap,
            Chunk::Meta(_) => ChunkKind::Meta,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        Ok(match self {
            Chunk::State(c) => c.encode()?,
            Chunk::TimeTree(t) => t.encode(),
            Chunk::WorldMap(m) => m.encode(),
            Chunk::GlobalWorldMap(g) => g.encode(),
            Chunk::Meta(bytes) => bytes.as_ref().clone(),
        })
    }

    /// Decodes the payload stored under `key`; the key's kind selects the format.
    pub fn decode(key: &ChunkKey, bytes: &[u8]) -> Result<Self> {
        let chunk = match key.kind {
            ChunkKind::State => StateChunk::decode(bytes).map(|c| Chunk::State(Arc::new(c))),
            ChunkKind::TimeTree => {
                TimeTree::decode(key.node, key.world, bytes).map(|t| Chunk::TimeTree(Arc::new(t)))
            }
            ChunkKind::WorldMap => {
                LocalWorldMap::decode(key.node, bytes).map(|m| Chunk::WorldMap(Arc::new(m)))
            }
            ChunkKind::GlobalWorldMap => {
                GlobalWorldMap::decode(bytes).map(|g| Chunk::GlobalWorldMap(Arc::new(g)))
            }
            ChunkKind::Meta => Ok(Chunk::Meta(Arc::new(bytes.to_vec()))),
        };
        chunk.map_err(|e| e.at_key(*key))
    }

    fn mark_clean(&mut self) {
        match self {
            Chunk::TimeTree(t) => {
                if let Some(t) = Arc::get_mut(t) {
                    t.mark_clean();
                }
            }
            Chunk::WorldMap(m) => {
                if let Some(m) = Arc::get_mut(m) {
                    m.mark_clean();
                }
            }
            _ => {}
        }
    }
}

pub struct ChunkSpace {
    backend: Arc<dyn Backend>,
    dirty: FxHashMap<ChunkKey, Chunk>,
    cache: Option<LruCache<ChunkKey, Chunk, FxBuildHasher>>,
}

impl ChunkSpace {
    /// `cache_capacity` counts clean chunks; 0 disables caching.
    pub fn new(backend: Arc<dyn Backend>, cache_capacity: usize) -> Self {
        ChunkSpace {
            backend,
            dirty: FxHashMap::default(),
            cache: NonZeroUsize::new(cache_capacity)
                .map(|cap| LruCache::with_hasher(cap, FxBuildHasher)),
        }
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn dirty_len(&self) -> usize {
        self.dirty.len()
    }

    pub fn cached_len(&self) -> usize {
        self.cache.as_ref().map_or(0, LruCache::len)
    }

    pub fn is_dirty(&self, key: &ChunkKey) -> bool {
        self.dirty.contains_key(key)
    }

    /// Keys of dirty chunks, in key order.
    pub fn dirty_keys(&self) -> Vec<ChunkKey> {
        let mut keys: Vec<_> = self.dirty.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    fn load(&self, key: &ChunkKey) -> Result<Option<Chunk>> {
        match self.backend.get(&key.encode())? {
            Some(bytes) => Chunk::decode(key, &bytes).map(Some),
            None => Ok(None),
        }
    }

    pub fn get(&mut self, key: &ChunkKey) -> Result<Option<Chunk>> {
        if let Some(chunk) = self.dirty.get(key) {
            return Ok(Some(chunk.clone()));
        }
        if let Some(chunk) = self.cache.as_mut().and_then(|c| c.get(key)) {
            return Ok(Some(chunk.clone()));
        }
        let loaded = self.load(key)?;
        if let (Some(chunk), Some(cache)) = (&loaded, self.cache.as_mut()) {
            cache.put(*key, chunk.clone());
        }
        Ok(loaded)
    }

    /// Mutable access to an existing chunk, which becomes dirty.
    pub fn get_mut(&mut self, key: &ChunkKey) -> Result<Option<&mut Chunk>> {
        if !self.dirty.contains_key(key) {
            let chunk = match self.cache.as_mut().and_then(|c| c.pop(key)) {
                Some(chunk) => chunk,
                None => match self.load(key)? {
                    Some(chunk) => chunk,
                    None => return Ok(None),
                },
            };
            self.dirty.insert(*key, chunk);
        }
        Ok(self.dirty.get_mut(key))
    }

    pub fn put_dirty(&mut self, key: ChunkKey, chunk: Chunk) {
        debug_assert_eq!(key.kind, chunk.kind());
        if let Some(cache) = self.cache.as_mut() {
            cache.pop(&key);
        }
        self.dirty.insert(key, chunk);
    }

    /// Writes every dirty chunk to the backend and returns how many were
    /// written. On failure nothing is marked clean, so the save can be retried.
    pub fn save(&mut self) -> Result<usize> {
        let written = self.write_dirty()?;
        if written > 0 {
            self.backend.flush()?;
        }
        self.mark_saved();
        Ok(written)
    }

    /// First half of a save: puts every dirty chunk, in key order, without
    /// flushing and without changing any in-memory state.
    pub fn write_dirty(&self) -> Result<usize> {
        let keys = self.dirty_keys();
        for key in &keys {
            let bytes = self.dirty[key].encode().map_err(|e| match e {
                Error::Decode(reason) => Error::corruption(*key, reason),
                other => other,
            })?;
            self.backend.put(&key.encode(), &bytes)?;
        }
        Ok(keys.len())
    }

    /// Second half of a save: dirty chunks become clean and evictable.
    pub fn mark_saved(&mut self) {
        for (key, mut chunk) in self.dirty.drain() {
            chunk.mark_clean();
            if let Some(cache) = self.cache.as_mut() {
                cache.put(key, chunk);
            }
        }
    }
}
