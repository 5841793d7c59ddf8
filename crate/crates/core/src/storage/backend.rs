use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Durability {
    Volatile,
    Durable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackendInfo {
    pub name: &'static str,
    pub durability: Durability,
}

/// A byte-oriented key/value store that chunks are persisted into.
///
/// `get` after `put` of the same key returns the last value put; `remove`
/// makes `get` return `None`.
pub trait Backend: Send + Sync {
    fn info(&self) -> BackendInfo;

    fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>>;

    fn put(&self, key: &[u8], value: &[u8]) -> Result<()>;

    fn remove(&self, key: &[u8]) -> Result<()>;

    /// Called once at the end of every save.
    fn flush(&self) -> Result<()> {
        Ok(())
    }

    /// Every live record, in key order.
    fn scan(&self) -> Result<Vec<(Vec<u8>, Vec<u8>)>>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn info(&self) -> BackendInfo {
        (**self).info()
    }

    fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        (**self).get(key)
    }

    fn put(&self, key: &[u8], value: &[u8]) -> Result<()> {
        (**self).put(key, value)
    }

    fn remove(&self, key: &[u8]) -> Result<()> {
        (**self).remove(key)
    }

    fn flush(&self) -> Result<()> {
        (**self).flush()
    }

    fn scan(&self) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        (**self).scan()
    }
}

/// Volatile in-process store.
#[derive(Default)]
pub struct MemoryBackend {
    map: Mutex<BTreeMap<Vec<u8>, Vec<u8>>>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.lock().is_empty()
    }
}

impl Backend for MemoryBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: "memory",
            durability: Durability::Volatile,
        }
    }

    fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        Ok(self.map.lock().get(key).cloned())
    }

    fn put(&self, key: &[u8], value: &[u8]) -> Result<()> {
        self.map.lock().insert(key.to_vec(), value.to_vec());
        Ok(())
    }

    fn remove(&self, key: &[u8]) -> Result<()> {
        self.map.lock().remove(key);
        Ok(())
    }

    fn scan(&self) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        Ok(self
            .map
            .lock()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect())
    }
}

/// Wraps a backend and counts physical operations. Keys written are captured
/// so callers can assert exactly which records a unit of work touched.
pub struct CountingBackend<B> {
    inner: B,
    reads: AtomicU64,
    writes: AtomicU64,
    written: Mutex<Vec<Vec<u8>>>,
}

impl<B: Backend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            reads: AtomicU64::new(0),
            writes: AtomicU64::new(0),
            written: Mutex::new(Vec::new()),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn writes(&self) -> u64 {
        self.writes.load(Ordering::Relaxed)
    }

    /// Drains the captured write keys.
    pub fn take_written(&self) -> Vec<Vec<u8>> {
        std::mem::take(&mut *self.written.lock())
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn info(&self) -> BackendInfo {
        self.inner.info()
    }

    fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.inner.get(key)
    }

    fn put(&self, key: &[u8], value: &[u8]) -> Result<()> {
        self.inner.put(key, value)?;
        self.writes.fetch_add(1, Ordering::Relaxed);
        self.written.lock().push(key.to_vec());
        Ok(())
    }

    fn remove(&self, key: &[u8]) -> Result<()> {
        self.inner.remove(key)
    }

    fn flush(&self) -> Result<()> {
        self.inner.flush()
    }

    fn scan(&self) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        self.inner.scan()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_backend_contract() {
        let b = MemoryBackend::new();
        assert_eq!(b.get(b"k").unwrap(), None);
        b.put(b"k", b"v1").unwrap();
        b.put(b"k", b"v2").unwrap();
        assert_eq!(b.get(b"k").unwrap().as_deref(), Some(&b"v2"[..]));
        b.put(b"a", b"x").unwrap();
        let keys: Vec<_> = b.scan().unwrap().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, vec![b"a".to_vec(), b"k".to_vec()]);
        b.remove(b"k").unwrap();
        assert_eq!(b.get(b"k").unwrap(), None);
        assert_eq!(b.info().durability, Durability::Volatile);
    }

    #[test]
    fn counting_backend_counts() {
        let b = CountingBackend::new(MemoryBackend::new());
        b.put(b"k", b"v").unwrap();
        b.get(b"k").unwrap();
        b.get(b"missing").unwrap();
        assert_eq!((b.reads(), b.writes()), (2, 1));
        assert_eq!(b.take_written(), vec![b"k".to_vec()]);
        assert!(b.take_written().is_empty());
    }
}
