//! Durable append-only log backend.
//!
//! Every `put` or `remove` appends one record:
//!
//! ```text
//! key_len: u32 LE | key | value_len: u32 LE | value
//! ```
//!
//! A `value_len` of `u32::MAX` marks a deletion and is followed by no value
//! bytes. On open the log is replayed front to back and the latest record for
//! a key wins. A partial record at the tail (a crash mid-append) is truncated
//! away. When stale bytes exceed the configured fraction of the file, the log is
//! rewritten with only live records at the next flush.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use super::backend::{Backend, BackendInfo, Durability};
use crate::error::{Error, Result};

const DELETE_MARKER: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct LogOptions {
    /// Compact when stale bytes exceed this fraction of the file.
    pub compaction_ratio: f64,
    /// Never compact files smaller than this.
    pub compaction_min_bytes: u64,
    /// fsync at the end of every flush.
    pub sync: bool,
}

impl Default for LogOptions {
    fn default() -> Self {
        LogOptions {
            compaction_ratio: 0.5,
            compaction_min_bytes: 1 << 20,
            sync: true,
        }
    }
}

#[derive(Clone, Copy)]
struct Location {
    offset: u64,
    len: u32,
}

struct LogState {
    file: File,
    index: BTreeMap<Vec<u8>, Location>,
    end: u64,
    live_bytes: u64,
}

pub struct LogBackend {
    path: PathBuf,
    options: LogOptions,
    state: Mutex<LogState>,
}

fn record_len(key_len: usize, value_len: u32) -> u64 {
    8 + key_len as u64 + u64::from(value_len)
}

/// Result of scanning a log file: the index plus the offset of the last complete record.
struct Replay {
    index: BTreeMap<Vec<u8>, Location>,
    valid_end: u64,
    live_bytes: u64,
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Ok(false),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn replay(file: &File, file_len: u64) -> io::Result<Replay> {
    let mut r = BufReader::with_capacity(1 << 16, file);
    r.seek(SeekFrom::Start(0))?;
    let mut index: BTreeMap<Vec<u8>, Location> = BTreeMap::new();
    let mut offset = 0u64;
    let mut live_bytes = 0u64;
    let mut len_buf = [0u8; 4];
    loop {
        if !read_full(&mut r, &mut len_buf)? {
            break;
        }
        let key_len = u32::from_le_bytes(len_buf) as u64;
        if offset + 8 + key_len > file_len {
            break;
        }
        let mut key = vec![0u8; key_len as usize];
        if !read_full(&mut r, &mut key)? || !read_full(&mut r, &mut len_buf)? {
            break;
        }
        let value_len = u32::from_le_bytes(len_buf);
        let value_offset = offset + 8 + key_len;
        if value_len == DELETE_MARKER {
            if let Some(old) = index.remove(&key) {
                live_bytes -= record_len(key.len(), old.len);
            }
            offset = value_offset;
            continue;
        }
        if value_offset + u64::from(value_len) > file_len {
            break;
        }
        r.seek_relative(i64::from(value_len))?;
        let loc = Location {
            offset: value_offset,
            len: value_len,
        };
        live_bytes += record_len(key.len(), value_len);
        if let Some(old) = index.insert(key.clone(), loc) {
            live_bytes -= record_len(key.len(), old.len);
        }
        offset = value_offset + u64::from(value_len);
    }
    Ok(Replay {
        index,
        valid_end: offset,
        live_bytes,
    })
}

impl LogBackend {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(path, LogOptions::default())
    }

    pub fn open_with(path: impl AsRef<Path>, options: LogOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)?;
        let file_len = file.metadata()?.len();
        let replay = replay(&file, file_len)?;
        if replay.valid_end < file_len {
            log::warn!(
                "{}: truncating {} bytes of partial trailing record at offset {}",
                path.display(),
                file_len - replay.valid_end,
                replay.valid_end
            );
            file.set_len(replay.valid_end)?;
            file.sync_all()?;
        }
        Ok(LogBackend {
            path,
            options,
            state: Mutex::new(LogState {
                file,
                index: replay.index,
                end: replay.valid_end,
                live_bytes: replay.live_bytes,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Current size of the log file in bytes.
    pub fn file_len(&self) -> u64 {
        self.state.lock().end
    }

    pub fn len(&self) -> usize {
        self.state.lock().index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.lock().index.is_empty()
    }

    fn append(state: &mut LogState, key: &[u8], value: Option<&[u8]>) -> Result<Location> {
        let key_len = u32::try_from(key.len())
            .map_err(|_| Error::EncodingLimit(format!("key of {} bytes", key.len())))?;
        let value_len = match value {
            Some(v) => u32::try_from(v.len())
                .ok()
                .filter(|&l| l != DELETE_MARKER)
                .ok_or_else(|| Error::EncodingLimit(format!("value of {} bytes", v.len())))?,
            None => DELETE_MARKER,
        };
        let mut record = Vec::with_capacity(8 + key.len() + value.map_or(0, <[u8]>::len));
        record.extend_from_slice(&key_len.to_le_bytes());
        record.extend_from_slice(key);
        record.extend_from_slice(&value_len.to_le_bytes());
        if let Some(v) = value {
            record.extend_from_slice(v);
        }
        state.file.seek(SeekFrom::Start(state.end))?;
        if let Err(e) = state.file.write_all(&record) {
            // Drop whatever part of the record made it out.
            let _ = state.file.set_len(state.end);
            return Err(e.into());
        }
        let loc = Location {
            offset: state.end + 8 + key.len() as u64,
            len: value_len,
        };
        state.end += record.len() as u64;
        Ok(loc)
    }

    fn compact(&self, state: &mut LogState) -> Result<()> {
        let tmp_path = self.path.with_extension("compact");
        let tmp = File::create(&tmp_path)?;
        let mut w = BufWriter::new(tmp);
        let mut new_index = BTreeMap::new();
        let mut offset = 0u64;
        let mut buf = Vec::new();
        for (key, loc) in &state.index {
            buf.resize(loc.len as usize, 0);
            state.file.seek(SeekFrom::Start(loc.offset))?;
            state.file.read_exact(&mut buf)?;
            w.write_all(&(key.len() as u32).to_le_bytes())?;
            w.write_all(key)?;
            w.write_all(&loc.len.to_le_bytes())?;
            w.write_all(&buf)?;
            new_index.insert(
                key.clone(),
                Location {
                    offset: offset + 8 + key.len() as u64,
                    len: loc.len,
                },
            );
            offset += record_len(key.len(), loc.len);
        }
        let tmp = w.into_inner().map_err(|e| e.into_error())?;
        tmp.sync_all()?;
        drop(tmp);
        fs::rename(&tmp_path, &self.path)?;
        state.file = OpenOptions::new().read(true).write(true).open(&self.path)?;
        log::debug!(
            "{}: compacted {} -> {} bytes",
            self.path.display(),
            state.end,
            offset
        );
        state.index = new_index;
        state.end = offset;
        state.live_bytes = offset;
        Ok(())
    }
}

impl Backend for LogBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: "append-log",
            durability: Durability::Durable,
        }
    }

    fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        let mut state = self.state.lock();
        let Some(loc) = state.index.get(key).copied() else {
            return Ok(None);
        };
        let mut buf = vec![0u8; loc.len as usize];
        state.file.seek(SeekFrom::Start(loc.offset))?;
        state.file.read_exact(&mut buf)?;
        Ok(Some(buf))
    }

    fn put(&self, key: &[u8], value: &[u8]) -> Result<()> {
        let mut state = self.state.lock();
        let loc = Self::append(&mut state, key, Some(value))?;
        state.live_bytes += record_len(key.len(), loc.len);
        if let Some(old) = state.index.insert(key.to_vec(), loc) {
            state.live_bytes -= record_len(key.len(), old.len);
        }
        Ok(())
    }

    fn remove(&self, key: &[u8]) -> Result<()> {
        let mut state = self.state.lock();
        if !state.index.contains_key(key) {
            return Ok(());
        }
        Self::append(&mut state, key, None)?;
        if let Some(old) = state.index.remove(key) {
            state.live_bytes -= record_len(key.len(), old.len);
        }
        Ok(())
    }

    fn flush(&self) -> Result<()> {
        let mut state = self.state.lock();
        let stale = state.end - state.live_bytes;
        if state.end >= self.options.compaction_min_bytes
            && stale as f64 > self.options.compaction_ratio * state.end as f64
        {
            self.compact(&mut state)?;
        } else if self.options.sync {
            state.file.sync_data()?;
        }
        Ok(())
    }

    fn scan(&self) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        let keys: Vec<Vec<u8>> = self.state.lock().index.keys().cloned().collect();
        let mut out = Vec::with_capacity(keys.len());
        for key in keys {
            if let Some(v) = self.get(&key)? {
                out.push((key, v));
            }
        }
        Ok(out)
    }
}
