//! Line-oriented text export of a backend's records.
//!
//! Each record is one line, `base64(key):base64(payload)`, using the standard
//! padded alphabet. Records are written in key order.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};
use crate::model::ChunkKey;
use crate::storage::{Backend, Chunk};

pub fn encode_line(key: &[u8], payload: &[u8]) -> String {
    format!("{}:{}", STANDARD.encode(key), STANDARD.encode(payload))
}

/// Parses and validates one export line: the key must be well formed and the
/// payload must decode as the chunk kind the key names.
pub fn decode_line(line: &str) -> Result<(ChunkKey, Vec<u8>)> {
    let (key, payload) = line
        .split_once(':')
        .ok_or_else(|| Error::decode("missing ':' separator"))?;
    let key = STANDARD
        .decode(key)
        .map_err(|e| Error::decode(format!("key is not base64: {e}")))?;
    let payload = STANDARD
        .decode(payload)
        .map_err(|e| Error::decode(format!("payload is not base64: {e}")))?;
    let key = ChunkKey::decode(&key)?;
    Chunk::decode(&key, &payload)?;
    Ok((key, payload))
}

/// Writes every record of `backend` and returns how many were written.
pub fn dump(backend: &dyn Backend, out: &mut dyn Write) -> Result<usize> {
    let records = backend.scan()?;
    for (key, payload) in &records {
        writeln!(out, "{}", encode_line(key, payload))?;
    }
    out.flush()?;
    Ok(records.len())
}

/// Reads an export and puts every record into `backend`. The whole input is
/// validated before anything is written. Blank lines are ignored.
pub fn restore(backend: &dyn Backend, input: &mut dyn BufRead) -> Result<usize> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let record = decode_line(line).map_err(|e| match e {
            Error::Decode(reason) | Error::Corruption { reason, .. } => {
                Error::Decode(format!("line {}: {reason}", i + 1))
            }
            other => other,
        })?;
        records.push(record);
    }
    for (key, payload) in &records {
        backend.put(&key.encode(), payload)?;
    }
    backend.flush()?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NodeId, StateChunk, Timepoint, WorldId};
    use crate::storage::MemoryBackend;

    #[test]
    fn dump_restore_round_trip() {
        let src = MemoryBackend::new();
        let mut c = StateChunk::new();
        c.set_attribute("name", "Eve".into()).unwrap();
        for n in 0..5 {
            let key = ChunkKey::state(NodeId(n), Timepoint(n as i64 - 2), WorldId(n % 2));
            src.put(&key.encode(), &c.encode().unwrap()).unwrap();
        }
        let mut text = Vec::new();
        assert_eq!(dump(&src, &mut text).unwrap(), 5);
        let text = String::from_utf8(text).unwrap();
        assert_eq!(text.lines().count(), 5);

        let dst = MemoryBackend::new();
        assert_eq!(restore(&dst, &mut text.as_bytes()).unwrap(), 5);
        assert_eq!(dst.scan().unwrap(), src.scan().unwrap());
    }

    #[test]
    fn empty_chunk_line() {
        let key = ChunkKey::state(NodeId(0), Timepoint(0), WorldId(0));
        let line = encode_line(&key.encode(), &[0, 0, 0]);
        assert_eq!(line, format!("{}:AAAA", STANDARD.encode(key.encode())));
        assert_eq!(decode_line(&line).unwrap(), (key, vec![0, 0, 0]));
    }

    #[test]
    fn bad_input_writes_nothing() {
        let key = ChunkKey::state(NodeId(0), Timepoint(0), WorldId(0));
        let good = encode_line(&key.encode(), &[0, 0, 0]);
        let bad_payload = encode_line(&key.encode(), &[0, 9]);
        for input in [format!("{good}\nnot a record\n"), format!("{good}\n{bad_payload}\n"), "QUJD:AAAA".to_owned()] {
            let dst = MemoryBackend::new();
            match restore(&dst, &mut input.as_bytes()) {
                Err(Error::Decode(reason)) => assert!(reason.starts_with("line "), "{reason}"),
                other => panic!("expected decode error, got {other:?}"),
            }
            assert!(dst.is_empty());
        }
    }
}
