//! Byte-level helpers shared by the chunk payload formats.
//!
//! Counts and lengths are unsigned LEB128 varints; fixed-width integers are
//! big-endian. Timepoints are written with the sign bit flipped so that the
//! unsigned byte order matches signed numeric order.

use crate::error::{Error, Result};
use crate::model::Timepoint;

const TIME_BIAS: u64 = 1 << 63;

pub(crate) fn time_to_biased(t: Timepoint) -> u64 {
    (t.0 as u64) ^ TIME_BIAS
}

pub(crate) fn time_from_biased(v: u64) -> Timepoint {
    Timepoint((v ^ TIME_BIAS) as i64)
}

pub(crate) fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub(crate) fn put_time(out: &mut Vec<u8>, t: Timepoint) {
    put_u64(out, time_to_biased(t));
}

/// Cursor over an encoded payload. Every read is bounds-checked.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| {
                Error::decode(format!(
                    "need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn time(&mut self) -> Result<Timepoint> {
        Ok(time_from_biased(self.u64()?))
    }

    pub(crate) fn varint(&mut self) -> Result<u64> {
        let mut value = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.u8()?;
            let bits = u64::from(byte & 0x7f);
            if shift == 63 && bits > 1 {
                return Err(Error::decode("varint overflows 64 bits"));
            }
            value |= bits << shift;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::decode("varint longer than 10 bytes"))
    }

    /// A varint used as a length or count; bounded by the remaining input so a
    /// corrupt count cannot trigger a huge allocation.
    pub(crate) fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.varint()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(unit.max(1) as u64) > remaining {
            return Err(Error::decode(format!(
                "length {n} exceeds remaining {remaining} bytes"
            )));
        }
        Ok(n as usize)
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.len(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::decode(format!("invalid utf-8: {e}")))
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::decode(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}
