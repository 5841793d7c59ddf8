//! Identifiers, attribute values, state chunks and storage keys.
//!
//! A [`StateChunk`] is the resolved state of one node in one world at one
//! timepoint: its attributes and its outgoing relations. Chunks are stored under
//! a [`ChunkKey`], whose 25-byte encoding sorts exactly like the logical key so
//! that range scans over a node's history come out in time order.
//!
//! Edges carry no attributes. When an edge needs properties, model it as an
//! intermediate node with one relation to each endpoint.

use std::fmt;

use crate::codec::{put_u64, put_varint, Reader};
use crate::error::{Error, Result};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident($inner:ty)) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub $inner);

        impl From<$inner> for $name {
            fn from(v: $inner) -> Self {
                $name(v)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_type!(
    /// Identifier of a conceptual node. Allocated monotonically, never reused.
    NodeId(u64)
);
id_type!(
    /// Identifier of a world. The root world is 0.
    WorldId(u64)
);
id_type!(
    /// A point on the (caller-defined) time axis.
    Timepoint(i64)
);

impl WorldId {
    pub const ROOT: WorldId = WorldId(0);

    pub fn is_root(self) -> bool {
        self == Self::ROOT
    }
}

impl Timepoint {
    pub const MIN: Timepoint = Timepoint(i64::MIN);
    pub const MAX: Timepoint = Timepoint(i64::MAX);
}

/// Longest attribute or relation name the chunk format accepts, in bytes.
pub const MAX_NAME_LEN: usize = 1 << 16;

/// A typed attribute value.
#[derive(Clone, Debug)]
pub enum AttributeValue {
    Int(i32),
    Long(i64),
    Double(f64),
    Text(String),
    Bool(bool),
    /// An ordinal into a named enumeration registry.
    Enum { ordinal: u16, registry: String },
}

impl AttributeValue {
    pub fn type_tag(&self) -> u8 {
        match self {
            AttributeValue::Int(_) => 0,
            AttributeValue::Long(_) => 1,
            AttributeValue::Double(_) => 2,
            AttributeValue::Text(_) => 3,
            AttributeValue::Bool(_) => 4,
            AttributeValue::Enum { .. } => 5,
        }
    }

    fn encode_into(&self, out: &mut Vec<u8>) -> Result<()> {
        out.push(self.type_tag());
        match self {
            AttributeValue::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            AttributeValue::Long(v) => out.extend_from_slice(&v.to_be_bytes()),
            AttributeValue::Double(v) => put_u64(out, v.to_bits()),
            AttributeValue::Text(s) => {
                put_varint(out, s.len() as u64);
                out.extend_from_slice(s.as_bytes());
            }
            AttributeValue::Bool(b) => out.push(u8::from(*b)),
            AttributeValue::Enum { ordinal, registry } => {
                check_name_len(registry)?;
                out.extend_from_slice(&ordinal.to_be_bytes());
                put_varint(out, registry.len() as u64);
                out.extend_from_slice(registry.as_bytes());
            }
        }
        Ok(())
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self> {
        Ok(match r.u8()? {
            0 => AttributeValue::Int(r.u32()? as i32),
            1 => AttributeValue::Long(r.u64()? as i64),
            2 => AttributeValue::Double(f64::from_bits(r.u64()?)),
            3 => AttributeValue::Text(r.string()?),
            4 => match r.u8()? {
                0 => AttributeValue::Bool(false),
                1 => AttributeValue::Bool(true),
                b => return Err(Error::decode(format!("invalid bool byte {b:#04x}"))),
            },
            5 => {
                let ordinal = r.u16()?;
                AttributeValue::Enum {
                    ordinal,
                    registry: r.string()?,
                }
            }
            tag => return Err(Error::decode(format!("unknown type tag {tag}"))),
        })
    }
}

// Doubles compare by bit pattern so that NaN payloads survive equality checks
// after a round trip.
impl PartialEq for AttributeValue {
    fn eq(&self, other: &Self) -> bool {
        use AttributeValue::*;
        match (self, other) {
            (Int(a), Int(b)) => a == b,
            (Long(a), Long(b)) => a == b,
            (Double(a), Double(b)) => a.to_bits() == b.to_bits(),
            (Text(a), Text(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (
                Enum {
                    ordinal: a,
                    registry: ra,
                },
                Enum {
                    ordinal: b,
                    registry: rb,
                },
            ) => a == b && ra == rb,
            _ => false,
        }
    }
}

impl Eq for AttributeValue {}

impl From<i32> for AttributeValue {
    fn from(v: i32) -> Self {
        AttributeValue::Int(v)
    }
}

impl From<i64> for AttributeValue {
    fn from(v: i64) -> Self {
        AttributeValue::Long(v)
    }
}

impl From<f64> for AttributeValue {
    fn from(v: f64) -> Self {
        AttributeValue::Double(v)
    }
}

impl From<bool> for AttributeValue {
    fn from(v: bool) -> Self {
        AttributeValue::Bool(v)
    }
}

impl From<&str> for AttributeValue {
    fn from(v: &str) -> Self {
        AttributeValue::Text(v.to_owned())
    }
}

impl From<String> for AttributeValue {
    fn from(v: String) -> Self {
        AttributeValue::Text(v)
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::Int(v) => write!(f, "{v}"),
            AttributeValue::Long(v) => write!(f, "{v}"),
            AttributeValue::Double(v) => write!(f, "{v}"),
            AttributeValue::Text(v) => write!(f, "{v:?}"),
            AttributeValue::Bool(v) => write!(f, "{v}"),
            AttributeValue::Enum { ordinal, registry } => write!(f, "{registry}#{ordinal}"),
        }
    }
}

fn check_name_len(name: &str) -> Result<()> {
    if name.len() > MAX_NAME_LEN {
        return Err(Error::EncodingLimit(format!(
            "name of {} bytes exceeds {MAX_NAME_LEN}",
            name.len()
        )));
    }
    Ok(())
}

/// State of one node at one (world, time).
///
/// Attributes and relations are kept sorted by name, which makes the encoding
/// canonical: structurally equal chunks always serialize to the same bytes.
/// Attribute and relation names live in disjoint namespaces.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateChunk {
    attributes: Vec<(String, AttributeValue)>,
    relations: Vec<(String, Vec<NodeId>)>,
    tombstone: bool,
}

impl StateChunk {
    pub fn new() -> Self {
        Self::default()
    }

    /// The marker chunk recorded when a node is deleted.
    pub fn tombstone() -> Self {
        StateChunk {
            tombstone: true,
            ..Self::default()
        }
    }

    pub fn is_tombstone(&self) -> bool {
        self.tombstone
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty() && self.relations.is_empty()
    }

    fn attr_slot(&self, name: &str) -> std::result::Result<usize, usize> {
        self.attributes
            .binary_search_by(|(n, _)| n.as_str().cmp(name))
    }

    fn rel_slot(&self, name: &str) -> std::result::Result<usize, usize> {
        self.relations.binary_search_by(|(n, _)| n.as_str().cmp(name))
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeValue> {
        self.attr_slot(name).ok().map(|i| &self.attributes[i].1)
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&str, &AttributeValue)> {
        self.attributes.iter().map(|(n, v)| (n.as_str(), v))
    }

    /// Sets an attribute, returning the previous value. Writing to a tombstone
    /// clears the tombstone flag.
    pub fn set_attribute(
        &mut self,
        name: &str,
        value: AttributeValue,
    ) -> Result<Option<AttributeValue>> {
        if name.is_empty() {
            return Err(Error::EmptyName);
        }
        if self.rel_slot(name).is_ok() {
            return Err(Error::NameConflict(name.to_owned()));
        }
        self.tombstone = false;
        match self.attr_slot(name) {
            Ok(i) => Ok(Some(std::mem::replace(&mut self.attributes[i].1, value))),
            Err(i) => {
                self.attributes.insert(i, (name.to_owned(), value));
                Ok(None)
            }
        }
    }

    pub fn remove_attribute(&mut self, name: &str) -> Option<AttributeValue> {
        let i = self.attr_slot(name).ok()?;
        Some(self.attributes.remove(i).1)
    }

    /// Targets of a relation in insertion order; empty when the relation is unset.
    pub fn relation(&self, name: &str) -> &[NodeId] {
        match self.rel_slot(name) {
            Ok(i) => &self.relations[i].1,
            Err(_) => &[],
        }
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, &[NodeId])> {
        self.relations.iter().map(|(n, ids)| (n.as_str(), ids.as_slice()))
    }

    /// Appends `target` to a relation. Returns `false` if it was already a member.
    pub fn add_to_relation(&mut self, name: &str, target: NodeId) -> Result<bool> {
        if name.is_empty() {
            return Err(Error::EmptyName);
        }
        if self.attr_slot(name).is_ok() {
            return Err(Error::NameConflict(name.to_owned()));
        }
        self.tombstone = false;
        match self.rel_slot(name) {
            Ok(i) => {
                let ids = &mut self.relations[i].1;
                if ids.contains(&target) {
                    return Ok(false);
                }
                ids.push(target);
            }
            Err(i) => self.relations.insert(i, (name.to_owned(), vec![target])),
        }
        Ok(true)
    }

    /// Removes `target` from a relation. Returns `false` if it was not a member.
    /// A relation whose last target is removed disappears from the chunk.
    pub fn remove_from_relation(&mut self, name: &str, target: NodeId) -> bool {
        let Ok(i) = self.rel_slot(name) else {
            return false;
        };
        let ids = &mut self.relations[i].1;
        let Some(pos) = ids.iter().position(|&id| id == target) else {
            return false;
        };
        ids.remove(pos);
        if ids.is_empty() {
            self.relations.remove(i);
        }
        true
    }

    /// Canonical binary encoding.
    ///
    /// `flags ‖ attrCount ‖ (nameLen, name, typeTag, value)* ‖ relCount ‖
    /// (nameLen, name, idCount, id*)*`, counts and lengths as varints and ids
    /// as 8-byte big-endian.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(16 + 16 * self.attributes.len());
        out.push(u8::from(self.tombstone));
        put_varint(&mut out, self.attributes.len() as u64);
        for (name, value) in &self.attributes {
            check_name_len(name)?;
            put_varint(&mut out, name.len() as u64);
            out.extend_from_slice(name.as_bytes());
            value.encode_into(&mut out)?;
        }
        put_varint(&mut out, self.relations.len() as u64);
        for (name, ids) in &self.relations {
            check_name_len(name)?;
            put_varint(&mut out, name.len() as u64);
            out.extend_from_slice(name.as_bytes());
            put_varint(&mut out, ids.len() as u64);
            for id in ids {
                put_u64(&mut out, id.0);
            }
        }
        Ok(out)
    }

    /// Decodes a chunk, rejecting any input that is not in canonical form.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let flags = r.u8()?;
        if flags & !1 != 0 {
            return Err(Error::decode(format!("unknown flag bits {flags:#04x}")));
        }
        let mut chunk = StateChunk {
            tombstone: flags & 1 == 1,
            ..Self::default()
        };

        let attr_count = r.len(2)?;
        chunk.attributes.reserve(attr_count);
        for _ in 0..attr_count {
            let name = r.string()?;
            let value = AttributeValue::decode_from(&mut r)?;
            chunk.attributes.push((name, value));
        }
        let rel_count = r.len(2)?;
        chunk.relations.reserve(rel_count);
        for _ in 0..rel_count {
            let name = r.string()?;
            let n = r.len(8)?;
            let mut ids = Vec::with_capacity(n);
            for _ in 0..n {
                ids.push(NodeId(r.u64()?));
            }
            chunk.relations.push((name, ids));
        }
        r.finish()?;
        chunk.validate()?;
        Ok(chunk)
    }

    fn validate(&self) -> Result<()> {
        let sorted_unique = |names: &mut dyn Iterator<Item = &String>| {
            let mut prev: Option<&String> = None;
            for name in names {
                if name.is_empty() {
                    return Err(Error::decode("empty name"));
                }
                if prev.is_some_and(|p| p >= name) {
                    return Err(Error::decode(format!("name `{name}` out of order")));
                }
                prev = Some(name);
            }
            Ok(())
        };
        sorted_unique(&mut self.attributes.iter().map(|(n, _)| n))?;
        sorted_unique(&mut self.relations.iter().map(|(n, _)| n))?;
        for (name, ids) in &self.relations {
            if self.attr_slot(name).is_ok() {
                return Err(Error::decode(format!("`{name}` is both attribute and relation")));
            }
            if ids.is_empty() {
                return Err(Error::decode(format!("relation `{name}` is empty")));
            }
            for (i, id) in ids.iter().enumerate() {
                if ids[..i].contains(id) {
                    return Err(Error::decode(format!("duplicate target {id} in `{name}`")));
                }
            }
        }
        if self.tombstone && !self.is_empty() {
            return Err(Error::decode("tombstone carries state"));
        }
        Ok(())
    }
}

/// What a stored chunk holds. The discriminant is the first byte of the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ChunkKind {
    State = 0,
    TimeTree = 1,
    WorldMap = 2,
    GlobalWorldMap = 3,
    Meta = 4,
}

impl TryFrom<u8> for ChunkKind {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            0 => ChunkKind::State,
            1 => ChunkKind::TimeTree,
            2 => ChunkKind::WorldMap,
            3 => ChunkKind::GlobalWorldMap,
            4 => ChunkKind::Meta,
            _ => return Err(Error::decode(format!("unknown chunk kind {b}"))),
        })
    }
}

pub const KEY_LEN: usize = 25;

/// Storage address of a chunk. The derived ordering matches the byte order of
/// [`ChunkKey::encode`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChunkKey {
    pub kind: ChunkKind,
    pub world: WorldId,
    pub time: Timepoint,
    pub node: NodeId,
}

impl ChunkKey {
    pub fn state(node: NodeId, time: Timepoint, world: WorldId) -> Self {
        ChunkKey {
            kind: ChunkKind::State,
            world,
            time,
            node,
        }
    }

    pub fn time_tree(node: NodeId, world: WorldId) -> Self {
        ChunkKey {
            kind: ChunkKind::TimeTree,
            world,
            time: Timepoint(0),
            node,
        }
    }

    pub fn world_map(node: NodeId) -> Self {
        ChunkKey {
            kind: ChunkKind::WorldMap,
            world: WorldId::ROOT,
            time: Timepoint(0),
            node,
        }
    }

    pub fn global_world_map() -> Self {
        ChunkKey {
            kind: ChunkKind::GlobalWorldMap,
            world: WorldId::ROOT,
            time: Timepoint(0),
            node: NodeId(0),
        }
    }

    pub fn meta() -> Self {
        ChunkKey {
            kind: ChunkKind::Meta,
            world: WorldId::ROOT,
            time: Timepoint(0),
            node: NodeId(0),
        }
    }

    /// `kind(1) ‖ world(8) ‖ biased time(8) ‖ node(8)`, all big-endian.
    pub fn encode(&self) -> [u8; KEY_LEN] {
        let mut out = [0u8; KEY_LEN];
        out[0] = self.kind as u8;
        out[1..9].copy_from_slice(&self.world.0.to_be_bytes());
        out[9..17].copy_from_slice(&crate::codec::time_to_biased(self.time).to_be_bytes());
        out[17..25].copy_from_slice(&self.node.0.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != KEY_LEN {
            return Err(Error::decode(format!(
                "key is {} bytes, expected {KEY_LEN}",
                bytes.len()
            )));
        }
        let mut r = Reader::new(bytes);
        let kind = ChunkKind::try_from(r.u8()?)?;
        let world = WorldId(r.u64()?);
        let time = r.time()?;
        let node = NodeId(r.u64()?);
        Ok(ChunkKey {
            kind,
            world,
            time,
            node,
        })
    }
}
