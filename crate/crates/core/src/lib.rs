//! Storage engine for many-world graphs: nodes whose state evolves along a
//! timeline and can be forked into alternative worlds without copying.

mod codec;
pub mod error;
pub mod export;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod resolver;
pub mod storage;
pub mod time_tree;
pub mod world_index;

pub use crate::error::{Error, Result};
pub use crate::graph::{Graph, GraphConfig, NodeHandle, Related, Stats};
pub use crate::model::{AttributeValue, ChunkKey, ChunkKind, NodeId, StateChunk, Timepoint, WorldId};
pub use crate::time_tree::TimeTree;
pub use crate::world_index::{GlobalWorldMap, LocalWorldMap};
