use std::io;

use crate::model::{ChunkKey, NodeId, Timepoint, WorldId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown world {0}")]
    UnknownWorld(WorldId),

    #[error("graph is not connected")]
    NotConnected,

    #[error("node {node} does not resolve in world {world} at time {time}")]
    NodeNotFound {
        node: NodeId,
        world: WorldId,
        time: Timepoint,
    },

    #[error("unknown index `{0}`")]
    UnknownIndex(String),

    #[error("name `{0}` is already used by the other namespace of this chunk")]
    NameConflict(String),

    #[error("attribute and relation names must not be empty")]
    EmptyName,

    #[error("encoding limit exceeded: {0}")]
    EncodingLimit(String),

    /// Malformed bytes, without knowledge of where they came from.
    #[error("malformed encoding: {0}")]
    Decode(String),

    #[error("corrupt chunk {key:?}: {reason}")]
    Corruption {
        key: Option<ChunkKey>,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn decode(reason: impl Into<String>) -> Self {
        Error::Decode(reason.into())
    }

    pub(crate) fn corruption(key: ChunkKey, reason: impl Into<String>) -> Self {
        Error::Corruption {
            key: Some(key),
            reason: reason.into(),
        }
    }

    /// Attaches the offending key to a bare decode error.
    pub(crate) fn at_key(self, key: ChunkKey) -> Self {
        match self {
            Error::Decode(reason) => Error::Corruption {
                key: Some(key),
                reason,
            },
            other => other,
        }
    }
}
