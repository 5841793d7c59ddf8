//! Brute-force reference model of the graph semantics, used to check the
//! engine.
//!
//! The oracle keeps a plain log of every state written per node and the parent
//! of every world. A read rebuilds the node's global timeline from scratch:
//! walking from the root down to the requested world, each world that has local
//! writes cuts the inherited timeline at its first local write and appends its
//! own entries. The answer is the latest entry at or before the requested time.
//! No indexes, caches or divergence maps are involved.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{AttributeValue, NodeId, StateChunk, Timepoint, WorldId};

/// One graph operation, addressed by viewpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Create {
        world: WorldId,
        time: Timepoint,
    },
    Set {
        node: NodeId,
        world: WorldId,
        time: Timepoint,
        name: String,
        value: AttributeValue,
    },
    Link {
        node: NodeId,
        world: WorldId,
        time: Timepoint,
        name: String,
        target: NodeId,
    },
    Unlink {
        node: NodeId,
        world: WorldId,
        time: Timepoint,
        name: String,
        target: NodeId,
    },
    Delete {
        node: NodeId,
        world: WorldId,
        time: Timepoint,
    },
    Diverge {
        parent: WorldId,
    },
}

/// Observable result of applying an [`Op`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Created(NodeId),
    Diverged(WorldId),
    Done,
    /// Link, unlink and delete report whether anything changed.
    Flag(bool),
    NotFound,
    UnknownWorld,
    /// The chunk refused the change, e.g. a name used by both an attribute
    /// and a relation.
    Rejected,
}

#[derive(Clone, Debug)]
struct Write {
    time: Timepoint,
    world: WorldId,
    chunk: StateChunk,
}

#[derive(Clone, Debug)]
pub struct ReplayOracle {
    /// `parents[w]` is the parent of world `w`; the root has none.
    parents: Vec<Option<WorldId>>,
    writes: HashMap<NodeId, Vec<Write>>,
    next_node: u64,
}

impl Default for ReplayOracle {
    fn default() -> Self {
        ReplayOracle {
            parents: vec![None],
            writes: HashMap::new(),
            next_node: 1,
        }
    }
}

impl ReplayOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn world_count(&self) -> u64 {
        self.parents.len() as u64
    }

    pub fn node_count(&self) -> u64 {
        self.next_node - 1
    }

    fn known(&self, w: WorldId) -> bool {
        w.0 < self.world_count()
    }

    /// Parent hops from `w` to the root.
    pub fn depth(&self, w: WorldId) -> usize {
        let mut depth = 0;
        let mut cur = w;
        while let Some(p) = self.parents[cur.0 as usize] {
            depth += 1;
            cur = p;
        }
        depth
    }

    pub fn diverge(&mut self, parent: WorldId) -> Option<WorldId> {
        if !self.known(parent) {
            return None;
        }
        self.parents.push(Some(parent));
        Some(WorldId(self.world_count() - 1))
    }

    /// Records `chunk` as the state of `node` at (`time`, `world`), replacing
    /// an earlier write at the same place.
    pub fn write(&mut self, node: NodeId, time: Timepoint, world: WorldId, chunk: StateChunk) {
        self.writes.entry(node).or_default().push(Write { time, world, chunk });
    }

    /// The stored chunk in effect at the viewpoint, tombstones included.
    pub fn lookup(&self, node: NodeId, time: Timepoint, world: WorldId) -> Option<&StateChunk> {
        let writes = self.writes.get(&node)?;
        if !self.known(world) {
            return None;
        }
        let mut chain = vec![world];
        while let Some(p) = self.parents[chain.last().unwrap().0 as usize] {
            chain.push(p);
        }
        let mut by_world: HashMap<WorldId, BTreeMap<Timepoint, &StateChunk>> = HashMap::new();
        for x in writes {
            by_world.entry(x.world).or_default().insert(x.time, &x.chunk);
        }
        let mut timeline: BTreeMap<Timepoint, &StateChunk> = BTreeMap::new();
        for w in chain.iter().rev() {
            let Some(local) = by_world.remove(w) else {
                continue;
            };
            if let Some(&first) = local.keys().next() {
                timeline.split_off(&first);
                timeline.extend(local);
            }
        }
        timeline.range(..=time).next_back().map(|(_, c)| *c)
    }

    /// The node's state at the viewpoint; `None` if absent or deleted.
    pub fn read(&self, node: NodeId, time: Timepoint, world: WorldId) -> Option<&StateChunk> {
        self.lookup(node, time, world).filter(|c| !c.is_tombstone())
    }

    fn update(
        &mut self,
        node: NodeId,
        time: Timepoint,
        world: WorldId,
        f: impl FnOnce(&mut StateChunk) -> Result<Outcome>,
    ) -> Outcome {
        if !self.known(world) {
            return Outcome::UnknownWorld;
        }
        let Some(current) = self.read(node, time, world) else {
            return Outcome::NotFound;
        };
        let mut next = current.clone();
        let outcome = match f(&mut next) {
            Ok(outcome) => outcome,
            Err(_) => return Outcome::Rejected,
        };
        if &next != current {
            self.write(node, time, world, next);
        }
        outcome
    }

    pub fn apply(&mut self, op: &Op) -> Outcome {
        match op {
            Op::Create { world, time } => {
                if !self.known(*world) {
                    return Outcome::UnknownWorld;
                }
                let node = NodeId(self.next_node);
                self.next_node += 1;
                self.write(node, *time, *world, StateChunk::new());
                Outcome::Created(node)
            }
            Op::Set {
                node,
                world,
                time,
                name,
                value,
            } => self.update(*node, *time, *world, |c| c.set_attribute(name, value.clone()).map(|_| Outcome::Done)),
            Op::Link {
                node,
                world,
                time,
                name,
                target,
            } => self.update(*node, *time, *world, |c| c.add_to_relation(name, *target).map(Outcome::Flag)),
            Op::Unlink {
                node,
                world,
                time,
                name,
                target,
            } => self.update(*node, *time, *world, |c| Ok(Outcome::Flag(c.remove_from_relation(name, *target)))),
            Op::Delete { node, world, time } => {
                if !self.known(*world) {
                    return Outcome::UnknownWorld;
                }
                if self.read(*node, *time, *world).is_none() {
                    return Outcome::Flag(false);
                }
                self.write(*node, *time, *world, StateChunk::tombstone());
                Outcome::Flag(true)
            }
            Op::Diverge { parent } => match self.diverge(*parent) {
                Some(w) => Outcome::Diverged(w),
                None => Outcome::UnknownWorld,
            },
        }
    }
}

/// Applies `op` to the engine through the public API and reports the outcome
/// in the oracle's terms. Errors that are not part of the op's contract are
/// returned as errors.
pub fn apply_to_graph(graph: &Graph, op: &Op) -> Result<Outcome> {
    let result = match op {
        Op::Create { world, time } => graph.create_node(*world, *time).map(|h| Outcome::Created(h.node)),
        Op::Set {
            node,
            world,
            time,
            name,
            value,
        } => graph
            .set_attribute(&graph.node(*node, *world, *time), name, value.clone())
            .map(|_| Outcome::Done),
        Op::Link {
            node,
            world,
            time,
            name,
            target,
        } => graph
            .add_relation(&graph.node(*node, *world, *time), name, *target)
            .map(Outcome::Flag),
        Op::Unlink {
            node,
            world,
            time,
            name,
            target,
        } => graph
            .remove_relation(&graph.node(*node, *world, *time), name, *target)
            .map(Outcome::Flag),
        Op::Delete { node, world, time } => graph.delete_node(&graph.node(*node, *world, *time)).map(Outcome::Flag),
        Op::Diverge { parent } => graph.diverge(*parent).map(Outcome::Diverged),
    };
    match result {
        Ok(outcome) => Ok(outcome),
        Err(Error::NodeNotFound { .. }) => Ok(Outcome::NotFound),
        Err(Error::UnknownWorld(_)) => Ok(Outcome::UnknownWorld),
        Err(Error::NameConflict(_) | Error::EmptyName) => Ok(Outcome::Rejected),
        Err(e) => Err(e),
    }
}
