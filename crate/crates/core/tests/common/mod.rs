#![allow(dead_code)]

use mwg_core::oracle::{apply_to_graph, Op, ReplayOracle};
use mwg_core::{AttributeValue, Graph, NodeId, StateChunk, Timepoint, WorldId};
use proptest::prelude::*;

pub const ATTRS: [&str; 3] = ["a", "b", "c"];
pub const RELS: [&str; 2] = ["r", "s"];

pub fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

/// Index-based description of an op; resolved against the current world
/// count so that most generated ops address a real world.
#[derive(Clone, Debug)]
pub struct OpSeed {
    kind: u8,
    node: u64,
    world: u64,
    time: i64,
    name: usize,
    value: i64,
}

pub fn op_seed(nodes: u64, times: i64) -> impl Strategy<Value = OpSeed> {
    (0u8..100, 1..=nodes, any::<u64>(), 0..times, 0usize..6, -3i64..3).prop_map(
        |(kind, node, world, time, name, value)| OpSeed {
            kind,
            node,
            world,
            time,
            name,
            value,
        },
    )
}

impl OpSeed {
    pub fn resolve(&self, world_count: u64, max_node: u64) -> Op {
        let world = WorldId(self.world % world_count);
        let time = Timepoint(self.time);
        let node = NodeId(self.node);
        match self.kind {
            0..=14 => Op::Create { world, time },
            15..=19 => Op::Diverge { parent: world },
            20..=54 => Op::Set {
                node,
                world,
                time,
                name: ATTRS[self.name % ATTRS.len()].to_owned(),
                value: match self.name % 3 {
                    0 => AttributeValue::Long(self.value),
                    1 => AttributeValue::Text(format!("v{}", self.value)),
                    _ => AttributeValue::Bool(self.value > 0),
                },
            },
            55..=79 => Op::Link {
                node,
                world,
                time,
                name: RELS[self.name % RELS.len()].to_owned(),
                target: NodeId(1 + self.value.unsigned_abs() % max_node.max(1)),
            },
            80..=92 => Op::Unlink {
                node,
                world,
                time,
                name: RELS[self.name % RELS.len()].to_owned(),
                target: NodeId(1 + self.value.unsigned_abs() % max_node.max(1)),
            },
            _ => Op::Delete { node, world, time },
        }
    }
}

/// Applies every op to both models, asserting identical outcomes. Returns
/// the ops as resolved.
pub fn replay(graph: &Graph, oracle: &mut ReplayOracle, seeds: &[OpSeed], max_node: u64) -> Vec<Op> {
    let mut ops = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let op = seed.resolve(oracle.world_count(), max_node);
        let expected = oracle.apply(&op);
        let actual = apply_to_graph(graph, &op).unwrap();
        assert_eq!(actual, expected, "outcome of {op:?}");
        ops.push(op);
    }
    ops
}

pub fn probe(graph: &Graph, node: u64, time: i64, world: u64) -> Option<StateChunk> {
    graph
        .resolve(NodeId(node), Timepoint(time), WorldId(world))
        .unwrap()
        .map(|c| (*c).clone())
}

/// Compares every (node, time, world) in the given ranges.
pub fn assert_all_probes_match(graph: &Graph, oracle: &ReplayOracle, nodes: u64, times: i64) {
    for w in 0..oracle.world_count() {
        for n in 1..=nodes + 1 {
            for t in -1..=times {
                let expected = oracle.read(NodeId(n), Timepoint(t), WorldId(w)).cloned();
                assert_eq!(probe(graph, n, t, w), expected, "node {n} time {t} world {w}");
            }
        }
    }
}
