//! Differential check of the engine against the replay oracle: a seeded
//! random op log is applied to both, then random probes are compared. A
//! failing log is shrunk to the shortest failing prefix by halving.

use std::fmt;

use anyhow::Result;
use mwg_core::oracle::{apply_to_graph, Op, Outcome, ReplayOracle};
use mwg_core::{AttributeValue, Error, Graph, GraphConfig, NodeId, StateChunk, Timepoint, WorldId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::Report;

const ATTRIBUTES: [&str; 4] = ["a", "b", "c", "d"];
const RELATIONS: [&str; 2] = ["r", "s"];

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub nodes: u64,
    pub timepoints: i64,
    pub worlds: u64,
    pub ops: usize,
    pub probes: usize,
    pub seed: u64,
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            nodes: 200,
            timepoints: 50,
            worlds: 20,
            ops: 5_000,
            probes: 10_000,
            seed: 1,
            inject_fault: false,
        }
    }
}

/// A seeded op log over at most `nodes` nodes and `worlds` worlds. Every op
/// addresses a world that exists when it runs; nodes may still be absent at
/// the viewpoint, which exercises the not-found paths.
pub fn generate_ops(cfg: &VerifyConfig) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ops = Vec::with_capacity(cfg.ops);
    let (mut created, mut worlds) = (0u64, 1u64);
    for _ in 0..cfg.ops {
        let world = WorldId(rng.gen_range(0..worlds));
        let time = Timepoint(rng.gen_range(0..cfg.timepoints));
        let roll = rng.gen_range(0..100);
        let op = if created < cfg.nodes && (created == 0 || roll < 10) {
            created += 1;
            // Mostly early root creations, so that later ops and probes in
            // every world find the node.
            if rng.gen_bool(0.75) {
                Op::Create {
                    world: WorldId::ROOT,
                    time: Timepoint(rng.gen_range(0..=cfg.timepoints / 10)),
                }
            } else {
                Op::Create { world, time }
            }
        } else if worlds < cfg.worlds && roll < 12 {
            worlds += 1;
            Op::Diverge { parent: world }
        } else if created == 0 {
            continue;
        } else {
            let node = NodeId(rng.gen_range(1..=created));
            let target = NodeId(rng.gen_range(1..=created));
            match roll {
                0..=54 => {
                    let name = ATTRIBUTES[rng.gen_range(0..ATTRIBUTES.len())];
                    let value = match rng.gen_range(0..4) {
                        0 => AttributeValue::Long(rng.gen_range(-3..3)),
                        1 => AttributeValue::Text(format!("v{}", rng.gen_range(0..3))),
                        2 => AttributeValue::Bool(rng.gen()),
                        _ => AttributeValue::Double(rng.gen_range(0..3) as f64 / 2.0),
                    };
                    Op::Set {
                        node,
                        world,
                        time,
                        name: name.to_owned(),
                        value,
                    }
                }
                55..=79 => Op::Link {
                    node,
                    world,
                    time,
                    name: RELATIONS[rng.gen_range(0..RELATIONS.len())].to_owned(),
                    target,
                },
                80..=95 => Op::Unlink {
                    node,
                    world,
                    time,
                    name: RELATIONS[rng.gen_range(0..RELATIONS.len())].to_owned(),
                    target,
                },
                _ => Op::Delete { node, world, time },
            }
        };
        ops.push(op);
    }
    ops
}

/// Random (node, time, world) probes; include a never-created node and
/// times outside the written range.
pub fn generate_probes(cfg: &VerifyConfig) -> Vec<(NodeId, Timepoint, WorldId)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    (0..cfg.probes)
        .map(|_| {
            (
                NodeId(rng.gen_range(1..=cfg.nodes + 1)),
                Timepoint(rng.gen_range(-1..=cfg.timepoints)),
                WorldId(rng.gen_range(0..cfg.worlds)),
            )
        })
        .collect()
}

/// The first disagreement found.
#[derive(Clone, Debug, PartialEq)]
pub enum Mismatch {
    Outcome {
        index: usize,
        op: Op,
        expected: Outcome,
        actual: String,
    },
    Probe {
        node: NodeId,
        time: Timepoint,
        world: WorldId,
        expected: Option<StateChunk>,
        actual: String,
    },
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mismatch::Outcome {
                index,
                op,
                expected,
                actual,
            } => write!(f, "op #{index} {op:?}: oracle {expected:?}, engine {actual}"),
            Mismatch::Probe {
                node,
                time,
                world,
                expected,
                actual,
            } => write!(
                f,
                "probe node {} time {} world {}: oracle {expected:?}, engine {actual}",
                node.0, time.0, world.0
            ),
        }
    }
}

fn graph_for(cfg: &VerifyConfig) -> Result<Graph> {
    let graph = Graph::in_memory(GraphConfig {
        inject_floor_fault: cfg.inject_fault,
        ..GraphConfig::default()
    });
    graph.connect()?;
    Ok(graph)
}

/// How much of a run did real work.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    /// Ops that changed state: creates, diverges, sets and flags that
    /// report a change.
    pub effective_ops: usize,
    /// Probes that found a live node.
    pub present_probes: usize,
}

/// Applies `ops` to a fresh engine and oracle and returns the first
/// disagreement, if any.
pub fn check(cfg: &VerifyConfig, ops: &[Op], probes: &[(NodeId, Timepoint, WorldId)]) -> Result<Option<Mismatch>> {
    check_tally(cfg, ops, probes, &mut Tally::default())
}

pub fn check_tally(
    cfg: &VerifyConfig,
    ops: &[Op],
    probes: &[(NodeId, Timepoint, WorldId)],
    tally: &mut Tally,
) -> Result<Option<Mismatch>> {
    let graph = graph_for(cfg)?;
    let mut oracle = ReplayOracle::new();
    for (index, op) in ops.iter().enumerate() {
        let expected = oracle.apply(op);
        if matches!(
            expected,
            Outcome::Created(_) | Outcome::Diverged(_) | Outcome::Done | Outcome::Flag(true)
        ) {
            tally.effective_ops += 1;
        }
        let actual = apply_to_graph(&graph, op);
        if !matches!(actual, Ok(a) if a == expected) {
            return Ok(Some(Mismatch::Outcome {
                index,
                op: op.clone(),
                expected,
                actual: format!("{actual:?}"),
            }));
        }
    }
    for &(node, time, world) in probes {
        let expected = oracle.read(node, time, world);
        tally.present_probes += usize::from(expected.is_some());
        let actual = match graph.resolve(node, time, world) {
            Err(Error::UnknownWorld(_)) => Ok(None),
            other => other,
        };
        let agree = match &actual {
            Ok(chunk) => chunk.as_deref() == expected,
            Err(_) => false,
        };
        if !agree {
            return Ok(Some(Mismatch::Probe {
                node,
                time,
                world,
                expected: expected.cloned(),
                actual: format!("{actual:?}"),
            }));
        }
    }
    Ok(None)
}

/// Shortest failing prefix of `ops`, found by repeatedly halving the gap
/// between a passing and a failing length. `ops` itself must fail.
pub fn shrink(
    cfg: &VerifyConfig,
    ops: &[Op],
    probes: &[(NodeId, Timepoint, WorldId)],
) -> Result<(usize, Mismatch)> {
    if let Some(m) = check(cfg, &[], probes)? {
        return Ok((0, m));
    }
    let (mut pass, mut fail) = (0usize, ops.len());
    let mut failing = None;
    while fail - pass > 1 {
        let mid = pass + (fail - pass) / 2;
        match check(cfg, &ops[..mid], probes)? {
            Some(m) => {
                fail = mid;
                failing = Some(m);
            }
            None => pass = mid,
        }
    }
    let failing = match failing {
        Some(m) => m,
        None => check(cfg, ops, probes)?.expect("shrink needs a failing log"),
    };
    Ok((fail, failing))
}

/// Outcome of one verification run.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub ops: usize,
    pub probes: usize,
    pub tally: Tally,
    /// Shortest failing prefix length and its first disagreement.
    pub counterexample: Option<(usize, Mismatch)>,
}

pub fn verify(cfg: &VerifyConfig) -> Result<Verdict> {
    let ops = generate_ops(cfg);
    let probes = generate_probes(cfg);
    let mut tally = Tally::default();
    let counterexample = match check_tally(cfg, &ops, &probes, &mut tally)? {
        None => None,
        Some(_) => Some(shrink(cfg, &ops, &probes)?),
    };
    Ok(Verdict {
        ops: ops.len(),
        probes: probes.len(),
        tally,
        counterexample,
    })
}

pub fn run(cfg: &VerifyConfig) -> Result<Report> {
    let mut report = Report::new("verify", cfg.seed);
    let verdict = verify(cfg)?;
    report.row(cfg.ops, cfg.probes, "ops", verdict.ops as f64);
    report.row(cfg.ops, cfg.probes, "probes", verdict.probes as f64);
    report.row(cfg.ops, cfg.probes, "effective_ops", verdict.tally.effective_ops as f64);
    report.row(cfg.ops, cfg.probes, "present_probes", verdict.tally.present_probes as f64);
    let detail = match &verdict.counterexample {
        None => format!(
            "{} ops and {} probes agree ({} ops changed state, {} probes found a live node)",
            verdict.ops, verdict.probes, verdict.tally.effective_ops, verdict.tally.present_probes
        ),
        Some((prefix, m)) => format!("shortest failing prefix {prefix} ops; {m}"),
    };
    report.check("engine matches oracle", verdict.counterexample.is_none(), detail);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_log_is_deterministic_and_bounded() {
        let cfg = VerifyConfig {
            ops: 2_000,
            ..VerifyConfig::default()
        };
        let ops = generate_ops(&cfg);
        assert_eq!(ops, generate_ops(&cfg));
        assert_ne!(ops, generate_ops(&VerifyConfig { seed: 2, ..cfg.clone() }));
        let creates = ops.iter().filter(|o| matches!(o, Op::Create { .. })).count() as u64;
        let diverges = ops.iter().filter(|o| matches!(o, Op::Diverge { .. })).count() as u64;
        assert!(creates <= cfg.nodes && diverges < cfg.worlds);
        assert!(diverges > 0);
    }

    #[test]
    fn empty_log_verifies() {
        let report = run(&VerifyConfig {
            ops: 0,
            ..VerifyConfig::default()
        })
        .unwrap();
        assert!(report.passed());
    }

    #[test]
    fn injected_fault_is_caught_with_a_minimal_prefix() {
        let cfg = VerifyConfig {
            ops: 2_000,
            probes: 2_000,
            seed: 11,
            inject_fault: true,
            ..VerifyConfig::default()
        };
        let (prefix, _) = verify(&cfg).unwrap().counterexample.expect("fault went unnoticed");
        let (ops, probes) = (generate_ops(&cfg), generate_probes(&cfg));
        assert!(check(&cfg, &ops[..prefix], &probes).unwrap().is_some());
        assert!(check(&cfg, &ops[..prefix - 1], &probes).unwrap().is_none());
        let healthy = VerifyConfig {
            inject_fault: false,
            ..cfg
        };
        assert!(check(&healthy, &ops, &probes).unwrap().is_none());
    }

    #[test]
    fn identical_seeds_store_identical_chunks() {
        use mwg_core::storage::{Backend, MemoryBackend};
        use std::sync::Arc;

        let cfg = VerifyConfig {
            ops: 1_500,
            seed: 21,
            ..VerifyConfig::default()
        };
        assert_eq!(generate_probes(&cfg), generate_probes(&cfg));
        let stored = || {
            let backend = Arc::new(MemoryBackend::new());
            let g = Graph::open(backend.clone(), GraphConfig::default()).unwrap();
            let outcomes: Vec<_> = generate_ops(&cfg).iter().map(|op| apply_to_graph(&g, op).unwrap()).collect();
            g.save().unwrap();
            (outcomes, backend.scan().unwrap())
        };
        assert_eq!(stored(), stored());
    }
}
