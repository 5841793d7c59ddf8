//! Node-scale worlds: one node with a root timeline, forked through a chain
//! of nested worlds at divergence time s, then written in the deepest world
//! from s on.
//!
//! R0 and R1 read the root at t1 < s and t2 > s; R2 and R3 read the deepest
//! world at the same times. R2 walks the whole chain back to the root, R3 is
//! answered locally.

use std::time::Instant;

use anyhow::{ensure, Result};
use mwg_core::{Graph, GraphConfig, NodeHandle, NodeId, StateChunk, Timepoint, WorldId};

use crate::report::{mean, Report};

#[derive(Clone, Debug)]
pub struct WorldsConfig {
    /// Nested forks between the root and the written world.
    pub worlds: usize,
    /// Divergence time; the root timeline spans `0..2s`.
    pub divergence: i64,
    pub t1: i64,
    pub t2: i64,
    pub repetitions: usize,
    /// Reads per measured batch.
    pub batch: usize,
    pub seed: u64,
}

impl Default for WorldsConfig {
    fn default() -> Self {
        WorldsConfig {
            worlds: 100,
            divergence: 10_000,
            t1: 5_000,
            t2: 15_000,
            repetitions: 100,
            batch: 1_000,
            seed: 1,
        }
    }
}

const VALUE: &str = "value";

fn chunk_bytes(graph: &Graph, node: NodeId, t: i64, w: WorldId) -> Result<Option<Vec<u8>>> {
    Ok(match graph.resolve(node, Timepoint(t), w)? {
        Some(c) => Some(c.encode()?),
        None => None,
    })
}

/// Root probes compared before and after the fork: the two read times, the
/// edges of the timeline and a regular grid across it.
fn root_probe_times(cfg: &WorldsConfig) -> Vec<i64> {
    let end = 2 * cfg.divergence;
    let step = (end / 200).max(1);
    let mut times: Vec<i64> = (-1..=end).step_by(step as usize).collect();
    times.extend([cfg.t1, cfg.t2, cfg.divergence - 1, cfg.divergence, end - 1, end]);
    times
}

fn time_batch(graph: &Graph, h: &NodeHandle, batch: usize) -> Result<f64> {
    let start = Instant::now();
    for _ in 0..batch {
        std::hint::black_box(graph.read(h)?);
    }
    Ok(start.elapsed().as_secs_f64() * 1e9 / batch as f64)
}

pub fn run(cfg: &WorldsConfig) -> Result<Report> {
    ensure!(cfg.t1 < cfg.divergence && cfg.divergence < cfg.t2, "need t1 < s < t2");
    ensure!(cfg.repetitions > 0 && cfg.batch > 0, "need at least one measured read");
    ensure!(cfg.t2 < 2 * cfg.divergence, "t2 must fall inside the timeline");
    let mut report = Report::new("worlds", cfg.seed);
    let m = cfg.worlds;
    let graph = Graph::in_memory(GraphConfig::default());
    graph.connect()?;
    let root = graph.create_node(WorldId::ROOT, Timepoint(0))?;
    let node = root.node;

    let start = Instant::now();
    for t in 0..2 * cfg.divergence {
        graph.set_attribute(&root.travel_in_time(Timepoint(t)), VALUE, t)?;
    }
    let root_rate = (2 * cfg.divergence) as f64 / start.elapsed().as_secs_f64();
    report.row(m, "", "insert_w0_per_s", root_rate);

    let times = root_probe_times(cfg);
    let before: Vec<_> = times
        .iter()
        .map(|&t| chunk_bytes(&graph, node, t, WorldId::ROOT))
        .collect::<Result<_>>()?;

    let mut world = WorldId::ROOT;
    for _ in 0..m {
        world = graph.diverge(world)?;
    }
    // Without forks there is no world to write into; the root stays as is.
    if m > 0 {
        let start = Instant::now();
        for t in cfg.divergence..2 * cfg.divergence {
            graph.set_attribute(&graph.node(node, world, Timepoint(t)), VALUE, -t)?;
        }
        let child_rate = cfg.divergence as f64 / start.elapsed().as_secs_f64();
        report.row(m, "", "insert_wm_per_s", child_rate);
    }

    let after: Vec<_> = times
        .iter()
        .map(|&t| chunk_bytes(&graph, node, t, WorldId::ROOT))
        .collect::<Result<_>>()?;
    let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
    report.check(
        "root isolation",
        changed == 0,
        format!("{changed} of {} root probes changed after the fork", times.len()),
    );

    let value_at = |t: i64, w: WorldId| -> Result<Option<StateChunk>> {
        Ok(graph.resolve(node, Timepoint(t), w)?.map(|c| (*c).clone()))
    };
    let shared = value_at(cfg.t1, world)? == value_at(cfg.t1, WorldId::ROOT)?;
    report.check(
        "shared past",
        shared,
        format!("world {} at t1={} reads the root state: {shared}", world.0, cfg.t1),
    );
    let expected_local = if m == 0 { cfg.t2 } else { -cfg.t2 };
    let local = graph.get_attribute(&graph.node(node, world, Timepoint(cfg.t2)), VALUE)?;
    report.check(
        "local future",
        local == Some(expected_local.into()),
        format!("world {} at t2={} reads {local:?}", world.0, cfg.t2),
    );
    let (_, trace) = graph.resolve_traced(node, Timepoint(cfg.t1), world)?;
    report.row(m, "", "r2_hops", trace.hops as f64);

    let handles = [
        graph.node(node, WorldId::ROOT, Timepoint(cfg.t1)),
        graph.node(node, WorldId::ROOT, Timepoint(cfg.t2)),
        graph.node(node, world, Timepoint(cfg.t1)),
        graph.node(node, world, Timepoint(cfg.t2)),
    ];
    let mut samples: [Vec<f64>; 4] = Default::default();
    for rep in 0..cfg.repetitions {
        // Rotate the order so drift does not favour one read.
        for k in 0..4 {
            let i = (rep + k) % 4;
            samples[i].push(time_batch(&graph, &handles[i], cfg.batch)?);
        }
    }
    let means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    for (i, ns) in means.iter().enumerate() {
        report.row(m, "", &format!("r{i}_ns"), *ns);
        report.row(m, "", &format!("r{i}_per_s"), 1e9 / ns);
    }
    // Without forks R2 and R3 are both root reads and differ only by noise.
    if m > 0 {
        report.check(
            "post-divergence reads not slower",
            means[3] <= means[2],
            format!("mean R3 {:.1} ns vs mean R2 {:.1} ns", means[3], means[2]),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(m: usize) -> WorldsConfig {
        WorldsConfig {
            worlds: m,
            divergence: 1_000,
            t1: 500,
            t2: 1_500,
            repetitions: 5,
            batch: 100,
            seed: 0,
        }
    }

    #[test]
    fn without_forks_reads_stay_on_the_root() {
        let report = run(&small(0)).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
        assert_eq!(report.values("r2_hops"), vec![0.0]);
        assert!(report.check_named("post-divergence reads not slower").is_none());
    }

    #[test]
    fn nested_worlds_share_the_past_and_isolate_the_root() {
        let report = run(&small(10)).unwrap();
        for name in ["root isolation", "shared past", "local future"] {
            assert!(report.check_named(name).unwrap().passed, "{:?}", report.checks);
        }
        assert_eq!(report.values("r2_hops"), vec![10.0]);
    }

    #[test]
    fn misplaced_read_times_are_rejected() {
        assert!(run(&WorldsConfig { t1: 2_000, ..small(1) }).is_err());
    }
}
