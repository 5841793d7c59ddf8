//! Deep what-if simulation: every generation forks the previous world and
//! modifies a random 3% of the nodes. The whole graph is read before any
//! modification from the newest world at regular generation intervals.

use std::time::Instant;

use anyhow::{ensure, Result};
use mwg_core::oracle::{Op, ReplayOracle};
use mwg_core::{Graph, GraphConfig, Timepoint, WorldId};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{check_fraction, Scale};
use crate::report::{linear_fit, Report};

pub const MIN_R2: f64 = 0.8;

#[derive(Clone, Debug)]
pub struct WhatIfConfig {
    pub nodes: usize,
    /// Root timeline length per node; mutations happen right after it.
    pub timepoints: i64,
    pub generations: usize,
    pub mutation: f64,
    /// Measure a whole-graph read every this many generations.
    pub every: usize,
    pub repetitions: usize,
    /// Nodes mirrored into the oracle.
    pub oracle_nodes: usize,
    pub seed: u64,
}

impl WhatIfConfig {
    pub fn new(scale: Scale, seed: u64) -> Self {
        match scale {
            Scale::Desk => WhatIfConfig {
                nodes: 1_000,
                timepoints: 10,
                generations: 2_000,
                mutation: 0.03,
                every: 100,
                repetitions: 5,
                oracle_nodes: 10,
                seed,
            },
            Scale::Full => WhatIfConfig {
                nodes: 2_000,
                timepoints: 10_000,
                generations: 120_000,
                mutation: 0.03,
                every: 1_000,
                repetitions: 100,
                oracle_nodes: 10,
                seed,
            },
        }
    }

    /// Nodes modified per generation.
    pub fn per_generation(&self) -> usize {
        (self.mutation * self.nodes as f64).ceil() as usize
    }
}

pub fn run(cfg: &WhatIfConfig) -> Result<Report> {
    check_fraction(cfg.mutation)?;
    ensure!(cfg.nodes > 0 && cfg.every > 0 && cfg.repetitions > 0, "empty configuration");
    let mut report = Report::new("whatif", cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.per_generation();
    let past = cfg.timepoints / 2;
    let present = Timepoint(cfg.timepoints);

    let graph = Graph::in_memory(GraphConfig::default());
    graph.connect()?;
    let mut oracle = ReplayOracle::new();
    let mirrored = cfg.oracle_nodes.min(cfg.nodes);
    let mut ids = Vec::with_capacity(cfg.nodes);
    for i in 0..cfg.nodes {
        let h = graph.create_node(WorldId::ROOT, Timepoint(0))?;
        oracle.apply(&Op::Create {
            world: WorldId::ROOT,
            time: Timepoint(0),
        });
        for t in 0..cfg.timepoints {
            let v: i64 = rng.gen_range(0..1_000);
            graph.set_attribute(&h.travel_in_time(Timepoint(t)), "value", v)?;
            if i < mirrored {
                oracle.apply(&Op::Set {
                    node: h.node,
                    world: WorldId::ROOT,
                    time: Timepoint(t),
                    name: "value".into(),
                    value: v.into(),
                });
            }
        }
        ids.push(h.node);
    }

    let mut world = WorldId::ROOT;
    let mut wrong_counts = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let start = Instant::now();
    for gen in 1..=cfg.generations {
        let parent = world;
        world = graph.diverge(parent)?;
        oracle.apply(&Op::Diverge { parent });
        let before = graph.stats().state_writes;
        for i in sample(&mut rng, cfg.nodes, k) {
            graph.set_attribute(&graph.node(ids[i], world, present), "gen", gen as i64)?;
            if i < mirrored {
                oracle.apply(&Op::Set {
                    node: ids[i],
                    world,
                    time: present,
                    name: "gen".into(),
                    value: (gen as i64).into(),
                });
            }
        }
        let writes = graph.stats().state_writes - before;
        if writes != k as u64 && wrong_counts.len() < 10 {
            wrong_counts.push(format!("generation {gen}: {writes}"));
        }

        if gen % cfg.every == 0 {
            let t0 = Instant::now();
            for _ in 0..cfg.repetitions {
                for &node in &ids {
                    std::hint::black_box(graph.resolve(node, Timepoint(past), world)?);
                }
            }
            let ns = t0.elapsed().as_secs_f64() * 1e9 / (cfg.repetitions * cfg.nodes) as f64;
            report.row(gen, "", "read_ns", ns);
            xs.push(gen as f64);
            ys.push(ns);
        }
    }
    report.row(cfg.generations, "", "seconds", start.elapsed().as_secs_f64());

    report.check(
        "chunk writes per generation",
        wrong_counts.is_empty(),
        if wrong_counts.is_empty() {
            format!("{k} state chunks written in each of {} generations", cfg.generations)
        } else {
            format!("expected {k}; {}", wrong_counts.join(", "))
        },
    );
    if xs.len() >= 3 {
        let (slope, _, r2) = linear_fit(&xs, &ys);
        report.row(cfg.generations, "", "fit_slope_ns_per_gen", slope);
        report.row(cfg.generations, "", "fit_r2", r2);
        report.check(
            "linear read latency",
            r2 >= MIN_R2,
            format!("R² = {r2:.3} over {} points (limit {MIN_R2})", xs.len()),
        );
    }

    let mut mismatches = 0;
    let mut probes = 0;
    let worlds = [WorldId::ROOT, WorldId(world.0 / 2), world];
    for node in ids.iter().take(mirrored).copied() {
        for w in worlds {
            for t in [-1, 0, past, cfg.timepoints - 1, cfg.timepoints, cfg.timepoints + 1] {
                probes += 1;
                if graph.resolve(node, Timepoint(t), w)?.as_deref() != oracle.read(node, Timepoint(t), w) {
                    mismatches += 1;
                }
            }
        }
    }
    report.check(
        "sampled reads match oracle",
        mismatches == 0,
        format!("{mismatches} of {probes} probes differ"),
    );
    Ok(report)
}
