//! One node, one world: insert n timepoints in order, then read them all
//! back in a random order.

use std::time::Instant;

use anyhow::Result;
use mwg_core::{AttributeValue, Graph, GraphConfig, Timepoint, WorldId};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::report::Report;

pub const SCALES: [u64; 3] = [10_000, 100_000, 1_000_000];
/// The throughput-per-log band must stay within this factor across scales.
pub const BAND: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct TemporalConfig {
    pub scales: Vec<u64>,
    /// The fastest of this many runs is reported per scale.
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            scales: SCALES.to_vec(),
            repetitions: 3,
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Measurement {
    pub n: u64,
    pub insert_per_s: f64,
    pub read_per_s: f64,
    /// Values read back unequal to the value inserted at that timepoint.
    pub mismatches: u64,
}

impl Measurement {
    /// Throughput divided by log2(n); undefined for n = 1.
    pub fn per_log(&self) -> Option<(f64, f64)> {
        (self.n > 1).then(|| {
            let log = (self.n as f64).log2();
            (self.insert_per_s / log, self.read_per_s / log)
        })
    }
}

pub fn measure(n: u64, seed: u64) -> Result<Measurement> {
    let graph = Graph::in_memory(GraphConfig::default());
    graph.connect()?;
    let h = graph.create_node(WorldId::ROOT, Timepoint(0))?;

    let start = Instant::now();
    for t in 0..n as i64 {
        graph.set_attribute(&h.travel_in_time(Timepoint(t)), "value", t)?;
    }
    let insert = start.elapsed().as_secs_f64();

    let mut order: Vec<i64> = (0..n as i64).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ n));
    let mut mismatches = 0;
    let start = Instant::now();
    for &t in &order {
        let v = graph.get_attribute(&h.travel_in_time(Timepoint(t)), "value")?;
        if v != Some(AttributeValue::Long(t)) {
            mismatches += 1;
        }
    }
    let read = start.elapsed().as_secs_f64();

    Ok(Measurement {
        n,
        insert_per_s: n as f64 / insert,
        read_per_s: n as f64 / read,
        mismatches,
    })
}

/// Best of `repetitions` runs; a single mismatch in any run is kept.
pub fn measure_best(n: u64, repetitions: usize, seed: u64) -> Result<Measurement> {
    let mut best = measure(n, seed)?;
    for _ in 1..repetitions {
        let m = measure(n, seed)?;
        best.insert_per_s = best.insert_per_s.max(m.insert_per_s);
        best.read_per_s = best.read_per_s.max(m.read_per_s);
        best.mismatches += m.mismatches;
    }
    Ok(best)
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

pub fn run(cfg: &TemporalConfig) -> Result<Report> {
    let mut report = Report::new("temporal", cfg.seed);
    let mut results = Vec::new();
    for &n in &cfg.scales {
        let m = measure_best(n, cfg.repetitions.max(1), cfg.seed)?;
        report.row(n, "", "insert_per_s", m.insert_per_s);
        report.row(n, "", "read_per_s", m.read_per_s);
        if let Some((insert, read)) = m.per_log() {
            report.row(n, "", "insert_per_s_per_log2n", insert);
            report.row(n, "", "read_per_s_per_log2n", read);
        }
        log::info!(
            "temporal n={n}: insert {:.0}/s read {:.0}/s",
            m.insert_per_s,
            m.read_per_s
        );
        results.push(m);
    }

    let mismatches: u64 = results.iter().map(|m| m.mismatches).sum();
    report.check(
        "read-back echo",
        mismatches == 0,
        format!("{mismatches} values differ from the value inserted"),
    );

    let per_log: Vec<(f64, f64)> = results.iter().filter_map(Measurement::per_log).collect();
    if per_log.len() >= 2 {
        let insert = spread(&per_log.iter().map(|p| p.0).collect::<Vec<_>>());
        let read = spread(&per_log.iter().map(|p| p.1).collect::<Vec<_>>());
        report.check(
            "insert throughput/log2(n) band",
            insert < BAND,
            format!("max/min = {insert:.2} (limit {BAND})"),
        );
        report.check(
            "read throughput/log2(n) band",
            read < BAND,
            format!("max/min = {read:.2} (limit {BAND})"),
        );
    }
    Ok(report)
}
