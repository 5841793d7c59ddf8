//! Bulk loading of an edge list under two commit policies: one save after
//! the whole load (multiple insertions per write, MIW) or a save after every
//! insertion (single insertion per write, SIW).

use std::sync::Arc;
use std::thread;
use std::time::Instant;

use anyhow::Result;
use mwg_core::storage::MemoryBackend;
use mwg_core::{Graph, GraphConfig, NodeHandle, Timepoint, WorldId};

use crate::dataset::Dataset;
use crate::report::Report;

pub const EDGE: &str = "edge";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Miw,
    Siw,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Miw => "miw",
            Policy::Siw => "siw",
        }
    }
}

/// Result of one load.
pub struct Loaded {
    pub graph: Graph,
    pub handles: Vec<NodeHandle>,
    pub seconds: f64,
}

/// Loads `ds` into a fresh graph: every node is created at the root world
/// and time 0, then every edge is added to the source's `edge` relation.
/// `writers` > 1 spreads the edges over threads by source node (MIW only).
pub fn load(graph: Graph, ds: &Dataset, policy: Policy, writers: usize) -> Result<Loaded> {
    let start = Instant::now();
    let mut handles = Vec::with_capacity(ds.nodes);
    for _ in 0..ds.nodes {
        handles.push(graph.create_node(WorldId::ROOT, Timepoint(0))?);
        if policy == Policy::Siw {
            graph.save()?;
        }
    }
    if writers <= 1 || policy == Policy::Siw {
        for &(s, d) in &ds.edges {
            graph.add_relation(&handles[s as usize], EDGE, handles[d as usize].node)?;
            if policy == Policy::Siw {
                graph.save()?;
            }
        }
    } else {
        thread::scope(|scope| -> Result<()> {
            let workers: Vec<_> = (0..writers)
                .map(|k| {
                    let (graph, handles) = (&graph, &handles);
                    scope.spawn(move || -> Result<()> {
                        for &(s, d) in ds.edges.iter().filter(|(s, _)| *s as usize % writers == k) {
                            graph.add_relation(&handles[s as usize], EDGE, handles[d as usize].node)?;
                        }
                        Ok(())
                    })
                })
                .collect();
            for w in workers {
                w.join().expect("writer thread panicked")?;
            }
            Ok(())
        })?;
    }
    if policy == Policy::Miw {
        graph.save()?;
    }
    Ok(Loaded {
        graph,
        handles,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Number of edges that `get_relation` returns exactly as loaded, per
/// source node in insertion order.
pub fn verify_edges(loaded: &Loaded, ds: &Dataset) -> Result<usize> {
    let mut found = 0;
    for (node, targets) in ds.adjacency().iter().enumerate() {
        let related = loaded.graph.get_relation(&loaded.handles[node], EDGE)?;
        let expected: Vec<_> = targets.iter().map(|&d| loaded.handles[d as usize].node).collect();
        if related.unresolved.is_empty() && related.ids() == expected {
            found += targets.len();
        }
    }
    Ok(found)
}

fn fresh_graph() -> Result<Graph> {
    Ok(Graph::open(Arc::new(MemoryBackend::new()), GraphConfig::uncached())?)
}

/// Runs one policy and reports throughput in values per second plus the
/// edge retrieval check.
pub fn run(ds: &Dataset, policy: Policy, writers: usize, seed: u64) -> Result<(Report, f64)> {
    let mut report = Report::new(policy.name(), seed);
    let loaded = load(fresh_graph()?, ds, policy, writers)?;
    let throughput = ds.values() as f64 / loaded.seconds;
    report.row(ds.nodes, ds.edges.len(), "values_per_s", throughput);
    report.row(ds.nodes, ds.edges.len(), "seconds", loaded.seconds);
    let found = verify_edges(&loaded, ds)?;
    report.check(
        &format!("{} edges retrievable", policy.name()),
        found == ds.edges.len(),
        format!("{found}/{} edges returned by get_relation", ds.edges.len()),
    );
    Ok((report, throughput))
}

/// Runs both policies and checks that saving per insertion is not faster.
pub fn run_both(ds: &Dataset, writers: usize, seed: u64) -> Result<Report> {
    let (mut report, miw) = run(ds, Policy::Miw, writers, seed)?;
    let (siw_report, siw) = run(ds, Policy::Siw, 1, seed)?;
    report.merge(siw_report);
    report.check(
        "siw not faster than miw",
        siw <= miw,
        format!("siw {siw:.0} values/s, miw {miw:.0} values/s"),
    );
    Ok(report)
}
