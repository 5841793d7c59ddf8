//! Edge-list datasets: SNAP-style text files and a synthetic generator of
//! the same shape.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

/// Node and edge counts of the Enron e-mail graph.
pub const ENRON_NODES: usize = 36_692;
pub const ENRON_EDGES: usize = 183_831;

/// A directed edge list over dense node indexes `0..nodes`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub nodes: usize,
    pub edges: Vec<(u32, u32)>,
    /// Non-comment lines that did not hold two integer ids.
    pub malformed: usize,
    pub duplicates: usize,
}

impl Dataset {
    /// Values written by a load: one per node plus one per edge.
    pub fn values(&self) -> usize {
        self.nodes + self.edges.len()
    }

    /// Targets of each node in edge order.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for &(s, d) in &self.edges {
            adj[s as usize].push(d);
        }
        adj
    }
}

/// Parses a whitespace-separated edge list. Lines starting with `#` are
/// comments; ids are remapped densely in order of first appearance and
/// repeated edges are dropped.
pub fn parse_edge_list(input: impl BufRead) -> Result<Dataset> {
    let mut ids: FxHashMap<u64, u32> = FxHashMap::default();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let mut ds = Dataset::default();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace().map(str::parse::<u64>);
        let (Some(Ok(src)), Some(Ok(dst))) = (fields.next(), fields.next()) else {
            ds.malformed += 1;
            continue;
        };
        let mut dense = |id: u64| {
            let next = ids.len() as u32;
            *ids.entry(id).or_insert(next)
        };
        let edge = (dense(src), dense(dst));
        if seen.insert(edge) {
            ds.edges.push(edge);
        } else {
            ds.duplicates += 1;
        }
    }
    ds.nodes = ids.len();
    if ds.edges.is_empty() {
        bail!("edge list holds no edges ({} malformed lines)", ds.malformed);
    }
    Ok(ds)
}

pub fn load_edge_list(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_edge_list(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// A seeded scale-free graph with exactly `nodes` nodes and `edges`
/// distinct directed edges, no self loops. Node i links to an earlier node
/// first so every node appears; the rest pick endpoints preferentially.
pub fn synthetic(nodes: usize, edges: usize, seed: u64) -> Dataset {
    assert!(nodes >= 2, "need at least two nodes");
    assert!(edges >= nodes - 1, "too few edges to connect every node");
    assert!((edges as u128) <= (nodes as u128) * (nodes as u128 - 1), "too many edges");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(edges);
    let mut list: Vec<(u32, u32)> = Vec::with_capacity(edges);
    for i in 1..nodes as u32 {
        let j = rng.gen_range(0..i);
        let edge = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
        seen.insert(edge);
        list.push(edge);
    }
    let endpoint = |rng: &mut ChaCha8Rng, list: &[(u32, u32)]| {
        if rng.gen_bool(0.5) {
            let (s, d) = list[rng.gen_range(0..list.len())];
            if rng.gen_bool(0.5) {
                s
            } else {
                d
            }
        } else {
            rng.gen_range(0..nodes as u32)
        }
    };
    while list.len() < edges {
        let s = endpoint(&mut rng, &list);
        let d = endpoint(&mut rng, &list);
        if s != d && seen.insert((s, d)) {
            list.push((s, d));
        }
    }
    // The loader numbers nodes by first appearance; renumber so that the
    // in-memory dataset matches what reading it back would produce.
    let mut order: FxHashMap<u32, u32> = FxHashMap::default();
    for (s, d) in list.iter_mut() {
        for v in [s, d] {
            let next = order.len() as u32;
            *v = *order.entry(*v).or_insert(next);
        }
    }
    Dataset {
        nodes,
        edges: list,
        malformed: 0,
        duplicates: 0,
    }
}

/// The synthetic stand-in for the Enron graph.
pub fn enron_like(seed: u64) -> Dataset {
    synthetic(ENRON_NODES, ENRON_EDGES, seed)
}

pub fn write_edge_list(path: &Path, ds: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(out, "# Directed graph")?;
    writeln!(out, "# Nodes: {} Edges: {}", ds.nodes, ds.edges.len())?;
    writeln!(out, "# FromNodeId\tToNodeId")?;
    for (s, d) in &ds.edges {
        writeln!(out, "{s}\t{d}")?;
    }
    out.flush()?;
    Ok(())
}
