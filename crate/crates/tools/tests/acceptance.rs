//! Acceptance criteria. Each test prints one `criterion N ...: PASS|FAIL`
//! line and then asserts it. Tests hold a shared lock so timing-sensitive
//! criteria never run concurrently.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use mwg_tools::config::Scale;
use mwg_tools::stair::{self, StairConfig};
use mwg_tools::temporal::{self, TemporalConfig};
use mwg_tools::verify::{self, VerifyConfig};
use mwg_tools::whatif::{self, WhatIfConfig};
use mwg_tools::worlds::{self, WorldsConfig};
use mwg_tools::Report;
use mwg_core::oracle::apply_to_graph;
use mwg_core::storage::{Backend, Chunk, LogBackend, LogOptions, MemoryBackend};
use mwg_core::{
    AttributeValue, ChunkKey, ChunkKind, GlobalWorldMap, Graph, GraphConfig, LocalWorldMap, NodeId, StateChunk,
    TimeTree, Timepoint, WorldId,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

/// Prints the verdict line outside the test harness's capture, then asserts.
fn verdict(n: u32, title: &str, passed: bool, detail: &str, elapsed: Duration, limit: Duration) {
    let in_time = elapsed < limit;
    let ok = passed && in_time;
    let line = format!(
        "criterion {n} ({title}): {} | {detail} | {:.1}s of {}s allowed",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(ok, "{line}");
}

fn checks_detail(report: &Report) -> String {
    report
        .checks
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn state_chunks(backend: &dyn Backend) -> usize {
    backend
        .scan()
        .unwrap()
        .iter()
        .filter(|(k, _)| ChunkKey::decode(k).unwrap().kind == ChunkKind::State)
        .count()
}

#[test]
fn criterion_1_chunk_economy() {
    let _guard = lock();
    let start = Instant::now();
    let backend = Arc::new(MemoryBackend::new());
    let g = Graph::open(backend.clone(), GraphConfig::default()).unwrap();
    let m = WorldId::ROOT;
    let t = |i: i64| Timepoint(i);

    let eve = g.create_node(m, t(0)).unwrap();
    g.set_attribute(&eve, "name", "Eve").unwrap();
    let bob = g.create_node(m, t(0)).unwrap();
    g.set_attribute(&bob, "name", "Bob").unwrap();
    let video = g.create_node(m, t(0)).unwrap();
    g.set_attribute(&video, "title", "Bob's video").unwrap();
    g.add_relation(&eve, "friend", bob.node).unwrap();
    g.add_relation(&bob, "friend", eve.node).unwrap();
    g.add_relation(&bob, "videos", video.node).unwrap();
    g.save().unwrap();
    let after_first = state_chunks(backend.as_ref());

    g.add_relation(&eve.travel_in_time(t(1)), "watched", video.node).unwrap();
    g.save().unwrap();
    let after_second = state_chunks(backend.as_ref());

    let n = g.diverge(m).unwrap();
    let alice = g.create_node(n, t(2)).unwrap();
    g.set_attribute(&alice, "name", "Alice").unwrap();
    g.add_relation(&alice, "friendRequest", bob.node).unwrap();
    g.save().unwrap();
    let total = state_chunks(backend.as_ref());

    // The conceptual graph: every node alive at each (world, time) of the
    // example, with its outgoing relationships.
    let ids = [eve.node, bob.node, video.node, alice.node];
    let (mut nodes, mut relations) = (0, 0);
    for (w, time) in [(m, 0), (m, 1), (m, 2), (n, 2)] {
        for &id in &ids {
            if let Some(c) = g.resolve(id, t(time), w).unwrap() {
                nodes += 1;
                relations += c.relations().map(|(_, targets)| targets.len()).sum::<usize>();
            }
        }
    }

    let passed = (after_first, after_second, total, nodes, relations) == (3, 4, 5, 13, 16);
    verdict(
        1,
        "chunk economy",
        passed,
        &format!(
            "{total} state chunks (3 then 4 then 5 expected, got {after_first}/{after_second}/{total}) \
             for {nodes} conceptual nodes and {relations} relationships"
        ),
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_2_oracle_equivalence() {
    let _guard = lock();
    let start = Instant::now();
    let mut failures = Vec::new();
    let (mut ops, mut probes, mut effective, mut present) = (0, 0, 0, 0);
    for seed in 1..=20 {
        let cfg = VerifyConfig {
            seed,
            ..VerifyConfig::default()
        };
        let v = verify::verify(&cfg).unwrap();
        ops += v.ops;
        probes += v.probes;
        effective += v.tally.effective_ops;
        present += v.tally.present_probes;
        if let Some((prefix, m)) = v.counterexample {
            failures.push(format!("seed {seed}: prefix {prefix}: {m}"));
        }
    }
    // Guard against a vacuous pass: most ops must change state and most
    // probes must hit a live node.
    let meaningful = effective * 2 > ops && present * 2 > probes;
    verdict(
        2,
        "oracle equivalence",
        failures.is_empty() && meaningful,
        &if failures.is_empty() {
            format!(
                "20 seeds, {ops} ops, {probes} probes, 100% agreement \
                 ({effective} ops changed state, {present} probes hit live nodes)"
            )
        } else {
            failures.join("; ")
        },
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_3_temporal_trend() {
    let _guard = lock();
    let start = Instant::now();
    let report = temporal::run(&TemporalConfig::default()).unwrap();
    // Throughput times log2(n) is flat exactly when the cost per operation
    // grows like log n; reported for comparison with the required band.
    let flat: Vec<String> = ["insert_per_s", "read_per_s"]
        .iter()
        .map(|metric| {
            let v: Vec<f64> = report
                .metric(metric)
                .map(|r| r.value * (r.param1.parse::<f64>().unwrap()).log2())
                .collect();
            let max = v.iter().copied().fold(f64::MIN, f64::max);
            let min = v.iter().copied().fold(f64::MAX, f64::min);
            format!("{metric}*log2(n) max/min = {:.2}", max / min)
        })
        .collect();
    let rates: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.metric == "insert_per_s" || r.metric == "read_per_s")
        .map(|r| format!("n={} {}={:.0}", r.param1, r.metric, r.value))
        .collect();
    verdict(
        3,
        "temporal trend",
        report.passed(),
        &format!("{}; {}; {}", checks_detail(&report), rates.join(", "), flat.join(", ")),
        start.elapsed(),
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_4_root_isolation() {
    let _guard = lock();
    let start = Instant::now();
    let report = worlds::run(&WorldsConfig::default()).unwrap();
    verdict(
        4,
        "root-world isolation",
        report.passed() && report.checks.len() == 4,
        &checks_detail(&report),
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_5_stair_linearity() {
    let _guard = lock();
    let start = Instant::now();
    let report = stair::run(&StairConfig::new(Scale::Desk, 1)).unwrap();
    let failed: Vec<String> = report.failed_checks().map(|c| c.to_string()).collect();
    verdict(
        5,
        "stair linearity",
        report.passed(),
        &if failed.is_empty() {
            format!("{} checks passed, e.g. {}", report.checks.len(), report.checks.last().unwrap())
        } else {
            failed.join("; ")
        },
        start.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_6_deep_what_if() {
    let _guard = lock();
    let start = Instant::now();
    let cfg = WhatIfConfig::new(Scale::Desk, 1);
    assert_eq!((cfg.generations, cfg.per_generation()), (2_000, 30));
    let report = whatif::run(&cfg).unwrap();
    verdict(
        6,
        "deep what-if",
        report.passed() && report.checks.len() == 3,
        &checks_detail(&report),
        start.elapsed(),
        Duration::from_secs(300),
    );
}

// ---- criterion 7 ----

fn log_options() -> LogOptions {
    LogOptions {
        sync: false,
        ..LogOptions::default()
    }
}

fn open_log(path: &std::path::Path) -> Graph {
    let backend = Arc::new(LogBackend::open_with(path, log_options()).unwrap());
    Graph::open(backend, GraphConfig::default()).unwrap()
}

fn encoded(g: &Graph, n: u64, t: i64, w: u64) -> Option<Vec<u8>> {
    g.resolve(NodeId(n), Timepoint(t), WorldId(w))
        .unwrap()
        .map(|c| c.encode().unwrap())
}

/// Runs a seeded op log with saves and restarts in between and compares
/// every probe with an uninterrupted in-memory run. Returns a description
/// of the first difference.
fn restart_scenario(seed: u64, dir: &std::path::Path) -> Option<String> {
    let cfg = VerifyConfig {
        nodes: 60,
        timepoints: 20,
        worlds: 8,
        ops: 1_500,
        probes: 0,
        seed,
        inject_fault: false,
    };
    let ops = verify::generate_ops(&cfg);
    let path = dir.join(format!("seed{seed}.log"));

    let reference = Graph::in_memory(GraphConfig::default());
    reference.connect().unwrap();
    let expected: Vec<_> = ops.iter().map(|op| apply_to_graph(&reference, op).unwrap()).collect();

    let cuts = [0, ops.len() / 3, 2 * ops.len() / 3, ops.len()];
    for (i, window) in cuts.windows(2).enumerate() {
        let g = open_log(&path);
        for (j, op) in ops.iter().enumerate().take(window[1]).skip(window[0]) {
            let got = apply_to_graph(&g, op).unwrap();
            if got != expected[j] {
                return Some(format!("seed {seed} session {i} op {j}: {got:?} vs {:?}", expected[j]));
            }
        }
        g.save().unwrap();
    }

    let restored = open_log(&path);
    if restored.world_count().unwrap() != reference.world_count().unwrap() {
        return Some(format!("seed {seed}: world count differs"));
    }
    for w in 0..reference.world_count().unwrap() {
        for n in 1..=cfg.nodes + 1 {
            for t in -1..=cfg.timepoints {
                if encoded(&restored, n, t, w) != encoded(&reference, n, t, w) {
                    return Some(format!("seed {seed}: probe node {n} time {t} world {w} differs"));
                }
            }
        }
    }
    let next = restored.create_node(WorldId::ROOT, Timepoint(0)).unwrap().node;
    let next_ref = reference.create_node(WorldId::ROOT, Timepoint(0)).unwrap().node;
    (next != next_ref).then(|| format!("seed {seed}: next node id {next:?} vs {next_ref:?}"))
}

/// A record parsed from a log image: key and value, `None` for a delete.
type Record = (Vec<u8>, Option<Vec<u8>>);

/// Splits a log image into its complete records, each with its end offset.
fn parse_log(bytes: &[u8]) -> Vec<(usize, Record)> {
    let mut out = Vec::new();
    let mut at = 0;
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    while at + 4 <= bytes.len() {
        let klen = u32_at(at) as usize;
        if at + 8 + klen > bytes.len() {
            break;
        }
        let key = bytes[at + 4..at + 4 + klen].to_vec();
        let vlen = u32_at(at + 4 + klen);
        let vstart = at + 8 + klen;
        if vlen == u32::MAX {
            at = vstart;
            out.push((at, (key, None)));
            continue;
        }
        let end = vstart + vlen as usize;
        if end > bytes.len() {
            break;
        }
        out.push((end, (key, Some(bytes[vstart..end].to_vec()))));
        at = end;
    }
    out
}

/// Cuts `image` at random offsets and checks that reopening keeps exactly
/// the complete records before the cut, latest record winning.
fn truncation_holds(image: &[u8], dir: &std::path::Path, rng: &mut ChaCha8Rng, cuts: usize) -> Option<String> {
    let records = parse_log(image);
    if records.last().map(|r| r.0) != Some(image.len()) {
        return Some("log image does not end on a record boundary".into());
    }
    for k in 0..cuts {
        let cut = if k == 0 { image.len() } else { rng.gen_range(0..image.len()) };
        let mut expected: BTreeMap<Vec<u8>, Vec<u8>> = BTreeMap::new();
        for (end, (key, value)) in &records {
            if *end > cut {
                break;
            }
            match value {
                Some(v) => expected.insert(key.clone(), v.clone()),
                None => expected.remove(key),
            };
        }
        let path = dir.join(format!("cut{k}.log"));
        fs::write(&path, &image[..cut]).unwrap();
        let backend = LogBackend::open_with(&path, log_options()).unwrap();
        let got: BTreeMap<Vec<u8>, Vec<u8>> = backend.scan().unwrap().into_iter().collect();
        if got != expected {
            return Some(format!("cut at {cut} of {}: {} records vs {}", image.len(), got.len(), expected.len()));
        }
        drop(backend);
        fs::remove_file(&path).unwrap();
    }
    None
}

#[test]
fn criterion_7_durability() {
    let _guard = lock();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut problems: Vec<String> = (1..=10).filter_map(|seed| restart_scenario(seed, dir.path())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let graph_log = fs::read(dir.path().join("seed1.log")).unwrap();
    problems.extend(truncation_holds(&graph_log, dir.path(), &mut rng, 100));

    // A log with overwrites and deletes, which graph saves do not produce.
    let churn_path = dir.path().join("churn.log");
    {
        let b = LogBackend::open_with(
            &churn_path,
            LogOptions {
                compaction_min_bytes: u64::MAX,
                ..log_options()
            },
        )
        .unwrap();
        for _ in 0..2_000 {
            let key = vec![rng.gen_range(0..40u8); rng.gen_range(1..4)];
            if rng.gen_bool(0.25) {
                b.remove(&key).unwrap();
            } else {
                let value: Vec<u8> = (0..rng.gen_range(0..20)).map(|_| rng.gen()).collect();
                b.put(&key, &value).unwrap();
            }
        }
        b.flush().unwrap();
    }
    let churn = fs::read(&churn_path).unwrap();
    problems.extend(truncation_holds(&churn, dir.path(), &mut rng, 200));

    verdict(
        7,
        "durability",
        problems.is_empty(),
        &if problems.is_empty() {
            format!(
                "10 seeded scenarios identical after restarts; 300 truncated logs reopen with every complete \
                 record ({} and {} byte images)",
                graph_log.len(),
                churn.len()
            )
        } else {
            problems.join("; ")
        },
        start.elapsed(),
        Duration::from_secs(120),
    );
}

// ---- criterion 8 ----

fn random_value(rng: &mut ChaCha8Rng) -> AttributeValue {
    match rng.gen_range(0..7) {
        0 => AttributeValue::Int(rng.gen()),
        1 => AttributeValue::Long(rng.gen()),
        2 => AttributeValue::Double(f64::from_bits(rng.gen())),
        3 => AttributeValue::Double([0.0, -0.0, f64::INFINITY, f64::NAN][rng.gen_range(0..4)]),
        4 => AttributeValue::Text((0..rng.gen_range(0..12)).map(|_| rng.gen::<char>()).collect()),
        5 => AttributeValue::Bool(rng.gen()),
        _ => AttributeValue::Enum {
            ordinal: rng.gen(),
            registry: format!("reg{}", rng.gen_range(0..4)),
        },
    }
}

fn random_time(rng: &mut ChaCha8Rng) -> Timepoint {
    match rng.gen_range(0..6) {
        0 => Timepoint::MIN,
        1 => Timepoint::MAX,
        2 => Timepoint(rng.gen()),
        _ => Timepoint(rng.gen_range(-1_000..1_000)),
    }
}

/// A random state chunk, built again from the same content in a shuffled
/// order with discarded detours.
fn random_state(rng: &mut ChaCha8Rng) -> (StateChunk, StateChunk) {
    if rng.gen_ratio(1, 20) {
        return (StateChunk::tombstone(), StateChunk::tombstone());
    }
    let mut attrs: Vec<(String, AttributeValue)> = (0..rng.gen_range(0..6))
        .map(|i| (format!("a{i}_{}", rng.gen_range(0..100)), random_value(rng)))
        .collect();
    let mut rels: Vec<(String, Vec<NodeId>)> = (0..rng.gen_range(0..4))
        .map(|i| {
            let mut ids: Vec<NodeId> = (0..rng.gen_range(1..6)).map(|_| NodeId(rng.gen())).collect();
            ids.dedup();
            (format!("r{i}"), ids)
        })
        .collect();
    let mut a = StateChunk::new();
    for (name, value) in &attrs {
        a.set_attribute(name, value.clone()).unwrap();
    }
    for (name, ids) in &rels {
        for &id in ids {
            a.add_to_relation(name, id).unwrap();
        }
    }
    attrs.shuffle(rng);
    rels.shuffle(rng);
    let mut b = StateChunk::new();
    b.set_attribute("detour", AttributeValue::Bool(true)).unwrap();
    for (name, value) in &attrs {
        b.set_attribute(name, AttributeValue::Long(0)).unwrap();
        b.set_attribute(name, value.clone()).unwrap();
    }
    b.remove_attribute("detour");
    for (name, ids) in &rels {
        b.add_to_relation(name, NodeId(u64::MAX)).unwrap();
        for &id in ids {
            b.add_to_relation(name, id).unwrap();
        }
        if !ids.contains(&NodeId(u64::MAX)) {
            b.remove_from_relation(name, NodeId(u64::MAX));
        }
    }
    (a, b)
}

fn random_key(rng: &mut ChaCha8Rng) -> ChunkKey {
    let kinds = [
        ChunkKind::State,
        ChunkKind::TimeTree,
        ChunkKind::WorldMap,
        ChunkKind::GlobalWorldMap,
        ChunkKind::Meta,
    ];
    ChunkKey {
        kind: kinds[rng.gen_range(0..kinds.len())],
        world: WorldId(if rng.gen() { rng.gen() } else { rng.gen_range(0..4) }),
        time: random_time(rng),
        node: NodeId(if rng.gen() { rng.gen() } else { rng.gen_range(0..4) }),
    }
}

/// Encodes both builds of one random chunk of any kind. Returns the first
/// problem: a failed round trip or unequal bytes for equal content.
fn chunk_round_trip(rng: &mut ChaCha8Rng, i: usize) -> Option<String> {
    let node = NodeId(rng.gen_range(1..1_000));
    let world = WorldId(rng.gen_range(0..50));
    let (key, a, b) = match i % 10 {
        0..=5 => {
            let (a, b) = random_state(rng);
            let key = ChunkKey::state(node, random_time(rng), world);
            (key, Chunk::State(Arc::new(a)), Chunk::State(Arc::new(b)))
        }
        6 | 7 => {
            let mut times: Vec<Timepoint> = (0..rng.gen_range(0..200)).map(|_| random_time(rng)).collect();
            let mut a = TimeTree::new(node, world);
            for &t in &times {
                a.insert(t);
            }
            times.shuffle(rng);
            let mut b = TimeTree::new(node, world);
            for &t in &times {
                b.insert(t);
            }
            let key = ChunkKey::time_tree(node, world);
            (key, Chunk::TimeTree(Arc::new(a)), Chunk::TimeTree(Arc::new(b)))
        }
        8 => {
            let mut marks: Vec<(WorldId, Timepoint)> =
                (0..rng.gen_range(0..30)).map(|_| (WorldId(rng.gen_range(0..20)), random_time(rng))).collect();
            let mut a = LocalWorldMap::new(node);
            for &(w, t) in &marks {
                a.mark(w, t);
            }
            marks.shuffle(rng);
            let mut b = LocalWorldMap::new(node);
            for &(w, t) in &marks {
                b.mark(w, t);
            }
            let key = ChunkKey::world_map(node);
            (key, Chunk::WorldMap(Arc::new(a)), Chunk::WorldMap(Arc::new(b)))
        }
        _ => {
            let mut g = GlobalWorldMap::new();
            for _ in 0..rng.gen_range(0..40) {
                let parent = WorldId(rng.gen_range(0..g.world_count()));
                g.diverge(parent).unwrap();
            }
            let key = ChunkKey::global_world_map();
            (key, Chunk::GlobalWorldMap(Arc::new(g.clone())), Chunk::GlobalWorldMap(Arc::new(g)))
        }
    };
    let bytes = a.encode().unwrap();
    if b.encode().unwrap() != bytes {
        return Some(format!("chunk {i} ({:?}): equal content, different bytes", key.kind));
    }
    let decoded = match Chunk::decode(&key, &bytes) {
        Ok(c) => c,
        Err(e) => return Some(format!("chunk {i} ({:?}): decode failed: {e}", key.kind)),
    };
    let same_content = match (&a, &decoded) {
        (Chunk::State(x), Chunk::State(y)) => x == y,
        (Chunk::TimeTree(x), Chunk::TimeTree(y)) => x.iter().eq(y.iter()),
        (Chunk::WorldMap(x), Chunk::WorldMap(y)) => {
            let mut xs: Vec<_> = x.worlds().collect();
            let mut ys: Vec<_> = y.worlds().collect();
            xs.sort();
            ys.sort();
            xs == ys
        }
        (Chunk::GlobalWorldMap(x), Chunk::GlobalWorldMap(y)) => {
            x.world_count() == y.world_count()
                && (0..x.world_count()).all(|w| x.parent(WorldId(w)) == y.parent(WorldId(w)))
        }
        _ => false,
    };
    if !same_content || decoded.encode().unwrap() != bytes {
        return Some(format!("chunk {i} ({:?}): round trip changed the chunk", key.kind));
    }
    None
}

#[test]
fn criterion_8_serialization() {
    let _guard = lock();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut problems: Vec<String> = (0..10_000).filter_map(|i| chunk_round_trip(&mut rng, i)).take(5).collect();

    let keys: Vec<ChunkKey> = (0..10_000).map(|_| random_key(&mut rng)).collect();
    for key in &keys {
        let bytes = key.encode();
        match ChunkKey::decode(&bytes) {
            Ok(k) if k == *key && k.encode() == bytes => {}
            other => problems.push(format!("key {key:?} decoded as {other:?}")),
        }
    }
    let mut by_value = keys.clone();
    by_value.sort();
    let mut by_bytes = keys;
    by_bytes.sort_by_key(|k| k.encode());
    if by_value != by_bytes {
        problems.push("byte order of keys differs from logical order".into());
    }

    verdict(
        8,
        "serialization",
        problems.is_empty(),
        &if problems.is_empty() {
            "10000 chunks of every kind and 10000 keys round-trip bit-identically; equal chunks built in \
             different orders encode identically; key byte order matches logical order"
                .to_owned()
        } else {
            problems.join("; ")
        },
        start.elapsed(),
        Duration::from_secs(30),
    );
}
