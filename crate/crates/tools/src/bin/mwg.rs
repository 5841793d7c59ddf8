use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mwg_tools::config::Scale;
use mwg_tools::load::{self, Policy};
use mwg_tools::report::Report;
use mwg_tools::stair::StairConfig;
use mwg_tools::temporal::TemporalConfig;
use mwg_tools::verify::VerifyConfig;
use mwg_tools::whatif::WhatIfConfig;
use mwg_tools::worlds::WorldsConfig;
use mwg_tools::{dataset, stair, temporal, verify, whatif, worlds};
use mwg_core::export;
use mwg_core::storage::LogBackend;
use mwg_core::{Graph, GraphConfig};

#[derive(Parser)]
#[command(name = "mwg", version, about = "Many-world graph benchmarks and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Miw,
    Siw,
    Temporal,
    Worlds,
    Stair,
    Whatif,
}

#[derive(Args)]
struct BenchArgs {
    scenario: Scenario,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write metric rows here as CSV instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    /// Edge list for miw and siw; a synthetic Enron-sized graph otherwise.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Parallel writer threads for miw.
    #[arg(long, default_value_t = 1)]
    writers: usize,
    /// Timepoint counts for temporal, comma separated.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<u64>>,
    /// Nested worlds for the worlds scenario.
    #[arg(long)]
    worlds: Option<usize>,
    /// Generations for whatif.
    #[arg(long)]
    generations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark scenario and print its checks.
    Bench(BenchArgs),
    /// Load an edge list into a database file.
    Load {
        edge_list: PathBuf,
        #[arg(long)]
        db: PathBuf,
    },
    /// Export every record of a database as text.
    Dump {
        file: PathBuf,
        #[arg(long)]
        db: PathBuf,
    },
    /// Import a text export into a database.
    Restore {
        file: PathBuf,
        #[arg(long)]
        db: PathBuf,
    },
    /// Compare the engine with the replay oracle on a random op log.
    Verify {
        #[arg(long, default_value_t = 5_000)]
        ops: usize,
        #[arg(long, default_value_t = 10_000)]
        probes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Break the floor lookup to show that verification catches it.
        #[arg(long)]
        inject_fault: bool,
    },
}

fn bench(args: BenchArgs) -> Result<Report> {
    let seed = args.seed;
    let load_dataset = || -> Result<dataset::Dataset> {
        match &args.dataset {
            Some(p) => dataset::load_edge_list(p),
            None => Ok(dataset::enron_like(seed)),
        }
    };
    match args.scenario {
        Scenario::Miw => Ok(load::run(&load_dataset()?, Policy::Miw, args.writers, seed)?.0),
        Scenario::Siw => load::run_both(&load_dataset()?, args.writers, seed),
        Scenario::Temporal => {
            let mut cfg = TemporalConfig {
                seed,
                ..TemporalConfig::default()
            };
            if let Some(s) = args.scales {
                cfg.scales = s;
            } else if args.scale == Scale::Full {
                cfg.scales = (0..9).map(|i| 1_000_000u64 << i).collect();
            }
            temporal::run(&cfg)
        }
        Scenario::Worlds => {
            let mut cfg = WorldsConfig {
                seed,
                ..WorldsConfig::default()
            };
            if let Some(m) = args.worlds {
                cfg.worlds = m;
            }
            worlds::run(&cfg)
        }
        Scenario::Stair => stair::run(&StairConfig::new(args.scale, seed)),
        Scenario::Whatif => {
            let mut cfg = WhatIfConfig::new(args.scale, seed);
            if let Some(g) = args.generations {
                cfg.generations = g;
            }
            whatif::run(&cfg)
        }
    }
}

fn open_db(path: &PathBuf) -> Result<Arc<LogBackend>> {
    Ok(Arc::new(
        LogBackend::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn finish(report: &Report, out: Option<PathBuf>) -> Result<ExitCode> {
    match out {
        Some(path) => {
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            report.write_csv(BufWriter::new(file), true)?;
        }
        None => report.write_csv(io::stdout().lock(), true)?,
    }
    for check in &report.checks {
        eprintln!("{check}");
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bench(args) => {
            let out = args.out.clone();
            let report = bench(args)?;
            finish(&report, out)
        }
        Command::Load { edge_list, db } => {
            let ds = dataset::load_edge_list(&edge_list)?;
            let graph = Graph::open(open_db(&db)?, GraphConfig::default())?;
            let loaded = load::load(graph, &ds, Policy::Miw, 1)?;
            println!(
                "loaded {} nodes and {} edges in {:.2}s ({} duplicate, {} malformed lines skipped)",
                ds.nodes,
                ds.edges.len(),
                loaded.seconds,
                ds.duplicates,
                ds.malformed
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Dump { file, db } => {
            let backend = open_db(&db)?;
            let out = File::create(&file).with_context(|| format!("creating {}", file.display()))?;
            let n = export::dump(backend.as_ref(), &mut BufWriter::new(out))?;
            println!("dumped {n} records");
            Ok(ExitCode::SUCCESS)
        }
        Command::Restore { file, db } => {
            let backend = open_db(&db)?;
            let input = File::open(&file).with_context(|| format!("opening {}", file.display()))?;
            let n = export::restore(backend.as_ref(), &mut BufReader::new(input))?;
            println!("restored {n} records");
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            ops,
            probes,
            seed,
            inject_fault,
        } => {
            let report = verify::run(&VerifyConfig {
                ops,
                probes,
                seed,
                inject_fault,
                ..VerifyConfig::default()
            })?;
            for check in &report.checks {
                println!("{check}");
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
