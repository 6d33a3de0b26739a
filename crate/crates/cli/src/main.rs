use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gnnguard_core::bench::{
    build_graph, run_ablation, run_experiment, run_intensity_sweep, scaling_bench,
    ExperimentReport, RunConfig,
};
use gnnguard_core::graph::{write_edge_list, write_features, write_labels};
use gnnguard_core::graphlet::count_orbits;
use gnnguard_core::Error;
use log::error;

#[derive(Parser)]
#[command(
    name = "gnnguard",
    about = "Poisoning attacks and guarded GNN training experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for reports and run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured attack against each configured defense.
    Run(Common),
    /// Direct-attack ablation over pruning and memory.
    Ablate(Common),
    /// Non-targeted attack at increasing perturbation rates.
    Sweep(Common),
    /// Time one guard estimation pass at several edge counts.
    Bench(Common),
    /// Write the configured synthetic dataset (first seed) as files.
    Gen(Common),
    /// Write graphlet degree vectors of the configured dataset as CSV.
    Orbits(Common),
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(|e| Failure::Config(e.to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seeds) = &common.seeds {
        config.seeds = seeds.clone();
    }
    config
        .validate()
        .map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(config)
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Failure::Config("--out is required".into()))
}

fn finish(report: ExperimentReport) -> Result<(), Failure> {
    print!("{}", report.to_table());
    if report.is_partial() {
        return Err(Failure::Runtime(format!(
            "{} seed(s) failed; partial results written",
            report.failures.len()
        )));
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(c) => {
            let config = load_config(&c)?;
            finish(run_experiment(&config, c.out.as_deref())?)
        }
        Command::Ablate(c) => {
            let config = load_config(&c)?;
            finish(run_ablation(&config, c.out.as_deref())?)
        }
        Command::Sweep(c) => {
            let config = load_config(&c)?;
            finish(run_intensity_sweep(&config, c.out.as_deref())?)
        }
        Command::Bench(c) => {
            let config = load_config(&c)?;
            let report = scaling_bench(
                &config.bench_sizes,
                config.bench_dim,
                config.bench_reps,
                config.seeds[0],
            )?;
            let csv = report.to_csv();
            print!("{csv}");
            if let Some(out) = &c.out {
                fs::create_dir_all(out)?;
                fs::write(out.join("scaling.csv"), csv)?;
            }
            Ok(())
        }
        Command::Gen(c) => {
            let config = load_config(&c)?;
            let out = out_dir(&c)?;
            let graph = build_graph(&config, config.seeds[0])?;
            fs::create_dir_all(out)?;
            write_edge_list(&graph, &out.join("edges.txt"))?;
            write_labels(graph.labels(), &out.join("labels.txt"))?;
            if let Some(f) = graph.features() {
                write_features(f, &out.join("features.csv"))?;
            }
            println!(
                "wrote {} nodes, {} edges, {} classes to {}",
                graph.n_nodes(),
                graph.n_edges(),
                graph.n_classes(),
                out.display()
            );
            Ok(())
        }
        Command::Orbits(c) => {
            let config = load_config(&c)?;
            let out = out_dir(&c)?;
            let graph = build_graph(&config, config.seeds[0])?;
            fs::create_dir_all(out)?;
            fs::write(out.join("orbits.csv"), count_orbits(&graph).to_csv())?;
            println!(
                "wrote orbit counts for {} nodes to {}",
                graph.n_nodes(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            error!("{msg}");
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            error!("{msg}");
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
