//! `ecab` — batch pipeline for electric-taxi service strategy optimization.
//!
//! Subcommands mirror the pipeline stages; every stage reads the same TOML
//! configuration and writes hash-stamped artifacts into its out directory.
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 infeasible solve.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ecab_core::pipeline::{self, PipelineError};
use ecab_core::RunConfig;

#[derive(Parser)]
#[command(name = "ecab", version, about = "Taxi service strategy optimization pipeline")]
struct Cli {
    /// Run configuration file.
    #[arg(short, long, global = true, default_value = "ecab.toml")]
    config: PathBuf,
    /// Cap the worker thread count (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the simulation and generator seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the artifact output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Solve with the recurrence's literal energy term (comparison mode);
    /// outputs gain a `.strict` suffix.
    #[arg(long, global = true)]
    strict_paper: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic grid-city fixture (trips, graph, stations).
    SynthDemand,
    /// Parse, snap and filter the trip CSV into the trip store.
    Ingest,
    /// Label per-hour segment speeds and idling ratios from the trip store.
    BuildNetwork,
    /// Estimate pick-up/destination probabilities and τ/δ tables.
    Estimate,
    /// Solve the service-strategy MDP by backward induction.
    Solve,
    /// Roll out the solved policy for the configured fleet.
    Simulate,
    /// Aggregate simulation results into a revenue/energy/CO₂ report.
    Report,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Some(n) = cli.threads {
        pipeline::configure_threads(n);
    }
    let mut cfg =
        RunConfig::load(&cli.config).map_err(|e| PipelineError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(out) = cli.out_dir {
        cfg.paths.out_dir = out;
    }
    if cli.strict_paper {
        cfg.solver.strict_paper_energy_term = true;
    }

    match cli.cmd {
        Cmd::SynthDemand => {
            let s = pipeline::run_synth(&cfg)?;
            println!(
                "synth-demand: {} trips over {} junctions, {} stations -> {}",
                s.trips,
                s.junctions,
                s.stations,
                cfg.paths.trips.display()
            );
        }
        Cmd::Ingest => {
            let s = pipeline::run_ingest(&cfg)?;
            println!(
                "ingest: kept {} of {} trips ({} rejected) -> {}",
                s.kept,
                s.total,
                s.rejected,
                s.store.display()
            );
        }
        Cmd::BuildNetwork => {
            let s = pipeline::run_build_network(&cfg)?;
            println!(
                "build-network: {} junctions, {} directed segments, labeled from {} trips",
                s.junctions, s.edges, s.labeled_from_trips
            );
        }
        Cmd::Estimate => {
            let s = pipeline::run_estimate(&cfg)?;
            println!("estimate: demand model over {} junctions from {} trips", s.junctions, s.trips_used);
        }
        Cmd::Solve => {
            let s = pipeline::run_solve(&cfg)?;
            println!(
                "solve: expected net revenue from junction {} at shift start: ${:.2} ({} states) -> {}",
                s.start_junction,
                s.start_value_usd,
                s.states,
                s.policy_path.display()
            );
        }
        Cmd::Simulate => {
            let s = pipeline::run_simulate(&cfg)?;
            println!(
                "simulate: {} taxi(s), mean net revenue ${:.2}, {} trips served -> {}",
                s.n_taxis,
                s.mean_net_revenue_usd,
                s.trips_served,
                s.results_path.display()
            );
        }
        Cmd::Report => {
            let s = pipeline::run_report(&cfg)?;
            match s.co2_kg {
                Some(co2) => println!(
                    "report: {} shifts, mean net revenue ${:.2}, {:.2} kg CO2 -> {}",
                    s.shifts,
                    s.mean_net_revenue_usd,
                    co2,
                    s.report_path.display()
                ),
                None => println!(
                    "report: {} shifts, mean net revenue ${:.2} -> {}",
                    s.shifts,
                    s.mean_net_revenue_usd,
                    s.report_path.display()
                ),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
