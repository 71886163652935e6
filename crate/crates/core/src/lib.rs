//! Taxi service strategy optimization for electric and combustion fleets.
//!
//! The library estimates demand and energy models from trip records, solves
//! the service-strategy Markov decision process by backward induction, and
//! evaluates the resulting policies in single- and multi-taxi simulations.
//!
//! Pipeline stages (each also exposed as a CLI subcommand):
//!
//! 1. [`trip_ingest`] — parse trip CSVs, snap endpoints to road-network
//!    junctions, filter implausible records, partition into shifts.
//! 2. [`road_network`] — junction graph, shortest paths, time-dependent
//!    segment speeds, idling ratios, nearest charging stations.
//! 3. [`estimation`] — pick-up probabilities, destination distributions,
//!    inter-pick-up durations and reachable distances.
//! 4. [`energy_model`] / [`fare_model`] — trip energy, battery transitions,
//!    metered fares and net revenue.
//! 5. [`mdp_solver`] — state/action space, expected-value recurrence, the
//!    backward-induction sweep and policy extraction.
//! 6. [`fleet_sim`] — seeded rollouts for one taxi or a capacity-constrained
//!    fleet, plus revenue/energy/CO₂ reporting.
//!
//! [`pipeline`] wires the stages together through versioned JSON artifacts;
//! [`config`] holds the single run-configuration file all stages share.

pub mod artifact;
pub mod config;
pub mod energy_model;
pub mod estimation;
pub mod fare_model;
pub mod fleet_sim;
pub mod geo;
pub mod mdp_solver;
pub mod pipeline;
pub mod road_network;
pub mod trip_ingest;

pub use config::RunConfig;
pub use estimation::DemandModel;
pub use fleet_sim::{EmissionReport, ShiftResult, SimConfig};
pub use mdp_solver::{Policy, Solution, ValueTable};
pub use road_network::{JunctionId, RoadGraph, SpeedNetwork, TravelEstimate};
pub use trip_ingest::{Shift, SnappedTrip, TripRecord};
