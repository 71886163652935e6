//! End-to-end pipeline stages behind the CLI subcommands.
//!
//! Each stage reads its upstream artifacts, verifies their hashes, and
//! writes its own hash-stamped outputs into the configured out directory:
//!
//! ```text
//! synth-demand   -> trips.csv graph.json stations.csv holidays.csv
//! ingest         -> trips.snapped.json reject_report.json
//! build-network  -> network.json
//! estimate       -> demand.json
//! solve          -> policy[.strict].json values[.strict].json
//! simulate       -> results.json results.csv
//! report         -> report.json
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{
    file_hash, read_artifact, verify_input, write_artifact, ArtifactError,
};
use crate::config::{ConfigError, RunConfig};
use crate::estimation::{self, DayType, DemandModel, DemandModelJson};
use crate::fare_model::{HolidaySet, Powertrain};
use crate::fleet_sim::{
    self, emission_report, mean_net_revenue, synth, EmissionReport, FleetConfig, ShiftResult,
    SimError, StartState,
};
use crate::mdp_solver::{
    solve_backward, ModelInputs, PlanningModel, Policy, SolveError, Solution, SolverConfig,
    ValueTable,
};
use crate::road_network::{
    ChargingStation, Junction, JunctionId, NetworkError, RoadGraph, SpeedConfig, SpeedNetwork,
    StationIndex,
};
use crate::trip_ingest::{self, IngestError, SnappedTrip};

pub const TRIP_STORE: &str = "trips.snapped.json";
pub const REJECT_REPORT: &str = "reject_report.json";
pub const NETWORK: &str = "network.json";
pub const DEMAND: &str = "demand.json";
pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const REPORT: &str = "report.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("infeasible solve: {0}")]
    Infeasible(String),
}

impl PipelineError {
    /// Exit codes: 2 config, 3 data, 4 infeasible solve.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Infeasible(_) => 4,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<ArtifactError> for PipelineError {
    fn from(e: ArtifactError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<NetworkError> for PipelineError {
    fn from(e: NetworkError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SolveError> for PipelineError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::BadConfig(m) => PipelineError::Config(m),
            SolveError::MissingStations => {
                PipelineError::Infeasible("no usable charging stations".into())
            }
            SolveError::EmptyDemand => PipelineError::Data("demand model is empty".into()),
            SolveError::Network(e) => PipelineError::Data(e.to_string()),
        }
    }
}

fn write_plain<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Data(e.to_string()))?;
    }
    fs::write(path, text).map_err(|e| PipelineError::Data(e.to_string()))
}

/// Artifact names honoring the strict-mode output suffix.
pub fn policy_file(cfg: &RunConfig) -> &'static str {
    if cfg.solver.strict_paper_energy_term { "policy.strict.json" } else { "policy.json" }
}

pub fn values_file(cfg: &RunConfig) -> &'static str {
    if cfg.solver.strict_paper_energy_term { "values.strict.json" } else { "values.json" }
}

// ---------------------------------------------------------------------------
// synth-demand

#[derive(Debug, Serialize)]
pub struct SynthSummary {
    pub trips: usize,
    pub junctions: usize,
    pub stations: usize,
}

/// Generates the synthetic city into the configured input paths.
pub fn run_synth(cfg: &RunConfig) -> Result<SynthSummary, PipelineError> {
    let city = synth::generate(&cfg.synth);
    let write = |path: &PathBuf, text: String| -> Result<(), PipelineError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::Data(e.to_string()))?;
        }
        fs::write(path, text).map_err(|e| PipelineError::Data(e.to_string()))
    };
    write(&cfg.paths.trips, synth::trips_csv(&city.trips))?;
    write(&cfg.paths.graph, synth::graph_json(&city.junctions, &city.segments))?;
    write(&cfg.paths.stations, synth::stations_csv(&city.stations))?;
    if let Some(h) = &cfg.paths.holidays {
        write(h, "date\n".to_string())?;
    }
    Ok(SynthSummary {
        trips: city.trips.len(),
        junctions: city.junctions.len(),
        stations: city.stations.len(),
    })
}

// ---------------------------------------------------------------------------
// ingest

fn load_graph(cfg: &RunConfig) -> Result<RoadGraph, PipelineError> {
    if let (Some(nodes), Some(edges)) = (&cfg.paths.graph_nodes, &cfg.paths.graph_edges) {
        let n = fs::File::open(nodes).map_err(|e| PipelineError::Data(e.to_string()))?;
        let e = fs::File::open(edges).map_err(|e| PipelineError::Data(e.to_string()))?;
        return Ok(RoadGraph::from_csv_readers(n, e)?);
    }
    let f = fs::File::open(&cfg.paths.graph).map_err(|e| {
        PipelineError::Data(format!("cannot open graph {}: {e}", cfg.paths.graph.display()))
    })?;
    Ok(RoadGraph::from_json_reader(f)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct TripStore {
    trips: Vec<SnappedTrip>,
}

#[derive(Debug, Serialize)]
pub struct IngestSummary {
    pub total: u64,
    pub kept: u64,
    pub rejected: u64,
    pub store: PathBuf,
}

pub fn run_ingest(cfg: &RunConfig) -> Result<IngestSummary, PipelineError> {
    let graph = load_graph(cfg)?;
    let trips_file = fs::File::open(&cfg.paths.trips).map_err(|e| {
        PipelineError::Data(format!("cannot open trips {}: {e}", cfg.paths.trips.display()))
    })?;
    let (trips, report) = trip_ingest::ingest(trips_file, &graph, &cfg.ingest)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("trips_csv".to_string(), file_hash(&cfg.paths.trips)?);
    let store = cfg.out_path(TRIP_STORE);
    write_artifact(&store, "trip_store", &cfg.hash(), inputs, &TripStore { trips })?;
    write_plain(&cfg.out_path(REJECT_REPORT), &report)?;
    Ok(IngestSummary {
        total: report.total,
        kept: report.kept,
        rejected: report.rejected_total(),
        store,
    })
}

// ---------------------------------------------------------------------------
// build-network

#[derive(Debug, Serialize, Deserialize)]
struct EdgeData {
    from: u64,
    to: u64,
    km: f64,
    speeds_kmh: [f64; 24],
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkData {
    junctions: Vec<Junction>,
    edges: Vec<EdgeData>,
    idling_median: [f64; 24],
    speed_config: SpeedConfig,
    /// Nearest-station table (junction id -> station id, km) for inspection.
    nearest_station: BTreeMap<u64, (String, f64)>,
}

#[derive(Debug, Serialize)]
pub struct NetworkSummary {
    pub junctions: usize,
    pub edges: usize,
    pub labeled_from_trips: u64,
}

pub fn run_build_network(cfg: &RunConfig) -> Result<NetworkSummary, PipelineError> {
    let graph = load_graph(cfg)?;
    let store_path = cfg.out_path(TRIP_STORE);
    let store: crate::artifact::Artifact<TripStore> = read_artifact(&store_path, "trip_store")?;
    let net = SpeedNetwork::from_trips(graph, &store.data.trips, cfg.network);

    let stations = load_stations(cfg, net.graph())?;
    let index = StationIndex::build(net.graph(), stations.clone()).ok();
    let mut nearest_station = BTreeMap::new();
    if let Some(index) = &index {
        for (i, j) in net.graph().junctions().iter().enumerate() {
            if let Some((st, km)) = index.nearest(i) {
                nearest_station.insert(j.id.0, (st.id.clone(), km));
            }
        }
    }

    let data = NetworkData {
        junctions: net.graph().junctions().to_vec(),
        edges: net
            .graph()
            .segments()
            .iter()
            .zip(net.edge_speeds())
            .map(|(s, speeds)| EdgeData {
                from: s.from.0,
                to: s.to.0,
                km: s.km,
                speeds_kmh: *speeds,
            })
            .collect(),
        idling_median: *net.idling_medians(),
        speed_config: *net.config(),
        nearest_station,
    };
    let mut inputs = BTreeMap::new();
    inputs.insert("trip_store".to_string(), file_hash(&store_path)?);
    write_artifact(&cfg.out_path(NETWORK), "speed_network", &cfg.hash(), inputs, &data)?;
    Ok(NetworkSummary {
        junctions: net.graph().len(),
        edges: net.graph().edge_count(),
        labeled_from_trips: store.data.trips.len() as u64,
    })
}

fn load_network(cfg: &RunConfig) -> Result<SpeedNetwork, PipelineError> {
    let art: crate::artifact::Artifact<NetworkData> =
        read_artifact(&cfg.out_path(NETWORK), "speed_network")?;
    let d = art.data;
    let segments = d
        .edges
        .iter()
        .map(|e| crate::road_network::Segment {
            from: JunctionId(e.from),
            to: JunctionId(e.to),
            km: e.km,
        })
        .collect();
    let graph = RoadGraph::new(d.junctions, segments)?;
    let net = SpeedNetwork::unlabeled(graph, d.speed_config)
        .with_edge_speeds(d.edges.iter().map(|e| e.speeds_kmh).collect())?
        .with_idling_medians(d.idling_median);
    Ok(net)
}

fn load_stations(cfg: &RunConfig, graph: &RoadGraph) -> Result<Vec<ChargingStation>, PipelineError> {
    let f = fs::File::open(&cfg.paths.stations).map_err(|e| {
        PipelineError::Data(format!(
            "cannot open stations {}: {e}",
            cfg.paths.stations.display()
        ))
    })?;
    Ok(StationIndex::from_csv_reader(graph, f)
        .map(|idx| idx.stations().to_vec())
        .or_else(|e| match e {
            NetworkError::NoStations => Ok(Vec::new()),
            other => Err(other),
        })?)
}

fn load_trip_store(cfg: &RunConfig) -> Result<Vec<SnappedTrip>, PipelineError> {
    let store: crate::artifact::Artifact<TripStore> =
        read_artifact(&cfg.out_path(TRIP_STORE), "trip_store")?;
    Ok(store.data.trips)
}

// ---------------------------------------------------------------------------
// estimate

#[derive(Debug, Serialize)]
pub struct EstimateSummary {
    pub junctions: usize,
    pub trips_used: usize,
}

/// Chooses the action set (top-K junctions by pick-up count unless running
/// full adjacency), relabels trips onto it, and estimates the demand model.
pub fn run_estimate(cfg: &RunConfig) -> Result<EstimateSummary, PipelineError> {
    let net = load_network(cfg)?;
    let trips = load_trip_store(cfg)?;
    if trips.is_empty() {
        return Err(PipelineError::Data("trip store is empty".into()));
    }
    let action_set: Vec<JunctionId> = if cfg.solver.full_adjacency {
        net.graph().junctions().iter().map(|j| j.id).collect()
    } else {
        estimation::top_k_junctions(&trips, cfg.solver.aggregation_k)
    };
    let relabeled = estimation::relabel_trips(&trips, net.graph(), &action_set)?;
    let model = estimation::estimate(&relabeled, &net, &action_set, &cfg.estimation)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("trip_store".to_string(), file_hash(&cfg.out_path(TRIP_STORE))?);
    inputs.insert("network".to_string(), file_hash(&cfg.out_path(NETWORK))?);
    write_artifact(
        &cfg.out_path(DEMAND),
        "demand_model",
        &cfg.hash(),
        inputs,
        &DemandModelJson::from(&model),
    )?;
    Ok(EstimateSummary { junctions: model.len(), trips_used: relabeled.len() })
}

fn load_demand(cfg: &RunConfig) -> Result<DemandModel, PipelineError> {
    let art: crate::artifact::Artifact<DemandModelJson> =
        read_artifact(&cfg.out_path(DEMAND), "demand_model")?;
    Ok(DemandModel::try_from(&art.data)?)
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Serialize, Deserialize)]
struct PolicyData {
    junction_ids: Vec<u64>,
    n_act: usize,
    start_junction: u64,
    start_bin: usize,
    start_value_usd: f64,
    policy: Policy,
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub start_junction: u64,
    pub start_value_usd: f64,
    pub states: usize,
    pub policy_path: PathBuf,
}

/// Effective solver config after applying the run date to the day flags.
fn effective_solver(cfg: &RunConfig) -> Result<SolverConfig, PipelineError> {
    let mut solver = cfg.solver.clone();
    if let Some(date) = solver.run_date {
        solver.weekday = DayType::of(date) == DayType::Weekday;
        let holidays = match &cfg.paths.holidays {
            Some(p) => {
                let f = fs::File::open(p)
                    .map_err(|e| PipelineError::Data(format!("holidays: {e}")))?;
                HolidaySet::from_csv_reader(f)?
            }
            None => HolidaySet::default(),
        };
        solver.holiday = holidays.contains(date);
    }
    Ok(solver)
}

fn build_model(cfg: &RunConfig) -> Result<(PlanningModel, SolverConfig), PipelineError> {
    let net = load_network(cfg)?;
    let demand = load_demand(cfg)?;
    let stations = load_stations(cfg, net.graph())?;
    let solver = effective_solver(cfg)?;
    let inputs = ModelInputs {
        net: &net,
        stations: &stations,
        demand: &demand,
        energy: &cfg.energy.params,
        battery: cfg.energy.battery(),
        charge: cfg.energy.charging_mode(),
        tariff: &cfg.tariff,
        price: cfg.prices,
        powertrain: cfg.vehicle.powertrain,
    };
    let model = PlanningModel::build(&inputs, &solver)?;
    Ok((model, solver))
}

pub fn run_solve(cfg: &RunConfig) -> Result<SolveSummary, PipelineError> {
    let (model, _) = build_model(cfg)?;
    let solution = solve_backward(&model);
    let start_value = solution.start_value(&model);
    if start_value == f64::NEG_INFINITY {
        return Err(PipelineError::Infeasible(
            "the start state has no feasible action sequence".into(),
        ));
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("network".to_string(), file_hash(&cfg.out_path(NETWORK))?);
    inputs.insert("demand".to_string(), file_hash(&cfg.out_path(DEMAND))?);
    inputs.insert("stations_csv".to_string(), file_hash(&cfg.paths.stations)?);
    let data = PolicyData {
        junction_ids: model.junction_ids().iter().map(|j| j.0).collect(),
        n_act: model.n_act(),
        start_junction: model.junction_ids()[model.start_node].0,
        start_bin: model.start_bin,
        start_value_usd: start_value,
        policy: solution.policy,
    };
    let policy_path = cfg.out_path(policy_file(cfg));
    write_artifact(&policy_path, "policy", &cfg.hash(), inputs.clone(), &data)?;
    write_artifact(
        &cfg.out_path(values_file(cfg)),
        "value_table",
        &cfg.hash(),
        inputs,
        &solution.values,
    )?;
    Ok(SolveSummary {
        start_junction: data.start_junction,
        start_value_usd: start_value,
        states: data.policy.ranked.len(),
        policy_path,
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Serialize, Deserialize)]
struct ResultsData {
    n_taxis: usize,
    seed: u64,
    powertrain: Powertrain,
    results: Vec<ShiftResult>,
    capacity_violations: u64,
    forced_stalls: u64,
    forced_overflows: u64,
}

#[derive(Debug, Serialize)]
pub struct SimSummary {
    pub n_taxis: usize,
    pub mean_net_revenue_usd: f64,
    pub trips_served: u64,
    pub results_path: PathBuf,
}

pub fn run_simulate(cfg: &RunConfig) -> Result<SimSummary, PipelineError> {
    let (model, _) = build_model(cfg)?;
    let policy_path = cfg.out_path(policy_file(cfg));
    let art: crate::artifact::Artifact<PolicyData> = read_artifact(&policy_path, "policy")?;
    verify_input(&policy_path, &art.meta, "network", &file_hash(&cfg.out_path(NETWORK))?)?;
    verify_input(&policy_path, &art.meta, "demand", &file_hash(&cfg.out_path(DEMAND))?)?;
    let policy = art.data.policy;
    if art.data.n_act != model.n_act() {
        return Err(PipelineError::Data(
            "policy was solved on a different action set".into(),
        ));
    }

    let trips = load_trip_store(cfg)?;
    let net = load_network(cfg)?;
    let action_set: Vec<JunctionId> =
        model.junction_ids().iter().take(model.n_act()).copied().collect();
    let relabeled = estimation::relabel_trips(&trips, net.graph(), &action_set)?;
    let observed = fleet_sim::shift_start_states(&relabeled, cfg.solver.shift, &model);
    let fallback = StartState { node: model.start_node, t: 0, bin: model.start_bin };
    let starts =
        fleet_sim::sample_start_states(&observed, fallback, cfg.sim.n_taxis, cfg.sim.seed);

    let capacities = if cfg.sim.capacity_from_data {
        fleet_sim::junction_capacity_from_data(&relabeled, cfg.sim.max_presence_gap_min)
    } else {
        BTreeMap::new()
    };
    let fleet_cfg = FleetConfig {
        n_taxis: cfg.sim.n_taxis,
        seed: cfg.sim.seed,
        capacities,
        default_capacity: cfg.sim.default_capacity,
    };
    let outcome = fleet_sim::rollout_fleet(&model, &policy, &fleet_cfg, &starts)?;

    let results_json = cfg.out_path(RESULTS_JSON);
    let mut inputs = BTreeMap::new();
    inputs.insert("policy".to_string(), file_hash(&policy_path)?);
    let data = ResultsData {
        n_taxis: cfg.sim.n_taxis,
        seed: cfg.sim.seed,
        powertrain: cfg.vehicle.powertrain,
        results: outcome.results,
        capacity_violations: outcome.capacity_violations,
        forced_stalls: outcome.forced_stalls,
        forced_overflows: outcome.forced_overflows,
    };
    write_artifact(&results_json, "sim_results", &cfg.hash(), inputs, &data)?;
    fs::write(cfg.out_path(RESULTS_CSV), results_csv(&data.results))
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    let (mean, _) = mean_net_revenue(&data.results);
    Ok(SimSummary {
        n_taxis: cfg.sim.n_taxis,
        mean_net_revenue_usd: mean,
        trips_served: data.results.iter().map(|r| r.trips_served as u64).sum(),
        results_path: results_json,
    })
}

fn results_csv(results: &[ShiftResult]) -> String {
    let mut out = String::from(
        "taxi,net_revenue_usd,fares_usd,energy_cost_usd,trips_served,delivery_km,total_km,\
         energy_consumed_kwh,energy_charged_kwh,energy_from_battery_kwh,charge_events,\
         hours_worked,end_soc_kwh,min_soc_kwh,dead_end\n",
    );
    for (i, r) in results.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.net_revenue_usd,
            r.fares_usd,
            r.energy_cost_usd,
            r.trips_served,
            r.delivery_km,
            r.total_km,
            r.energy_consumed_kwh,
            r.energy_charged_kwh,
            r.energy_from_battery_kwh,
            r.charge_events.len(),
            r.hours_worked,
            r.end_soc_kwh,
            r.min_soc_kwh,
            r.dead_end,
        )
        .expect("write to string");
    }
    out
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Serialize, Deserialize)]
pub struct DistributionStats {
    pub mean: f64,
    pub std_err: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

fn distribution(values: &mut [f64]) -> DistributionStats {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var =
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    DistributionStats {
        mean,
        std_err: (var / n).sqrt(),
        min: values[0],
        median: crate::road_network::median(values),
        max: values[values.len() - 1],
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportData {
    pub shifts: usize,
    pub net_revenue_usd: DistributionStats,
    pub trips_served: u64,
    pub delivery_km: f64,
    pub total_km: f64,
    pub energy_consumed_kwh: f64,
    pub energy_charged_kwh: f64,
    pub energy_from_battery_kwh: f64,
    pub emissions: Option<EmissionReport>,
    pub capacity_violations: u64,
    pub forced_stalls: u64,
}

#[derive(Debug, Serialize)]
pub struct ReportSummary {
    pub shifts: usize,
    pub mean_net_revenue_usd: f64,
    pub co2_kg: Option<f64>,
    pub report_path: PathBuf,
}

pub fn run_report(cfg: &RunConfig) -> Result<ReportSummary, PipelineError> {
    let results_path = cfg.out_path(RESULTS_JSON);
    let art: crate::artifact::Artifact<ResultsData> =
        read_artifact(&results_path, "sim_results")?;
    let d = art.data;
    if d.results.is_empty() {
        return Err(PipelineError::Data("no simulation results to report".into()));
    }
    let mut revenues: Vec<f64> = d.results.iter().map(|r| r.net_revenue_usd).collect();
    let emissions = cfg
        .sim
        .emissions
        .then(|| emission_report(&d.results, d.powertrain, cfg.prices.gallon_kwh_equivalent));
    let report = ReportData {
        shifts: d.results.len(),
        net_revenue_usd: distribution(&mut revenues),
        trips_served: d.results.iter().map(|r| r.trips_served as u64).sum(),
        delivery_km: d.results.iter().map(|r| r.delivery_km).sum(),
        total_km: d.results.iter().map(|r| r.total_km).sum(),
        energy_consumed_kwh: d.results.iter().map(|r| r.energy_consumed_kwh).sum(),
        energy_charged_kwh: d.results.iter().map(|r| r.energy_charged_kwh).sum(),
        energy_from_battery_kwh: d.results.iter().map(|r| r.energy_from_battery_kwh).sum(),
        emissions,
        capacity_violations: d.capacity_violations,
        forced_stalls: d.forced_stalls,
    };
    let mut inputs = BTreeMap::new();
    inputs.insert("results".to_string(), file_hash(&results_path)?);
    let report_path = cfg.out_path(REPORT);
    write_artifact(&report_path, "report", &cfg.hash(), inputs, &report)?;
    Ok(ReportSummary {
        shifts: report.shifts,
        mean_net_revenue_usd: report.net_revenue_usd.mean,
        co2_kg: report.emissions.map(|e| e.co2_kg),
        report_path,
    })
}

/// Rebuilds the planning model exactly as `solve`/`simulate` do; used by
/// tests and tooling that need in-process access to the tables.
pub fn planning_model(cfg: &RunConfig) -> Result<PlanningModel, PipelineError> {
    Ok(build_model(cfg)?.0)
}

/// In-process solve (model + solution), bypassing artifact I/O.
pub fn solve_in_process(cfg: &RunConfig) -> Result<(PlanningModel, Solution), PipelineError> {
    let (model, _) = build_model(cfg)?;
    let solution = solve_backward(&model);
    Ok((model, solution))
}

/// Reads back a solved value table (for consistency checks).
pub fn load_values(cfg: &RunConfig) -> Result<ValueTable, PipelineError> {
    let art: crate::artifact::Artifact<ValueTable> =
        read_artifact(&cfg.out_path(values_file(cfg)), "value_table")?;
    Ok(art.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet_sim::synth::SynthConfig;

    fn synth_config(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.paths.trips = dir.join("trips.csv");
        cfg.paths.graph = dir.join("graph.json");
        cfg.paths.stations = dir.join("stations.csv");
        cfg.paths.holidays = Some(dir.join("holidays.csv"));
        cfg.paths.out_dir = dir.join("out");
        cfg.synth = SynthConfig { n_taxis: 20, ..SynthConfig::default() };
        cfg.solver.horizon_min = 120;
        cfg.solver.battery_bin_frac = 0.02;
        cfg.solver.aggregation_k = 12;
        cfg.sim.n_taxis = 2;
        cfg
    }

    #[test]
    fn full_pipeline_runs_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_config(dir.path());
        let run_all = || {
            run_synth(&cfg).unwrap();
            let ingest = run_ingest(&cfg).unwrap();
            assert!(ingest.kept > 0);
            run_build_network(&cfg).unwrap();
            run_estimate(&cfg).unwrap();
            let solve = run_solve(&cfg).unwrap();
            assert!(solve.start_value_usd.is_finite());
            let sim = run_simulate(&cfg).unwrap();
            assert_eq!(sim.n_taxis, 2);
            let report = run_report(&cfg).unwrap();
            assert_eq!(report.shifts, 2);
        };
        run_all();
        let artifacts = [
            TRIP_STORE,
            REJECT_REPORT,
            NETWORK,
            DEMAND,
            "policy.json",
            "values.json",
            RESULTS_JSON,
            RESULTS_CSV,
            REPORT,
        ];
        let first: Vec<Vec<u8>> =
            artifacts.iter().map(|f| fs::read(cfg.out_path(f)).unwrap()).collect();
        run_all();
        for (f, before) in artifacts.iter().zip(&first) {
            let after = fs::read(cfg.out_path(f)).unwrap();
            assert_eq!(before, &after, "artifact {f} differs between runs");
        }
    }

    #[test]
    fn simulate_rejects_stale_policy() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synth_config(dir.path());
        run_synth(&cfg).unwrap();
        run_ingest(&cfg).unwrap();
        run_build_network(&cfg).unwrap();
        run_estimate(&cfg).unwrap();
        run_solve(&cfg).unwrap();
        // Rebuild the demand model with a different aggregation: the stored
        // policy no longer matches its recorded input hash.
        cfg.solver.aggregation_k = 6;
        run_estimate(&cfg).unwrap();
        let err = run_simulate(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }
}
