//! Precomputed per-hour tables the solver and simulator run on.
//!
//! The planning node set is the demand model's junction set (the aggregated
//! action space) plus any charging-station junctions referenced as nearest
//! stations. For every ordered node pair the shortest path is resolved once,
//! then travel time, energy and fare are derived per hour of day.
//!
//! Deliveries between nodes that aggregate to the same junction still take
//! one minute of clock time so the decision process always advances.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::energy_model::{trip_energy_kwh, Battery, ChargingMode, EnergyParams};
use crate::estimation::DemandModel;
use crate::fare_model::{fare_usd, EnergyPrice, FareTime, MeterInputs, Powertrain, Tariff};
use crate::road_network::{
    ChargingStation, JunctionId, NetworkError, PathOracle, SpeedNetwork, StationIndex,
    TravelEstimate,
};

use super::{SolverConfig, FEAS_EPS};

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("electric run requires a charging station supporting the configured mode")]
    MissingStations,
    #[error("demand model has no junctions")]
    EmptyDemand,
    #[error("invalid solver config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Discretized usable battery window.
///
/// A bin's representative state of charge is its lower edge, so feasibility
/// is never overstated: consumption rounds battery down, charging rounds
/// down to the containing bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryGrid {
    b_low: f64,
    b_high: f64,
    width: f64,
    n_bins: usize,
}

impl BatteryGrid {
    pub fn new(battery: &Battery, bin_frac: f64) -> Self {
        let width = (battery.capacity_kwh * bin_frac).max(1e-9);
        let span = battery.b_high() - battery.b_low();
        let n_bins = (span / width + FEAS_EPS).floor() as usize + 1;
        BatteryGrid { b_low: battery.b_low(), b_high: battery.b_high(), width, n_bins }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn b_low(&self) -> f64 {
        self.b_low
    }

    pub fn b_high(&self) -> f64 {
        self.b_high
    }

    pub fn soc_of(&self, bin: usize) -> f64 {
        (self.b_low + bin as f64 * self.width).min(self.b_high)
    }

    /// Containing bin, rounding down; `None` below the usable floor.
    pub fn bin_of(&self, kwh: f64) -> Option<usize> {
        if kwh < self.b_low - FEAS_EPS {
            return None;
        }
        let raw = ((kwh - self.b_low) / self.width + FEAS_EPS).floor();
        Some((raw.max(0.0) as usize).min(self.n_bins - 1))
    }
}

/// Everything the table builder needs, borrowed from the pipeline stages.
pub struct ModelInputs<'a> {
    pub net: &'a SpeedNetwork,
    pub stations: &'a [ChargingStation],
    pub demand: &'a DemandModel,
    pub energy: &'a EnergyParams,
    pub battery: Battery,
    pub charge: ChargingMode,
    pub tariff: &'a Tariff,
    pub price: EnergyPrice,
    pub powertrain: Powertrain,
}

/// Flat per-hour tables over the planning node set. Index layout:
/// `(hour * n_all + i) * n_all + j` for pair tables, `hour * n_all + i` for
/// node tables. `u16::MAX` travel time and infinite energy mark unreachable
/// pairs.
#[derive(Debug, Clone)]
pub struct RawTables {
    pub junction_ids: Vec<JunctionId>,
    pub n_act: usize,
    pub tt_min: Vec<u16>,
    pub dist_km: Vec<f64>,
    pub energy_kwh: Vec<f64>,
    pub fare_gross_usd: Vec<f64>,
    /// Reserve energy to the nearest station, `hour * n_all + i`.
    pub reserve_kwh: Vec<f64>,
    /// Node index of the nearest station's junction, per action node.
    pub station_node: Vec<Option<u16>>,
    /// Station id per action node (for charge-event reporting).
    pub station_label: Vec<Option<String>>,
    /// `hour * n_act + i`.
    pub pickup_prob: Vec<f64>,
    /// Raw Eq-(2) window counts behind `pickup_prob`, `hour * n_act + i`.
    pub pickup_window: Vec<u64>,
    pub dropoff_window: Vec<u64>,
    /// `hour * n_act + i` → sorted (destination action node, probability).
    pub dest_rows: Vec<Vec<(u16, f64)>>,
    /// Move targets per action node (always includes the node itself).
    pub targets: Vec<Vec<u16>>,
}

/// Immutable solve/simulation context: tables plus battery, pricing and
/// clock configuration.
pub struct PlanningModel {
    tables: RawTables,
    fare_net_usd: Vec<f64>,
    pub grid: BatteryGrid,
    pub battery: Battery,
    pub charge: ChargingMode,
    pub powertrain: Powertrain,
    pub unit_usd_per_kwh: f64,
    pub tau_grid: Vec<u32>,
    pub horizon: u32,
    pub anchor_min: u32,
    pub strict_paper: bool,
    pub rank_depth: usize,
    pub start_node: usize,
    pub start_bin: usize,
}

impl PlanningModel {
    pub fn build(inputs: &ModelInputs<'_>, cfg: &SolverConfig) -> Result<Self, SolveError> {
        let demand = inputs.demand;
        if demand.is_empty() {
            return Err(SolveError::EmptyDemand);
        }
        let graph = inputs.net.graph();
        let n_act = demand.len();

        // Stations usable in this run: must support the configured mode.
        let usable: Vec<ChargingStation> = inputs
            .stations
            .iter()
            .filter(|s| s.modes.contains(&inputs.charge.kind))
            .cloned()
            .collect();
        let station_index = if usable.is_empty() {
            None
        } else {
            Some(StationIndex::build(graph, usable)?)
        };
        if inputs.powertrain == Powertrain::Electric && station_index.is_none() {
            return Err(SolveError::MissingStations);
        }

        // Node set: action junctions, then any station junctions not present.
        let mut junction_ids: Vec<JunctionId> = demand.junctions().to_vec();
        let mut station_node = vec![None; n_act];
        let mut station_label = vec![None; n_act];
        if let (Some(idx), Powertrain::Electric) = (&station_index, inputs.powertrain) {
            let mut extras: Vec<JunctionId> = Vec::new();
            for (i, &id) in demand.junctions().iter().enumerate() {
                let g = graph.index_of(id)?;
                if let Some((st, _)) = idx.nearest(g) {
                    if !demand.junctions().contains(&st.junction)
                        && !extras.contains(&st.junction)
                    {
                        extras.push(st.junction);
                    }
                    station_label[i] = Some(st.id.clone());
                }
            }
            extras.sort_unstable();
            junction_ids.extend(extras);
        }
        let n_all = junction_ids.len();
        let node_of: HashMap<JunctionId, u16> =
            junction_ids.iter().enumerate().map(|(i, &id)| (id, i as u16)).collect();
        if let (Some(idx), Powertrain::Electric) = (&station_index, inputs.powertrain) {
            for (i, &id) in demand.junctions().iter().enumerate() {
                let g = graph.index_of(id)?;
                station_node[i] = idx.nearest(g).map(|(st, _)| node_of[&st.junction]);
            }
        }

        // Resolve every pair once, then derive the hourly tables.
        let graph_idx: Vec<usize> = junction_ids
            .iter()
            .map(|&id| graph.index_of(id))
            .collect::<Result<_, _>>()?;
        let mut tt_min = vec![u16::MAX; 24 * n_all * n_all];
        let mut dist_km = vec![f64::INFINITY; n_all * n_all];
        let mut energy_kwh = vec![f64::INFINITY; 24 * n_all * n_all];
        let mut fare_gross_usd = vec![0.0; 24 * n_all * n_all];
        let mut oracle = PathOracle::new(graph);
        for i in 0..n_all {
            for j in 0..n_all {
                let pair = i * n_all + j;
                if i == j || graph_idx[i] == graph_idx[j] {
                    dist_km[pair] = 0.0;
                    for h in 0..24 {
                        let cell = h * n_all * n_all + pair;
                        tt_min[cell] = 0;
                        energy_kwh[cell] = 0.0;
                        fare_gross_usd[cell] = fare_usd(
                            fare_time(h, cfg),
                            &MeterInputs::default(),
                            inputs.tariff,
                        );
                    }
                    continue;
                }
                let Some((edges, km)) = oracle.edge_path(graph_idx[i], graph_idx[j]) else {
                    continue;
                };
                dist_km[pair] = km;
                for h in 0..24 {
                    let (est, meter) = hourly_stats(inputs.net, &edges, km, h, inputs.tariff);
                    let cell = h * n_all * n_all + pair;
                    tt_min[cell] = est.total_min.min(u16::MAX as u32 - 1) as u16;
                    energy_kwh[cell] = trip_energy_kwh(inputs.energy, &est);
                    fare_gross_usd[cell] = fare_usd(fare_time(h, cfg), &meter, inputs.tariff);
                }
            }
        }

        // Reserve energy to the nearest station per action node and hour.
        let mut reserve_kwh = vec![0.0f64; 24 * n_all];
        if inputs.powertrain == Powertrain::Electric {
            for i in 0..n_act {
                match station_node[i] {
                    Some(s) => {
                        for h in 0..24 {
                            reserve_kwh[h * n_all + i] =
                                energy_kwh[(h * n_all + i) * n_all + s as usize];
                        }
                    }
                    None => {
                        for h in 0..24 {
                            reserve_kwh[h * n_all + i] = f64::INFINITY;
                        }
                    }
                }
            }
        }

        let mut pickup_prob = vec![0.0f64; 24 * n_act];
        let mut pickup_window = vec![0u64; 24 * n_act];
        let mut dropoff_window = vec![0u64; 24 * n_act];
        let mut dest_rows: Vec<Vec<(u16, f64)>> = vec![Vec::new(); 24 * n_act];
        for i in 0..n_act {
            for h in 0..24 {
                pickup_prob[h * n_act + i] = demand.pickup_probability(i, h as u32 * 60);
                let (np, nd) = demand.window_counts(i, h);
                pickup_window[h * n_act + i] = np;
                dropoff_window[h * n_act + i] = nd;
                dest_rows[h * n_act + i] = demand
                    .destination_row(i, h)
                    .iter()
                    .map(|&(k, p)| (k as u16, p))
                    .collect();
            }
        }

        let targets: Vec<Vec<u16>> = if cfg.full_adjacency {
            (0..n_act)
                .map(|i| {
                    let mut t: Vec<u16> = graph
                        .neighbors(graph_idx[i])
                        .filter_map(|g| node_of.get(&graph.id_of(g)).copied())
                        .filter(|&n| (n as usize) < n_act)
                        .collect();
                    t.push(i as u16);
                    t.sort_unstable();
                    t.dedup();
                    t
                })
                .collect()
        } else {
            let all: Vec<u16> = (0..n_act as u16).collect();
            vec![all; n_act]
        };

        let raw = RawTables {
            junction_ids,
            n_act,
            tt_min,
            dist_km,
            energy_kwh,
            fare_gross_usd,
            reserve_kwh,
            station_node,
            station_label,
            pickup_prob,
            pickup_window,
            dropoff_window,
            dest_rows,
            targets,
        };
        Self::from_tables(raw, inputs.battery, inputs.charge, inputs.price, inputs.powertrain, cfg)
    }

    /// Assembles a model from prebuilt tables (also the entry point for
    /// synthetic micro instances in tests).
    pub fn from_tables(
        tables: RawTables,
        battery: Battery,
        charge: ChargingMode,
        price: EnergyPrice,
        powertrain: Powertrain,
        cfg: &SolverConfig,
    ) -> Result<Self, SolveError> {
        let n_all = tables.junction_ids.len();
        let n_act = tables.n_act;
        if n_act == 0 || n_act > n_all {
            return Err(SolveError::BadConfig("empty action set".into()));
        }
        if cfg.battery_bin_frac <= 0.0 || cfg.battery_bin_frac > 1.0 {
            return Err(SolveError::BadConfig("battery_bin_frac outside (0, 1]".into()));
        }
        let unit = price.unit_usd_per_kwh(powertrain);
        let mut fare_net_usd = vec![0.0f64; tables.fare_gross_usd.len()];
        for (cell, net) in fare_net_usd.iter_mut().enumerate() {
            let e = tables.energy_kwh[cell];
            *net = if e.is_finite() { tables.fare_gross_usd[cell] - e * unit } else { 0.0 };
        }
        let mut tau_grid = vec![0u32];
        let charging_possible =
            powertrain == Powertrain::Electric && tables.station_node.iter().any(Option::is_some);
        if charging_possible {
            tau_grid.extend(cfg.tau_grid_min.iter().copied().filter(|&t| t > 0));
            tau_grid.sort_unstable();
            tau_grid.dedup();
        }
        let grid = BatteryGrid::new(&battery, cfg.battery_bin_frac);
        let start_soc = (cfg.start_soc_frac * battery.capacity_kwh)
            .clamp(battery.b_low(), battery.b_high());
        let start_bin = grid.bin_of(start_soc).unwrap_or(0);
        let start_node = match cfg.start_junction {
            Some(id) => tables
                .junction_ids
                .iter()
                .position(|&j| j == id)
                .filter(|&i| i < n_act)
                .ok_or_else(|| {
                    SolveError::BadConfig(format!("start junction {id} not in the action set"))
                })?,
            None => {
                let h0 = ((cfg.shift.anchor_minute() / 60) % 24) as usize;
                (0..n_act)
                    .max_by(|&a, &b| {
                        tables.pickup_prob[h0 * n_act + a]
                            .total_cmp(&tables.pickup_prob[h0 * n_act + b])
                    })
                    .unwrap_or(0)
            }
        };
        Ok(PlanningModel {
            tables,
            fare_net_usd,
            grid,
            battery,
            charge,
            powertrain,
            unit_usd_per_kwh: unit,
            tau_grid,
            horizon: cfg.horizon_min,
            anchor_min: cfg.shift.anchor_minute(),
            strict_paper: cfg.strict_paper_energy_term,
            rank_depth: cfg.rank_depth.max(1),
            start_node,
            start_bin,
        })
    }

    pub fn n_act(&self) -> usize {
        self.tables.n_act
    }

    pub fn n_all(&self) -> usize {
        self.tables.junction_ids.len()
    }

    pub fn junction_ids(&self) -> &[JunctionId] {
        &self.tables.junction_ids
    }

    pub fn hour_of(&self, t: u32) -> usize {
        (((self.anchor_min + t) / 60) % 24) as usize
    }

    #[inline]
    fn pair(&self, hour: usize, i: usize, j: usize) -> usize {
        (hour * self.n_all() + i) * self.n_all() + j
    }

    /// Whole-minute travel time, `None` when unreachable.
    #[inline]
    pub fn tt_min(&self, hour: usize, i: usize, j: usize) -> Option<u32> {
        let v = self.tables.tt_min[self.pair(hour, i, j)];
        (v != u16::MAX).then_some(v as u32)
    }

    #[inline]
    pub fn energy_kwh(&self, hour: usize, i: usize, j: usize) -> f64 {
        self.tables.energy_kwh[self.pair(hour, i, j)]
    }

    #[inline]
    pub fn fare_gross_usd(&self, hour: usize, i: usize, j: usize) -> f64 {
        self.tables.fare_gross_usd[self.pair(hour, i, j)]
    }

    /// Net delivery revenue `F`: fare minus trip energy cost.
    #[inline]
    pub fn fare_net_usd(&self, hour: usize, i: usize, j: usize) -> f64 {
        self.fare_net_usd[self.pair(hour, i, j)]
    }

    pub fn dist_km(&self, i: usize, j: usize) -> f64 {
        self.tables.dist_km[i * self.n_all() + j]
    }

    /// Energy needed to reach the nearest charging station (0 for ICE).
    #[inline]
    pub fn reserve_kwh(&self, hour: usize, i: usize) -> f64 {
        if i < self.tables.n_act {
            self.tables.reserve_kwh[hour * self.n_all() + i]
        } else {
            0.0
        }
    }

    pub fn station_node(&self, i: usize) -> Option<usize> {
        self.tables.station_node[i].map(|s| s as usize)
    }

    pub fn station_label(&self, i: usize) -> Option<&str> {
        self.tables.station_label[i].as_deref()
    }

    #[inline]
    pub fn pickup_prob(&self, hour: usize, i: usize) -> f64 {
        self.tables.pickup_prob[hour * self.tables.n_act + i]
    }

    /// Pick-up probability with `competitors` tracked policy taxis co-located
    /// at the junction (the deciding taxi excluded). With none tracked the
    /// historical estimate stands; otherwise the tracked taxis join the
    /// drop-off-based competitor count in the Eq-(2) ratio.
    pub fn fleet_pickup_prob(&self, hour: usize, i: usize, competitors: u64) -> f64 {
        if competitors == 0 {
            return self.pickup_prob(hour, i);
        }
        let cell = hour * self.tables.n_act + i;
        crate::estimation::pickup_ratio(
            self.tables.pickup_window[cell],
            self.tables.dropoff_window[cell] + competitors,
        )
    }

    #[inline]
    pub fn dest_row(&self, hour: usize, i: usize) -> &[(u16, f64)] {
        &self.tables.dest_rows[hour * self.tables.n_act + i]
    }

    pub fn targets(&self, i: usize) -> &[u16] {
        &self.tables.targets[i]
    }

    pub fn tables(&self) -> &RawTables {
        &self.tables
    }

    /// Reachable destination mass `P^s` at (hour, junction) for a binned
    /// battery level: total probability of destinations whose delivery plus
    /// station reserve stays above the floor.
    pub fn reachable_mass(&self, hour: usize, j: usize, soc_kwh: f64) -> f64 {
        self.dest_row(hour, j)
            .iter()
            .filter(|&&(k, _)| self.destination_feasible(hour, j, k as usize, soc_kwh))
            .map(|&(_, p)| p)
            .sum()
    }

    /// C1 feasibility: deliver `j -> k` and still reach `r(k)`.
    #[inline]
    pub fn destination_feasible(&self, hour: usize, j: usize, k: usize, soc_kwh: f64) -> bool {
        let e = self.energy_kwh(hour, j, k);
        e.is_finite() && e + self.reserve_kwh(hour, k) + self.grid.b_low() <= soc_kwh + FEAS_EPS
    }
}

fn fare_time(hour: usize, cfg: &SolverConfig) -> FareTime {
    FareTime { minute_of_day: hour as u32 * 60, weekday: cfg.weekday, holiday: cfg.holiday }
}

/// Travel estimate and meter inputs for one edge path at one hour.
fn hourly_stats(
    net: &SpeedNetwork,
    edges: &[u32],
    distance_km: f64,
    hour: usize,
    tariff: &Tariff,
) -> (TravelEstimate, MeterInputs) {
    let est = net.estimate_for_edges(edges, distance_km, hour);
    let mut fast_km = 0.0;
    let mut slow_min = est.idling_min;
    for &e in edges {
        let speed = net.edge_speed(e, hour);
        let len = net.graph().edge_km(e);
        if speed >= tariff.slow_speed_kmh {
            fast_km += len;
        } else {
            slow_min += len / speed * 60.0;
        }
    }
    (est, MeterInputs { fast_miles: fast_km / crate::fare_model::KM_PER_MILE, slow_minutes: slow_min })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_grid_rounds_pessimistically() {
        let grid = BatteryGrid::new(&Battery::new(30.0), 0.01); // 0.3 kWh bins
        assert_eq!(grid.n_bins(), 91);
        assert_eq!(grid.soc_of(0), 1.5);
        assert_eq!(grid.soc_of(90), 28.5);
        // Mid-bin values floor down.
        assert_eq!(grid.bin_of(1.75), Some(0));
        assert_eq!(grid.bin_of(1.8), Some(1));
        // Below the floor is infeasible.
        assert_eq!(grid.bin_of(1.4), None);
        // Above the ceiling clamps to the top bin.
        assert_eq!(grid.bin_of(29.9), Some(90));
    }

    #[test]
    fn grid_bin_of_is_inverse_of_soc_of() {
        let grid = BatteryGrid::new(&Battery::new(50.0), 0.02);
        for bin in 0..grid.n_bins() {
            assert_eq!(grid.bin_of(grid.soc_of(bin)), Some(bin), "bin {bin}");
        }
    }
}
