//! Policy evaluation by stochastic rollout, for one taxi or a fleet under
//! junction-capacity constraints, with revenue, energy and CO₂ reporting.

mod engine;
pub mod synth;

pub use engine::{ChargeEvent, ShiftResult, SimError, StartState};

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimation::DemandModel;
use crate::fare_model::Powertrain;
use crate::mdp_solver::{
    solve_backward, ModelInputs, PlanningModel, Policy, SolveError, SolverConfig,
};
use crate::road_network::JunctionId;
use crate::trip_ingest::{Shift, SnappedTrip};

use engine::{simulate, FleetCtx};

/// US liquid gallon in liters (as used for the gasoline equivalence).
pub const GALLON_LITERS: f64 = 3.785;
/// Grid electricity emission factor, kg CO₂ per kWh (eGRID Long Island).
pub const CO2_KG_PER_KWH: f64 = 0.7007;
/// Gasoline emission factor, kg CO₂ per liter.
pub const CO2_KG_PER_LITER: f64 = 2.348;

/// Simulation block of the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_taxis: usize,
    pub seed: u64,
    /// Derive per-junction capacities from taxi presence in the trip data;
    /// otherwise every junction gets `default_capacity`.
    pub capacity_from_data: bool,
    pub default_capacity: u32,
    /// Presence intervals longer than this are treated as off-duty.
    pub max_presence_gap_min: f64,
    pub emissions: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_taxis: 1,
            seed: 7,
            capacity_from_data: true,
            default_capacity: 1,
            max_presence_gap_min: 120.0,
            emissions: true,
        }
    }
}

/// Simulates one taxi-shift under the solved policy, deterministic in the
/// seed.
pub fn rollout_single(
    m: &PlanningModel,
    policy: &Policy,
    start: StartState,
    seed: u64,
) -> Result<ShiftResult, SimError> {
    Ok(simulate(m, policy, &[start], &[seed], None)?.remove(0))
}

/// Independent seeded rollouts `seed0, seed0+1, …`, evaluated in parallel.
pub fn rollout_many(
    m: &PlanningModel,
    policy: &Policy,
    start: StartState,
    seed0: u64,
    n: usize,
) -> Result<Vec<ShiftResult>, SimError> {
    (0..n)
        .into_par_iter()
        .map(|i| rollout_single(m, policy, start, seed0.wrapping_add(i as u64)))
        .collect()
}

/// Mean and standard error of net revenue over rollouts.
pub fn mean_net_revenue(results: &[ShiftResult]) -> (f64, f64) {
    let n = results.len() as f64;
    let mean = results.iter().map(|r| r.net_revenue_usd).sum::<f64>() / n;
    let var = results
        .iter()
        .map(|r| (r.net_revenue_usd - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetConfig {
    pub n_taxis: usize,
    pub seed: u64,
    /// Per-junction concurrent policy-taxi limits; junctions not listed get
    /// `default_capacity`. All limits are at least 1.
    pub capacities: BTreeMap<u64, u32>,
    pub default_capacity: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetOutcome {
    pub results: Vec<ShiftResult>,
    /// Per-slot routed commits that exceeded a junction capacity (0 when the
    /// constraint held everywhere).
    pub capacity_violations: u64,
    /// Times a taxi held position because every ranked target was full.
    pub forced_stalls: u64,
    /// Times capacity had to yield to battery feasibility.
    pub forced_overflows: u64,
}

impl FleetOutcome {
    pub fn mean_net_revenue(&self) -> f64 {
        mean_net_revenue(&self.results).0
    }
}

/// Evaluates the policy on `n_taxis` concurrently, honoring junction
/// capacities: a taxi takes its best ranked action whose target has room,
/// falling back down the ranking and finally stalling one slot. Pick-up
/// probabilities at junctions hosting several policy taxis are recomputed
/// with the tracked count joining the competitor term.
///
/// Taxi `i` draws from the same stream as `rollout_single` with seed
/// `seed + i`, so a one-taxi fleet reproduces the single rollout exactly.
pub fn rollout_fleet(
    m: &PlanningModel,
    policy: &Policy,
    cfg: &FleetConfig,
    starts: &[StartState],
) -> Result<FleetOutcome, SimError> {
    let cap: Vec<u32> = m
        .junction_ids()
        .iter()
        .take(m.n_act())
        .map(|id| cfg.capacities.get(&id.0).copied().unwrap_or(cfg.default_capacity).max(1))
        .collect();
    let mut ctx = FleetCtx::new(cap);
    let seeds: Vec<u64> =
        (0..starts.len()).map(|i| cfg.seed.wrapping_add(i as u64)).collect();
    let results = simulate(m, policy, starts, &seeds, Some(&mut ctx))?;
    Ok(FleetOutcome {
        results,
        capacity_violations: ctx.capacity_violations,
        forced_stalls: ctx.forced_stalls,
        forced_overflows: ctx.forced_overflows,
    })
}

/// Per-junction capacity from observed taxi presence: a taxi is "present"
/// at its drop-off junction until its next pick-up (gaps longer than the
/// cap are off-duty). The capacity is the presence-minute mean over all
/// timeslots of the observed days, rounded up, at least 1.
pub fn junction_capacity_from_data(
    trips: &[SnappedTrip],
    max_gap_min: f64,
) -> BTreeMap<u64, u32> {
    let mut by_taxi: BTreeMap<&str, Vec<&SnappedTrip>> = BTreeMap::new();
    let mut dates: BTreeSet<chrono::NaiveDate> = BTreeSet::new();
    for t in trips {
        by_taxi.entry(&t.taxi_id).or_default().push(t);
        dates.insert(t.pickup_time.date());
    }
    let total_minutes = (dates.len().max(1) as u64) * 1440;
    let mut presence_min: BTreeMap<JunctionId, u64> = BTreeMap::new();
    for (_, mut seq) in by_taxi {
        seq.sort_by_key(|t| t.pickup_time);
        for pair in seq.windows(2) {
            let from = pair[0].dropoff_time();
            let until = pair[1].pickup_time;
            let gap = (until - from).num_minutes();
            if gap <= 0 || gap as f64 > max_gap_min {
                continue;
            }
            *presence_min.entry(pair[0].dest).or_insert(0) += gap as u64;
        }
    }
    presence_min
        .into_iter()
        .map(|(j, mins)| {
            let mean = mins as f64 / total_minutes as f64;
            (j.0, (mean.ceil() as u32).max(1))
        })
        .collect()
}

/// Observed shift-start states: each taxi's first pick-up of the shift per
/// day, mapped into the model's action set.
pub fn shift_start_states(
    trips: &[SnappedTrip],
    shift: Shift,
    m: &PlanningModel,
) -> Vec<StartState> {
    let mut firsts: BTreeMap<(String, chrono::NaiveDate), &SnappedTrip> = BTreeMap::new();
    for t in trips {
        if t.shift != shift {
            continue;
        }
        // Evening shifts span midnight; hours before 5 AM belong to the
        // previous day's shift.
        let mut date = t.pickup_time.date();
        if shift == Shift::Evening && t.pickup_time.hour() < 5 {
            date -= chrono::Duration::days(1);
        }
        firsts
            .entry((t.taxi_id.clone(), date))
            .and_modify(|cur| {
                if t.pickup_time < cur.pickup_time {
                    *cur = t;
                }
            })
            .or_insert(t);
    }
    let node_of: BTreeMap<JunctionId, usize> = m
        .junction_ids()
        .iter()
        .take(m.n_act())
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let mut out = Vec::new();
    for t in firsts.values() {
        let Some(&node) = node_of.get(&t.origin) else { continue };
        let slot = t.start_slot as u32;
        if slot >= m.horizon {
            continue;
        }
        out.push(StartState { node, t: slot, bin: m.start_bin });
    }
    out
}

/// Uniform sample (with replacement) of `n` observed start states.
pub fn sample_start_states(
    observed: &[StartState],
    fallback: StartState,
    n: usize,
    seed: u64,
) -> Vec<StartState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if observed.is_empty() {
                fallback
            } else {
                observed[rng.random_range(0..observed.len())]
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionReport {
    pub electricity_kwh: f64,
    pub gasoline_liters: f64,
    pub co2_kg: f64,
}

/// CO₂ totals for the consumed energy: grid factor for electric taxis,
/// gasoline converted through its kWh equivalence for ICE.
pub fn emission_report(
    results: &[ShiftResult],
    powertrain: Powertrain,
    gallon_kwh_equivalent: f64,
) -> EmissionReport {
    let kwh: f64 = results.iter().map(|r| r.energy_consumed_kwh).sum();
    match powertrain {
        Powertrain::Electric => EmissionReport {
            electricity_kwh: kwh,
            gasoline_liters: 0.0,
            co2_kg: kwh * CO2_KG_PER_KWH,
        },
        Powertrain::Ice => {
            let liters = kwh / gallon_kwh_equivalent * GALLON_LITERS;
            EmissionReport {
                electricity_kwh: 0.0,
                gasoline_liters: liters,
                co2_kg: liters * CO2_KG_PER_LITER,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasPricePoint {
    pub usd_per_gallon: f64,
    pub dp_value_usd: f64,
    pub mean_net_revenue_usd: f64,
    pub mean_fuel_cost_usd: f64,
}

/// Re-solves the ICE policy at each gas price and evaluates it with common
/// random numbers, so revenue differences isolate the price effect.
pub fn gas_price_sensitivity(
    inputs: &ModelInputs<'_>,
    cfg: &SolverConfig,
    prices_usd_per_gallon: &[f64],
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<GasPricePoint>, SolveError> {
    let mut out = Vec::with_capacity(prices_usd_per_gallon.len());
    for &p in prices_usd_per_gallon {
        let mut inp = inputs.clone();
        let mut price = inputs.price;
        price.gasoline_usd_per_gallon = p;
        inp.price = price;
        inp.powertrain = Powertrain::Ice;
        let m = PlanningModel::build(&inp, cfg)?;
        let sol = solve_backward(&m);
        let start = StartState { node: m.start_node, t: 0, bin: m.start_bin };
        let results = rollout_many(&m, &sol.policy, start, seed, n_rollouts)
            .map_err(|e| SolveError::BadConfig(e.to_string()))?;
        let (mean, _) = mean_net_revenue(&results);
        let fuel: f64 =
            results.iter().map(|r| r.energy_cost_usd).sum::<f64>() / results.len() as f64;
        out.push(GasPricePoint {
            usd_per_gallon: p,
            dp_value_usd: sol.start_value(&m),
            mean_net_revenue_usd: mean,
            mean_fuel_cost_usd: fuel,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy_model::{Battery, ChargingMode};
    use crate::fare_model::EnergyPrice;
    use crate::mdp_solver::solve::tests::{micro_model, MicroSpec};
    use crate::mdp_solver::{PlanningModel, SolverConfig};
    use crate::road_network::ChargeModeKind;
    use crate::trip_ingest::test_support::snapped_for;
    use approx::assert_abs_diff_eq;

    fn solved(
        spec: MicroSpec,
        cfg: &SolverConfig,
    ) -> (PlanningModel, Solution) {
        let m = micro_model(spec, cfg);
        let sol = solve_backward(&m);
        (m, sol)
    }

    fn no_demand(n: usize) -> (Vec<f64>, Vec<Vec<(u16, f64)>>) {
        (vec![0.0; n], vec![Vec::new(); n])
    }

    #[test]
    fn zero_demand_rollout_stalls_for_free() {
        let cfg = SolverConfig { horizon_min: 30, ..Default::default() };
        let (pickup, dest) = no_demand(2);
        let (m, sol) = solved(
            MicroSpec { n: 2, tt: 3, energy: 0.2, fare: 8.0, pickup, dest, station: true, reserve: 0.0 },
            &cfg,
        );
        let start = StartState { node: 0, t: 0, bin: m.grid.n_bins() - 1 };
        let r = rollout_single(&m, &sol.policy, start, 1).unwrap();
        assert_eq!(r.trips_served, 0);
        assert_eq!(r.net_revenue_usd, 0.0); // stalling costs nothing
        assert_eq!(r.total_km, 0.0);
        assert!(!r.dead_end);
    }

    #[test]
    fn deterministic_single_path_matches_hand_itinerary() {
        // P^p = 1 at node 1, single destination 0, never at node 0: from
        // node 0 the policy hops to 1, delivers back to 0, repeatedly.
        // tt = 3 min per hop, horizon 12: hop(3) + deliver(3) twice = 12 min,
        // exactly two delivered trips.
        let cfg = SolverConfig { horizon_min: 12, ..Default::default() };
        let price = EnergyPrice::default();
        let e = 0.5;
        let fare_gross = 8.0;
        let (m, sol) = solved(
            MicroSpec {
                n: 2,
                tt: 3,
                energy: e,
                fare: fare_gross,
                pickup: vec![0.0, 1.0],
                dest: vec![Vec::new(), vec![(0, 1.0)]],
                station: true,
                reserve: 0.0,
            },
            &cfg,
        );
        let start = StartState { node: 0, t: 0, bin: m.grid.n_bins() - 1 };
        let r = rollout_single(&m, &sol.policy, start, 99).unwrap();
        assert_eq!(r.trips_served, 2);
        assert_abs_diff_eq!(r.fares_usd, 16.0, epsilon = 1e-12);
        // Four legs of 0.5 kWh at $0.20.
        assert_abs_diff_eq!(r.energy_cost_usd, 4.0 * e * price.electricity_usd_per_kwh, epsilon = 1e-12);
        assert_abs_diff_eq!(r.net_revenue_usd, 16.0 - 0.4, epsilon = 1e-12);
        assert_eq!(r.charge_events.len(), 0);
        assert_abs_diff_eq!(r.delivery_km, 2.0);
        assert_abs_diff_eq!(r.total_km, 4.0);
        // And the DP agrees exactly with this deterministic instance.
        assert_abs_diff_eq!(sol.start_value(&m), r.net_revenue_usd, epsilon = 1e-9);
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = SolverConfig { horizon_min: 60, ..Default::default() };
        let (m, sol) = solved(
            MicroSpec {
                n: 3,
                tt: 4,
                energy: 0.3,
                fare: 7.5,
                pickup: vec![0.4, 0.6, 0.2],
                dest: vec![vec![(1, 1.0)], vec![(0, 0.5), (2, 0.5)], vec![(0, 1.0)]],
                station: true,
                reserve: 0.1,
            },
            &cfg,
        );
        let start = StartState { node: 0, t: 0, bin: m.grid.n_bins() - 1 };
        let a = rollout_single(&m, &sol.policy, start, 1234).unwrap();
        let b = rollout_single(&m, &sol.policy, start, 1234).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fleet_of_one_equals_single_rollout() {
        let cfg = SolverConfig { horizon_min: 90, ..Default::default() };
        let (m, sol) = solved(
            MicroSpec {
                n: 3,
                tt: 5,
                energy: 0.4,
                fare: 9.0,
                pickup: vec![0.5, 0.3, 0.7],
                dest: vec![vec![(2, 1.0)], vec![(0, 1.0)], vec![(1, 0.4), (0, 0.6)]],
                station: true,
                reserve: 0.0,
            },
            &cfg,
        );
        let start = StartState { node: 1, t: 0, bin: m.grid.n_bins() - 1 };
        let single = rollout_single(&m, &sol.policy, start, 777).unwrap();
        let fleet_cfg = FleetConfig {
            n_taxis: 1,
            seed: 777,
            capacities: BTreeMap::new(),
            default_capacity: 5,
        };
        let fleet = rollout_fleet(&m, &sol.policy, &fleet_cfg, &[start]).unwrap();
        assert_eq!(fleet.results[0], single);
        assert_eq!(fleet.capacity_violations, 0);
    }

    #[test]
    fn capacity_one_forces_second_taxi_elsewhere() {
        // Node 2 is the only junction with demand; with capacity 1 the
        // second taxi cannot also be routed there at the same slot.
        let cfg = SolverConfig { horizon_min: 40, ..Default::default() };
        let spec = MicroSpec {
            n: 3,
            tt: 4,
            energy: 0.1,
            fare: 10.0,
            pickup: vec![0.0, 0.0, 0.9],
            dest: vec![Vec::new(), Vec::new(), vec![(0, 1.0)]],
            station: true,
            reserve: 0.0,
        };
        let (m, sol) = solved(spec, &cfg);
        let starts = [
            StartState { node: 0, t: 0, bin: m.grid.n_bins() - 1 },
            StartState { node: 0, t: 0, bin: m.grid.n_bins() - 1 },
        ];
        let fleet_cfg = FleetConfig {
            n_taxis: 2,
            seed: 5,
            capacities: BTreeMap::new(),
            default_capacity: 1,
        };
        let out = rollout_fleet(&m, &sol.policy, &fleet_cfg, &starts).unwrap();
        assert_eq!(out.capacity_violations, 0);
        // The blocked taxi either took a lower-ranked target or stalled;
        // both cannot have been routed to node 2 in the first slot.
        assert!(out.forced_stalls > 0 || out.results[1].trips_served <= out.results[0].trips_served);
    }

    #[test]
    fn capacity_from_constructed_trace() {
        // Three taxis permanently shuttling into junction 7, covering most
        // of the day: mean presence just under 3, capacity ceil -> 3.
        let mut trips = Vec::new();
        for taxi in ["a", "b", "c"] {
            for hour in 0..24u32 {
                trips.push(snapped_for(
                    taxi,
                    JunctionId(1),
                    JunctionId(7),
                    &format!("2013-01-09 {hour:02}:00"),
                    5,
                    1.0,
                ));
            }
        }
        let caps = junction_capacity_from_data(&trips, 120.0);
        assert_eq!(caps.get(&7), Some(&3));
        // Junctions never dropped into are absent; the simulator applies the
        // configured default (floor 1) for them.
        assert_eq!(caps.get(&1), None);
    }

    #[test]
    fn emission_examples() {
        let mut r = ShiftResult::new_for_tests();
        r.energy_consumed_kwh = 100.0;
        let e = emission_report(&[r.clone()], Powertrain::Electric, 33.7);
        assert_abs_diff_eq!(e.co2_kg, 70.07, epsilon = 1e-9);
        let zero = emission_report(&[], Powertrain::Electric, 33.7);
        assert_eq!(zero.co2_kg, 0.0);
        r.energy_consumed_kwh = 33.7;
        let ice = emission_report(&[r], Powertrain::Ice, 33.7);
        assert_abs_diff_eq!(ice.gasoline_liters, 3.785, epsilon = 1e-9);
        assert_abs_diff_eq!(ice.co2_kg, 8.887, epsilon = 1e-3);
    }

    #[test]
    fn battery_stays_inside_usable_window() {
        let cfg = SolverConfig {
            horizon_min: 240,
            tau_grid_min: vec![10, 30],
            ..Default::default()
        };
        let (m, sol) = solved(
            MicroSpec {
                n: 4,
                tt: 6,
                energy: 0.9,
                fare: 7.0,
                pickup: vec![0.5, 0.5, 0.5, 0.5],
                dest: vec![
                    vec![(1, 0.5), (2, 0.5)],
                    vec![(3, 1.0)],
                    vec![(0, 1.0)],
                    vec![(2, 0.7), (0, 0.3)],
                ],
                station: true,
                reserve: 0.3,
            },
            &cfg,
        );
        let start = StartState { node: 0, t: 0, bin: m.grid.n_bins() - 1 };
        for seed in 0..50 {
            let r = rollout_single(&m, &sol.policy, start, seed).unwrap();
            assert!(r.min_soc_kwh >= m.grid.b_low() - 1e-9, "seed {seed}");
            assert!(r.max_soc_kwh <= m.grid.b_high() + 1e-9, "seed {seed}");
            assert!(!r.dead_end, "seed {seed}");
            assert!(r.delivery_km <= r.total_km + 1e-12);
            assert_abs_diff_eq!(
                r.energy_consumed_kwh - r.energy_charged_kwh,
                r.energy_from_battery_kwh,
                epsilon = 1e-12
            );
        }
    }
}

#[cfg(test)]
impl ShiftResult {
    fn new_for_tests() -> Self {
        ShiftResult {
            net_revenue_usd: 0.0,
            fares_usd: 0.0,
            energy_cost_usd: 0.0,
            trips_served: 0,
            delivery_km: 0.0,
            total_km: 0.0,
            energy_consumed_kwh: 0.0,
            energy_charged_kwh: 0.0,
            energy_from_battery_kwh: 0.0,
            cost_basis_kwh: 0.0,
            charge_events: Vec::new(),
            hours_worked: 0.0,
            end_soc_kwh: 0.0,
            min_soc_kwh: 0.0,
            max_soc_kwh: 0.0,
            dead_end: false,
        }
    }
}
