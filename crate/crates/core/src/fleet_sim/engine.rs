//! Seeded rollout engine.
//!
//! One engine drives both the single-taxi and the fleet evaluation so that a
//! one-taxi fleet reproduces `rollout_single` bit for bit. Taxis advance on
//! a shared minute clock: within a minute all action arrivals resolve first
//! (pick-up draws see current co-location), then all pending decisions run,
//! in fixed taxi order.
//!
//! The rollout mirrors the solver's Markov chain exactly: the same tables,
//! the same battery binning with pessimistic rounding, the same feasibility
//! checks. Monetary accounting matches the recurrence term for term, so the
//! empirical mean of many rollouts converges on the solved start value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mdp_solver::{apply_action, PlanningModel, Policy};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SimError {
    #[error("policy shape does not match the planning model")]
    Mismatch,
    #[error("start state outside the model's state space")]
    BadStart,
}

/// Initial simulation state: node and battery bin at shift minute `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartState {
    pub node: usize,
    pub t: u32,
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeEvent {
    pub t_min: u32,
    pub station: String,
    pub tau_min: u32,
    pub kwh_added: f64,
}

/// Outcome of one simulated taxi-shift.
///
/// Energy bookkeeping lives in the solver's binned battery space, so
/// `energy_consumed_kwh − energy_charged_kwh` reconciles exactly with the
/// start-to-end state-of-charge difference; `energy_from_battery_kwh` is
/// that net draw on the initial pack. `cost_basis_kwh` is every kWh billed
/// (driving legs, deliveries and purchased charge), making fuel cost a
/// linear function of the unit price for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftResult {
    pub net_revenue_usd: f64,
    pub fares_usd: f64,
    pub energy_cost_usd: f64,
    pub trips_served: u32,
    pub delivery_km: f64,
    pub total_km: f64,
    pub energy_consumed_kwh: f64,
    pub energy_charged_kwh: f64,
    pub energy_from_battery_kwh: f64,
    pub cost_basis_kwh: f64,
    pub charge_events: Vec<ChargeEvent>,
    pub hours_worked: f64,
    pub end_soc_kwh: f64,
    pub min_soc_kwh: f64,
    pub max_soc_kwh: f64,
    /// The rollout hit a state with no feasible action (must never happen
    /// from a valid start).
    pub dead_end: bool,
}

impl ShiftResult {
    fn new(start_soc: f64) -> Self {
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
            end_soc_kwh: start_soc,
            min_soc_kwh: start_soc,
            max_soc_kwh: start_soc,
            dead_end: false,
        }
    }

    fn track_soc(&mut self, soc: f64) {
        self.min_soc_kwh = self.min_soc_kwh.min(soc);
        self.max_soc_kwh = self.max_soc_kwh.max(soc);
    }
}

/// Shared fleet state: per-node capacities and live occupancy.
pub(crate) struct FleetCtx {
    pub cap: Vec<u32>,
    pub occ: Vec<u32>,
    pub routed_slot: Vec<u32>,
    pub capacity_violations: u64,
    pub forced_stalls: u64,
    pub forced_overflows: u64,
    /// Highest per-slot routed count observed per node.
    pub max_routed: Vec<u32>,
}

impl FleetCtx {
    pub fn new(cap: Vec<u32>) -> Self {
        let n = cap.len();
        FleetCtx {
            cap,
            occ: vec![0; n],
            routed_slot: vec![0; n],
            capacity_violations: 0,
            forced_stalls: 0,
            forced_overflows: 0,
            max_routed: vec![0; n],
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Decide(u32),
    ActionArrive { t: u32, soc_kwh: f64 },
    Done,
}

struct Taxi {
    node: usize,
    bin: usize,
    occ_node: usize,
    start_t: u32,
    pending_charge_gain: f64,
    phase: Phase,
    rng: ChaCha8Rng,
    stats: ShiftResult,
}

pub(crate) fn simulate(
    m: &PlanningModel,
    policy: &Policy,
    starts: &[StartState],
    seeds: &[u64],
    mut fleet: Option<&mut FleetCtx>,
) -> Result<Vec<ShiftResult>, SimError> {
    if policy.n_act != m.n_act()
        || policy.n_bins != m.grid.n_bins()
        || policy.horizon != m.horizon
    {
        return Err(SimError::Mismatch);
    }
    debug_assert_eq!(starts.len(), seeds.len());
    let mut taxis: Vec<Taxi> = Vec::with_capacity(starts.len());
    for (s, &seed) in starts.iter().zip(seeds) {
        if s.node >= m.n_act() || s.bin >= m.grid.n_bins() {
            return Err(SimError::BadStart);
        }
        let soc = m.grid.soc_of(s.bin);
        let phase = if s.t >= m.horizon { Phase::Done } else { Phase::Decide(s.t) };
        if let (Some(ctx), Phase::Decide(_)) = (fleet.as_deref_mut(), phase) {
            ctx.occ[s.node] += 1;
        }
        taxis.push(Taxi {
            node: s.node,
            bin: s.bin,
            occ_node: s.node,
            start_t: s.t,
            pending_charge_gain: 0.0,
            phase,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: ShiftResult::new(soc),
        });
    }

    for t in 0..m.horizon {
        if let Some(ctx) = fleet.as_deref_mut() {
            ctx.routed_slot.fill(0);
        }
        for x in taxis.iter_mut() {
            if let Phase::ActionArrive { t: ta, soc_kwh } = x.phase {
                if ta == t {
                    resolve_arrival(m, x, t, soc_kwh, fleet.as_deref_mut());
                }
            }
        }
        for x in taxis.iter_mut() {
            if let Phase::Decide(td) = x.phase {
                if td == t {
                    decide(m, policy, x, t, fleet.as_deref_mut());
                }
            }
        }
    }
    for x in &taxis {
        debug_assert!(matches!(x.phase, Phase::Done), "taxi still active past the horizon");
    }
    Ok(taxis.into_iter().map(|x| x.stats).collect())
}

/// Advances the binned battery to `soc_kwh`, attributing the drop (net of
/// any charge received during the action) to consumption.
fn snap_battery(m: &PlanningModel, x: &mut Taxi, soc_kwh: f64) {
    let new_bin = m.grid.bin_of(soc_kwh).expect("feasible state of charge");
    let gain = std::mem::take(&mut x.pending_charge_gain);
    x.stats.energy_consumed_kwh += m.grid.soc_of(x.bin) + gain - m.grid.soc_of(new_bin);
    x.stats.energy_charged_kwh += gain;
    x.bin = new_bin;
    x.stats.track_soc(soc_kwh);
}

fn finalize(m: &PlanningModel, x: &mut Taxi, t_end: u32, fleet: Option<&mut FleetCtx>) {
    if let Some(ctx) = fleet {
        ctx.occ[x.occ_node] -= 1;
    }
    x.stats.hours_worked = (t_end.saturating_sub(x.start_t)) as f64 / 60.0;
    x.stats.end_soc_kwh = m.grid.soc_of(x.bin);
    x.stats.energy_from_battery_kwh =
        x.stats.energy_consumed_kwh - x.stats.energy_charged_kwh;
    x.stats.net_revenue_usd = x.stats.fares_usd - x.stats.energy_cost_usd;
    x.phase = Phase::Done;
}

fn decide(
    m: &PlanningModel,
    policy: &Policy,
    x: &mut Taxi,
    t: u32,
    mut fleet: Option<&mut FleetCtx>,
) {
    let ranked = policy.ranked_actions(t, x.node, x.bin);
    if ranked.is_empty() {
        x.stats.dead_end = true;
        finalize(m, x, t, fleet);
        return;
    }

    let (target, tau) = match fleet.as_deref_mut() {
        None => (ranked[0].target as usize, ranked[0].tau_min as u32),
        Some(ctx) => {
            ctx.occ[x.occ_node] -= 1;
            let admitted = ranked
                .iter()
                .find(|a| ctx.occ[a.target as usize] < ctx.cap[a.target as usize]);
            match admitted {
                Some(a) => {
                    let target = a.target as usize;
                    ctx.occ[target] += 1;
                    ctx.routed_slot[target] += 1;
                    ctx.max_routed[target] = ctx.max_routed[target].max(ctx.routed_slot[target]);
                    if ctx.routed_slot[target] > ctx.cap[target] {
                        ctx.capacity_violations += 1;
                    }
                    (target, a.tau_min as u32)
                }
                None => {
                    // Every ranked target is full: hold position one slot.
                    // A stall is not a routing decision, so it bypasses the
                    // capacity check (the taxi is already there).
                    let stall_ok =
                        apply_action(m, t, m.grid.soc_of(x.bin), x.node, x.node, 0).is_some();
                    if stall_ok {
                        ctx.forced_stalls += 1;
                        ctx.occ[x.node] += 1;
                        (x.node, 0)
                    } else {
                        // Physically unable to wait (station reserve would
                        // lapse); take the best ranked action regardless.
                        ctx.forced_overflows += 1;
                        let a = ranked[0];
                        ctx.occ[a.target as usize] += 1;
                        (a.target as usize, a.tau_min as u32)
                    }
                }
            }
        }
    };
    x.occ_node = target;

    let outcome = apply_action(m, t, m.grid.soc_of(x.bin), x.node, target, tau)
        .expect("stored policy actions are feasible");
    x.stats.energy_cost_usd += outcome.cost_usd;
    x.stats.total_km += outcome.dist_km;
    x.stats.cost_basis_kwh += outcome.energy_legs_kwh + outcome.purchased_kwh;
    if let Some(ch) = outcome.charge {
        let added = ch.soc_after_kwh - ch.soc_before_kwh;
        x.stats.track_soc(ch.soc_before_kwh);
        x.pending_charge_gain = added;
        x.stats.charge_events.push(ChargeEvent {
            t_min: ch.start_min,
            station: m.station_label(x.node).unwrap_or("station").to_string(),
            tau_min: ch.tau_min,
            kwh_added: added,
        });
    }
    x.node = target;
    if outcome.t_arr >= m.horizon {
        snap_battery(m, x, outcome.soc_arr_kwh);
        finalize(m, x, outcome.t_arr, fleet);
    } else {
        x.phase = Phase::ActionArrive { t: outcome.t_arr, soc_kwh: outcome.soc_arr_kwh };
    }
}

fn resolve_arrival(
    m: &PlanningModel,
    x: &mut Taxi,
    t: u32,
    soc_kwh: f64,
    mut fleet: Option<&mut FleetCtx>,
) {
    snap_battery(m, x, soc_kwh);
    let hour = m.hour_of(t);
    let row = m.dest_row(hour, x.node);
    let pp = if row.is_empty() {
        0.0
    } else {
        match fleet.as_deref() {
            Some(ctx) => m.fleet_pickup_prob(hour, x.node, (ctx.occ[x.node].max(1) - 1) as u64),
            None => m.pickup_prob(hour, x.node),
        }
    };
    if pp > 0.0 && x.rng.random::<f64>() < pp {
        let k = draw_destination(row, x.rng.random::<f64>());
        let soc_b = m.grid.soc_of(x.bin);
        if m.destination_feasible(hour, x.node, k, soc_b) {
            // C1: deliver the passenger.
            let e = m.energy_kwh(hour, x.node, k);
            let dur = m.tt_min(hour, x.node, k).expect("feasible destination").max(1);
            let dist = m.dist_km(x.node, k);
            x.stats.fares_usd += m.fare_gross_usd(hour, x.node, k);
            x.stats.energy_cost_usd += e * m.unit_usd_per_kwh;
            x.stats.cost_basis_kwh += e;
            x.stats.delivery_km += dist;
            x.stats.total_km += dist;
            x.stats.trips_served += 1;
            if let Some(ctx) = fleet.as_deref_mut() {
                ctx.occ[x.occ_node] -= 1;
                ctx.occ[k] += 1;
                x.occ_node = k;
            }
            x.node = k;
            let t2 = t + dur;
            snap_battery(m, x, soc_b - e);
            if t2 >= m.horizon {
                finalize(m, x, t2, fleet);
            } else {
                x.phase = Phase::Decide(t2);
            }
            return;
        }
        // C2: passenger found but the battery cannot cover the delivery
        // plus the reserve; no fare, decide again immediately.
    }
    // C3 (or C2): roam on.
    x.phase = Phase::Decide(t);
}

fn draw_destination(row: &[(u16, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    for &(k, p) in row {
        acc += p;
        if u < acc {
            return k as usize;
        }
    }
    // Float residue: the row sums to 1 within 1e-9; the tail lands on the
    // last entry.
    row.last().expect("non-empty row").0 as usize
}
