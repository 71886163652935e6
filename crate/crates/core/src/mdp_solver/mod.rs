//! Service-strategy MDP: states, actions, the expected-value recurrence and
//! its backward-induction solution.
//!
//! A state is (minute within the shift, junction, battery bin). An action
//! `(i → j, τ)` optionally recharges for τ minutes at the nearest charging
//! station before driving on to `j`. On arrival the taxi either picks up a
//! passenger (destination drawn from the demand model, feasible only when
//! the battery can cover the delivery plus the reserve to a station) or
//! roams on. Values are expected net revenue in USD until the end of shift.

mod planning;
pub(crate) mod solve;

pub use planning::{BatteryGrid, ModelInputs, PlanningModel, RawTables, SolveError};
pub use solve::{
    action_duration, action_value, apply_action, bellman_residual, solve_backward, ActionOutcome,
    ChargeStep, Policy, RankedAction, Solution, ValueLookup, ValueTable,
};

use serde::{Deserialize, Serialize};

use crate::road_network::JunctionId;
use crate::trip_ingest::Shift;

/// Feasibility slack for battery comparisons; shared by the solver, the
/// simulator and the acceptance oracles so they agree bit-for-bit.
pub const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Shift length in minutes.
    pub horizon_min: u32,
    pub shift: Shift,
    /// Day flags for fare surcharges, constant across the shift.
    pub weekday: bool,
    pub holiday: bool,
    /// When set, derives `weekday`/`holiday` from this calendar date and
    /// the holiday list.
    pub run_date: Option<chrono::NaiveDate>,
    /// Battery bin width as a fraction of pack capacity.
    pub battery_bin_frac: f64,
    /// Allowed recharge durations in minutes; 0 (no recharge) is always
    /// available and need not be listed.
    pub tau_grid_min: Vec<u32>,
    /// Solver runs on the top-K junctions by pick-up count.
    pub aggregation_k: usize,
    /// Restrict move targets to graph neighbors instead of the full
    /// aggregated clique (tiny instances only).
    pub full_adjacency: bool,
    /// Reproduce the recurrence literally, with its bare energy term
    /// subtracted inside the pick-up branch (comparison mode; the default
    /// charges trip energy once through the net fare).
    pub strict_paper_energy_term: bool,
    /// How many ranked alternatives the policy stores per state.
    pub rank_depth: usize,
    /// Start junction for the solve summary; defaults to the junction with
    /// the highest pick-up probability at shift start.
    pub start_junction: Option<JunctionId>,
    /// Start state of charge as a fraction of capacity, clamped into the
    /// usable window.
    pub start_soc_frac: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            horizon_min: 720,
            shift: Shift::Morning,
            weekday: true,
            holiday: false,
            run_date: None,
            battery_bin_frac: 0.01,
            tau_grid_min: vec![10, 20, 30, 60],
            aggregation_k: 200,
            full_adjacency: false,
            strict_paper_energy_term: false,
            rank_depth: 4,
            start_junction: None,
            start_soc_frac: 0.95,
        }
    }
}
