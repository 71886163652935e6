//! Vehicle energy consumption, battery bounds, and charging arithmetic.
//!
//! Consumption follows a black-box fit for the Nissan Leaf: a quadratic in
//! average driving speed for the moving share, plus a constant auxiliary
//! load over total (driving + idling) time. An aggressiveness factor β
//! scales the moving share for mild (0.8), normal (1.0) and aggressive (1.2)
//! driving styles.

use serde::{Deserialize, Serialize};

use crate::road_network::{ChargeModeKind, TravelEstimate};

/// Coefficients of the speed-consumption model plus driver/vehicle factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    /// Wh/km per (km/h)².
    pub alpha1: f64,
    /// Wh/km per (km/h).
    pub alpha2: f64,
    /// Wh/km.
    pub alpha3: f64,
    /// Aggressiveness multiplier on the moving share.
    pub beta: f64,
    /// Auxiliary load (heating, A/C, electronics) in kW.
    pub aux_load_kw: f64,
}

impl Default for EnergyParams {
    /// Nissan Leaf fit; auxiliary load at the top of the 1–1.5 kW range.
    fn default() -> Self {
        EnergyParams {
            alpha1: 0.1554,
            alpha2: -5.4634,
            alpha3: 189.297,
            beta: 1.0,
            aux_load_kw: 1.5,
        }
    }
}

impl EnergyParams {
    /// Moving consumption in Wh/km at average speed `v_kmh`.
    ///
    /// The quadratic is clamped at zero before β scaling; with the default
    /// coefficients it is positive for every speed (negative discriminant),
    /// so the clamp only guards user-supplied coefficient sets.
    pub fn moving_wh_per_km(&self, v_kmh: f64) -> f64 {
        let q = self.alpha1 * v_kmh * v_kmh + self.alpha2 * v_kmh + self.alpha3;
        self.beta * q.max(0.0)
    }

    /// Speed minimizing consumption per km (vertex of the quadratic).
    pub fn min_consumption_speed_kmh(&self) -> f64 {
        -self.alpha2 / (2.0 * self.alpha1)
    }
}

/// Total trip energy in kWh over a travel estimate.
///
/// Average speed is distance over driving time (idling excluded); the
/// auxiliary load runs for the whole trip including idling.
pub fn trip_energy_kwh(params: &EnergyParams, est: &TravelEstimate) -> f64 {
    if est.distance_km <= 0.0 {
        return params.aux_load_kw * est.total_min_exact() / 60.0;
    }
    debug_assert!(est.driving_min > 0.0, "moving trip with zero driving time");
    let v = est.distance_km / (est.driving_min / 60.0);
    let moving_kwh = params.moving_wh_per_km(v) * est.distance_km / 1000.0;
    let aux_kwh = params.aux_load_kw * est.total_min_exact() / 60.0;
    moving_kwh + aux_kwh
}

/// Battery pack with usable state-of-charge window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub capacity_kwh: f64,
    /// Usable window as fractions of capacity; packs are protected from deep
    /// discharge and overcharge.
    pub low_frac: f64,
    pub high_frac: f64,
}

impl Battery {
    pub fn new(capacity_kwh: f64) -> Self {
        Battery { capacity_kwh, low_frac: 0.05, high_frac: 0.95 }
    }

    pub fn b_low(&self) -> f64 {
        self.low_frac * self.capacity_kwh
    }

    pub fn b_high(&self) -> f64 {
        self.high_frac * self.capacity_kwh
    }

    pub fn usable_kwh(&self) -> f64 {
        self.b_high() - self.b_low()
    }
}

/// A charging connection: plug standard plus effective power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargingMode {
    pub kind: ChargeModeKind,
    pub rate_kw: f64,
}

impl ChargingMode {
    pub fn new(kind: ChargeModeKind) -> Self {
        ChargingMode { kind, rate_kw: kind.default_rate_kw() }
    }

    pub fn with_rate(kind: ChargeModeKind, rate_kw: f64) -> Self {
        ChargingMode { kind, rate_kw }
    }
}

/// State of charge after charging for `tau_min` minutes, capped at the
/// usable ceiling.
pub fn apply_charge(soc_kwh: f64, tau_min: f64, mode: &ChargingMode, battery: &Battery) -> f64 {
    (soc_kwh + tau_min / 60.0 * mode.rate_kw).min(battery.b_high())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("battery would fall below its usable floor")]
pub struct InfeasibleTransition;

/// Battery state on arrival after executing an action.
///
/// Without recharging the taxi drives straight to the target. With
/// recharging it first drives to the nearest station (consuming
/// `e_to_station`), charges for `tau_min`, then drives on (consuming
/// `e_station_to_target`). Every intermediate state must stay at or above
/// the usable floor.
pub fn battery_transition(
    soc_kwh: f64,
    tau_min: f64,
    mode: &ChargingMode,
    battery: &Battery,
    e_direct: f64,
    e_to_station: f64,
    e_station_to_target: f64,
) -> Result<f64, InfeasibleTransition> {
    let eps = 1e-12;
    let arrived = if tau_min <= 0.0 {
        soc_kwh - e_direct
    } else {
        let at_station = soc_kwh - e_to_station;
        if at_station < battery.b_low() - eps {
            return Err(InfeasibleTransition);
        }
        apply_charge(at_station, tau_min, mode, battery) - e_station_to_target
    };
    if arrived < battery.b_low() - eps {
        return Err(InfeasibleTransition);
    }
    Ok(arrived)
}
