//! Metered fares with time-of-day surcharges, and trip/action net revenue.
//!
//! The meter alternates between distance and time charging on the hourly
//! average segment speeds: segments at or above the slow-traffic threshold
//! bill per 1/5 mile, slower segments and idling bill per minute. Surcharges
//! key off the pick-up wall-clock time and the weekday/holiday flags. Tolls
//! and tips are out of scope.

use std::collections::BTreeSet;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::road_network::{JunctionId, NetworkError, PathOracle, SpeedNetwork};

pub const KM_PER_MILE: f64 = 1.609344;

/// NYC yellow-cab tariff (2013 rules).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tariff {
    pub initial_usd: f64,
    /// Per 1/5 mile while at or above the slow-speed threshold.
    pub per_fifth_mile_usd: f64,
    /// Per 60 seconds in slow traffic or while stopped.
    pub per_slow_minute_usd: f64,
    pub mta_surcharge_usd: f64,
    pub improvement_surcharge_usd: f64,
    /// Applied [20:00, 06:00).
    pub night_surcharge_usd: f64,
    /// Applied [16:00, 20:00) on non-holiday weekdays.
    pub peak_surcharge_usd: f64,
    /// Meter switches to time-based billing below this speed (km/h). The
    /// posted rules say "slow traffic" without a number; 12 mph is the
    /// commonly cited threshold.
    pub slow_speed_kmh: f64,
}

impl Default for Tariff {
    fn default() -> Self {
        Tariff {
            initial_usd: 2.50,
            per_fifth_mile_usd: 0.50,
            per_slow_minute_usd: 0.50,
            mta_surcharge_usd: 0.50,
            improvement_surcharge_usd: 0.30,
            night_surcharge_usd: 0.50,
            peak_surcharge_usd: 1.00,
            slow_speed_kmh: 19.3,
        }
    }
}

/// Pick-up clock context a fare depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FareTime {
    pub minute_of_day: u32,
    pub weekday: bool,
    pub holiday: bool,
}

impl FareTime {
    fn night(&self) -> bool {
        let m = self.minute_of_day % 1440;
        m >= 20 * 60 || m < 6 * 60
    }

    fn peak(&self) -> bool {
        let m = self.minute_of_day % 1440;
        (16 * 60..20 * 60).contains(&m) && self.weekday && !self.holiday
    }
}

/// Metered quantities of one trip: fast-segment miles billed by distance,
/// slow-segment driving plus idling billed by time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeterInputs {
    pub fast_miles: f64,
    pub slow_minutes: f64,
}

/// Fare in USD: initial charge, metered components, fixed surcharges, and
/// the applicable time surcharges.
pub fn fare_usd(time: FareTime, meter: &MeterInputs, tariff: &Tariff) -> f64 {
    let mut f = tariff.initial_usd
        + meter.fast_miles * 5.0 * tariff.per_fifth_mile_usd
        + meter.slow_minutes * tariff.per_slow_minute_usd
        + tariff.mta_surcharge_usd
        + tariff.improvement_surcharge_usd;
    if time.night() {
        f += tariff.night_surcharge_usd;
    }
    if time.peak() {
        f += tariff.peak_surcharge_usd;
    }
    f
}

/// Meter inputs for the shortest path `i -> j` at the given departure hour.
pub fn meter_inputs_indexed(
    net: &SpeedNetwork,
    oracle: &mut PathOracle<'_>,
    i: usize,
    j: usize,
    hour: usize,
    tariff: &Tariff,
) -> Option<MeterInputs> {
    if i == j {
        return Some(MeterInputs::default());
    }
    let (edges, distance_km) = oracle.edge_path(i, j)?;
    let est = net.estimate_for_edges(&edges, distance_km, hour);
    let mut fast_km = 0.0;
    let mut slow_min = est.idling_min;
    for &e in &edges {
        let speed = net.edge_speed(e, hour);
        let len = net.graph().edge_km(e);
        if speed >= tariff.slow_speed_kmh {
            fast_km += len;
        } else {
            slow_min += len / speed * 60.0;
        }
    }
    Some(MeterInputs { fast_miles: fast_km / KM_PER_MILE, slow_minutes: slow_min })
}

/// Convenience single-trip fare over the network (`F^R_t(i,j)`).
pub fn trip_fare_usd(
    net: &SpeedNetwork,
    i: JunctionId,
    j: JunctionId,
    time: FareTime,
    tariff: &Tariff,
) -> Result<f64, NetworkError> {
    let (a, b) = (net.graph().index_of(i)?, net.graph().index_of(j)?);
    let mut oracle = PathOracle::new(net.graph());
    let hour = (time.minute_of_day / 60) as usize % 24;
    meter_inputs_indexed(net, &mut oracle, a, b, hour, tariff)
        .map(|m| fare_usd(time, &m, tariff))
        .ok_or(NetworkError::NoPath { from: i, to: j })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Powertrain {
    Electric,
    Ice,
}

/// Unit energy prices; gasoline is converted through its kWh equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyPrice {
    pub electricity_usd_per_kwh: f64,
    pub gasoline_usd_per_gallon: f64,
    pub gallon_kwh_equivalent: f64,
}

impl Default for EnergyPrice {
    fn default() -> Self {
        EnergyPrice {
            electricity_usd_per_kwh: 0.20,
            gasoline_usd_per_gallon: 2.50,
            gallon_kwh_equivalent: 33.7,
        }
    }
}

impl EnergyPrice {
    /// Effective USD per kWh for the given powertrain.
    pub fn unit_usd_per_kwh(&self, powertrain: Powertrain) -> f64 {
        match powertrain {
            Powertrain::Electric => self.electricity_usd_per_kwh,
            Powertrain::Ice => self.gasoline_usd_per_gallon / self.gallon_kwh_equivalent,
        }
    }
}

/// Net revenue of a delivery: fare minus the trip's energy cost (`F_t(i,j)`).
pub fn net_revenue_usd(
    fare_usd: f64,
    energy_kwh: f64,
    price: &EnergyPrice,
    powertrain: Powertrain,
) -> f64 {
    fare_usd - energy_kwh * price.unit_usd_per_kwh(powertrain)
}

/// Energy cost of an action (`U^a_t(i,j)`): driving legs plus any purchased
/// charge, all at the unit price. Without recharging `purchased_kwh` is 0 and
/// `legs_kwh` is the direct leg.
pub fn action_energy_cost_usd(
    legs_kwh: f64,
    purchased_kwh: f64,
    price: &EnergyPrice,
    powertrain: Powertrain,
) -> f64 {
    (legs_kwh + purchased_kwh) * price.unit_usd_per_kwh(powertrain)
}

/// Dates on which the weekday peak surcharge is waived.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidaySet(pub BTreeSet<NaiveDate>);

impl HolidaySet {
    /// Loads a one-column `date` CSV of `YYYY-MM-DD` entries.
    pub fn from_csv_reader<R: Read>(rdr: R) -> Result<Self, NetworkError> {
        let mut set = BTreeSet::new();
        let mut csv = csv::Reader::from_reader(rdr);
        for rec in csv.deserialize::<(String,)>() {
            let (s,) = rec.map_err(|e| NetworkError::Parse(e.to_string()))?;
            let d = NaiveDate::parse_from_str(&s, "%Y-%m-%d")
                .map_err(|e| NetworkError::Parse(e.to_string()))?;
            set.insert(d);
        }
        Ok(HolidaySet(set))
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.0.contains(&d)
    }
}
