//! Demand-model estimation: pick-up probabilities, destination
//! distributions, inter-pick-up durations and reachable distances.
//!
//! The pick-up probability at a junction compares pick-ups there against
//! drop-offs nearby in a short window: `P^p = N^p / (N^p + N^d)`, where
//! `N^p` counts pick-ups in `[t, t+τ)` and `N^d` counts drop-offs within
//! `δ` km in `[t−τ, t+τ)` — drop-offs approximate competing vacant taxis
//! roaming the area. Destination rows are raw per-hour count ratios with no
//! smoothing; junctions with no observed demand are simply unattractive to
//! the solver.

use std::collections::{BTreeMap, HashMap};

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::geo::haversine_km;
use crate::road_network::{fill_empty_hours, JunctionId, NetworkError, RoadGraph, SpeedNetwork};
use crate::trip_ingest::SnappedTrip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub fn of(date: chrono::NaiveDate) -> DayType {
        match date.weekday() {
            chrono::Weekday::Sat | chrono::Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    /// Day type the planned shift belongs to; selects the τ table used for
    /// pick-up windows and reachable distances.
    pub day_type: DayType,
    /// Gaps longer than this are treated as off-duty breaks, not searching.
    pub max_gap_min: f64,
    /// Floor on the reachable distance δ.
    pub min_delta_km: f64,
    /// τ when the data contains no usable inter-pick-up gaps at all.
    pub fallback_tau_min: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            day_type: DayType::Weekday,
            max_gap_min: 120.0,
            min_delta_km: 0.5,
            fallback_tau_min: 15.0,
        }
    }
}

/// Eq-style count ratio: share of pick-ups among pick-ups plus competing
/// drop-offs; 0 when nothing was observed.
pub fn pickup_ratio(pickups: u64, dropoffs: u64) -> f64 {
    if pickups == 0 {
        return 0.0;
    }
    pickups as f64 / (pickups + dropoffs) as f64
}

/// Per-hour mean gap between a drop-off and the same taxi's next pick-up.
///
/// Gaps are binned by the hour they start (the drop-off hour) and filtered
/// to the requested day type; hours without observations inherit the nearest
/// populated hour.
pub fn inter_pickup_duration(
    trips: &[SnappedTrip],
    day_type: DayType,
    config: &EstimationConfig,
) -> [f64; 24] {
    let mut by_taxi: BTreeMap<&str, Vec<&SnappedTrip>> = BTreeMap::new();
    for t in trips {
        by_taxi.entry(&t.taxi_id).or_default().push(t);
    }
    let mut sums = [0.0f64; 24];
    let mut counts = [0u64; 24];
    for (_, mut seq) in by_taxi {
        seq.sort_by_key(|t| t.pickup_time);
        for pair in seq.windows(2) {
            let dropoff = pair[0].dropoff_time();
            if DayType::of(dropoff.date()) != day_type {
                continue;
            }
            let gap_min = (pair[1].pickup_time - dropoff).num_seconds() as f64 / 60.0;
            if gap_min < 0.0 || gap_min > config.max_gap_min {
                continue;
            }
            let hour = chrono::Timelike::hour(&dropoff) as usize;
            sums[hour] += gap_min;
            counts[hour] += 1;
        }
    }
    let mut tau = [f64::NAN; 24];
    for h in 0..24 {
        if counts[h] > 0 {
            tau[h] = sums[h] / counts[h] as f64;
        }
    }
    fill_empty_hours(&mut tau, config.fallback_tau_min);
    tau
}

/// Per-hour reachable distance: length-weighted mean network speed times the
/// inter-pick-up duration, floored at the configured minimum.
pub fn reachable_distance(
    net: &SpeedNetwork,
    tau_min: &[f64; 24],
    config: &EstimationConfig,
) -> [f64; 24] {
    let mut delta = [0.0f64; 24];
    for h in 0..24 {
        delta[h] = (net.mean_speed_kmh(h) * tau_min[h] / 60.0).max(config.min_delta_km);
    }
    delta
}

/// Time-indexed pick-up probabilities and sparse destination distributions
/// over a fixed junction set.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel {
    junctions: Vec<JunctionId>,
    index: HashMap<JunctionId, usize>,
    /// `pickup_prob[j][hour]`.
    pickup_prob: Vec<[f64; 24]>,
    /// `dest_prob[j][hour]`: (destination index, probability), sorted by
    /// destination; empty when the junction saw no pick-ups that hour.
    dest_prob: Vec<Vec<Vec<(u32, f64)>>>,
    /// Raw window counts behind `pickup_prob`; the fleet simulator reuses
    /// them with tracked taxi counts added to the competitor term.
    pickup_window: Vec<[u64; 24]>,
    dropoff_window: Vec<[u64; 24]>,
    tau_weekday: [f64; 24],
    tau_weekend: [f64; 24],
    delta_km: [f64; 24],
    day_type: DayType,
}

impl DemandModel {
    pub fn junctions(&self) -> &[JunctionId] {
        &self.junctions
    }

    pub fn len(&self) -> usize {
        self.junctions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.junctions.is_empty()
    }

    pub fn index_of(&self, id: JunctionId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn day_type(&self) -> DayType {
        self.day_type
    }

    /// `P^p` at the hour containing `minute_of_day`.
    pub fn pickup_probability(&self, junction: usize, minute_of_day: u32) -> f64 {
        self.pickup_prob[junction][(minute_of_day / 60) as usize % 24]
    }

    /// Sparse destination row for the hour; empty means no observed demand.
    pub fn destination_row(&self, junction: usize, hour: usize) -> &[(u32, f64)] {
        &self.dest_prob[junction][hour % 24]
    }

    /// `P^d` for a specific pair, 0 outside the row.
    pub fn destination_probability(&self, from: usize, to: usize, hour: usize) -> f64 {
        self.destination_row(from, hour)
            .iter()
            .find(|&&(k, _)| k as usize == to)
            .map_or(0.0, |&(_, p)| p)
    }

    /// (N^p, N^d) window counts behind the pick-up probability.
    pub fn window_counts(&self, junction: usize, hour: usize) -> (u64, u64) {
        (self.pickup_window[junction][hour % 24], self.dropoff_window[junction][hour % 24])
    }

    pub fn tau_min(&self, day_type: DayType, hour: usize) -> f64 {
        match day_type {
            DayType::Weekday => self.tau_weekday[hour % 24],
            DayType::Weekend => self.tau_weekend[hour % 24],
        }
    }

    pub fn delta_km(&self, hour: usize) -> f64 {
        self.delta_km[hour % 24]
    }
}

/// Junctions ranked by pick-up count (ties toward smaller id), truncated to
/// `k` and returned in id order. This is the aggregated action set the
/// solver runs on.
pub fn top_k_junctions(trips: &[SnappedTrip], k: usize) -> Vec<JunctionId> {
    let mut counts: BTreeMap<JunctionId, u64> = BTreeMap::new();
    for t in trips {
        *counts.entry(t.origin).or_insert(0) += 1;
    }
    let mut ranked: Vec<(JunctionId, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ids: Vec<JunctionId> = ranked.into_iter().take(k).map(|(id, _)| id).collect();
    ids.sort_unstable();
    ids
}

/// Reassigns both trip endpoints to the nearest junction of `target_set`
/// (great-circle on junction coordinates, ties toward the smaller id).
pub fn relabel_trips(
    trips: &[SnappedTrip],
    graph: &RoadGraph,
    target_set: &[JunctionId],
) -> Result<Vec<SnappedTrip>, NetworkError> {
    let coords: Vec<(JunctionId, (f64, f64))> = {
        let mut c = Vec::with_capacity(target_set.len());
        for &id in target_set {
            let idx = graph.index_of(id)?;
            c.push((id, graph.coords_of(idx)));
        }
        c
    };
    let nearest = |id: JunctionId| -> Result<JunctionId, NetworkError> {
        let loc = graph.coords_of(graph.index_of(id)?);
        let mut best = (coords[0].0, f64::INFINITY);
        for &(cand, cloc) in &coords {
            let d = haversine_km(loc, cloc);
            if d < best.1 {
                best = (cand, d);
            }
        }
        Ok(best.0)
    };
    let mut cache: HashMap<JunctionId, JunctionId> = HashMap::new();
    let mut out = Vec::with_capacity(trips.len());
    for t in trips {
        let origin = match cache.get(&t.origin) {
            Some(&m) => m,
            None => {
                let m = nearest(t.origin)?;
                cache.insert(t.origin, m);
                m
            }
        };
        let dest = match cache.get(&t.dest) {
            Some(&m) => m,
            None => {
                let m = nearest(t.dest)?;
                cache.insert(t.dest, m);
                m
            }
        };
        out.push(SnappedTrip { origin, dest, ..t.clone() });
    }
    Ok(out)
}

/// Builds the full demand model over `junction_ids` from (relabeled) trips.
///
/// Trips whose endpoints fall outside the junction set are ignored for the
/// count tables; τ estimation uses every trip.
pub fn estimate(
    trips: &[SnappedTrip],
    net: &SpeedNetwork,
    junction_ids: &[JunctionId],
    config: &EstimationConfig,
) -> Result<DemandModel, NetworkError> {
    let mut junctions = junction_ids.to_vec();
    junctions.sort_unstable();
    junctions.dedup();
    let n = junctions.len();
    if n == 0 {
        return Err(NetworkError::InvalidGraph("empty junction set".into()));
    }
    let index: HashMap<JunctionId, usize> =
        junctions.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let coords: Vec<(f64, f64)> = junctions
        .iter()
        .map(|&id| net.graph().index_of(id).map(|i| net.graph().coords_of(i)))
        .collect::<Result<_, _>>()?;

    let tau_weekday = inter_pickup_duration(trips, DayType::Weekday, config);
    let tau_weekend = inter_pickup_duration(trips, DayType::Weekend, config);
    let tau_primary = match config.day_type {
        DayType::Weekday => &tau_weekday,
        DayType::Weekend => &tau_weekend,
    };
    let delta_km = reachable_distance(net, tau_primary, config);

    // Per-junction minute-of-day histograms with prefix sums for O(1)
    // circular window counts.
    let mut pickup_minutes = vec![[0u32; 1440]; n];
    let mut dropoff_minutes = vec![[0u32; 1440]; n];
    let mut dest_counts: Vec<Vec<BTreeMap<u32, u64>>> = vec![vec![BTreeMap::new(); 24]; n];
    let mut pickup_totals: Vec<[u64; 24]> = vec![[0; 24]; n];
    for t in trips {
        let (Some(&o), Some(&d)) = (index.get(&t.origin), index.get(&t.dest)) else {
            continue;
        };
        let pm = t.pickup_minute_of_day() as usize % 1440;
        pickup_minutes[o][pm] += 1;
        let dm = (t.pickup_minute_of_day() + t.duration_min) as usize % 1440;
        dropoff_minutes[d][dm] += 1;
        let hour = t.pickup_hour();
        *dest_counts[o][hour].entry(d as u32).or_insert(0) += 1;
        pickup_totals[o][hour] += 1;
    }
    let pickup_prefix: Vec<Vec<u64>> = pickup_minutes.iter().map(|h| prefix(h)).collect();
    let dropoff_prefix: Vec<Vec<u64>> = dropoff_minutes.iter().map(|h| prefix(h)).collect();

    let mut pickup_prob = vec![[0.0f64; 24]; n];
    let mut pickup_window = vec![[0u64; 24]; n];
    let mut dropoff_window = vec![[0u64; 24]; n];
    for h in 0..24 {
        let w = (tau_primary[h].round() as i64).max(1) as usize;
        let start = h * 60;
        for i in 0..n {
            let np = circular_window(&pickup_prefix[i], start, w);
            let mut nd = 0u64;
            for k in 0..n {
                if haversine_km(coords[i], coords[k]) <= delta_km[h] {
                    let dstart = (start + 1440 - w.min(1440)) % 1440;
                    nd += circular_window(&dropoff_prefix[k], dstart, (2 * w).min(1440));
                }
            }
            pickup_window[i][h] = np;
            dropoff_window[i][h] = nd;
            pickup_prob[i][h] = pickup_ratio(np, nd);
        }
    }

    let mut dest_prob: Vec<Vec<Vec<(u32, f64)>>> = vec![vec![Vec::new(); 24]; n];
    for i in 0..n {
        for h in 0..24 {
            let total = pickup_totals[i][h];
            if total == 0 {
                continue;
            }
            dest_prob[i][h] = dest_counts[i][h]
                .iter()
                .map(|(&k, &c)| (k, c as f64 / total as f64))
                .collect();
        }
    }

    Ok(DemandModel {
        junctions,
        index,
        pickup_prob,
        dest_prob,
        pickup_window,
        dropoff_window,
        tau_weekday,
        tau_weekend,
        delta_km,
        day_type: config.day_type,
    })
}

fn prefix(hist: &[u32; 1440]) -> Vec<u64> {
    let mut p = vec![0u64; 1441];
    for (m, &c) in hist.iter().enumerate() {
        p[m + 1] = p[m] + c as u64;
    }
    p
}

fn circular_window(prefix: &[u64], start: usize, len: usize) -> u64 {
    debug_assert!(len <= 1440);
    let start = start % 1440;
    let end = start + len;
    if end <= 1440 {
        prefix[end] - prefix[start]
    } else {
        (prefix[1440] - prefix[start]) + prefix[end - 1440]
    }
}

/// Serialization form with deterministic key ordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandModelJson {
    pub junctions: Vec<u64>,
    pub day_type: DayType,
    /// hour -> junction id -> probability (zero entries omitted).
    pub pickup_prob: BTreeMap<u8, BTreeMap<u64, f64>>,
    /// (hour, junction id, N^p, N^d) window counts, zero pairs omitted.
    pub window_counts: Vec<(u8, u64, u64, u64)>,
    /// (hour, from id, to id, probability), sorted.
    pub dest_prob: Vec<(u8, u64, u64, f64)>,
    pub tau_weekday_min: Vec<f64>,
    pub tau_weekend_min: Vec<f64>,
    pub delta_km: Vec<f64>,
}

impl From<&DemandModel> for DemandModelJson {
    fn from(m: &DemandModel) -> Self {
        let mut pickup: BTreeMap<u8, BTreeMap<u64, f64>> = BTreeMap::new();
        for (j, probs) in m.pickup_prob.iter().enumerate() {
            for (h, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    pickup.entry(h as u8).or_default().insert(m.junctions[j].0, p);
                }
            }
        }
        let mut windows = Vec::new();
        for (j, (np, nd)) in m.pickup_window.iter().zip(&m.dropoff_window).enumerate() {
            for h in 0..24 {
                if np[h] > 0 || nd[h] > 0 {
                    windows.push((h as u8, m.junctions[j].0, np[h], nd[h]));
                }
            }
        }
        windows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut dest = Vec::new();
        for (j, by_hour) in m.dest_prob.iter().enumerate() {
            for (h, row) in by_hour.iter().enumerate() {
                for &(k, p) in row {
                    dest.push((h as u8, m.junctions[j].0, m.junctions[k as usize].0, p));
                }
            }
        }
        dest.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        DemandModelJson {
            junctions: m.junctions.iter().map(|j| j.0).collect(),
            day_type: m.day_type,
            pickup_prob: pickup,
            window_counts: windows,
            dest_prob: dest,
            tau_weekday_min: m.tau_weekday.to_vec(),
            tau_weekend_min: m.tau_weekend.to_vec(),
            delta_km: m.delta_km.to_vec(),
        }
    }
}

impl TryFrom<&DemandModelJson> for DemandModel {
    type Error = NetworkError;

    fn try_from(j: &DemandModelJson) -> Result<Self, NetworkError> {
        let junctions: Vec<JunctionId> = j.junctions.iter().map(|&id| JunctionId(id)).collect();
        let index: HashMap<JunctionId, usize> =
            junctions.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        if index.len() != junctions.len() {
            return Err(NetworkError::Parse("duplicate junction in demand model".into()));
        }
        let lookup = |id: u64| {
            index
                .get(&JunctionId(id))
                .copied()
                .ok_or_else(|| NetworkError::Parse(format!("unknown junction {id} in demand model")))
        };
        let n = junctions.len();
        let mut pickup_prob = vec![[0.0f64; 24]; n];
        for (&h, row) in &j.pickup_prob {
            for (&id, &p) in row {
                pickup_prob[lookup(id)?][h as usize % 24] = p;
            }
        }
        let mut pickup_window = vec![[0u64; 24]; n];
        let mut dropoff_window = vec![[0u64; 24]; n];
        for &(h, id, np, nd) in &j.window_counts {
            let i = lookup(id)?;
            pickup_window[i][h as usize % 24] = np;
            dropoff_window[i][h as usize % 24] = nd;
        }
        let mut dest_prob: Vec<Vec<Vec<(u32, f64)>>> = vec![vec![Vec::new(); 24]; n];
        for &(h, from, to, p) in &j.dest_prob {
            dest_prob[lookup(from)?][h as usize % 24].push((lookup(to)? as u32, p));
        }
        for by_hour in &mut dest_prob {
            for row in by_hour {
                row.sort_by_key(|&(k, _)| k);
            }
        }
        let arr = |v: &[f64]| -> Result<[f64; 24], NetworkError> {
            v.try_into().map_err(|_| NetworkError::Parse("expected 24 hourly entries".into()))
        };
        Ok(DemandModel {
            junctions,
            index,
            pickup_prob,
            dest_prob,
            pickup_window,
            dropoff_window,
            tau_weekday: arr(&j.tau_weekday_min)?,
            tau_weekend: arr(&j.tau_weekend_min)?,
            delta_km: arr(&j.delta_km)?,
            day_type: j.day_type,
        })
    }
}
