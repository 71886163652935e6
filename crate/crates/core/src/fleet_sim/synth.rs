//! Synthetic grid-city demand generator.
//!
//! The real trip dataset cannot ship with the repository, so fixtures and
//! acceptance runs use a generated city: a square grid with hot-spot
//! attraction, hour-of-day speed and idling profiles, and per-taxi trip
//! sequences with exponential search gaps. Trips record exact junction
//! coordinates and shortest-path (Manhattan) distances, so they snap
//! losslessly and pass the route-discrepancy filter.

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::road_network::{Junction, JunctionId, Segment};
use crate::trip_ingest::TripRecord;

/// NYC-flavored hourly average speeds (km/h): free-flowing nights, slow
/// rush hours.
const SPEED_KMH: [f64; 24] = [
    30.0, 30.0, 32.0, 32.0, 30.0, 28.0, 24.0, 20.0, 17.0, 16.0, 17.0, 18.0, 19.0, 19.0, 18.0,
    17.0, 15.0, 15.0, 17.0, 20.0, 23.0, 26.0, 28.0, 29.0,
];

/// Hourly idling ratios used to inflate trip durations.
const IDLE_RATIO: [f64; 24] = [
    0.28, 0.26, 0.25, 0.25, 0.26, 0.30, 0.36, 0.44, 0.50, 0.52, 0.48, 0.45, 0.44, 0.44, 0.45,
    0.48, 0.52, 0.54, 0.50, 0.44, 0.38, 0.34, 0.31, 0.29,
];

const ANCHOR_LAT: f64 = 40.70;
const ANCHOR_LON: f64 = -74.00;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub grid_n: u64,
    pub spacing_km: f64,
    pub n_taxis: usize,
    pub start_date: NaiveDate,
    pub days: u32,
    pub seed: u64,
    pub n_hotspots: usize,
    pub n_stations: usize,
    pub mean_gap_min: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid_n: 5,
            spacing_km: 0.8,
            n_taxis: 60,
            start_date: NaiveDate::from_ymd_opt(2013, 1, 9).unwrap(),
            days: 1,
            seed: 42,
            n_hotspots: 3,
            n_stations: 2,
            mean_gap_min: 12.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationRow {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub modes: String,
}

#[derive(Debug, Clone)]
pub struct SynthCity {
    pub junctions: Vec<Junction>,
    pub segments: Vec<Segment>,
    pub trips: Vec<TripRecord>,
    pub stations: Vec<StationRow>,
}

fn coords(cfg: &SynthConfig, row: u64, col: u64) -> (f64, f64) {
    let dlat = cfg.spacing_km / 111.195;
    let dlon = cfg.spacing_km / (111.195 * ANCHOR_LAT.to_radians().cos());
    (ANCHOR_LAT + row as f64 * dlat, ANCHOR_LON + col as f64 * dlon)
}

fn junction_index(cfg: &SynthConfig, idx: u64) -> (u64, u64) {
    (idx / cfg.grid_n, idx % cfg.grid_n)
}

fn manhattan_km(cfg: &SynthConfig, a: u64, b: u64) -> f64 {
    let (ra, ca) = junction_index(cfg, a);
    let (rb, cb) = junction_index(cfg, b);
    (ra.abs_diff(rb) + ca.abs_diff(cb)) as f64 * cfg.spacing_km
}

/// Generates the grid city and its trip records, deterministic in the seed.
pub fn generate(cfg: &SynthConfig) -> SynthCity {
    let n = cfg.grid_n;
    let count = n * n;
    let mut junctions = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let (r, c) = junction_index(cfg, idx);
        let (lat, lon) = coords(cfg, r, c);
        junctions.push(Junction { id: JunctionId(idx + 1), lat, lon });
    }
    let mut segments = Vec::new();
    let jid = |r: u64, c: u64| JunctionId(r * n + c + 1);
    for r in 0..n {
        for c in 0..n {
            if c + 1 < n {
                segments.push(Segment { from: jid(r, c), to: jid(r, c + 1), km: cfg.spacing_km });
                segments.push(Segment { from: jid(r, c + 1), to: jid(r, c), km: cfg.spacing_km });
            }
            if r + 1 < n {
                segments.push(Segment { from: jid(r, c), to: jid(r + 1, c), km: cfg.spacing_km });
                segments.push(Segment { from: jid(r + 1, c), to: jid(r, c), km: cfg.spacing_km });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Hot spots: the city center plus random distinct picks; decaying
    // attraction weights.
    let mut hotspots: Vec<u64> = vec![count / 2];
    while hotspots.len() < cfg.n_hotspots.max(1).min(count as usize) {
        let cand = rng.random_range(0..count);
        if !hotspots.contains(&cand) {
            hotspots.push(cand);
        }
    }
    let weights: Vec<f64> = (0..hotspots.len()).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let weight_total: f64 = weights.iter().sum();

    let mut draw_hotspot = |rng: &mut ChaCha8Rng| -> u64 {
        let mut u = rng.random::<f64>() * weight_total;
        for (h, &w) in hotspots.iter().zip(&weights) {
            if u < w {
                return *h;
            }
            u -= w;
        }
        *hotspots.last().unwrap()
    };
    let spread = |rng: &mut ChaCha8Rng, from: u64| -> u64 {
        let (mut r, mut c) = junction_index(cfg, from);
        for _ in 0..rng.random_range(0..3u32) {
            match rng.random_range(0..4u32) {
                0 if r + 1 < n => r += 1,
                1 if r > 0 => r -= 1,
                2 if c + 1 < n => c += 1,
                _ if c > 0 => c -= 1,
                _ => {}
            }
        }
        r * n + c
    };

    let mut trips = Vec::new();
    for day in 0..cfg.days {
        let date = cfg.start_date + chrono::Duration::days(day as i64);
        for taxi in 0..cfg.n_taxis {
            // Mostly morning shifts, mirroring the changeover pattern.
            let morning = taxi % 10 < 7;
            let anchor_h = if morning { 5 } else { 17 };
            let start = NaiveDateTime::new(
                date,
                NaiveTime::from_hms_opt(anchor_h, 0, 0).unwrap(),
            ) + chrono::Duration::minutes(rng.random_range(0..45i64));
            let shift_end = start + chrono::Duration::hours(11);
            let mut cursor = start;
            loop {
                let u: f64 = rng.random();
                let gap = (-cfg.mean_gap_min * (1.0 - u).ln()).clamp(1.0, 90.0) as i64;
                let origin = if rng.random::<f64>() < 0.65 {
                    let h = draw_hotspot(&mut rng);
                    spread(&mut rng, h)
                } else {
                    rng.random_range(0..count)
                };
                let pickup = cursor + chrono::Duration::minutes(gap);
                let mut dest = origin;
                for _ in 0..10 {
                    dest = if rng.random::<f64>() < 0.5 {
                        let h = draw_hotspot(&mut rng);
                        spread(&mut rng, h)
                    } else {
                        rng.random_range(0..count)
                    };
                    if dest != origin {
                        break;
                    }
                }
                if dest == origin {
                    cursor = pickup;
                    continue;
                }
                let dist = manhattan_km(cfg, origin, dest);
                let hour = pickup.hour() as usize;
                let driving_min = dist / SPEED_KMH[hour] * 60.0;
                let duration = (driving_min / (1.0 - IDLE_RATIO[hour])).ceil().max(1.0) as i64;
                let dropoff = pickup + chrono::Duration::minutes(duration);
                if dropoff > shift_end {
                    break;
                }
                let (ro, co) = junction_index(cfg, origin);
                let (rd, cd) = junction_index(cfg, dest);
                trips.push(TripRecord {
                    taxi_id: format!("t{taxi:04}"),
                    pickup_time: pickup,
                    dropoff_time: dropoff,
                    trip_distance_km: dist,
                    pickup_loc: coords(cfg, ro, co),
                    dropoff_loc: coords(cfg, rd, cd),
                    recorded_fare_usd: None,
                });
                cursor = dropoff;
            }
        }
    }

    // Stations: city center and the south-west corner first, then random.
    let mut station_junctions: Vec<u64> = vec![count / 2, 0];
    while station_junctions.len() < cfg.n_stations.max(1).min(count as usize) {
        let cand = rng.random_range(0..count);
        if !station_junctions.contains(&cand) {
            station_junctions.push(cand);
        }
    }
    station_junctions.truncate(cfg.n_stations.max(1));
    let stations = station_junctions
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let (r, c) = junction_index(cfg, j);
            let (lat, lon) = coords(cfg, r, c);
            StationRow { id: format!("cs{i:02}"), lat, lon, modes: "mode3;fastdc".into() }
        })
        .collect();

    SynthCity { junctions, segments, trips, stations }
}

/// Trip CSV in the documented ingest schema.
pub fn trips_csv(trips: &[TripRecord]) -> String {
    let mut out = String::from(
        "taxi_id,pickup_datetime,dropoff_datetime,trip_distance_km,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon,fare_usd\n",
    );
    for t in trips {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            t.taxi_id,
            t.pickup_time.format("%Y-%m-%d %H:%M"),
            t.dropoff_time.format("%Y-%m-%d %H:%M"),
            t.trip_distance_km,
            t.pickup_loc.0,
            t.pickup_loc.1,
            t.dropoff_loc.0,
            t.dropoff_loc.1,
            t.recorded_fare_usd.map_or(String::new(), |f| f.to_string()),
        ));
    }
    out
}

#[derive(Serialize)]
struct GraphOut<'a> {
    junctions: &'a [Junction],
    edges: &'a [Segment],
}

/// Graph JSON in the documented loader schema.
pub fn graph_json(junctions: &[Junction], segments: &[Segment]) -> String {
    serde_json::to_string_pretty(&GraphOut { junctions, edges: segments }).unwrap()
}

/// Stations CSV (`id,lat,lon,modes`).
pub fn stations_csv(stations: &[StationRow]) -> String {
    let mut out = String::from("id,lat,lon,modes\n");
    for s in stations {
        out.push_str(&format!("{},{},{},{}\n", s.id, s.lat, s.lon, s.modes));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_network::RoadGraph;
    use crate::trip_ingest::{ingest, IngestConfig};

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(trips_csv(&a.trips), trips_csv(&b.trips));
        assert_eq!(a.trips.len(), b.trips.len());
        assert!(!a.trips.is_empty());
    }

    #[test]
    fn trips_survive_the_ingest_pipeline() {
        let cfg = SynthConfig::default();
        let city = generate(&cfg);
        let graph = RoadGraph::new(city.junctions.clone(), city.segments.clone()).unwrap();
        let csv = trips_csv(&city.trips);
        let (kept, report) = ingest(csv.as_bytes(), &graph, &IngestConfig::default()).unwrap();
        // Distances are exact shortest paths and coordinates sit on
        // junctions, so everything passes.
        assert_eq!(kept.len(), city.trips.len());
        assert_eq!(report.rejected_total(), 0);
    }

    #[test]
    fn graph_json_parses_back() {
        let cfg = SynthConfig { grid_n: 3, ..Default::default() };
        let city = generate(&cfg);
        let graph = RoadGraph::from_json_reader(
            graph_json(&city.junctions, &city.segments).as_bytes(),
        )
        .unwrap();
        assert_eq!(graph.len(), 9);
    }
}
