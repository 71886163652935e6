//! Junction graph, shortest paths, and the time-dependent driving-speed network.
//!
//! The graph is loaded once (JSON or node/edge CSV), then labeled with
//! per-hour segment speeds and idling ratios observed in trip records.
//! After construction the network is immutable and shared read-only by the
//! estimator, solver and simulator.
//!
//! Expected graph JSON (the `synth-demand` command emits this shape):
//!
//! ```json
//! {
//!   "junctions": [{"id": 1, "lat": 40.75, "lon": -73.99}],
//!   "edges": [{"from": 1, "to": 2, "km": 0.42}]
//! }
//! ```
//!
//! Converting OSM extracts into this shape is out of scope; any tool that
//! produces the JSON above (or `id,lat,lon` / `from,to,km` CSVs) will do.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::io::Read;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::geo::haversine_km;
use crate::trip_ingest::SnappedTrip;

/// Stable identifier of a road-network junction (node).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct JunctionId(pub u64);

impl fmt::Display for JunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Junction {
    pub id: JunctionId,
    pub lat: f64,
    pub lon: f64,
}

/// Directed road segment between two junctions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Segment {
    pub from: JunctionId,
    pub to: JunctionId,
    pub km: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("junction {0} is not in the network")]
    UnknownJunction(JunctionId),
    #[error("no path from {from} to {to}")]
    NoPath { from: JunctionId, to: JunctionId },
    #[error("no charging stations configured")]
    NoStations,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph parse error: {0}")]
    Parse(String),
}

#[derive(Deserialize)]
struct GraphJson {
    junctions: Vec<Junction>,
    edges: Vec<Segment>,
}

/// Immutable junction graph with directed, positive-length edges.
///
/// Junctions are stored sorted by id; all internal computations use dense
/// indices into that ordering. Adjacency lists are sorted by neighbor id so
/// every traversal visits candidates in a fixed order.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    junctions: Vec<Junction>,
    index: HashMap<JunctionId, usize>,
    /// Per node: outgoing (neighbor index, edge index), sorted by neighbor id.
    out_edges: Vec<Vec<(u32, u32)>>,
    /// Per node: incoming (neighbor index, edge index), sorted by neighbor id.
    in_edges: Vec<Vec<(u32, u32)>>,
    /// Edge list; `edges[e]` endpoints as dense indices.
    edges: Vec<(u32, u32, f64)>,
    segments: Vec<Segment>,
}

impl RoadGraph {
    pub fn new(mut junctions: Vec<Junction>, segments: Vec<Segment>) -> Result<Self, NetworkError> {
        junctions.sort_by_key(|j| j.id);
        junctions.dedup_by_key(|j| j.id);
        if junctions.is_empty() {
            return Err(NetworkError::InvalidGraph("no junctions".into()));
        }
        let index: HashMap<JunctionId, usize> =
            junctions.iter().enumerate().map(|(i, j)| (j.id, i)).collect();
        let mut edges = Vec::with_capacity(segments.len());
        for s in &segments {
            if !(s.km > 0.0) {
                return Err(NetworkError::InvalidGraph(format!(
                    "edge {} -> {} has non-positive length {}",
                    s.from, s.to, s.km
                )));
            }
            let f = *index.get(&s.from).ok_or(NetworkError::UnknownJunction(s.from))?;
            let t = *index.get(&s.to).ok_or(NetworkError::UnknownJunction(s.to))?;
            edges.push((f as u32, t as u32, s.km));
        }
        let mut out_edges = vec![Vec::new(); junctions.len()];
        let mut in_edges = vec![Vec::new(); junctions.len()];
        for (e, &(f, t, _)) in edges.iter().enumerate() {
            out_edges[f as usize].push((t, e as u32));
            in_edges[t as usize].push((f, e as u32));
        }
        for adj in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            adj.sort_unstable();
        }
        Ok(RoadGraph { junctions, index, out_edges, in_edges, edges, segments })
    }

    pub fn from_json_reader<R: Read>(rdr: R) -> Result<Self, NetworkError> {
        let g: GraphJson =
            serde_json::from_reader(rdr).map_err(|e| NetworkError::Parse(e.to_string()))?;
        Self::new(g.junctions, g.edges)
    }

    /// Loads `id,lat,lon` and `from,to,km` CSV files (with headers).
    pub fn from_csv_readers<R1: Read, R2: Read>(
        nodes: R1,
        edges: R2,
    ) -> Result<Self, NetworkError> {
        let mut junctions = Vec::new();
        let mut rdr = csv::Reader::from_reader(nodes);
        for rec in rdr.deserialize::<(u64, f64, f64)>() {
            let (id, lat, lon) = rec.map_err(|e| NetworkError::Parse(e.to_string()))?;
            junctions.push(Junction { id: JunctionId(id), lat, lon });
        }
        let mut segments = Vec::new();
        let mut rdr = csv::Reader::from_reader(edges);
        for rec in rdr.deserialize::<(u64, u64, f64)>() {
            let (from, to, km) = rec.map_err(|e| NetworkError::Parse(e.to_string()))?;
            segments.push(Segment { from: JunctionId(from), to: JunctionId(to), km });
        }
        Self::new(junctions, segments)
    }

    pub fn len(&self) -> usize {
        self.junctions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.junctions.is_empty()
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn contains(&self, id: JunctionId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn index_of(&self, id: JunctionId) -> Result<usize, NetworkError> {
        self.index.get(&id).copied().ok_or(NetworkError::UnknownJunction(id))
    }

    pub fn id_of(&self, idx: usize) -> JunctionId {
        self.junctions[idx].id
    }

    pub fn coords_of(&self, idx: usize) -> (f64, f64) {
        (self.junctions[idx].lat, self.junctions[idx].lon)
    }

    pub fn edge_km(&self, edge: u32) -> f64 {
        self.edges[edge as usize].2
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        self.out_edges[idx].iter().map(|&(t, _)| t as usize)
    }

    /// Nearest junction to `loc` by great-circle distance.
    ///
    /// Ties break toward the smallest junction id. Returns the snap distance
    /// alongside the winner so callers can enforce a snap tolerance.
    pub fn nearest_junction(&self, lat: f64, lon: f64) -> (JunctionId, f64) {
        debug_assert!(!self.junctions.is_empty());
        let mut best = (self.junctions[0].id, f64::INFINITY);
        for j in &self.junctions {
            let d = haversine_km((lat, lon), (j.lat, j.lon));
            if d < best.1 {
                best = (j.id, d);
            }
        }
        best
    }

    fn dijkstra(&self, src: usize, reverse: bool) -> DijkstraResult {
        let n = self.junctions.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(MinItem { dist: 0.0, node: src });
        while let Some(MinItem { dist: d, node: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            let adj = if reverse { &self.in_edges[u] } else { &self.out_edges[u] };
            for &(v, e) in adj {
                let (v, w) = (v as usize, self.edges[e as usize].2);
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(MinItem { dist: nd, node: v });
                }
            }
        }
        DijkstraResult { dist }
    }
}

#[derive(Debug)]
pub struct DijkstraResult {
    pub dist: Vec<f64>,
}

struct MinItem {
    dist: f64,
    node: usize,
}

impl PartialEq for MinItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for MinItem {}
impl PartialOrd for MinItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for MinItem {
    // Max-heap; invert so smaller (dist, node) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Caches one-to-all Dijkstra results and answers repeated path queries.
///
/// Among equal-length shortest paths the lexicographically smallest junction
/// sequence wins: the walk moves greedily to the smallest-id neighbor that
/// still lies on some minimal path (checked against forward distances from
/// the origin and backward distances to the destination).
pub struct PathOracle<'a> {
    graph: &'a RoadGraph,
    fwd: HashMap<usize, Rc<DijkstraResult>>,
    rev: HashMap<usize, Rc<DijkstraResult>>,
}

impl<'a> PathOracle<'a> {
    pub fn new(graph: &'a RoadGraph) -> Self {
        PathOracle { graph, fwd: HashMap::new(), rev: HashMap::new() }
    }

    pub fn forward(&mut self, src: usize) -> Rc<DijkstraResult> {
        let graph = self.graph;
        Rc::clone(
            self.fwd
                .entry(src)
                .or_insert_with(|| Rc::new(graph.dijkstra(src, false))),
        )
    }

    pub fn backward(&mut self, dst: usize) -> Rc<DijkstraResult> {
        let graph = self.graph;
        Rc::clone(
            self.rev
                .entry(dst)
                .or_insert_with(|| Rc::new(graph.dijkstra(dst, true))),
        )
    }

    /// Shortest-path distance in km, `None` when unreachable.
    pub fn distance_km(&mut self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(0.0);
        }
        let d = self.forward(i).dist[j];
        d.is_finite().then_some(d)
    }

    /// Shortest path as dense node indices (including endpoints) plus distance.
    pub fn node_path(&mut self, i: usize, j: usize) -> Option<(Vec<usize>, f64)> {
        if i == j {
            return Some((vec![i], 0.0));
        }
        let fwd = self.forward(i);
        let total = fwd.dist[j];
        if !total.is_finite() {
            return None;
        }
        let rev = self.backward(j);
        let eps = 1e-9 * total.max(1.0);
        let mut path = vec![i];
        let mut cur = i;
        while cur != j {
            let mut next = None;
            for &(v, e) in &self.graph.out_edges[cur] {
                let w = self.graph.edges[e as usize].2;
                if (fwd.dist[cur] + w + rev.dist[v as usize] - total).abs() <= eps {
                    next = Some(v as usize);
                    break; // adjacency is sorted by id: first hit is smallest
                }
            }
            cur = next.expect("consistent shortest-path distances");
            path.push(cur);
            debug_assert!(path.len() <= self.graph.len());
        }
        Some((path, total))
    }

    /// Path as edge indices, for segment-level labeling.
    pub fn edge_path(&mut self, i: usize, j: usize) -> Option<(Vec<u32>, f64)> {
        let (nodes, total) = self.node_path(i, j)?;
        let mut edges = Vec::with_capacity(nodes.len().saturating_sub(1));
        for pair in nodes.windows(2) {
            let e = self.graph.out_edges[pair[0]]
                .iter()
                .find(|&&(v, _)| v as usize == pair[1])
                .map(|&(_, e)| e)
                .expect("edge on reconstructed path");
            edges.push(e);
        }
        Some((edges, total))
    }
}

/// Per-trip travel estimate split into driving and idling components.
///
/// `total_min` is the whole-minute duration used by the decision clock:
/// driving plus idling rounded up, and at least one minute for any move
/// between distinct junctions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelEstimate {
    pub driving_min: f64,
    pub idling_min: f64,
    pub total_min: u32,
    pub distance_km: f64,
}

impl TravelEstimate {
    pub const ZERO: TravelEstimate =
        TravelEstimate { driving_min: 0.0, idling_min: 0.0, total_min: 0, distance_km: 0.0 };

    /// Exact (unrounded) total time in minutes.
    pub fn total_min_exact(&self) -> f64 {
        self.driving_min + self.idling_min
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpeedConfig {
    /// Speed assigned to segments with no observation, km/h.
    pub default_speed_kmh: f64,
    /// Upper cap on labeled speeds, km/h. Raw trip records produce occasional
    /// implausible averages; the paper does not cap, we do (configurable).
    pub speed_cap_kmh: f64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        SpeedConfig { default_speed_kmh: 25.0, speed_cap_kmh: 110.0 }
    }
}

/// Junction graph labeled with per-hour segment speeds and idling medians.
#[derive(Debug, Clone)]
pub struct SpeedNetwork {
    graph: RoadGraph,
    /// Per edge, per hour-of-day: representative driving speed in km/h.
    edge_speeds: Vec<[f64; 24]>,
    /// Per hour-of-day: median idling ratio λ̄ in [0, 1).
    idling_median: [f64; 24],
    config: SpeedConfig,
}

impl SpeedNetwork {
    /// Wraps a graph with all-default speeds and zero idling.
    pub fn unlabeled(graph: RoadGraph, config: SpeedConfig) -> Self {
        let n = graph.edge_count();
        SpeedNetwork {
            graph,
            edge_speeds: vec![[config.default_speed_kmh; 24]; n],
            idling_median: [0.0; 24],
            config,
        }
    }

    /// Builds the driving-speed network from filtered, snapped trips.
    ///
    /// Each trip's shortest path is decomposed into segments; every segment
    /// on the path accumulates the trip's average speed (recorded distance
    /// over recorded duration) into the trip's pick-up hour bucket, keeping
    /// the maximum. Idling medians are derived afterwards from the labeled
    /// speeds (`λ = 1 − T^d/T^t`, clamped at 0).
    pub fn from_trips(graph: RoadGraph, trips: &[SnappedTrip], config: SpeedConfig) -> Self {
        let mut net = Self::unlabeled(graph, config);
        net.label_segment_speeds(trips);
        net.idling_median = net.idling_ratio_stats(trips);
        net
    }

    fn label_segment_speeds(&mut self, trips: &[SnappedTrip]) {
        let mut observed: Vec<[f64; 24]> = vec![[0.0; 24]; self.graph.edge_count()];
        let mut oracle = PathOracle::new(&self.graph);
        let mut path_cache: HashMap<(usize, usize), Option<Vec<u32>>> = HashMap::new();
        for trip in trips {
            if trip.duration_min == 0 || trip.distance_km <= 0.0 {
                continue;
            }
            let (Ok(o), Ok(d)) =
                (self.graph.index_of(trip.origin), self.graph.index_of(trip.dest))
            else {
                continue;
            };
            if o == d {
                continue;
            }
            let speed = (trip.distance_km / (trip.duration_min as f64 / 60.0))
                .min(self.config.speed_cap_kmh);
            let hour = trip.pickup_hour();
            let edges = path_cache
                .entry((o, d))
                .or_insert_with(|| oracle.edge_path(o, d).map(|(e, _)| e));
            if let Some(edges) = edges {
                for &e in edges.iter() {
                    let slot = &mut observed[e as usize][hour];
                    if speed > *slot {
                        *slot = speed;
                    }
                }
            }
        }
        for (e, obs) in observed.iter().enumerate() {
            for h in 0..24 {
                self.edge_speeds[e][h] =
                    if obs[h] > 0.0 { obs[h] } else { self.config.default_speed_kmh };
            }
        }
    }

    /// Per-hour median idling ratio λ̄ over the given trips.
    ///
    /// Hours with no observations inherit the nearest populated hour
    /// (searching backward first on the 24-hour circle); an empty trip set
    /// yields all zeros.
    pub fn idling_ratio_stats(&self, trips: &[SnappedTrip]) -> [f64; 24] {
        let mut by_hour: Vec<Vec<f64>> = vec![Vec::new(); 24];
        let mut oracle = PathOracle::new(&self.graph);
        let mut path_cache: HashMap<(usize, usize), Option<(Vec<u32>, f64)>> = HashMap::new();
        for trip in trips {
            if trip.duration_min == 0 {
                continue;
            }
            let (Ok(o), Ok(d)) =
                (self.graph.index_of(trip.origin), self.graph.index_of(trip.dest))
            else {
                continue;
            };
            if o == d {
                continue;
            }
            let hour = trip.pickup_hour();
            let path = path_cache.entry((o, d)).or_insert_with(|| oracle.edge_path(o, d));
            let Some((edges, _)) = path else { continue };
            let driving_min: f64 = edges
                .iter()
                .map(|&e| self.graph.edge_km(e) / self.edge_speeds[e as usize][hour] * 60.0)
                .sum();
            let total_min = trip.duration_min as f64;
            let lambda = ((total_min - driving_min) / total_min).max(0.0);
            by_hour[hour].push(lambda);
        }
        let mut medians = [f64::NAN; 24];
        for h in 0..24 {
            if !by_hour[h].is_empty() {
                medians[h] = median(&mut by_hour[h]);
            }
        }
        fill_empty_hours(&mut medians, 0.0);
        medians
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn idling_median(&self, hour: usize) -> f64 {
        self.idling_median[hour % 24]
    }

    pub fn idling_medians(&self) -> &[f64; 24] {
        &self.idling_median
    }

    pub fn edge_speed(&self, edge: u32, hour: usize) -> f64 {
        self.edge_speeds[edge as usize][hour % 24]
    }

    pub fn config(&self) -> &SpeedConfig {
        &self.config
    }

    /// Sets the per-hour idling medians directly (artifact reload path).
    pub fn with_idling_medians(mut self, medians: [f64; 24]) -> Self {
        self.idling_median = medians;
        self
    }

    /// Sets per-edge speeds directly (artifact reload path).
    pub fn with_edge_speeds(mut self, speeds: Vec<[f64; 24]>) -> Result<Self, NetworkError> {
        if speeds.len() != self.graph.edge_count() {
            return Err(NetworkError::InvalidGraph(format!(
                "speed table has {} rows, graph has {} edges",
                speeds.len(),
                self.graph.edge_count()
            )));
        }
        self.edge_speeds = speeds;
        Ok(self)
    }

    pub fn edge_speeds(&self) -> &[[f64; 24]] {
        &self.edge_speeds
    }

    /// Length-weighted mean network speed at the given hour, km/h.
    pub fn mean_speed_kmh(&self, hour: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (e, speeds) in self.edge_speeds.iter().enumerate() {
            let len = self.graph.edges[e].2;
            num += len * speeds[hour % 24];
            den += len;
        }
        if den > 0.0 {
            num / den
        } else {
            self.config.default_speed_kmh
        }
    }

    /// Shortest path by distance with the lexicographic tie-break.
    pub fn shortest_path(
        &self,
        i: JunctionId,
        j: JunctionId,
    ) -> Result<(Vec<JunctionId>, f64), NetworkError> {
        let (a, b) = (self.graph.index_of(i)?, self.graph.index_of(j)?);
        let mut oracle = PathOracle::new(&self.graph);
        match oracle.node_path(a, b) {
            Some((nodes, km)) => {
                Ok((nodes.into_iter().map(|n| self.graph.id_of(n)).collect(), km))
            }
            None => Err(NetworkError::NoPath { from: i, to: j }),
        }
    }

    /// Travel estimate from `i` to `j` departing at `minute_of_day`.
    ///
    /// Driving time sums segment lengths over their hour-of-departure speeds;
    /// idling inflates it by the hour's median ratio: `T^t = T^d / (1 − λ̄)`.
    pub fn travel_time(
        &self,
        i: JunctionId,
        j: JunctionId,
        minute_of_day: u32,
    ) -> Result<TravelEstimate, NetworkError> {
        let (a, b) = (self.graph.index_of(i)?, self.graph.index_of(j)?);
        let mut oracle = PathOracle::new(&self.graph);
        self.travel_time_indexed(&mut oracle, a, b, minute_of_day)
            .ok_or(NetworkError::NoPath { from: i, to: j })
    }

    /// Same as [`travel_time`](Self::travel_time) over dense indices with a
    /// shared oracle; used by the table precomputation.
    pub fn travel_time_indexed(
        &self,
        oracle: &mut PathOracle<'_>,
        i: usize,
        j: usize,
        minute_of_day: u32,
    ) -> Option<TravelEstimate> {
        if i == j {
            return Some(TravelEstimate::ZERO);
        }
        let (edges, distance_km) = oracle.edge_path(i, j)?;
        let hour = (minute_of_day / 60) as usize % 24;
        Some(self.estimate_for_edges(&edges, distance_km, hour))
    }

    pub(crate) fn estimate_for_edges(
        &self,
        edges: &[u32],
        distance_km: f64,
        hour: usize,
    ) -> TravelEstimate {
        let driving_min: f64 = edges
            .iter()
            .map(|&e| self.graph.edge_km(e) / self.edge_speed(e, hour) * 60.0)
            .sum();
        let lambda = self.idling_median[hour];
        let idling_min = driving_min * lambda / (1.0 - lambda);
        let total_min = (driving_min + idling_min).ceil().max(1.0) as u32;
        TravelEstimate { driving_min, idling_min, total_min, distance_km }
    }
}

/// Median of an unsorted slice (mean of middles for even length).
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fills NaN hours from the nearest populated hour on the 24-hour circle,
/// preferring the backward direction on ties. All-NaN inputs become `fallback`.
pub fn fill_empty_hours(table: &mut [f64; 24], fallback: f64) {
    if table.iter().all(|v| v.is_nan()) {
        table.fill(fallback);
        return;
    }
    let src = *table;
    for h in 0..24 {
        if src[h].is_nan() {
            'search: for d in 1..=12usize {
                for cand in [(h + 24 - d) % 24, (h + d) % 24] {
                    if !src[cand].is_nan() {
                        table[h] = src[cand];
                        break 'search;
                    }
                }
            }
        }
    }
}

/// Supported plug standards and their default charging rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeModeKind {
    Mode3,
    FastDc,
}

impl ChargeModeKind {
    pub fn default_rate_kw(self) -> f64 {
        match self {
            ChargeModeKind::Mode3 => 6.6,
            ChargeModeKind::FastDc => 50.0,
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<ChargeModeKind>, NetworkError> {
        s.split(';')
            .map(|m| match m.trim().to_ascii_lowercase().as_str() {
                "mode3" => Ok(ChargeModeKind::Mode3),
                "fastdc" | "fast_dc" => Ok(ChargeModeKind::FastDc),
                other => Err(NetworkError::Parse(format!("unknown charge mode {other:?}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChargingStation {
    pub id: String,
    pub junction: JunctionId,
    pub modes: Vec<ChargeModeKind>,
}

/// Charging stations with a precomputed nearest-station table.
#[derive(Debug, Clone)]
pub struct StationIndex {
    stations: Vec<ChargingStation>,
    /// Per junction (dense index): (station index, shortest-path km).
    nearest: Vec<Option<(u32, f64)>>,
}

impl StationIndex {
    /// Builds the nearest-station table: one reverse Dijkstra per station,
    /// then an argmin per junction (ties toward the first station in id order).
    pub fn build(graph: &RoadGraph, mut stations: Vec<ChargingStation>) -> Result<Self, NetworkError> {
        if stations.is_empty() {
            return Err(NetworkError::NoStations);
        }
        stations.sort_by(|a, b| a.id.cmp(&b.id));
        let mut nearest: Vec<Option<(u32, f64)>> = vec![None; graph.len()];
        for (s, st) in stations.iter().enumerate() {
            let target = graph.index_of(st.junction)?;
            let res = graph.dijkstra(target, true);
            for (i, slot) in nearest.iter_mut().enumerate() {
                let d = res.dist[i];
                if d.is_finite() && slot.map_or(true, |(_, best)| d < best) {
                    *slot = Some((s as u32, d));
                }
            }
        }
        Ok(StationIndex { stations, nearest })
    }

    /// Loads `id,lat,lon,modes` CSV (modes separated by `;`), snapping each
    /// station to its nearest junction.
    pub fn from_csv_reader<R: Read>(graph: &RoadGraph, rdr: R) -> Result<Self, NetworkError> {
        let mut stations = Vec::new();
        let mut csv = csv::Reader::from_reader(rdr);
        for rec in csv.deserialize::<(String, f64, f64, String)>() {
            let (id, lat, lon, modes) = rec.map_err(|e| NetworkError::Parse(e.to_string()))?;
            let (junction, _) = graph.nearest_junction(lat, lon);
            stations.push(ChargingStation { id, junction, modes: ChargeModeKind::parse_list(&modes)? });
        }
        Self::build(graph, stations)
    }

    pub fn stations(&self) -> &[ChargingStation] {
        &self.stations
    }

    /// Nearest station from junction `idx`, with shortest-path distance.
    /// `None` when no station is reachable from there.
    pub fn nearest(&self, idx: usize) -> Option<(&ChargingStation, f64)> {
        self.nearest[idx].map(|(s, d)| (&self.stations[s as usize], d))
    }

    pub fn nearest_table(&self) -> &[Option<(u32, f64)>] {
        &self.nearest
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trip_ingest::test_support::snapped;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Square grid with unit spacing in km and ids numbered row-major from 1.
    pub(crate) fn grid_graph(n: u64, km: f64) -> RoadGraph {
        let mut junctions = Vec::new();
        let mut segments = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let id = JunctionId(r * n + c + 1);
                junctions.push(Junction {
                    id,
                    lat: 40.0 + r as f64 * km / 111.195,
                    lon: -74.0 + c as f64 * km / (111.195 * (40.0f64).to_radians().cos()),
                });
            }
        }
        let idx = |r: u64, c: u64| JunctionId(r * n + c + 1);
        for r in 0..n {
            for c in 0..n {
                if c + 1 < n {
                    segments.push(Segment { from: idx(r, c), to: idx(r, c + 1), km });
                    segments.push(Segment { from: idx(r, c + 1), to: idx(r, c), km });
                }
                if r + 1 < n {
                    segments.push(Segment { from: idx(r, c), to: idx(r + 1, c), km });
                    segments.push(Segment { from: idx(r + 1, c), to: idx(r, c), km });
                }
            }
        }
        RoadGraph::new(junctions, segments).unwrap()
    }

    fn triangle() -> RoadGraph {
        // 1 -> 2 -> 3 costs 1+1, direct 1 -> 3 costs 2.5.
        let junctions = vec![
            Junction { id: JunctionId(1), lat: 40.0, lon: -74.0 },
            Junction { id: JunctionId(2), lat: 40.01, lon: -74.0 },
            Junction { id: JunctionId(3), lat: 40.02, lon: -74.0 },
        ];
        let segments = vec![
            Segment { from: JunctionId(1), to: JunctionId(2), km: 1.0 },
            Segment { from: JunctionId(2), to: JunctionId(3), km: 1.0 },
            Segment { from: JunctionId(1), to: JunctionId(3), km: 2.5 },
        ];
        RoadGraph::new(junctions, segments).unwrap()
    }

    #[test]
    fn shortest_path_identity() {
        let net = SpeedNetwork::unlabeled(triangle(), SpeedConfig::default());
        let (path, km) = net.shortest_path(JunctionId(2), JunctionId(2)).unwrap();
        assert_eq!(path, vec![JunctionId(2)]);
        assert_eq!(km, 0.0);
    }

    #[test]
    fn shortest_path_prefers_two_hop_over_long_direct() {
        let net = SpeedNetwork::unlabeled(triangle(), SpeedConfig::default());
        let (path, km) = net.shortest_path(JunctionId(1), JunctionId(3)).unwrap();
        assert_eq!(path, vec![JunctionId(1), JunctionId(2), JunctionId(3)]);
        assert_abs_diff_eq!(km, 2.0);
    }

    #[test]
    fn shortest_path_disconnected_is_error() {
        let junctions = vec![
            Junction { id: JunctionId(1), lat: 40.0, lon: -74.0 },
            Junction { id: JunctionId(2), lat: 40.1, lon: -74.0 },
        ];
        let net = SpeedNetwork::unlabeled(
            RoadGraph::new(junctions, vec![]).unwrap(),
            SpeedConfig::default(),
        );
        assert!(matches!(
            net.shortest_path(JunctionId(1), JunctionId(2)),
            Err(NetworkError::NoPath { .. })
        ));
    }

    #[test]
    fn equal_length_paths_break_ties_lexicographically() {
        // Diamond: 1 -> {2, 3} -> 4, both routes 2 km.
        let junctions = (1..=4)
            .map(|i| Junction { id: JunctionId(i), lat: 40.0 + i as f64 * 0.01, lon: -74.0 })
            .collect();
        let segments = vec![
            Segment { from: JunctionId(1), to: JunctionId(3), km: 1.0 },
            Segment { from: JunctionId(1), to: JunctionId(2), km: 1.0 },
            Segment { from: JunctionId(3), to: JunctionId(4), km: 1.0 },
            Segment { from: JunctionId(2), to: JunctionId(4), km: 1.0 },
        ];
        let net = SpeedNetwork::unlabeled(
            RoadGraph::new(junctions, segments).unwrap(),
            SpeedConfig::default(),
        );
        let (path, _) = net.shortest_path(JunctionId(1), JunctionId(4)).unwrap();
        assert_eq!(path, vec![JunctionId(1), JunctionId(2), JunctionId(4)]);
    }

    #[test]
    fn segment_speed_takes_hourly_maximum() {
        // Single 7 km edge observed at 20 km/h (21 min) and 35 km/h (12 min)
        // in hour 9; the label keeps the maximum.
        let junctions = vec![
            Junction { id: JunctionId(1), lat: 40.0, lon: -74.0 },
            Junction { id: JunctionId(2), lat: 40.06, lon: -74.0 },
        ];
        let segments = vec![Segment { from: JunctionId(1), to: JunctionId(2), km: 7.0 }];
        let graph = RoadGraph::new(junctions, segments).unwrap();
        let trips = vec![
            snapped(JunctionId(1), JunctionId(2), "2013-01-09 09:00", 21, 7.0),
            snapped(JunctionId(1), JunctionId(2), "2013-01-09 09:10", 12, 7.0),
        ];
        let net = SpeedNetwork::from_trips(graph, &trips, SpeedConfig::default());
        assert_abs_diff_eq!(net.edge_speed(0, 9), 35.0);
        // Unobserved hour falls back to the default.
        assert_abs_diff_eq!(net.edge_speed(0, 3), 25.0);
    }

    #[test]
    fn two_hop_trip_labels_both_segments() {
        let graph = triangle();
        // 1 -> 3 via 2 (2 km shortest path); 2 km in 4 min = 30 km/h at hour 3.
        let t1 = snapped(JunctionId(1), JunctionId(3), "2013-01-09 03:00", 4, 2.0);
        // Second, slower observation: 2 km in 5 min = 24 km/h.
        let t2 = snapped(JunctionId(1), JunctionId(3), "2013-01-09 03:30", 5, 2.0);
        let net = SpeedNetwork::from_trips(graph, &[t1, t2], SpeedConfig::default());
        assert_abs_diff_eq!(net.edge_speed(0, 3), 30.0); // 1->2
        assert_abs_diff_eq!(net.edge_speed(1, 3), 30.0); // 2->3
    }

    #[test]
    fn labeling_is_order_independent() {
        let graph = triangle();
        let trips = vec![
            snapped(JunctionId(1), JunctionId(3), "2013-01-09 03:00", 4, 2.0),
            snapped(JunctionId(1), JunctionId(2), "2013-01-09 03:10", 2, 1.0),
            snapped(JunctionId(2), JunctionId(3), "2013-01-09 03:20", 3, 1.0),
        ];
        let a = SpeedNetwork::from_trips(graph.clone(), &trips, SpeedConfig::default());
        let mut rev = trips.clone();
        rev.reverse();
        let b = SpeedNetwork::from_trips(graph, &rev, SpeedConfig::default());
        assert_eq!(a.edge_speeds(), b.edge_speeds());
        assert_eq!(a.idling_medians(), b.idling_medians());
    }

    #[test]
    fn idling_ratio_half_when_driving_is_half_of_total() {
        let graph = triangle();
        // Label hour 9 at 20 km/h (1 km in 3 min), then a 6-minute trip over
        // the same segment: T^d = 3, T^t = 6 -> λ = 0.5 for that trip.
        let label = snapped(JunctionId(1), JunctionId(2), "2013-01-09 09:00", 3, 1.0);
        let net = SpeedNetwork::from_trips(graph, &[label.clone()], SpeedConfig::default());
        let slow = snapped(JunctionId(1), JunctionId(2), "2013-01-09 09:05", 6, 1.0);
        let medians = net.idling_ratio_stats(&[slow]);
        assert_abs_diff_eq!(medians[9], 0.5);
    }

    #[test]
    fn idling_ratio_clamps_fast_outliers_to_zero() {
        let graph = triangle();
        let label = snapped(JunctionId(1), JunctionId(2), "2013-01-09 09:00", 10, 1.0);
        let net = SpeedNetwork::from_trips(graph, &[label], SpeedConfig::default());
        // 1 minute recorded over a segment whose labeled driving time is 10.
        let fast = snapped(JunctionId(1), JunctionId(2), "2013-01-09 09:05", 1, 1.0);
        let medians = net.idling_ratio_stats(&[fast]);
        assert_eq!(medians[9], 0.0);
    }

    #[test]
    fn idling_median_is_exact_over_constructed_list() {
        let mut values = vec![0.2, 0.8, 0.5, 0.4];
        assert_abs_diff_eq!(median(&mut values), 0.45);
        let mut odd = vec![0.9, 0.1, 0.3];
        assert_abs_diff_eq!(median(&mut odd), 0.3);
    }

    #[test]
    fn empty_hours_inherit_nearest_populated() {
        let mut table = [f64::NAN; 24];
        table[9] = 0.5;
        table[15] = 0.3;
        fill_empty_hours(&mut table, 0.0);
        assert_eq!(table[10], 0.5);
        assert_eq!(table[14], 0.3);
        // Hour 12 is equidistant; backward direction wins.
        assert_eq!(table[12], 0.5);
        // Circular search: from hour 23 the nearest populated hour is 15
        // (8 back) rather than 9 (10 forward through midnight).
        assert_eq!(table[23], 0.3);
    }

    #[test]
    fn travel_time_examples() {
        // Single 2 km edge at 30 km/h.
        let junctions = vec![
            Junction { id: JunctionId(1), lat: 40.0, lon: -74.0 },
            Junction { id: JunctionId(2), lat: 40.02, lon: -74.0 },
        ];
        let segments = vec![Segment { from: JunctionId(1), to: JunctionId(2), km: 2.0 }];
        let graph = RoadGraph::new(junctions, segments).unwrap();
        let label = snapped(JunctionId(1), JunctionId(2), "2013-01-09 10:00", 4, 2.0);
        let mut net = SpeedNetwork::from_trips(graph, &[label], SpeedConfig::default());

        let est = net.travel_time(JunctionId(1), JunctionId(2), 10 * 60).unwrap();
        assert_abs_diff_eq!(est.driving_min, 4.0);
        assert_eq!(est.total_min, 4);

        net.idling_median[10] = 0.5;
        let est = net.travel_time(JunctionId(1), JunctionId(2), 10 * 60).unwrap();
        assert_abs_diff_eq!(est.idling_min, 4.0);
        assert_eq!(est.total_min, 8);

        let same = net.travel_time(JunctionId(1), JunctionId(1), 10 * 60).unwrap();
        assert_eq!(same, TravelEstimate::ZERO);
    }

    #[test]
    fn nearest_station_examples() {
        let graph = grid_graph(3, 1.0); // ids 1..=9
        let stations = vec![
            ChargingStation { id: "a".into(), junction: JunctionId(1), modes: vec![ChargeModeKind::Mode3] },
            ChargingStation { id: "b".into(), junction: JunctionId(9), modes: vec![ChargeModeKind::FastDc] },
        ];
        let idx = StationIndex::build(&graph, stations).unwrap();
        // Station at the junction itself.
        let (st, d) = idx.nearest(0).unwrap();
        assert_eq!(st.id, "a");
        assert_eq!(d, 0.0);
        // Junction 2 (index 1): 1 km to station a, 3 km to station b.
        let (st, d) = idx.nearest(1).unwrap();
        assert_eq!(st.id, "a");
        assert_abs_diff_eq!(d, 1.0);
        // No stations at all is a construction error.
        assert!(matches!(StationIndex::build(&graph, vec![]), Err(NetworkError::NoStations)));
    }

    #[test]
    fn json_roundtrip_loads_graph() {
        let json = r#"{"junctions":[{"id":7,"lat":40.0,"lon":-74.0},{"id":3,"lat":40.1,"lon":-74.1}],
                       "edges":[{"from":7,"to":3,"km":0.9}]}"#;
        let g = RoadGraph::from_json_reader(json.as_bytes()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.id_of(0), JunctionId(3)); // sorted by id
        assert!(g.contains(JunctionId(7)));
    }

    proptest! {
        #[test]
        fn triangle_inequality_on_grid(
            a in 0usize..9, b in 0usize..9, c in 0usize..9,
        ) {
            let graph = grid_graph(3, 0.7);
            let mut oracle = PathOracle::new(&graph);
            let ab = oracle.distance_km(a, b).unwrap();
            let bc = oracle.distance_km(b, c).unwrap();
            let ac = oracle.distance_km(a, c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn total_time_never_below_driving_time(hour in 0u32..24, lambda in 0.0f64..0.9) {
            let graph = grid_graph(3, 1.0);
            let mut net = SpeedNetwork::unlabeled(graph, SpeedConfig::default());
            net.idling_median = [lambda; 24];
            let est = net.travel_time(JunctionId(1), JunctionId(9), hour * 60).unwrap();
            prop_assert!(est.total_min as f64 >= est.driving_min - 1e-12);
            prop_assert!(est.idling_min >= 0.0);
        }
    }
}
