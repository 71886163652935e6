//! Single TOML run configuration shared by every pipeline stage.
//!
//! All blocks have sensible defaults; a minimal config only names the input
//! paths. The effective configuration (after any CLI overrides) is hashed
//! into every artifact so downstream stages can detect stale files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::sha256_hex;
use crate::energy_model::{Battery, ChargingMode, EnergyParams};
use crate::estimation::EstimationConfig;
use crate::fare_model::{EnergyPrice, Powertrain, Tariff};
use crate::fleet_sim::synth::SynthConfig;
use crate::fleet_sim::SimConfig;
use crate::mdp_solver::SolverConfig;
use crate::road_network::{ChargeModeKind, SpeedConfig};
use crate::trip_ingest::IngestConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub trips: PathBuf,
    pub graph: PathBuf,
    /// Node/edge CSV pair, used instead of `graph` when both are set.
    pub graph_nodes: Option<PathBuf>,
    pub graph_edges: Option<PathBuf>,
    pub stations: PathBuf,
    pub holidays: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            trips: "trips.csv".into(),
            graph: "graph.json".into(),
            graph_nodes: None,
            graph_edges: None,
            stations: "stations.csv".into(),
            holidays: None,
            out_dir: "out".into(),
        }
    }
}

/// Vehicle energy block: consumption model plus battery and charging.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyBlock {
    #[serde(flatten)]
    pub params: EnergyParams,
    pub battery_kwh: f64,
    pub usable_low_frac: f64,
    pub usable_high_frac: f64,
    pub charge_mode: ChargeModeKind,
    /// Overrides the mode's default power when set.
    pub charge_rate_kw: Option<f64>,
}

impl Default for EnergyBlock {
    fn default() -> Self {
        EnergyBlock {
            params: EnergyParams::default(),
            battery_kwh: 50.0,
            usable_low_frac: 0.05,
            usable_high_frac: 0.95,
            charge_mode: ChargeModeKind::FastDc,
            charge_rate_kw: None,
        }
    }
}

impl EnergyBlock {
    pub fn battery(&self) -> Battery {
        Battery {
            capacity_kwh: self.battery_kwh,
            low_frac: self.usable_low_frac,
            high_frac: self.usable_high_frac,
        }
    }

    pub fn charging_mode(&self) -> ChargingMode {
        match self.charge_rate_kw {
            Some(rate) => ChargingMode::with_rate(self.charge_mode, rate),
            None => ChargingMode::new(self.charge_mode),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleBlock {
    pub powertrain: Powertrain,
}

impl Default for VehicleBlock {
    fn default() -> Self {
        VehicleBlock { powertrain: Powertrain::Electric }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub network: SpeedConfig,
    pub estimation: EstimationConfig,
    pub energy: EnergyBlock,
    pub tariff: Tariff,
    pub prices: EnergyPrice,
    pub vehicle: VehicleBlock,
    pub solver: SolverConfig,
    pub sim: SimConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), source: e })?;
        toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })
    }

    /// Hash of the effective configuration (canonical JSON of the struct,
    /// not the file bytes, so CLI overrides participate).
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn out_path(&self, file: &str) -> PathBuf {
        self.paths.out_dir.join(file)
    }
}
