//! Scenario documents: strict JSON, versioned, times in seconds.

use std::fs;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use slowread_core::defense::{AnalysisConfig, GroupBy};
use slowread_core::netmodel::{Cidr, ProviderMap};
use slowread_core::server::{ServerConfig, TimeoutPolicy};
use slowread_core::simkernel::SimTime;
use slowread_core::workload::{AttackWorkload, LegitWorkload, ProbeWorkload};

pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA: &str = include_str!("scenario.schema.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{field}: {reason}")]
    Malformed { field: String, reason: String },
    #[error("missing file {}", path.display())]
    MissingFile { path: PathBuf },
}

fn malformed(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Malformed { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub horizon_s: f64,
    pub metrics_window_s: f64,
    #[serde(default)]
    pub provider_table: Option<String>,
    pub zones: Vec<ZoneFile>,
    #[serde(default)]
    pub legit: Vec<LegitFile>,
    #[serde(default)]
    pub attack: Vec<AttackFile>,
    #[serde(default)]
    pub probes: Vec<ProbeFile>,
    #[serde(default)]
    pub analysis: Option<AnalysisFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneFile {
    pub max_clients: u32,
    pub timeout_s: f64,
    pub timeout_policy: TimeoutPolicy,
    #[serde(default)]
    pub rtt_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegitFile {
    pub arrival_rate: f64,
    pub read_rate: [u64; 2],
    pub response_size: [u64; 2],
    #[serde(default = "default_window")]
    pub recv_window: u64,
    pub src_block: Cidr,
    #[serde(default)]
    pub slow_fraction: f64,
    #[serde(default = "default_slow_rate")]
    pub slow_read_rate: [u64; 2],
    #[serde(default = "default_slow_window")]
    pub slow_window: [u64; 2],
}

fn default_window() -> u64 {
    LegitWorkload::DEFAULT_RECV_WINDOW
}

fn default_slow_rate() -> [u64; 2] {
    [10, 50]
}

fn default_slow_window() -> [u64; 2] {
    [8, 64]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackFile {
    pub count: u64,
    pub provider_block: Cidr,
    #[serde(default = "default_attack_window")]
    pub window: [u64; 2],
    #[serde(default = "default_attack_rate")]
    pub read_rate: u64,
    pub launch_start_s: f64,
    pub launch_end_s: f64,
    pub response_size: u64,
}

fn default_attack_window() -> [u64; 2] {
    [*AttackWorkload::DEFAULT_WINDOW.start(), *AttackWorkload::DEFAULT_WINDOW.end()]
}

fn default_attack_rate() -> u64 {
    AttackWorkload::DEFAULT_READ_RATE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeFile {
    pub period_s: f64,
    pub read_rate: u64,
    pub response_size: u64,
    #[serde(default = "default_window")]
    pub recv_window: u64,
    pub src_ip: Ipv4Addr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisFile {
    #[serde(default = "defaults::slow_threshold")]
    pub slow_threshold: u64,
    #[serde(default = "defaults::min_observation_s")]
    pub min_observation_s: f64,
    #[serde(default = "defaults::group_by")]
    pub group_by: GroupBy,
    #[serde(default = "defaults::group_threshold")]
    pub group_threshold: usize,
    #[serde(default = "defaults::period_s")]
    pub period_s: f64,
    #[serde(default)]
    pub include_unknown_provider: bool,
    #[serde(default)]
    pub always_on: bool,
}

mod defaults {
    use super::*;

    pub fn slow_threshold() -> u64 {
        AnalysisConfig::default().slow_threshold
    }
    pub fn min_observation_s() -> f64 {
        AnalysisConfig::default().min_observation.as_secs_f64()
    }
    pub fn group_by() -> GroupBy {
        AnalysisConfig::default().group_by
    }
    pub fn group_threshold() -> usize {
        AnalysisConfig::default().group_threshold
    }
    pub fn period_s() -> f64 {
        AnalysisConfig::default().analysis_period.as_secs_f64()
    }
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub horizon: SimTime,
    pub metrics_window: SimTime,
    pub provider_table: Option<PathBuf>,
    pub providers: ProviderMap,
    pub zones: Vec<ServerConfig>,
    pub legit: Vec<LegitWorkload>,
    pub attack: Vec<AttackWorkload>,
    pub probes: Vec<ProbeWorkload>,
    pub analysis: Option<AnalysisConfig>,
}

fn seconds(field: &str, v: f64) -> Result<SimTime, ScenarioError> {
    if !v.is_finite() || v < 0.0 {
        return Err(malformed(field, "must be a finite, non-negative number of seconds"));
    }
    let us = (v * SimTime::MICROS_PER_SEC as f64).round();
    if us > u64::MAX as f64 / 2.0 {
        return Err(malformed(field, "too large"));
    }
    Ok(SimTime(us as u64))
}

fn positive_seconds(field: &str, v: f64) -> Result<SimTime, ScenarioError> {
    match seconds(field, v)? {
        SimTime::ZERO => Err(malformed(field, "must be positive")),
        t => Ok(t),
    }
}

fn range(field: &str, r: [u64; 2]) -> Result<std::ops::RangeInclusive<u64>, ScenarioError> {
    if r[0] > r[1] {
        return Err(malformed(field, format!("lower bound {} exceeds upper bound {}", r[0], r[1])));
    }
    Ok(r[0]..=r[1])
}

/// Parses and validates scenario text. Relative `provider_table` paths
/// resolve against `base_dir`.
pub fn parse_scenario_str(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path == "." { String::from("<document>") } else { path };
        malformed(field, inner.to_string())
    })?;
    validate(file, base_dir)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|_| ScenarioError::MissingFile { path: path.to_path_buf() })?;
    parse_scenario_str(&text, path.parent().unwrap_or(Path::new(".")))
}

fn validate(f: ScenarioFile, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    if f.schema_version != SCHEMA_VERSION {
        return Err(malformed(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", f.schema_version),
        ));
    }
    let horizon = positive_seconds("horizon_s", f.horizon_s)?;
    let metrics_window = positive_seconds("metrics_window_s", f.metrics_window_s)?;
    if f.legit.is_empty() && f.attack.is_empty() && f.probes.is_empty() {
        return Err(malformed("legit", "at least one workload is required"));
    }
    if f.zones.is_empty() || f.zones.len() > 2 {
        return Err(malformed("zones", "one or two zones are required"));
    }
    if f.analysis.is_some() && f.zones.len() != 2 {
        return Err(malformed("zones", "analysis requires two zones"));
    }

    let (provider_table, providers) = match &f.provider_table {
        None => (None, ProviderMap::new()),
        Some(rel) => {
            let path = base_dir.join(rel);
            if !path.is_file() {
                return Err(ScenarioError::MissingFile { path });
            }
            let map = ProviderMap::load(&path).map_err(|e| malformed("provider_table", e.to_string()))?;
            (Some(path), map)
        }
    };

    let mut zones = Vec::new();
    for (i, z) in f.zones.iter().enumerate() {
        let mut cfg = ServerConfig::new(
            z.max_clients,
            positive_seconds(&format!("zones[{i}].timeout_s"), z.timeout_s)?,
            z.timeout_policy,
        );
        cfg.rtt = seconds(&format!("zones[{i}].rtt_s"), z.rtt_s)?;
        zones.push(cfg);
    }

    let mut legit = Vec::new();
    for (i, l) in f.legit.iter().enumerate() {
        let field = |name: &str| format!("legit[{i}].{name}");
        let w = LegitWorkload {
            arrival_rate: l.arrival_rate,
            read_rate_range: range(&field("read_rate"), l.read_rate)?,
            response_size_range: range(&field("response_size"), l.response_size)?,
            recv_window: l.recv_window,
            src_block: l.src_block,
            slow_fraction: l.slow_fraction,
            slow_read_rate_range: range(&field("slow_read_rate"), l.slow_read_rate)?,
            slow_window_range: range(&field("slow_window"), l.slow_window)?,
        };
        w.validate().map_err(|e| malformed(format!("legit[{i}]"), e.to_string()))?;
        legit.push(w);
    }

    let mut attack = Vec::new();
    for (i, a) in f.attack.iter().enumerate() {
        let field = |name: &str| format!("attack[{i}].{name}");
        let w = AttackWorkload {
            count: a.count,
            provider_block: a.provider_block,
            window_range: range(&field("window"), a.window)?,
            read_rate: a.read_rate,
            launch_start: seconds(&field("launch_start_s"), a.launch_start_s)?,
            launch_end: seconds(&field("launch_end_s"), a.launch_end_s)?,
            response_size: a.response_size,
        };
        w.validate().map_err(|e| malformed(format!("attack[{i}]"), e.to_string()))?;
        if a.count > a.provider_block.usable_hosts() {
            return Err(malformed(
                field("count"),
                format!(
                    "{} exceeds the {} usable hosts of {}",
                    a.count,
                    a.provider_block.usable_hosts(),
                    a.provider_block
                ),
            ));
        }
        attack.push(w);
    }

    let mut probes = Vec::new();
    for (i, p) in f.probes.iter().enumerate() {
        let w = ProbeWorkload {
            period: positive_seconds(&format!("probes[{i}].period_s"), p.period_s)?,
            read_rate: p.read_rate,
            response_size: p.response_size,
            recv_window: p.recv_window,
            src_ip: p.src_ip,
        };
        w.validate().map_err(|e| malformed(format!("probes[{i}]"), e.to_string()))?;
        probes.push(w);
    }

    let analysis = match &f.analysis {
        None => None,
        Some(a) => {
            let cfg = AnalysisConfig {
                slow_threshold: a.slow_threshold,
                min_observation: seconds("analysis.min_observation_s", a.min_observation_s)?,
                group_by: a.group_by,
                group_threshold: a.group_threshold,
                analysis_period: positive_seconds("analysis.period_s", a.period_s)?,
                include_unknown_provider: a.include_unknown_provider,
                always_on: a.always_on,
            };
            cfg.validate().map_err(|e| malformed("analysis", e))?;
            Some(cfg)
        }
    };

    Ok(Scenario {
        name: f.name,
        seed: f.seed,
        horizon,
        metrics_window,
        provider_table,
        providers,
        zones,
        legit,
        attack,
        probes,
        analysis,
    })
}
