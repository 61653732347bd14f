//! Runs a scenario and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use slowread_core::metrics::{export, ExportFormat, MetricsError, MetricsReport};
use slowread_core::sim::{build_connects, run_simulation, RunOutcome, SimConfig};
use slowread_core::simkernel::SimRng;
use slowread_core::workload::WorkloadError;

use crate::scenario::Scenario;

pub const EVENTS_FILE: &str = "events.log";
pub const METRICS_CSV: &str = "metrics.csv";
pub const REPORT_JSON: &str = "report.json";
pub const FINGERPRINT_FILE: &str = "fingerprint.txt";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

impl From<MetricsError> for RunError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io { path, source } => RunError::Io { path, reason: source.to_string() },
            other => RunError::Io { path: String::new(), reason: other.to_string() },
        }
    }
}

pub struct Simulated {
    pub outcome: RunOutcome,
    pub report: MetricsReport,
    pub log_text: String,
    pub fingerprint: String,
}

pub fn sim_config(s: &Scenario) -> SimConfig {
    SimConfig {
        zones: s.zones.clone(),
        analysis: s.analysis.clone(),
        providers: s.providers.clone(),
        horizon: s.horizon,
    }
}

/// Sha256 of the serialized event log, lowercase hex.
pub fn fingerprint(log_text: &str) -> String {
    format!("{:x}", Sha256::digest(log_text.as_bytes()))
}

pub fn simulate(s: &Scenario) -> Result<Simulated, RunError> {
    let mut rng = SimRng::new(s.seed);
    let connects = build_connects(&s.legit, &s.attack, &s.probes, s.horizon, &s.providers, &mut rng)?;
    let outcome = run_simulation(&sim_config(s), &connects);
    let report = MetricsReport::build(&s.name, s.seed, &outcome, s.metrics_window);
    let log_text = outcome.log.to_text();
    let fingerprint = fingerprint(&log_text);
    Ok(Simulated { outcome, report, log_text, fingerprint })
}

/// Simulates and writes the event log, metrics CSV and JSON, and the
/// fingerprint into `out_dir`.
pub fn run_scenario(s: &Scenario, out_dir: &Path) -> Result<Simulated, RunError> {
    let sim = simulate(s)?;
    let io = |path: &PathBuf| {
        let path = path.display().to_string();
        move |e: std::io::Error| RunError::Io { path, reason: e.to_string() }
    };
    fs::create_dir_all(out_dir).map_err(io(&out_dir.to_path_buf()))?;
    let events = out_dir.join(EVENTS_FILE);
    fs::write(&events, &sim.log_text).map_err(io(&events))?;
    export(&sim.report, ExportFormat::Csv, &out_dir.join(METRICS_CSV))?;
    export(&sim.report, ExportFormat::Json, &out_dir.join(REPORT_JSON))?;
    let fp = out_dir.join(FINGERPRINT_FILE);
    fs::write(&fp, format!("{}\n", sim.fingerprint)).map_err(io(&fp))?;
    Ok(sim)
}
