//! Run scoring: availability per window, mitigation confusion counts against
//! ground truth, lifetimes per terminal state, and a median-based timeout
//! recommendation.
//!
//! Availability and confusion are computed from the event log. The
//! `*_from_states` variants recompute the same numbers from final connection
//! states so the two paths can be checked against each other.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::server::{CloseReason, ConnId, ConnState, TruthLabel};
use crate::sim::{Payload, RunOutcome, SimLog, NOTE_ADMIT, NOTE_CLOSE, NOTE_REJECT};
use crate::simkernel::{EventKind, SimTime, Tag};
use crate::workload::ClientClass;

/// Recommendation = median lifetime × 3/2, rounded up to whole seconds.
pub const RECOMMEND_FACTOR_NUM: u64 = 3;
pub const RECOMMEND_FACTOR_DEN: u64 = 2;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty lifetime sample")]
    EmptySample,
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClassCounts {
    pub attempted: u64,
    pub admitted: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Lifetimes {
    pub complete_us: Vec<u64>,
    pub dropped_timeout_us: Vec<u64>,
    pub dropped_mitigation_us: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvailabilityPoint {
    pub window_start_us: u64,
    pub availability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub horizon_us: u64,
    pub window_us: u64,
    pub availability_series: Vec<AvailabilityPoint>,
    pub confusion: Confusion,
    pub legit: ClassCounts,
    pub attack: ClassCounts,
    pub rejected_full_legit: u64,
    pub attack_alive_at_end: u64,
    pub lifetimes: Lifetimes,
    pub recommended_timeout_us: Option<u64>,
}

fn connect_classes(log: &SimLog) -> HashMap<ConnId, (SimTime, ClientClass)> {
    log.dispatched()
        .filter_map(|r| match (&r.tag, &r.payload) {
            (Tag::Event(EventKind::ConnectAttempt), Payload::Connect { conn, spec }) => {
                Some((*conn, (r.at, spec.class)))
            }
            _ => None,
        })
        .collect()
}

/// Fraction of legitimate (probe included) attempts admitted per window of
/// `window`, over `[0, horizon]`. Windows without attempts are `None`.
/// The last window is closed on the right.
pub fn availability(log: &SimLog, window: SimTime, horizon: SimTime) -> Vec<AvailabilityPoint> {
    assert!(window > SimTime::ZERO, "window must be positive");
    let classes = connect_classes(log);
    let windows = horizon.micros().div_ceil(window.micros()).max(1) as usize;
    let mut attempts = vec![0u64; windows];
    let mut admitted = vec![0u64; windows];
    for r in log.iter() {
        let (conn, ok) = match (&r.tag, &r.payload) {
            (Tag::Note(NOTE_ADMIT), Payload::Admit { conn, .. }) => (conn, true),
            (Tag::Note(NOTE_REJECT), Payload::Reject { conn }) => (conn, false),
            _ => continue,
        };
        let (at, class) = classes[conn];
        if class.truth() != TruthLabel::Legit {
            continue;
        }
        // an attempt at the horizon itself belongs to the last window
        let w = ((at.micros() / window.micros()) as usize).min(windows - 1);
        attempts[w] += 1;
        admitted[w] += ok as u64;
    }
    (0..windows)
        .map(|w| AvailabilityPoint {
            window_start_us: w as u64 * window.micros(),
            availability: (attempts[w] > 0).then(|| admitted[w] as f64 / attempts[w] as f64),
        })
        .collect()
}

/// tp/fp: attack/legit connections closed by mitigation. fn: attack
/// connections admitted and never closed by timeout or mitigation. tn: legit
/// attempts never mitigated.
pub fn confusion(log: &SimLog) -> Confusion {
    let classes = connect_classes(log);
    let mut c = Confusion::default();
    let mut attack_admitted = 0u64;
    let mut attack_cut = 0u64;
    let mut legit_total = 0u64;
    for (_, class) in classes.values() {
        if class.truth() == TruthLabel::Legit {
            legit_total += 1;
        }
    }
    for r in log.iter() {
        match (&r.tag, &r.payload) {
            (Tag::Note(NOTE_ADMIT), Payload::Admit { conn, .. }) if classes[conn].1.truth() == TruthLabel::Attack => {
                attack_admitted += 1;
            }
            (Tag::Note(NOTE_CLOSE), Payload::Close { conn, reason, .. }) => {
                let attack = classes[conn].1.truth() == TruthLabel::Attack;
                match (reason, attack) {
                    (CloseReason::Mitigation, true) => {
                        c.tp += 1;
                        attack_cut += 1;
                    }
                    (CloseReason::Mitigation, false) => c.fp += 1,
                    (CloseReason::Timeout, true) => attack_cut += 1,
                    _ => {}
                }
            }
            _ => {}
        }
    }
    c.fn_ = attack_admitted - attack_cut;
    c.tn = legit_total - c.fp;
    c
}

pub fn confusion_from_states(run: &RunOutcome) -> Confusion {
    let mut c = Confusion::default();
    for conn in &run.connections {
        match (conn.truth_label, conn.state) {
            (TruthLabel::Attack, ConnState::DroppedMitigation) => c.tp += 1,
            (TruthLabel::Attack, ConnState::Transferring | ConnState::Complete) => c.fn_ += 1,
            (TruthLabel::Legit, ConnState::DroppedMitigation) => c.fp += 1,
            (TruthLabel::Legit, _) => c.tn += 1,
            _ => {}
        }
    }
    c
}

pub fn class_counts(log: &SimLog) -> (ClassCounts, ClassCounts) {
    let classes = connect_classes(log);
    let (mut legit, mut attack) = (ClassCounts::default(), ClassCounts::default());
    for (_, class) in classes.values() {
        match class.truth() {
            TruthLabel::Legit => legit.attempted += 1,
            TruthLabel::Attack => attack.attempted += 1,
        }
    }
    for r in log.iter() {
        let (conn, ok) = match (&r.tag, &r.payload) {
            (Tag::Note(NOTE_ADMIT), Payload::Admit { conn, .. }) => (conn, true),
            (Tag::Note(NOTE_REJECT), Payload::Reject { conn }) => (conn, false),
            _ => continue,
        };
        let counts = match classes[conn].1.truth() {
            TruthLabel::Legit => &mut legit,
            TruthLabel::Attack => &mut attack,
        };
        if ok {
            counts.admitted += 1;
        } else {
            counts.rejected += 1;
        }
    }
    (legit, attack)
}

pub fn lifetimes(run: &RunOutcome) -> Lifetimes {
    let mut l = Lifetimes::default();
    for c in &run.connections {
        let Some(life) = c.lifetime() else { continue };
        match c.state {
            ConnState::Complete => l.complete_us.push(life.micros()),
            ConnState::DroppedTimeout => l.dropped_timeout_us.push(life.micros()),
            ConnState::DroppedMitigation => l.dropped_mitigation_us.push(life.micros()),
            _ => {}
        }
    }
    l
}

/// Lifetimes of completed legitimate clients, probes excluded.
pub fn completed_legit_lifetimes(run: &RunOutcome) -> Vec<SimTime> {
    run.connections
        .iter()
        .zip(&run.classes)
        .filter(|(c, class)| {
            c.state == ConnState::Complete && matches!(class, ClientClass::Legit | ClientClass::SlowLegit)
        })
        .filter_map(|(c, _)| c.lifetime())
        .collect()
}

/// Lower median × 3/2, rounded up to a whole second.
pub fn recommend_timeout(lifetimes: &[SimTime]) -> Result<SimTime, MetricsError> {
    if lifetimes.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let mut sorted = lifetimes.to_vec();
    sorted.sort();
    let median = sorted[(sorted.len() - 1) / 2].micros() as u128;
    let scaled = (median * RECOMMEND_FACTOR_NUM as u128).div_ceil(RECOMMEND_FACTOR_DEN as u128);
    let secs = scaled.div_ceil(SimTime::MICROS_PER_SEC as u128) as u64;
    Ok(SimTime::from_secs(secs))
}

impl MetricsReport {
    pub fn build(scenario: &str, seed: u64, run: &RunOutcome, window: SimTime) -> Self {
        let (legit, attack) = class_counts(&run.log);
        let attack_alive_at_end = run
            .connections
            .iter()
            .filter(|c| c.truth_label == TruthLabel::Attack && c.state == ConnState::Transferring)
            .count() as u64;
        MetricsReport {
            scenario: scenario.to_string(),
            seed,
            horizon_us: run.horizon.micros(),
            window_us: window.micros(),
            availability_series: availability(&run.log, window, run.horizon),
            confusion: confusion(&run.log),
            legit,
            attack,
            rejected_full_legit: legit.rejected,
            attack_alive_at_end,
            lifetimes: lifetimes(run),
            recommended_timeout_us: recommend_timeout(&completed_legit_lifetimes(run)).ok().map(SimTime::micros),
        }
    }

    /// `window_start_us,availability`; empty windows have an empty second field.
    pub fn availability_csv(&self) -> String {
        let mut s = String::from("window_start_us,availability\n");
        for p in &self.availability_series {
            match p.availability {
                Some(a) => s.push_str(&format!("{},{:.6}\n", p.window_start_us, a)),
                None => s.push_str(&format!("{},\n", p.window_start_us)),
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

pub fn export(report: &MetricsReport, format: ExportFormat, path: &Path) -> Result<(), MetricsError> {
    let body = match format {
        ExportFormat::Csv => report.availability_csv(),
        ExportFormat::Json => report.to_json(),
    };
    let io = |source| MetricsError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(body.as_bytes()).map_err(io)?;
    Ok(())
}
