//! Scenario driver: feeds workload connection attempts through one or two
//! zones on the event engine, runs periodic analysis when configured, and
//! returns the event log together with final connection states.

use std::fmt;

use crate::defense::{
    analysis_cycle, apply_drops, defense_view, route, AnalysisConfig, DropSet, GroupKey, Route, ViewRow,
};
use crate::netmodel::ProviderMap;
use crate::server::{
    deliver_chunk, timeout_deadline, timeout_due, Admission, AfterChunk, CloseReason, ConnId, ConnState, Connection,
    ServerConfig, Zone, ZoneId,
};
use crate::simkernel::{Engine, Event, EventKind, EventLog, Handler, SimRng, SimTime, Tag};
use crate::workload::{
    build_attack_wave, build_legit_arrivals, build_probes, AttackWorkload, ClientClass, ConnectSpec, LegitWorkload,
    ProbeWorkload, WorkloadError,
};

/// Event payloads and transition records of a simulation log.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Connect {
        conn: ConnId,
        spec: ConnectSpec,
    },
    Conn(ConnId),
    Nothing,
    Admit {
        conn: ConnId,
        zone: ZoneId,
        open: usize,
    },
    Reject {
        conn: ConnId,
    },
    Deliver {
        conn: ConnId,
        bytes: u64,
        delivered: u64,
    },
    Close {
        conn: ConnId,
        zone: ZoneId,
        reason: CloseReason,
        open: usize,
    },
    Analysis {
        zone: ZoneId,
        observed: usize,
        slow: usize,
        groups: Vec<(GroupKey, usize)>,
        dropped: usize,
        skipped: usize,
    },
    Occupancy {
        zone: ZoneId,
        open: usize,
    },
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Connect { conn, spec } => write!(f, "conn={conn} {spec}"),
            Payload::Conn(c) => write!(f, "conn={c}"),
            Payload::Nothing => f.write_str("-"),
            Payload::Admit { conn, zone, open } => write!(f, "conn={conn} zone={zone} open={open}"),
            Payload::Reject { conn } => write!(f, "conn={conn}"),
            Payload::Deliver { conn, bytes, delivered } => write!(f, "conn={conn} bytes={bytes} delivered={delivered}"),
            Payload::Close { conn, zone, reason, open } => {
                write!(f, "conn={conn} zone={zone} reason={reason} open={open}")
            }
            Payload::Analysis { zone, observed, slow, groups, dropped, skipped } => {
                write!(f, "zone={zone} observed={observed} slow={slow} groups=")?;
                if groups.is_empty() {
                    f.write_str("-")?;
                }
                for (i, (key, n)) in groups.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{key}/{n}")?;
                }
                write!(f, " dropped={dropped} skipped={skipped}")
            }
            Payload::Occupancy { zone, open } => write!(f, "zone={zone} open={open}"),
        }
    }
}

pub const NOTE_ADMIT: &str = "Admit";
pub const NOTE_REJECT: &str = "Reject";
pub const NOTE_DELIVER: &str = "Deliver";
pub const NOTE_CLOSE: &str = "Close";
pub const NOTE_ANALYSIS: &str = "Analysis";
pub const NOTE_OCCUPANCY: &str = "Occupancy";

pub type SimLog = EventLog<Payload>;

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// One zone, or two for overflow routing.
    pub zones: Vec<ServerConfig>,
    pub analysis: Option<AnalysisConfig>,
    pub providers: ProviderMap,
    pub horizon: SimTime,
}

/// What the defense saw and decided in one zone at one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisTrace {
    pub at: SimTime,
    pub zone: ZoneId,
    pub view: Vec<ViewRow>,
    pub drops: DropSet,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: SimLog,
    pub connections: Vec<Connection>,
    pub classes: Vec<ClientClass>,
    pub traces: Vec<AnalysisTrace>,
    pub zone1_saturated_at: Option<SimTime>,
    pub horizon: SimTime,
}

/// Draws every workload's attempts with one generator, in the order legit,
/// attack, probes, and merges them into arrival order (stable on ties).
pub fn build_connects(
    legit: &[LegitWorkload],
    attack: &[AttackWorkload],
    probes: &[ProbeWorkload],
    horizon: SimTime,
    providers: &ProviderMap,
    rng: &mut SimRng,
) -> Result<Vec<ConnectSpec>, WorkloadError> {
    let mut all = Vec::new();
    for w in legit {
        all.extend(build_legit_arrivals(w, horizon, rng)?);
    }
    for w in attack {
        all.extend(build_attack_wave(w, providers, rng)?);
    }
    for w in probes {
        all.extend(build_probes(w, horizon)?);
    }
    all.sort_by_key(|c| c.at);
    Ok(all)
}

struct World<'a> {
    cfg: &'a SimConfig,
    zones: Vec<Zone>,
    conns: Vec<Connection>,
    classes: Vec<ClientClass>,
    traces: Vec<AnalysisTrace>,
    zone1_saturated_at: Option<SimTime>,
}

impl World<'_> {
    fn zone_index(&self, id: ZoneId) -> usize {
        id.0 as usize - 1
    }

    fn admit(&mut self, conn: ConnId, engine: &mut Engine<Payload>) {
        let now = engine.now();
        let idx = conn.0 as usize;
        let target = if self.zones.len() == 2 {
            let pair: &[Zone; 2] = self.zones.as_slice().try_into().expect("two zones");
            match route(pair) {
                Route::Zone(z) => Some(self.zone_index(z)),
                Route::RejectedBoth => None,
            }
        } else {
            Some(0)
        };
        let admitted = match target {
            Some(zi) => self.zones[zi].try_admit(&mut self.conns[idx], now) == Admission::Admitted,
            None => {
                self.conns[idx].state = ConnState::RejectedFull;
                self.conns[idx].closed_at = Some(now);
                false
            }
        };
        if self.zone1_saturated_at.is_none() && self.zones[0].is_full() {
            self.zone1_saturated_at = Some(now);
        }
        if !admitted {
            engine.note(NOTE_REJECT, Payload::Reject { conn });
            return;
        }
        let zone = &self.zones[target.expect("admitted")];
        engine.note(NOTE_ADMIT, Payload::Admit { conn, zone: zone.id, open: zone.occupancy() });
        let c = &mut self.conns[idx];
        if c.response_total == 0 {
            c.state = ConnState::Complete;
            schedule(engine, now, EventKind::TransferComplete, Payload::Conn(conn));
            return;
        }
        schedule(engine, c.next_read_at(zone.config.rtt), EventKind::ReadTick, Payload::Conn(conn));
        schedule(engine, timeout_deadline(c, &zone.config), EventKind::TimeoutCheck, Payload::Conn(conn));
    }

    fn close(&mut self, conn: ConnId, reason: CloseReason, engine: &mut Engine<Payload>) {
        let now = engine.now();
        let c = &mut self.conns[conn.0 as usize];
        let zi = c.zone_id.expect("admitted connection").0 as usize - 1;
        let zone = &mut self.zones[zi];
        zone.close(c, reason, now).expect("active connection is pooled");
        engine.note(NOTE_CLOSE, Payload::Close { conn, zone: zone.id, reason, open: zone.occupancy() });
    }

    fn read_tick(&mut self, conn: ConnId, engine: &mut Engine<Payload>) {
        let now = engine.now();
        let c = &self.conns[conn.0 as usize];
        if c.state != ConnState::Transferring {
            return;
        }
        let config = self.zones[c.zone_id.expect("admitted").0 as usize - 1].config;
        // the timer wins a tie with the read it would have cut off
        if timeout_due(c, now, &config) {
            self.close(conn, CloseReason::Timeout, engine);
            return;
        }
        let c = &mut self.conns[conn.0 as usize];
        let chunk = deliver_chunk(c, now, config.rtt).expect("transferring");
        engine.note(NOTE_DELIVER, Payload::Deliver { conn, bytes: chunk.bytes, delivered: c.delivered });
        match chunk.next {
            AfterChunk::NextRead(at) => schedule(engine, at, EventKind::ReadTick, Payload::Conn(conn)),
            AfterChunk::Complete => schedule(engine, now, EventKind::TransferComplete, Payload::Conn(conn)),
        }
    }

    fn timeout_check(&mut self, conn: ConnId, engine: &mut Engine<Payload>) {
        let now = engine.now();
        let c = &self.conns[conn.0 as usize];
        if c.state != ConnState::Transferring {
            return;
        }
        let config = self.zones[c.zone_id.expect("admitted").0 as usize - 1].config;
        if timeout_due(c, now, &config) {
            self.close(conn, CloseReason::Timeout, engine);
        } else {
            schedule(engine, timeout_deadline(c, &config), EventKind::TimeoutCheck, Payload::Conn(conn));
        }
    }

    fn analysis(&mut self, engine: &mut Engine<Payload>) {
        let Some(cfg) = self.cfg.analysis.as_ref() else { return };
        let now = engine.now();
        schedule(engine, now + cfg.analysis_period, EventKind::AnalysisCycle, Payload::Nothing);
        if !cfg.always_on && self.zone1_saturated_at.is_none() {
            return;
        }
        for zi in 0..self.zones.len() {
            let view = defense_view(&self.zones[zi], &self.conns);
            let drops = analysis_cycle(&view, &self.cfg.providers, cfg, now);
            let outcome = apply_drops(&mut self.zones[zi], &mut self.conns, &drops, now);
            let zone = &self.zones[zi];
            engine.note(
                NOTE_ANALYSIS,
                Payload::Analysis {
                    zone: zone.id,
                    observed: drops.observed,
                    slow: drops.slow,
                    groups: drops.groups.clone(),
                    dropped: outcome.closed.len(),
                    skipped: outcome.skipped.len(),
                },
            );
            let mut open = zone.occupancy() + outcome.closed.len();
            for conn in &outcome.closed {
                open -= 1;
                engine.note(
                    NOTE_CLOSE,
                    Payload::Close { conn: *conn, zone: zone.id, reason: CloseReason::Mitigation, open },
                );
            }
            self.traces.push(AnalysisTrace { at: now, zone: zone.id, view, drops });
        }
    }
}

fn schedule(engine: &mut Engine<Payload>, at: SimTime, kind: EventKind, payload: Payload) {
    engine.schedule(at, kind, payload).expect("handlers only schedule at or after now");
}

impl Handler<Payload> for World<'_> {
    fn handle(&mut self, event: &Event<Payload>, engine: &mut Engine<Payload>) {
        match (&event.kind, &event.payload) {
            (EventKind::ConnectAttempt, Payload::Connect { conn, .. }) => self.admit(*conn, engine),
            (EventKind::ReadTick, Payload::Conn(c)) => self.read_tick(*c, engine),
            (EventKind::TimeoutCheck, Payload::Conn(c)) => self.timeout_check(*c, engine),
            (EventKind::TransferComplete, Payload::Conn(c)) => {
                if self.conns[c.0 as usize].state == ConnState::Complete && self.conns[c.0 as usize].closed_at.is_none()
                {
                    self.close(*c, CloseReason::Complete, engine);
                }
            }
            (EventKind::AnalysisCycle, _) => self.analysis(engine),
            (EventKind::ScenarioEnd, _) => {
                for z in &self.zones {
                    engine.note(NOTE_OCCUPANCY, Payload::Occupancy { zone: z.id, open: z.occupancy() });
                }
                engine.stop();
            }
            (kind, payload) => unreachable!("{kind} with payload {payload}"),
        }
    }
}

/// Runs one scenario. Attempts later than the horizon are discarded before
/// scheduling, so the log determines the run.
pub fn run_simulation(cfg: &SimConfig, connects: &[ConnectSpec]) -> RunOutcome {
    assert!(matches!(cfg.zones.len(), 1 | 2), "one or two zones");
    let mut connects: Vec<ConnectSpec> = connects.iter().filter(|c| c.at <= cfg.horizon).cloned().collect();
    connects.sort_by_key(|c| c.at);

    let mut engine = Engine::new();
    let mut world = World {
        cfg,
        zones: cfg.zones.iter().enumerate().map(|(i, z)| Zone::new(ZoneId(i as u8 + 1), *z)).collect(),
        conns: Vec::with_capacity(connects.len()),
        classes: Vec::with_capacity(connects.len()),
        traces: Vec::new(),
        zone1_saturated_at: None,
    };
    for (i, spec) in connects.into_iter().enumerate() {
        let id = ConnId(i as u64);
        world.conns.push(Connection::new(
            id,
            spec.src_ip,
            spec.response_size,
            spec.recv_window,
            spec.read_rate,
            spec.class.truth(),
        ));
        world.classes.push(spec.class);
        schedule(&mut engine, spec.at, EventKind::ConnectAttempt, Payload::Connect { conn: id, spec });
    }
    schedule(&mut engine, cfg.horizon, EventKind::ScenarioEnd, Payload::Nothing);
    if let Some(a) = &cfg.analysis {
        schedule(&mut engine, a.analysis_period, EventKind::AnalysisCycle, Payload::Nothing);
    }
    let log = engine.run(&mut world, cfg.horizon);
    RunOutcome {
        log,
        connections: world.conns,
        classes: world.classes,
        traces: world.traces,
        zone1_saturated_at: world.zone1_saturated_at,
        horizon: cfg.horizon,
    }
}

/// The connection attempts recorded in a log, in scheduling order.
pub fn connects_from_log(log: &SimLog) -> Vec<ConnectSpec> {
    let mut found: Vec<(ConnId, ConnectSpec)> = log
        .dispatched()
        .filter_map(|r| match &r.payload {
            Payload::Connect { conn, spec } => Some((*conn, spec.clone())),
            _ => None,
        })
        .collect();
    found.sort_by_key(|(id, _)| *id);
    found.into_iter().map(|(_, s)| s).collect()
}

/// Same as [`connects_from_log`], from the serialized line form.
pub fn connects_from_text(text: &str) -> Result<Vec<ConnectSpec>, String> {
    let mut found = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut cols = line.splitn(4, '\t');
        let (Some(at), Some(seq), Some(kind), Some(payload)) = (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(format!("line {}: expected four tab-separated columns", n + 1));
        };
        if kind != EventKind::ConnectAttempt.as_str() {
            continue;
        }
        let at = SimTime(at.parse().map_err(|e| format!("line {}: {e}", n + 1))?);
        let seq: u64 = seq.parse().map_err(|e| format!("line {}: {e}", n + 1))?;
        let spec = ConnectSpec::parse_fields(at, payload).map_err(|e| format!("line {}: {e}", n + 1))?;
        found.push((seq, spec));
    }
    found.sort_by_key(|(seq, _)| *seq);
    Ok(found.into_iter().map(|(_, s)| s).collect())
}

/// Per-zone occupancy right after every admit or close in the log.
pub fn occupancy_trace(log: &SimLog) -> Vec<(SimTime, ZoneId, usize)> {
    log.iter()
        .filter_map(|r| match (&r.tag, &r.payload) {
            (Tag::Note(_), Payload::Admit { zone, open, .. }) | (Tag::Note(_), Payload::Close { zone, open, .. }) => {
                Some((r.at, *zone, *open))
            }
            _ => None,
        })
        .collect()
}
