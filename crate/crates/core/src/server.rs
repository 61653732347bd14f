//! Victim web-server model: a bounded connection pool per zone, idle or
//! absolute timeouts, and a client-read-driven transfer.
//!
//! The server always fills whatever window the client advertises; the client's
//! read cadence is the bottleneck. A chunk counts as delivered once the client
//! has read it, so chunk `k` of a connection opened at `t0` lands at
//!
//! ```text
//! t0 + ceil(bytes_through_chunk_k * 1e6 / read_rate) µs + k * rtt
//! ```
//!
//! Schedules are computed from the cumulative byte count, so per-chunk rounding
//! never accumulates and the last chunk lands exactly at `t0 + drain_time`.

use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkernel::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServerError {
    #[error("connection {0} is not transferring")]
    NotTransferring(ConnId),
    #[error("connection {conn} is not in the pool of zone {zone}")]
    NotInPool { conn: ConnId, zone: ZoneId },
    #[error("bad parameter: {0}")]
    BadParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConnId(pub u64);

impl fmt::Display for ConnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Zones are numbered from 1: zone 1 is the primary pool, zone 2 the overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub u8);

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConnState {
    Pending,
    Transferring,
    Complete,
    DroppedTimeout,
    DroppedMitigation,
    RejectedFull,
}

impl ConnState {
    pub fn is_terminal(self) -> bool {
        !matches!(self, ConnState::Pending | ConnState::Transferring)
    }
}

/// Ground truth, used only for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TruthLabel {
    Legit,
    Attack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CloseReason {
    Timeout,
    Mitigation,
    Complete,
}

impl CloseReason {
    pub fn as_str(self) -> &'static str {
        match self {
            CloseReason::Timeout => "timeout",
            CloseReason::Mitigation => "mitigation",
            CloseReason::Complete => "complete",
        }
    }

    pub fn terminal_state(self) -> ConnState {
        match self {
            CloseReason::Timeout => ConnState::DroppedTimeout,
            CloseReason::Mitigation => ConnState::DroppedMitigation,
            CloseReason::Complete => ConnState::Complete,
        }
    }
}

impl fmt::Display for CloseReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connection {
    pub id: ConnId,
    pub src_ip: Ipv4Addr,
    pub zone_id: Option<ZoneId>,
    pub state: ConnState,
    pub response_total: u64,
    pub delivered: u64,
    pub recv_window: u64,
    /// bytes per second
    pub read_rate: u64,
    pub opened_at: SimTime,
    pub last_progress_at: SimTime,
    pub closed_at: Option<SimTime>,
    pub chunks: u64,
    pub truth_label: TruthLabel,
}

impl Connection {
    pub fn new(
        id: ConnId,
        src_ip: Ipv4Addr,
        response_total: u64,
        recv_window: u64,
        read_rate: u64,
        truth_label: TruthLabel,
    ) -> Self {
        Connection {
            id,
            src_ip,
            zone_id: None,
            state: ConnState::Pending,
            response_total,
            delivered: 0,
            recv_window,
            read_rate,
            opened_at: SimTime::ZERO,
            last_progress_at: SimTime::ZERO,
            closed_at: None,
            chunks: 0,
            truth_label,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.response_total - self.delivered
    }

    /// Size of the next chunk the client will read.
    pub fn next_chunk(&self) -> u64 {
        self.recv_window.min(self.remaining())
    }

    /// When the next chunk finishes being read, given the current progress.
    pub fn next_read_at(&self, rtt: SimTime) -> SimTime {
        let through = self.delivered + self.next_chunk();
        self.opened_at + read_time(through, self.read_rate) + SimTime(rtt.0 * (self.chunks + 1))
    }

    pub fn lifetime(&self) -> Option<SimTime> {
        self.closed_at.map(|c| c - self.opened_at)
    }
}

/// `ceil(bytes * 1e6 / rate)` microseconds.
fn read_time(bytes: u64, rate: u64) -> SimTime {
    let num = bytes as u128 * SimTime::MICROS_PER_SEC as u128;
    SimTime(num.div_ceil(rate as u128) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutPolicy {
    /// Close after `timeout` without progress.
    Idle,
    /// Close `timeout` after opening, whatever the progress.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConfig {
    pub max_clients: u32,
    pub timeout: SimTime,
    pub timeout_policy: TimeoutPolicy,
    pub rtt: SimTime,
}

impl ServerConfig {
    pub fn new(max_clients: u32, timeout: SimTime, timeout_policy: TimeoutPolicy) -> Self {
        ServerConfig { max_clients, timeout, timeout_policy, rtt: SimTime::ZERO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    RejectedFull,
}

#[derive(Debug, Clone)]
pub struct Zone {
    pub id: ZoneId,
    pub config: ServerConfig,
    pool: BTreeSet<ConnId>,
}

impl Zone {
    pub fn new(id: ZoneId, config: ServerConfig) -> Self {
        Zone { id, config, pool: BTreeSet::new() }
    }

    pub fn pool(&self) -> &BTreeSet<ConnId> {
        &self.pool
    }

    pub fn occupancy(&self) -> usize {
        self.pool.len()
    }

    pub fn has_free_slot(&self) -> bool {
        self.pool.len() < self.config.max_clients as usize
    }

    pub fn is_full(&self) -> bool {
        !self.has_free_slot()
    }

    pub fn try_admit(&mut self, conn: &mut Connection, now: SimTime) -> Admission {
        debug_assert_eq!(conn.state, ConnState::Pending);
        if !self.has_free_slot() {
            conn.state = ConnState::RejectedFull;
            conn.closed_at = Some(now);
            return Admission::RejectedFull;
        }
        self.pool.insert(conn.id);
        conn.zone_id = Some(self.id);
        conn.state = ConnState::Transferring;
        conn.opened_at = now;
        conn.last_progress_at = now;
        Admission::Admitted
    }

    pub fn close(&mut self, conn: &mut Connection, reason: CloseReason, now: SimTime) -> Result<(), ServerError> {
        if !self.pool.remove(&conn.id) {
            return Err(ServerError::NotInPool { conn: conn.id, zone: self.id });
        }
        conn.state = reason.terminal_state();
        conn.closed_at = Some(now);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfterChunk {
    /// More to read; the next chunk lands at this time.
    NextRead(SimTime),
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub bytes: u64,
    pub next: AfterChunk,
}

/// Marks the client's read of the next chunk as done at `now`.
pub fn deliver_chunk(conn: &mut Connection, now: SimTime, rtt: SimTime) -> Result<Chunk, ServerError> {
    if conn.state != ConnState::Transferring {
        return Err(ServerError::NotTransferring(conn.id));
    }
    let c = conn.next_chunk();
    conn.delivered += c;
    conn.chunks += 1;
    conn.last_progress_at = now;
    if conn.delivered == conn.response_total {
        conn.state = ConnState::Complete;
        return Ok(Chunk { bytes: c, next: AfterChunk::Complete });
    }
    Ok(Chunk { bytes: c, next: AfterChunk::NextRead(conn.next_read_at(rtt)) })
}

/// Total time to drain a response through a window of `recv_window` bytes at
/// `read_rate` bytes per second, one `rtt` per window refill.
pub fn drain_time(response_total: u64, recv_window: u64, read_rate: u64, rtt: SimTime) -> Result<SimTime, ServerError> {
    if recv_window == 0 {
        return Err(ServerError::BadParam("recv_window must be positive"));
    }
    if read_rate == 0 {
        return Err(ServerError::BadParam("read_rate must be positive"));
    }
    let chunks = response_total.div_ceil(recv_window);
    Ok(read_time(response_total, read_rate) + SimTime(chunks * rtt.0))
}

/// Inclusive threshold: a gap of exactly `timeout` is due.
pub fn timeout_due(conn: &Connection, now: SimTime, config: &ServerConfig) -> bool {
    let since = match config.timeout_policy {
        TimeoutPolicy::Idle => conn.last_progress_at,
        TimeoutPolicy::Absolute => conn.opened_at,
    };
    now.saturating_sub(since) >= config.timeout
}

/// The instant at which the connection would next become due, given its
/// current progress.
pub fn timeout_deadline(conn: &Connection, config: &ServerConfig) -> SimTime {
    match config.timeout_policy {
        TimeoutPolicy::Idle => conn.last_progress_at + config.timeout,
        TimeoutPolicy::Absolute => conn.opened_at + config.timeout,
    }
}
