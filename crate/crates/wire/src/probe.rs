use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::{check_loopback, content_length, read_head, status_code, WireError, REQUEST};

/// Client deadline for a whole probe, connect to last body byte.
pub const PROBE_DEADLINE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    Ok,
    Refused,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    pub outcome: ProbeOutcome,
    pub latency_ms: f64,
}

impl ProbeResult {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("probe result serializes")
    }
}

/// One fast request under [`PROBE_DEADLINE`].
pub fn probe(target: SocketAddr, allow_non_loopback: bool) -> Result<ProbeResult, WireError> {
    check_loopback(target, allow_non_loopback)?;
    let started = Instant::now();
    let outcome = attempt(target, started + PROBE_DEADLINE);
    Ok(ProbeResult { outcome, latency_ms: started.elapsed().as_secs_f64() * 1e3 })
}

fn attempt(target: SocketAddr, deadline: Instant) -> ProbeOutcome {
    let remaining = || deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1));
    let classify = |kind: ErrorKind| match kind {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => ProbeOutcome::Timeout,
        _ => ProbeOutcome::Refused,
    };
    let mut stream = match TcpStream::connect_timeout(&target, remaining()) {
        Ok(s) => s,
        Err(e) => return classify(e.kind()),
    };
    if let Err(e) = stream.set_write_timeout(Some(remaining())).and_then(|_| stream.write_all(REQUEST)) {
        return classify(e.kind());
    }
    let _ = stream.set_read_timeout(Some(remaining()));
    let head = match read_head(&mut stream, 8192) {
        Ok(h) => h,
        Err(e) => return classify(e.kind()),
    };
    if status_code(&head) != Some(200) {
        return ProbeOutcome::Refused;
    }
    let Some(expected) = content_length(&head) else { return ProbeOutcome::Refused };
    let mut got = 0usize;
    let mut buf = [0u8; 16 * 1024];
    while got < expected {
        if Instant::now() >= deadline {
            return ProbeOutcome::Timeout;
        }
        let _ = stream.set_read_timeout(Some(remaining()));
        match stream.read(&mut buf) {
            Ok(0) => return ProbeOutcome::Refused,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return classify(e.kind()),
        }
    }
    ProbeOutcome::Ok
}
