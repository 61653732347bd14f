//! Real-socket counterpart of the simulator at smoke scale.
//!
//! Every entry point refuses non-loopback addresses unless the caller passes
//! the explicit override.

use std::io::{self, Read};
use std::net::SocketAddr;

use thiserror::Error;

pub mod attack;
pub mod probe;
pub mod server;

pub use attack::{slow_read_attack, AttackSummary, WireAttackConfig};
pub use probe::{probe, ProbeOutcome, ProbeResult, PROBE_DEADLINE};
pub use server::{serve, Server, StatsLine, WireServerConfig};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("{0} is not a loopback address (pass the unsafe override to allow it)")]
    NonLoopbackRefused(SocketAddr),
    #[error("bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn check_loopback(addr: SocketAddr, allow_non_loopback: bool) -> Result<(), WireError> {
    if addr.ip().is_loopback() || allow_non_loopback {
        Ok(())
    } else {
        Err(WireError::NonLoopbackRefused(addr))
    }
}

pub(crate) const REQUEST: &[u8] = b"GET / HTTP/1.0\r\nHost: localhost\r\n\r\n";
pub(crate) const REFUSAL: &[u8] = b"HTTP/1.0 503 Service Unavailable\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";

pub(crate) fn ok_header(body: usize) -> Vec<u8> {
    format!("HTTP/1.0 200 OK\r\nContent-Type: application/octet-stream\r\nContent-Length: {body}\r\nConnection: close\r\n\r\n")
        .into_bytes()
}

/// Reads until the blank line ending an HTTP head, or `limit` bytes.
pub(crate) fn read_head(r: &mut impl Read, limit: usize) -> io::Result<Vec<u8>> {
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") && head.len() < limit {
        match r.read(&mut byte)? {
            0 => break,
            _ => head.push(byte[0]),
        }
    }
    Ok(head)
}

/// Status code from the first line of a response head.
pub(crate) fn status_code(head: &[u8]) -> Option<u16> {
    let line = head.split(|b| *b == b'\n').next()?;
    let text = std::str::from_utf8(line).ok()?;
    text.split_whitespace().nth(1)?.parse().ok()
}

pub(crate) fn content_length(head: &[u8]) -> Option<usize> {
    let text = std::str::from_utf8(head).ok()?;
    text.lines().find_map(|l| {
        let (k, v) = l.split_once(':')?;
        k.trim().eq_ignore_ascii_case("content-length").then(|| v.trim().parse().ok())?
    })
}
