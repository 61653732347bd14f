//! HTTP/1.0 server with a hard cap on concurrently accepted connections and
//! an idle timeout measured on socket-level write progress.
//!
//! Only accepted connections count against `max_clients`; anything the
//! kernel has queued but we have not accepted is invisible here. Excess
//! connections are accepted, answered with 503 and closed.

use std::io::{self, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use socket2::{Domain, SockRef, Socket, Type};

use crate::{check_loopback, ok_header, read_head, WireError, REFUSAL};

/// Kernel send buffer requested on every accepted socket. Small, so that a
/// stalled reader stops our writes quickly instead of filling a large buffer.
pub const SEND_BUFFER: usize = 32 * 1024;
const WRITE_SLICE: usize = 4096;
const POLL: Duration = Duration::from_millis(100);
const ACCEPT_POLL: Duration = Duration::from_millis(2);
const HEAD_LIMIT: usize = 8192;

#[derive(Debug, Clone)]
pub struct WireServerConfig {
    pub listen: SocketAddr,
    pub max_clients: u64,
    pub idle_timeout: Duration,
    pub body_size: usize,
    pub allow_non_loopback: bool,
}

#[derive(Debug, Default)]
struct Counters {
    open: AtomicU64,
    max_open: AtomicU64,
    accepted_total: AtomicU64,
    refused_total: AtomicU64,
    timeouts_total: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatsLine {
    pub ts: u64,
    pub open: u64,
    pub accepted_total: u64,
    pub refused_total: u64,
    pub timeouts_total: u64,
}

impl std::fmt::Display for StatsLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ts={} open={} accepted_total={} refused_total={} timeouts_total={}",
            self.ts, self.open, self.accepted_total, self.refused_total, self.timeouts_total
        )
    }
}

impl std::str::FromStr for StatsLine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut line = StatsLine { ts: 0, open: 0, accepted_total: 0, refused_total: 0, timeouts_total: 0 };
        let mut seen = 0;
        for field in s.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| format!("bad field {field:?}"))?;
            let v: u64 = v.parse().map_err(|_| format!("bad value in {field:?}"))?;
            let slot = match k {
                "ts" => &mut line.ts,
                "open" => &mut line.open,
                "accepted_total" => &mut line.accepted_total,
                "refused_total" => &mut line.refused_total,
                "timeouts_total" => &mut line.timeouts_total,
                _ => return Err(format!("unknown key {k:?}")),
            };
            *slot = v;
            seen += 1;
        }
        if seen == 5 {
            Ok(line)
        } else {
            Err(format!("expected 5 fields, got {seen}"))
        }
    }
}

pub struct Server {
    listener: TcpListener,
    cfg: WireServerConfig,
    counters: Arc<Counters>,
}

impl Server {
    pub fn bind(cfg: WireServerConfig) -> Result<Self, WireError> {
        check_loopback(cfg.listen, cfg.allow_non_loopback)?;
        let bind = |addr: SocketAddr| -> io::Result<TcpListener> {
            let socket = Socket::new(Domain::for_address(addr), Type::STREAM, None)?;
            socket.set_reuse_address(true)?;
            socket.bind(&addr.into())?;
            socket.listen(1024)?;
            socket.set_nonblocking(true)?;
            Ok(socket.into())
        };
        let listener = bind(cfg.listen).map_err(|source| WireError::Bind { addr: cfg.listen, source })?;
        Ok(Server { listener, cfg, counters: Arc::default() })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn stats(&self) -> StatsLine {
        let c = &self.counters;
        StatsLine {
            ts: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
            open: c.open.load(Ordering::SeqCst),
            accepted_total: c.accepted_total.load(Ordering::SeqCst),
            refused_total: c.refused_total.load(Ordering::SeqCst),
            timeouts_total: c.timeouts_total.load(Ordering::SeqCst),
        }
    }

    /// Highest concurrent accepted count seen so far.
    pub fn max_open(&self) -> u64 {
        self.counters.max_open.load(Ordering::SeqCst)
    }

    /// Accepts until `stop` is set, calling `on_stats` about once a second.
    pub fn run(&self, stop: &AtomicBool, mut on_stats: impl FnMut(StatsLine)) -> Result<(), WireError> {
        let body: Arc<Vec<u8>> = Arc::new([ok_header(self.cfg.body_size), vec![b'x'; self.cfg.body_size]].concat());
        let mut next_stats = Instant::now() + Duration::from_secs(1);
        while !stop.load(Ordering::SeqCst) {
            match self.listener.accept() {
                Ok((stream, _)) => self.dispatch(stream, &body)?,
                Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::Interrupted => {
                    thread::sleep(ACCEPT_POLL)
                }
                Err(e) if e.kind() == ErrorKind::ConnectionAborted => {}
                Err(e) => return Err(e.into()),
            }
            if Instant::now() >= next_stats {
                on_stats(self.stats());
                next_stats += Duration::from_secs(1);
            }
        }
        on_stats(self.stats());
        Ok(())
    }

    fn dispatch(&self, stream: TcpStream, body: &Arc<Vec<u8>>) -> Result<(), WireError> {
        stream.set_nonblocking(false)?;
        let c = &self.counters;
        if c.open.load(Ordering::SeqCst) >= self.cfg.max_clients {
            c.refused_total.fetch_add(1, Ordering::SeqCst);
            thread::spawn(move || refuse(stream));
            return Ok(());
        }
        let open = c.open.fetch_add(1, Ordering::SeqCst) + 1;
        c.max_open.fetch_max(open, Ordering::SeqCst);
        c.accepted_total.fetch_add(1, Ordering::SeqCst);
        let counters = Arc::clone(&self.counters);
        let body = Arc::clone(body);
        let idle = self.cfg.idle_timeout;
        thread::spawn(move || {
            if serve_one(stream, &body, idle) == Served::TimedOut {
                counters.timeouts_total.fetch_add(1, Ordering::SeqCst);
            }
            counters.open.fetch_sub(1, Ordering::SeqCst);
        });
        Ok(())
    }
}

fn refuse(mut stream: TcpStream) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(1)));
    let _ = read_head(&mut stream, HEAD_LIMIT);
    let _ = stream.write_all(REFUSAL);
    let _ = stream.shutdown(std::net::Shutdown::Write);
}

#[derive(Debug, PartialEq, Eq)]
enum Served {
    Done,
    TimedOut,
    Failed,
}

fn serve_one(mut stream: TcpStream, response: &[u8], idle: Duration) -> Served {
    let _ = SockRef::from(&stream).set_send_buffer_size(SEND_BUFFER);
    if stream.set_read_timeout(Some(idle)).is_err() {
        return Served::Failed;
    }
    match read_head(&mut stream, HEAD_LIMIT) {
        Ok(head) if head.ends_with(b"\r\n\r\n") => {}
        Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => return Served::TimedOut,
        _ => return Served::Failed,
    }
    if stream.set_write_timeout(Some(POLL)).is_err() {
        return Served::Failed;
    }
    let mut sent = 0;
    let mut acked = 0;
    let mut last_progress = Instant::now();
    loop {
        if sent < response.len() {
            let end = (sent + WRITE_SLICE).min(response.len());
            match stream.write(&response[sent..end]) {
                Ok(0) => return Served::Failed,
                Ok(n) => sent += n,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {}
                Err(_) => return Served::Failed,
            }
        } else {
            thread::sleep(POLL);
        }
        // bytes the peer has taken off our hands; falls back to bytes
        // written where the platform cannot report its send queue
        let now_acked = sent - unacked_bytes(&stream).unwrap_or(0).min(sent);
        if now_acked > acked {
            acked = now_acked;
            last_progress = Instant::now();
        } else if last_progress.elapsed() >= idle {
            // abortive close, so the stalled peer learns about it on its next read
            let _ = SockRef::from(&stream).set_linger(Some(Duration::ZERO));
            return Served::TimedOut;
        }
        if acked == response.len() {
            break;
        }
    }
    let _ = stream.shutdown(std::net::Shutdown::Write);
    Served::Done
}

/// Bytes written to the socket but not yet acknowledged by the peer.
#[cfg(any(target_os = "linux", target_os = "android"))]
fn unacked_bytes(stream: &TcpStream) -> Option<usize> {
    use std::os::fd::AsRawFd;
    let mut n: libc::c_int = 0;
    // SIOCOUTQ shares its number with TIOCOUTQ
    let rc = unsafe { libc::ioctl(stream.as_raw_fd(), libc::TIOCOUTQ, &mut n) };
    (rc == 0).then_some(n.max(0) as usize)
}

#[cfg(any(target_os = "macos", target_os = "ios", target_os = "freebsd"))]
fn unacked_bytes(stream: &TcpStream) -> Option<usize> {
    use std::os::fd::AsRawFd;
    let mut n: libc::c_int = 0;
    let mut len = std::mem::size_of::<libc::c_int>() as libc::socklen_t;
    let rc = unsafe {
        libc::getsockopt(
            stream.as_raw_fd(),
            libc::SOL_SOCKET,
            libc::SO_NWRITE,
            (&mut n as *mut libc::c_int).cast(),
            &mut len,
        )
    };
    (rc == 0).then_some(n.max(0) as usize)
}

#[cfg(not(any(
    target_os = "linux",
    target_os = "android",
    target_os = "macos",
    target_os = "ios",
    target_os = "freebsd"
)))]
fn unacked_bytes(_stream: &TcpStream) -> Option<usize> {
    None
}

/// Binds and serves until `stop` is set, printing a stats line per second.
pub fn serve(cfg: WireServerConfig, stop: &AtomicBool, mut out: impl Write) -> Result<(), WireError> {
    let server = Server::bind(cfg)?;
    server.run(stop, |line| {
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_line_round_trip() {
        let line = StatsLine { ts: 1, open: 2, accepted_total: 3, refused_total: 4, timeouts_total: 5 };
        let text = line.to_string();
        assert_eq!(text, "ts=1 open=2 accepted_total=3 refused_total=4 timeouts_total=5");
        assert_eq!(text.parse::<StatsLine>().unwrap(), line);
        assert!("ts=1 open=2".parse::<StatsLine>().is_err());
    }

    #[test]
    fn bind_refuses_non_loopback() {
        let cfg = WireServerConfig {
            listen: "192.0.2.1:0".parse().unwrap(),
            max_clients: 1,
            idle_timeout: Duration::from_secs(1),
            body_size: 1,
            allow_non_loopback: false,
        };
        assert!(matches!(Server::bind(cfg), Err(WireError::NonLoopbackRefused(_))));
    }
}
