//! Deterministic discrete-event engine.
//!
//! Virtual time is an integer count of microseconds. Events are dispatched in
//! lexicographic `(at, seq)` order, where `seq` is assigned at scheduling time,
//! so simultaneous events run first-in first-out. Every dispatched event and
//! every state transition a handler reports is appended to an [`EventLog`],
//! whose line form (`<micros>\t<seq>\t<kind>\t<payload>`) is the artifact used
//! for determinism checks.
//!
//! Randomness comes from [`SimRng`]: xoshiro256++ seeded through SplitMix64,
//! with bounded integers drawn by rejection (`arc4random_uniform` style), so a
//! seed yields the same draw sequence on every platform.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("event at {at} is earlier than the current time {now}")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("empty range: lo {lo} > hi {hi}")]
    BadRange { lo: u64, hi: u64 },
}

/// A point (or span) of virtual time, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MICROS_PER_SEC: u64 = 1_000_000;

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * Self::MICROS_PER_SEC)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::MICROS_PER_SEC as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    ConnectAttempt,
    ReadTick,
    TimeoutCheck,
    AnalysisCycle,
    TransferComplete,
    ScenarioEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ConnectAttempt => "ConnectAttempt",
            EventKind::ReadTick => "ReadTick",
            EventKind::TimeoutCheck => "TimeoutCheck",
            EventKind::AnalysisCycle => "AnalysisCycle",
            EventKind::TransferComplete => "TransferComplete",
            EventKind::ScenarioEnd => "ScenarioEnd",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: P,
}

/// What a log record describes: a dispatched event, or a state transition a
/// handler reported while processing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Event(EventKind),
    Note(&'static str),
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Event(k) => f.write_str(k.as_str()),
            Tag::Note(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord<P> {
    pub at: SimTime,
    /// Sequence number of the dispatched event this record belongs to.
    pub seq: u64,
    pub tag: Tag,
    pub payload: P,
}

impl<P: fmt::Display> fmt::Display for LogRecord<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.at.0, self.seq, self.tag, self.payload)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog<P> {
    pub records: Vec<LogRecord<P>>,
}

impl<P> Default for EventLog<P> {
    fn default() -> Self {
        EventLog { records: Vec::new() }
    }
}

impl<P> EventLog<P> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LogRecord<P>> {
        self.records.iter()
    }

    /// Records that correspond to dispatched events, in dispatch order.
    pub fn dispatched(&self) -> impl Iterator<Item = &LogRecord<P>> {
        self.records.iter().filter(|r| matches!(r.tag, Tag::Event(_)))
    }
}

impl<P: fmt::Display> EventLog<P> {
    /// Writes the line-oriented form, one record per line, each newline-terminated.
    pub fn write_to<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::with_capacity(self.records.len() * 48);
        for r in &self.records {
            let _ = writeln!(s, "{r}");
        }
        s
    }
}

struct Queued<P> {
    at: SimTime,
    seq: u64,
    kind: EventKind,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Receives dispatched events. Handlers schedule follow-up events and report
/// state transitions through the engine they are handed.
pub trait Handler<P> {
    fn handle(&mut self, event: &Event<P>, engine: &mut Engine<P>);
}

pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    log: EventLog<P>,
    current_seq: u64,
    stopped: bool,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            log: EventLog::default(),
            current_seq: 0,
            stopped: false,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Enqueues an event and returns the sequence number it was given.
    pub fn schedule(&mut self, at: SimTime, kind: EventKind, payload: P) -> Result<u64, SimError> {
        if at < self.now {
            return Err(SimError::PastEvent { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued { at, seq, kind, payload }));
        Ok(seq)
    }

    /// Appends a state-transition record stamped with the event being dispatched.
    pub fn note(&mut self, name: &'static str, payload: P) {
        self.log.records.push(LogRecord { at: self.now, seq: self.current_seq, tag: Tag::Note(name), payload });
    }

    /// Ends the current run after the event being dispatched.
    pub fn stop(&mut self) {
        self.stopped = true;
    }

    /// Takes the log accumulated so far, leaving an empty one behind.
    pub fn take_log(&mut self) -> EventLog<P> {
        std::mem::take(&mut self.log)
    }
}

impl<P: Clone> Engine<P> {
    /// Dispatches events in `(at, seq)` order until the queue drains, the next
    /// event lies beyond `until`, or a handler calls [`Engine::stop`]. Returns
    /// the log of everything dispatched by this call.
    pub fn run<H: Handler<P>>(&mut self, handler: &mut H, until: SimTime) -> EventLog<P> {
        self.stopped = false;
        while !self.stopped {
            match self.queue.peek() {
                Some(Reverse(head)) if head.at <= until => {}
                _ => break,
            }
            let Reverse(q) = self.queue.pop().expect("peeked");
            debug_assert!(q.at >= self.now);
            self.now = q.at;
            self.current_seq = q.seq;
            let event = Event { at: q.at, seq: q.seq, kind: q.kind, payload: q.payload };
            self.log.records.push(LogRecord {
                at: event.at,
                seq: event.seq,
                tag: Tag::Event(event.kind),
                payload: event.payload.clone(),
            });
            handler.handle(&event, self);
        }
        self.take_log()
    }
}

/// Seeded generator shared by every stochastic choice in a scenario.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng { seed, inner: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in the closed range `[lo, hi]`.
    pub fn draw_uniform_int(&mut self, lo: u64, hi: u64) -> Result<u64, SimError> {
        if lo > hi {
            return Err(SimError::BadRange { lo, hi });
        }
        let range = (hi - lo).wrapping_add(1);
        if range == 0 {
            return Ok(self.next_u64());
        }
        // 2^64 mod range; draws below it would bias the modulo.
        let min = range.wrapping_neg() % range;
        loop {
            let r = self.next_u64();
            if r >= min {
                return Ok(lo + r % range);
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 bits of precision.
    pub fn draw_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponentially distributed span with the given rate (events per second),
    /// rounded to the nearest microsecond and never shorter than 1 µs.
    /// Uses the pure-software `libm` logarithm so results do not depend on the
    /// platform math library.
    pub fn draw_exponential(&mut self, rate_per_sec: f64) -> SimTime {
        let u = self.draw_unit();
        let secs = -libm::log(1.0 - u) / rate_per_sec;
        let us = libm::round(secs * SimTime::MICROS_PER_SEC as f64);
        SimTime((us as u64).max(1))
    }
}
