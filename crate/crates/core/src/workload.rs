//! Traffic generation: legitimate Poisson clients (a fraction of them slow),
//! Slow Read attack waves from a cloud block, and periodic probes.
//!
//! Every per-connection parameter is drawn here, at scenario construction, so
//! the initial event queue fully determines a run.

use std::fmt;
use std::net::Ipv4Addr;
use std::ops::RangeInclusive;
use std::str::FromStr;

use thiserror::Error;

use crate::netmodel::{allocate_virtual_ips, Cidr, NetError, ProviderMap};
use crate::server::TruthLabel;
use crate::simkernel::{SimRng, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("attack block {block} spans more than one provider")]
    MixedProviders { block: Cidr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClientClass {
    Legit,
    /// Legitimate client drawn with attack-like read parameters.
    SlowLegit,
    Probe,
    Attack,
}

impl ClientClass {
    pub fn truth(self) -> TruthLabel {
        match self {
            ClientClass::Attack => TruthLabel::Attack,
            _ => TruthLabel::Legit,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClientClass::Legit => "legit",
            ClientClass::SlowLegit => "slow",
            ClientClass::Probe => "probe",
            ClientClass::Attack => "attack",
        }
    }
}

impl FromStr for ClientClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "legit" => ClientClass::Legit,
            "slow" => ClientClass::SlowLegit,
            "probe" => ClientClass::Probe,
            "attack" => ClientClass::Attack,
            other => return Err(format!("unknown client class {other:?}")),
        })
    }
}

/// A fully parameterised connection attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectSpec {
    pub at: SimTime,
    pub class: ClientClass,
    pub src_ip: Ipv4Addr,
    pub response_size: u64,
    pub recv_window: u64,
    pub read_rate: u64,
}

impl fmt::Display for ConnectSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "class={} src={} size={} window={} rate={}",
            self.class.as_str(),
            self.src_ip,
            self.response_size,
            self.recv_window,
            self.read_rate
        )
    }
}

impl ConnectSpec {
    /// Parses the key=value fields written by `Display`. `at` is not part of
    /// that form and is supplied by the caller.
    pub fn parse_fields(at: SimTime, text: &str) -> Result<Self, String> {
        let mut class = None;
        let mut src_ip = None;
        let (mut size, mut window, mut rate) = (None, None, None);
        for field in text.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| format!("bad field {field:?}"))?;
            let num = || v.parse::<u64>().map_err(|e| format!("{k}: {e}"));
            match k {
                "class" => class = Some(v.parse()?),
                "src" => src_ip = Some(v.parse().map_err(|e| format!("src: {e}"))?),
                "size" => size = Some(num()?),
                "window" => window = Some(num()?),
                "rate" => rate = Some(num()?),
                _ => {}
            }
        }
        Ok(ConnectSpec {
            at,
            class: class.ok_or("missing class")?,
            src_ip: src_ip.ok_or("missing src")?,
            response_size: size.ok_or("missing size")?,
            recv_window: window.ok_or("missing window")?,
            read_rate: rate.ok_or("missing rate")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegitWorkload {
    /// Poisson arrivals per second.
    pub arrival_rate: f64,
    pub read_rate_range: RangeInclusive<u64>,
    pub response_size_range: RangeInclusive<u64>,
    pub recv_window: u64,
    pub src_block: Cidr,
    pub slow_fraction: f64,
    pub slow_read_rate_range: RangeInclusive<u64>,
    pub slow_window_range: RangeInclusive<u64>,
}

impl LegitWorkload {
    pub const DEFAULT_SLOW_FRACTION: f64 = 0.05;
    pub const DEFAULT_RECV_WINDOW: u64 = 65_535;

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Invalid(m.to_string()));
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return bad("arrival_rate must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.slow_fraction) {
            return bad("slow_fraction must lie in [0, 1]");
        }
        for (name, r) in [
            ("read_rate_range", &self.read_rate_range),
            ("slow_read_rate_range", &self.slow_read_rate_range),
            ("slow_window_range", &self.slow_window_range),
        ] {
            if r.is_empty() || *r.start() == 0 {
                return bad(&format!("{name} must be non-empty and positive"));
            }
        }
        if self.response_size_range.is_empty() {
            return bad("response_size_range must be non-empty");
        }
        if self.recv_window == 0 {
            return bad("recv_window must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackWorkload {
    pub count: u64,
    pub provider_block: Cidr,
    pub window_range: RangeInclusive<u64>,
    pub read_rate: u64,
    /// Arrivals are spread evenly over `[launch_start, launch_end]`; equal
    /// bounds make a single burst.
    pub launch_start: SimTime,
    pub launch_end: SimTime,
    pub response_size: u64,
}

impl AttackWorkload {
    pub const DEFAULT_WINDOW: RangeInclusive<u64> = 8..=16;
    pub const DEFAULT_READ_RATE: u64 = 5;
    pub const DEFAULT_LAUNCH_WINDOW: SimTime = SimTime::from_secs(10);

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Invalid(m.to_string()));
        if self.window_range.is_empty() || *self.window_range.start() < 1 || *self.window_range.end() > 65_535 {
            return bad("window_range must lie within [1, 65535]");
        }
        if self.read_rate == 0 {
            return bad("read_rate must be positive");
        }
        if self.launch_end < self.launch_start {
            return bad("launch window ends before it starts");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeWorkload {
    pub period: SimTime,
    pub read_rate: u64,
    pub response_size: u64,
    pub recv_window: u64,
    pub src_ip: Ipv4Addr,
}

impl ProbeWorkload {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.period == SimTime::ZERO {
            return Err(WorkloadError::Invalid("probe period must be positive".into()));
        }
        if self.read_rate == 0 || self.recv_window == 0 {
            return Err(WorkloadError::Invalid("probe read_rate and recv_window must be positive".into()));
        }
        Ok(())
    }
}

fn draw_in(rng: &mut SimRng, r: &RangeInclusive<u64>) -> u64 {
    rng.draw_uniform_int(*r.start(), *r.end()).expect("validated range")
}

/// Poisson arrivals over `(0, horizon]`. Per arrival the draws are, in order:
/// inter-arrival gap, slow/fast coin, read rate, window (slow clients only),
/// response size, source host.
pub fn build_legit_arrivals(
    w: &LegitWorkload,
    horizon: SimTime,
    rng: &mut SimRng,
) -> Result<Vec<ConnectSpec>, WorkloadError> {
    w.validate()?;
    let mut out = Vec::new();
    if w.arrival_rate == 0.0 {
        return Ok(out);
    }
    let hosts = w.src_block.usable_hosts();
    let mut t = SimTime::ZERO;
    loop {
        t = t + rng.draw_exponential(w.arrival_rate);
        if t > horizon {
            break;
        }
        let slow = rng.draw_unit() < w.slow_fraction;
        let (class, read_rate, recv_window) = if slow {
            let rate = draw_in(rng, &w.slow_read_rate_range);
            (ClientClass::SlowLegit, rate, draw_in(rng, &w.slow_window_range))
        } else {
            (ClientClass::Legit, draw_in(rng, &w.read_rate_range), w.recv_window)
        };
        let response_size = draw_in(rng, &w.response_size_range);
        let src_ip = w.src_block.host(rng.draw_uniform_int(0, hosts - 1).expect("non-empty block"));
        out.push(ConnectSpec { at: t, class, src_ip, response_size, recv_window, read_rate });
    }
    Ok(out)
}

/// One attacker VM opening `count` connections from distinct virtual IPs.
pub fn build_attack_wave(
    w: &AttackWorkload,
    map: &ProviderMap,
    rng: &mut SimRng,
) -> Result<Vec<ConnectSpec>, WorkloadError> {
    w.validate()?;
    let ips = allocate_virtual_ips(w.provider_block, w.count, rng)?;
    let provider = ips.first().map(|ip| map.provider_of(*ip));
    if let Some(p) = provider {
        if ips.iter().any(|ip| map.provider_of(*ip) != p) {
            return Err(WorkloadError::MixedProviders { block: w.provider_block });
        }
    }
    let span = (w.launch_end - w.launch_start).micros() as u128;
    Ok(ips
        .into_iter()
        .enumerate()
        .map(|(i, src_ip)| {
            let offset = if w.count == 0 { 0 } else { span * i as u128 / w.count as u128 };
            ConnectSpec {
                at: w.launch_start + SimTime(offset as u64),
                class: ClientClass::Attack,
                src_ip,
                response_size: w.response_size,
                recv_window: draw_in(rng, &w.window_range),
                read_rate: w.read_rate,
            }
        })
        .collect())
}

/// Probes at `period, 2·period, …` up to and including `horizon`.
pub fn build_probes(w: &ProbeWorkload, horizon: SimTime) -> Result<Vec<ConnectSpec>, WorkloadError> {
    w.validate()?;
    let n = horizon.micros() / w.period.micros();
    Ok((1..=n)
        .map(|k| ConnectSpec {
            at: SimTime(k * w.period.micros()),
            class: ClientClass::Probe,
            src_ip: w.src_ip,
            response_size: w.response_size,
            recv_window: w.recv_window,
            read_rate: w.read_rate,
        })
        .collect())
}
