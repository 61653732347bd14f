//! Two-zone overflow routing and grouped eviction of slow connections.
//!
//! New connections go to zone 1 while it has room and overflow to zone 2.
//! Periodically each zone's active connections are classified by observed
//! throughput; slow ones are grouped by source address and/or by cloud
//! provider, and every group with at least `group_threshold` members is
//! evicted whole.
//!
//! The analysis sees only [`ViewRow`]s, which carry no ground-truth label.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::netmodel::{ProviderId, ProviderMap};
use crate::server::{CloseReason, ConnId, ConnState, Connection, Zone, ZoneId};
use crate::simkernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    SourceIp,
    Provider,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// bytes per second; strictly slower connections are slow
    pub slow_threshold: u64,
    pub min_observation: SimTime,
    pub group_by: GroupBy,
    pub group_threshold: usize,
    pub analysis_period: SimTime,
    pub include_unknown_provider: bool,
    /// Analyse from the start instead of waiting for zone 1 to saturate.
    pub always_on: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            slow_threshold: 100,
            min_observation: SimTime::from_secs(10),
            group_by: GroupBy::Both,
            group_threshold: 5,
            analysis_period: SimTime::from_secs(5),
            include_unknown_provider: false,
            always_on: false,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.slow_threshold == 0 {
            return Err("slow_threshold must be positive".into());
        }
        if self.group_threshold == 0 {
            return Err("group_threshold must be at least 1".into());
        }
        if self.analysis_period == SimTime::ZERO {
            return Err("analysis_period must be positive".into());
        }
        Ok(())
    }
}

/// The facts the defense may read about one active connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewRow {
    pub id: ConnId,
    pub src_ip: Ipv4Addr,
    pub opened_at: SimTime,
    pub delivered: u64,
    pub last_progress_at: SimTime,
}

impl ViewRow {
    pub fn of(conn: &Connection) -> Self {
        ViewRow {
            id: conn.id,
            src_ip: conn.src_ip,
            opened_at: conn.opened_at,
            delivered: conn.delivered,
            last_progress_at: conn.last_progress_at,
        }
    }
}

/// Snapshot of a zone's active connections, in connection-id order.
pub fn defense_view(zone: &Zone, conns: &[Connection]) -> Vec<ViewRow> {
    zone.pool()
        .iter()
        .map(|id| &conns[id.0 as usize])
        .filter(|c| c.state == ConnState::Transferring)
        .map(ViewRow::of)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Throughput {
    Unobserved,
    Observed { bytes: u64, elapsed: SimTime },
}

impl Throughput {
    pub fn bytes_per_sec(self) -> Option<f64> {
        match self {
            Throughput::Unobserved => None,
            Throughput::Observed { bytes, elapsed } => Some(bytes as f64 / elapsed.as_secs_f64()),
        }
    }

    /// Exact comparison against a bytes-per-second threshold.
    pub fn is_below(self, threshold: u64) -> bool {
        match self {
            Throughput::Unobserved => false,
            Throughput::Observed { bytes, elapsed } => {
                (bytes as u128) * (SimTime::MICROS_PER_SEC as u128) < threshold as u128 * elapsed.micros() as u128
            }
        }
    }
}

/// Average rate since opening; unobserved during the grace period (and at an
/// age of zero, where no rate exists).
pub fn throughput_of(row: &ViewRow, now: SimTime, min_observation: SimTime) -> Throughput {
    let age = now.saturating_sub(row.opened_at);
    if age < min_observation || age == SimTime::ZERO {
        return Throughput::Unobserved;
    }
    Throughput::Observed { bytes: row.delivered, elapsed: age }
}

pub fn classify_slow(row: &ViewRow, now: SimTime, cfg: &AnalysisConfig) -> bool {
    throughput_of(row, now, cfg.min_observation).is_below(cfg.slow_threshold)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupKey {
    Ip(Ipv4Addr),
    Provider(ProviderId),
    UnknownProvider,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Ip(ip) => write!(f, "ip:{ip}"),
            GroupKey::Provider(p) => write!(f, "provider:{p}"),
            GroupKey::UnknownProvider => f.write_str("provider:?"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DropSet {
    pub entries: Vec<(ConnId, GroupKey)>,
    /// Every group that reached the threshold, with its size.
    pub groups: Vec<(GroupKey, usize)>,
    pub observed: usize,
    pub slow: usize,
}

impl DropSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ConnId> + '_ {
        self.entries.iter().map(|(id, _)| *id)
    }
}

/// Overflow routing decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Zone(ZoneId),
    RejectedBoth,
}

pub fn route(zones: &[Zone; 2]) -> Route {
    zones.iter().find(|z| z.has_free_slot()).map_or(Route::RejectedBoth, |z| Route::Zone(z.id))
}

/// One analysis pass over a zone's view. Pure in its inputs.
pub fn analysis_cycle(view: &[ViewRow], map: &ProviderMap, cfg: &AnalysisConfig, now: SimTime) -> DropSet {
    let mut out = DropSet::default();
    let slow: Vec<&ViewRow> = view
        .iter()
        .filter(|r| {
            let t = throughput_of(r, now, cfg.min_observation);
            if t != Throughput::Unobserved {
                out.observed += 1;
            }
            t.is_below(cfg.slow_threshold)
        })
        .collect();
    out.slow = slow.len();

    let mut partitions: Vec<BTreeMap<GroupKey, Vec<ConnId>>> = Vec::new();
    if matches!(cfg.group_by, GroupBy::SourceIp | GroupBy::Both) {
        let mut by_ip: BTreeMap<GroupKey, Vec<ConnId>> = BTreeMap::new();
        for r in &slow {
            by_ip.entry(GroupKey::Ip(r.src_ip)).or_default().push(r.id);
        }
        partitions.push(by_ip);
    }
    if matches!(cfg.group_by, GroupBy::Provider | GroupBy::Both) {
        let mut by_provider: BTreeMap<GroupKey, Vec<ConnId>> = BTreeMap::new();
        for r in &slow {
            let key = match map.provider_of(r.src_ip) {
                Some(p) => GroupKey::Provider(p.clone()),
                None if cfg.include_unknown_provider => GroupKey::UnknownProvider,
                None => continue,
            };
            by_provider.entry(key).or_default().push(r.id);
        }
        partitions.push(by_provider);
    }

    let mut taken: HashSet<ConnId> = HashSet::new();
    for partition in partitions {
        for (key, mut ids) in partition {
            if ids.len() < cfg.group_threshold {
                continue;
            }
            ids.sort();
            out.groups.push((key.clone(), ids.len()));
            for id in ids {
                if taken.insert(id) {
                    out.entries.push((id, key.clone()));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DropOutcome {
    pub closed: Vec<ConnId>,
    pub skipped: Vec<ConnId>,
}

/// Closes every listed connection still in the zone's pool with reason
/// Mitigation. `conns` is indexed by connection id.
pub fn apply_drops(zone: &mut Zone, conns: &mut [Connection], drops: &DropSet, now: SimTime) -> DropOutcome {
    let mut out = DropOutcome::default();
    for id in drops.ids() {
        let conn = &mut conns[id.0 as usize];
        if conn.state == ConnState::Transferring && zone.close(conn, CloseReason::Mitigation, now).is_ok() {
            out.closed.push(id);
        } else {
            out.skipped.push(id);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::server::{Admission, ServerConfig, TimeoutPolicy, TruthLabel};

    fn row(id: u64, ip: [u8; 4], opened_s: u64, delivered: u64) -> ViewRow {
        ViewRow {
            id: ConnId(id),
            src_ip: Ipv4Addr::from(ip),
            opened_at: SimTime::from_secs(opened_s),
            delivered,
            last_progress_at: SimTime::from_secs(opened_s),
        }
    }

    fn map() -> ProviderMap {
        ProviderMap::parse("198.51.96.0/20 cloudX\n203.0.113.0/24 cloudY\n").unwrap()
    }

    fn zone(id: u8, max: u32) -> Zone {
        Zone::new(ZoneId(id), ServerConfig::new(max, SimTime::from_secs(20), TimeoutPolicy::Idle))
    }

    fn admit_n(z: &mut Zone, from: u64, n: u64) {
        for i in from..from + n {
            let mut c = Connection::new(ConnId(i), Ipv4Addr::LOCALHOST, 10, 10, 10, TruthLabel::Legit);
            assert_eq!(z.try_admit(&mut c, SimTime::ZERO), Admission::Admitted);
        }
    }

    #[test]
    fn route_prefers_zone_one() {
        let mut zones = [zone(1, 500), zone(2, 500)];
        admit_n(&mut zones[0], 0, 499);
        assert_eq!(route(&zones), Route::Zone(ZoneId(1)));
        admit_n(&mut zones[0], 499, 1);
        assert_eq!(route(&zones), Route::Zone(ZoneId(2)));
        admit_n(&mut zones[1], 500, 500);
        assert_eq!(route(&zones), Route::RejectedBoth);
    }

    #[test]
    fn throughput_examples() {
        let now = SimTime::from_secs(40);
        let r = row(1, [198, 51, 100, 1], 0, 200);
        assert_eq!(throughput_of(&r, now, SimTime::from_secs(10)).bytes_per_sec(), Some(5.0));
        let young = row(1, [198, 51, 100, 1], 35, 200);
        assert_eq!(throughput_of(&young, now, SimTime::from_secs(10)), Throughput::Unobserved);
        let idle = row(1, [198, 51, 100, 1], 20, 0);
        assert_eq!(throughput_of(&idle, now, SimTime::from_secs(10)).bytes_per_sec(), Some(0.0));
    }

    #[test]
    fn slow_classification() {
        let cfg = AnalysisConfig::default();
        let now = SimTime::from_secs(40);
        assert!(classify_slow(&row(1, [1, 1, 1, 1], 0, 200), now, &cfg));
        assert!(!classify_slow(&row(1, [1, 1, 1, 1], 0, 400_000), now, &cfg));
        assert!(!classify_slow(&row(1, [1, 1, 1, 1], 35, 0), now, &cfg));
        // exactly at the threshold is not slow
        assert!(!classify_slow(&row(1, [1, 1, 1, 1], 0, 4_000), now, &cfg));
    }

    #[test]
    fn single_provider_group_dropped_whole() {
        let view: Vec<ViewRow> =
            (0..600).map(|i| row(i, [198, 51, 100 + (i / 250) as u8, (i % 250) as u8 + 1], 0, 200)).collect();
        let d = analysis_cycle(&view, &map(), &AnalysisConfig::default(), SimTime::from_secs(40));
        assert_eq!(d.len(), 600);
        assert_eq!(d.groups, vec![(GroupKey::Provider(ProviderId("cloudX".into())), 600)]);
    }

    #[test]
    fn small_group_survives() {
        let view: Vec<ViewRow> = (0..3).map(|i| row(i, [203, 0, 113, i as u8 + 1], 0, 10)).collect();
        let d = analysis_cycle(&view, &map(), &AnalysisConfig::default(), SimTime::from_secs(40));
        assert!(d.is_empty());
        assert_eq!(d.slow, 3);
    }

    #[test]
    fn slow_legit_sharing_provider_is_evicted_too() {
        let mut view: Vec<ViewRow> =
            (0..598).map(|i| row(i, [198, 51, 100 + (i / 250) as u8, (i % 250) as u8 + 1], 0, 200)).collect();
        view.push(row(1000, [198, 51, 104, 7], 0, 150));
        view.push(row(1001, [198, 51, 105, 9], 0, 150));
        let d = analysis_cycle(&view, &map(), &AnalysisConfig::default(), SimTime::from_secs(40));
        assert_eq!(d.len(), 600);
        let ids: HashSet<ConnId> = d.ids().collect();
        assert!(ids.contains(&ConnId(1000)) && ids.contains(&ConnId(1001)));
    }

    #[test]
    fn same_ip_group_and_unknown_provider() {
        let view: Vec<ViewRow> = (0..5).map(|i| row(i, [192, 0, 2, 1], 0, 10)).collect();
        let cfg = AnalysisConfig { group_by: GroupBy::Provider, ..AnalysisConfig::default() };
        assert!(analysis_cycle(&view, &map(), &cfg, SimTime::from_secs(40)).is_empty());
        let cfg = AnalysisConfig { include_unknown_provider: true, ..cfg };
        let d = analysis_cycle(&view, &map(), &cfg, SimTime::from_secs(40));
        assert_eq!(d.groups, vec![(GroupKey::UnknownProvider, 5)]);
        let cfg = AnalysisConfig { group_by: GroupBy::SourceIp, ..AnalysisConfig::default() };
        let d = analysis_cycle(&view, &map(), &cfg, SimTime::from_secs(40));
        assert_eq!(d.groups, vec![(GroupKey::Ip(Ipv4Addr::new(192, 0, 2, 1)), 5)]);
    }

    #[test]
    fn both_lists_each_id_once() {
        let view: Vec<ViewRow> = (0..6).map(|i| row(i, [198, 51, 100, 1], 0, 10)).collect();
        let d = analysis_cycle(&view, &map(), &AnalysisConfig::default(), SimTime::from_secs(40));
        assert_eq!(d.len(), 6);
        assert_eq!(d.groups.len(), 2);
        assert!(d.entries.iter().all(|(_, k)| matches!(k, GroupKey::Ip(_))));
    }

    #[test]
    fn drops_skip_finished_connections() {
        let mut z = zone(1, 10);
        let mut conns: Vec<Connection> =
            (0..3).map(|i| Connection::new(ConnId(i), Ipv4Addr::LOCALHOST, 100, 10, 5, TruthLabel::Attack)).collect();
        for c in conns.iter_mut() {
            z.try_admit(c, SimTime::ZERO);
        }
        z.close(&mut conns[2], CloseReason::Complete, SimTime(5)).unwrap();
        let drops =
            DropSet { entries: (0..3).map(|i| (ConnId(i), GroupKey::UnknownProvider)).collect(), ..DropSet::default() };
        let out = apply_drops(&mut z, &mut conns, &drops, SimTime(9));
        assert_eq!(out.closed, vec![ConnId(0), ConnId(1)]);
        assert_eq!(out.skipped, vec![ConnId(2)]);
        assert_eq!(z.occupancy(), 0);
        assert_eq!(apply_drops(&mut z, &mut conns, &DropSet::default(), SimTime(9)), DropOutcome::default());
    }
}
