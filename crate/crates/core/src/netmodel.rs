//! IPv4 blocks, cloud-provider attribution and virtual-IP allocation.
//!
//! A [`ProviderMap`] maps CIDR prefixes to provider identities and resolves an
//! address by longest matching prefix. Allocation excludes the network and
//! broadcast addresses of blocks up to /30; a /31 offers both addresses and a
//! /32 its single address.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkernel::SimRng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("malformed CIDR {0:?}")]
    Malformed(String),
    #[error("CIDR {0:?} has host bits set below the prefix length")]
    NonZeroHostBits(String),
    #[error("block {block} has {capacity} usable hosts, {requested} requested")]
    BlockExhausted { block: Cidr, capacity: u64, requested: u64 },
    #[error("provider table line {line}: {reason}")]
    BadTable { line: usize, reason: String },
    #[error("reading provider table {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cidr {
    base: Ipv4Addr,
    prefix_len: u8,
}

impl Cidr {
    pub fn new(base: Ipv4Addr, prefix_len: u8) -> Result<Self, NetError> {
        if prefix_len > 32 {
            return Err(NetError::Malformed(format!("{base}/{prefix_len}")));
        }
        if u32::from(base) & !Self::mask_for(prefix_len) != 0 {
            return Err(NetError::NonZeroHostBits(format!("{base}/{prefix_len}")));
        }
        Ok(Cidr { base, prefix_len })
    }

    fn mask_for(prefix_len: u8) -> u32 {
        if prefix_len == 0 {
            0
        } else {
            u32::MAX << (32 - prefix_len)
        }
    }

    pub fn base(&self) -> Ipv4Addr {
        self.base
    }

    pub fn prefix_len(&self) -> u8 {
        self.prefix_len
    }

    pub fn mask(&self) -> u32 {
        Self::mask_for(self.prefix_len)
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & self.mask() == u32::from(self.base)
    }

    pub fn size(&self) -> u64 {
        1u64 << (32 - self.prefix_len as u32)
    }

    /// Addresses available to hosts.
    pub fn usable_hosts(&self) -> u64 {
        match self.prefix_len {
            32 => 1,
            31 => 2,
            _ => self.size() - 2,
        }
    }

    /// The `index`-th usable host address, `index < usable_hosts()`.
    pub fn host(&self, index: u64) -> Ipv4Addr {
        debug_assert!(index < self.usable_hosts());
        let first = if self.prefix_len >= 31 { 0 } else { 1 };
        Ipv4Addr::from(u32::from(self.base).wrapping_add((first + index) as u32))
    }
}

impl FromStr for Cidr {
    type Err = NetError;

    fn from_str(text: &str) -> Result<Self, NetError> {
        let malformed = || NetError::Malformed(text.to_string());
        let (addr, len) = text.trim().split_once('/').ok_or_else(malformed)?;
        let base: Ipv4Addr = addr.parse().map_err(|_| malformed())?;
        if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let prefix_len: u8 = len.parse().map_err(|_| malformed())?;
        if prefix_len > 32 {
            return Err(malformed());
        }
        Cidr::new(base, prefix_len).map_err(|e| match e {
            NetError::NonZeroHostBits(_) => NetError::NonZeroHostBits(text.to_string()),
            other => other,
        })
    }
}

pub fn parse_cidr(text: &str) -> Result<Cidr, NetError> {
    text.parse()
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.prefix_len)
    }
}

impl Serialize for Cidr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cidr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProviderId(pub String);

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// CIDR → provider table with longest-prefix lookup.
#[derive(Debug, Clone, Default)]
pub struct ProviderMap {
    entries: Vec<(Cidr, ProviderId)>,
    // one exact-match table per prefix length
    by_len: Vec<HashMap<u32, usize>>,
}

impl ProviderMap {
    pub fn new() -> Self {
        ProviderMap { entries: Vec::new(), by_len: vec![HashMap::new(); 33] }
    }

    /// Adds an entry. A prefix listed again replaces the earlier provider.
    pub fn insert(&mut self, cidr: Cidr, provider: ProviderId) {
        let slot = &mut self.by_len[cidr.prefix_len() as usize];
        match slot.get(&u32::from(cidr.base())) {
            Some(&i) => self.entries[i].1 = provider,
            None => {
                slot.insert(u32::from(cidr.base()), self.entries.len());
                self.entries.push((cidr, provider));
            }
        }
    }

    pub fn entries(&self) -> &[(Cidr, ProviderId)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn provider_of(&self, ip: Ipv4Addr) -> Option<&ProviderId> {
        let bits = u32::from(ip);
        (0..=32u8).rev().find_map(|len| {
            let table = &self.by_len[len as usize];
            if table.is_empty() {
                return None;
            }
            table.get(&(bits & Cidr::mask_for(len))).map(|&i| &self.entries[i].1)
        })
    }

    /// Parses the `<cidr> <provider-id>` table format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, NetError> {
        let mut map = ProviderMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(cidr), Some(provider), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(NetError::BadTable { line: n + 1, reason: "expected `<cidr> <provider-id>`".into() });
            };
            let cidr: Cidr =
                cidr.parse().map_err(|e: NetError| NetError::BadTable { line: n + 1, reason: e.to_string() })?;
            map.insert(cidr, ProviderId(provider.to_string()));
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NetError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text)
    }
}

pub fn provider_of(ip: Ipv4Addr, map: &ProviderMap) -> Option<&ProviderId> {
    map.provider_of(ip)
}

/// Draws `n` distinct usable addresses from `block` (Floyd's sampling), in a
/// draw order fixed by `rng`.
pub fn allocate_virtual_ips(block: Cidr, n: u64, rng: &mut SimRng) -> Result<Vec<Ipv4Addr>, NetError> {
    let capacity = block.usable_hosts();
    if n > capacity {
        return Err(NetError::BlockExhausted { block, capacity, requested: n });
    }
    let mut chosen: HashSet<u64> = HashSet::with_capacity(n as usize);
    let mut order = Vec::with_capacity(n as usize);
    for j in (capacity - n)..capacity {
        let t = rng.draw_uniform_int(0, j).expect("non-empty range");
        let pick = if chosen.contains(&t) { j } else { t };
        chosen.insert(pick);
        order.push(block.host(pick));
    }
    Ok(order)
}
