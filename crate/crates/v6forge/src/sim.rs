//! Deterministic synthetic-Internet ground truth.
//!
//! A [`PopulationConfig`] declares networks — prefix, origin AS, category,
//! host count, address pattern, per-protocol response probabilities, and an
//! aliased flag — and [`build_population`] materializes them into an
//! immutable [`GroundTruth`] that answers probes. Identical configs produce
//! identical populations, so every downstream result is reproducible and
//! checkable against known structure. Aliased prefixes answer ICMP for all
//! 2^64 contained addresses by rule rather than enumeration.
//!
//! The ground truth also emits RIB and category CSVs consistent with its
//! own networks, so categorization runs against the simulator agree with
//! the configured layout by construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::addr::{
    read_address_list, write_address_list, Address, Prefix, PrefixSet, Protocol,
};
use crate::asn::NetworkCategory;
use crate::filters::{ProbeFailure, ProbeOracle};
use crate::seed;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid population config: {reason}")]
    ConfigInvalid { reason: String },
    #[error("scan file {path} has no sibling {probed} (expected one probed-address list per scan)")]
    MissingProbedFile { path: String, probed: String },
    #[error("{path}:{line}: {reason}")]
    MalformedRow {
        path: String,
        line: usize,
        reason: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How a network's hosts are laid out inside its prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HostPattern {
    /// Sequential subnets with interface identifier ::1 — the dense,
    /// structured layout routers and statically addressed servers show.
    LowByte,
    /// Random subnet/middle bits with a fixed trailing nibble sequence.
    Structured(Vec<u8>),
    /// Uniformly random host bits.
    Random,
}

impl HostPattern {
    fn parse(text: &str) -> Result<Self, String> {
        match text {
            "lowbyte" => Ok(HostPattern::LowByte),
            "random" => Ok(HostPattern::Random),
            other => match other.strip_prefix("structured:") {
                Some(hex) if !hex.is_empty() => hex
                    .chars()
                    .map(|c| {
                        c.to_digit(16)
                            .map(|d| d as u8)
                            .ok_or_else(|| format!("bad hex digit {c:?} in pattern {text:?}"))
                    })
                    .collect::<Result<Vec<u8>, String>>()
                    .map(HostPattern::Structured),
                _ => Err(format!(
                    "unknown pattern {text:?} (expected lowbyte, random, or structured:<hex>)"
                )),
            },
        }
    }
}

/// One configured network.
#[derive(Clone, Debug)]
pub struct NetworkSpec {
    pub prefix: Prefix,
    pub asn: u32,
    pub category: NetworkCategory,
    pub host_count: u64,
    pub pattern: HostPattern,
    pub profile: BTreeMap<Protocol, f64>,
    pub aliased: bool,
}

/// Declarative population layout plus the seed for all derived randomness.
#[derive(Clone, Debug)]
pub struct PopulationConfig {
    pub networks: Vec<NetworkSpec>,
    pub rng_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    rng_seed: u64,
    #[serde(rename = "network", default)]
    networks: Vec<RawNetwork>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    prefix: String,
    asn: u32,
    category: String,
    host_count: u64,
    pattern: String,
    #[serde(default)]
    profile: BTreeMap<String, f64>,
    #[serde(default)]
    aliased: bool,
}

impl PopulationConfig {
    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            SimError::Parse { message, .. } => SimError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Parse and validate a TOML population config (one `[[network]]`
    /// table per network).
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| SimError::Parse {
            path: "<config>".to_string(),
            message: e.to_string(),
        })?;
        let invalid = |reason: String| SimError::ConfigInvalid { reason };

        let mut networks = Vec::with_capacity(raw.networks.len());
        for (i, n) in raw.networks.into_iter().enumerate() {
            let at = |msg: String| invalid(format!("network {i}: {msg}"));
            let prefix: Prefix = n.prefix.parse().map_err(|e| at(format!("{e}")))?;
            let category = NetworkCategory::from_token(&n.category)
                .ok_or_else(|| at(format!("unknown category {:?}", n.category)))?;
            let pattern = HostPattern::parse(&n.pattern).map_err(&at)?;
            let mut profile = BTreeMap::new();
            for (key, prob) in n.profile {
                let protocol: Protocol = key
                    .parse()
                    .map_err(|e: crate::addr::UnknownProtocol| at(e.to_string()))?;
                if !(0.0..=1.0).contains(&prob) {
                    return Err(at(format!("probability {prob} for {protocol} out of [0,1]")));
                }
                profile.insert(protocol, prob);
            }
            networks.push(NetworkSpec {
                prefix,
                asn: n.asn,
                category,
                host_count: n.host_count,
                pattern,
                profile,
                aliased: n.aliased,
            });
        }
        let cfg = PopulationConfig {
            networks,
            rng_seed: raw.rng_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check the config invariants: pairwise-disjoint prefixes, a single
    /// category per ASN, and host counts that fit their pattern's capacity.
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |reason: String| SimError::ConfigInvalid { reason };
        for (i, a) in self.networks.iter().enumerate() {
            for b in &self.networks[..i] {
                if a.prefix.contains(b.prefix.base()) || b.prefix.contains(a.prefix.base()) {
                    return Err(invalid(format!(
                        "prefixes {} and {} overlap",
                        b.prefix, a.prefix
                    )));
                }
            }
        }
        let mut by_asn: BTreeMap<u32, NetworkCategory> = BTreeMap::new();
        for n in &self.networks {
            if let Some(prev) = by_asn.insert(n.asn, n.category) {
                if prev != n.category {
                    return Err(invalid(format!(
                        "AS{} appears with categories {prev} and {}",
                        n.asn, n.category
                    )));
                }
            }
        }
        for n in &self.networks {
            let length = u32::from(n.prefix.length());
            let capacity_bits = match &n.pattern {
                HostPattern::LowByte => {
                    if length > 64 {
                        return Err(invalid(format!(
                            "{}: lowbyte pattern needs a prefix of at most /64",
                            n.prefix
                        )));
                    }
                    64 - length
                }
                HostPattern::Structured(suffix) => {
                    let fixed = 4 * suffix.len() as u32;
                    if length + fixed > 128 {
                        return Err(invalid(format!(
                            "{}: structured suffix of {} nibbles does not fit",
                            n.prefix,
                            suffix.len()
                        )));
                    }
                    128 - length - fixed
                }
                HostPattern::Random => 128 - length,
            };
            let capacity = if capacity_bits >= 64 {
                u64::MAX
            } else {
                1u64 << capacity_bits
            };
            if n.host_count > capacity {
                return Err(invalid(format!(
                    "{}: host_count {} exceeds pattern capacity {capacity}",
                    n.prefix, n.host_count
                )));
            }
        }
        Ok(())
    }
}

/// Immutable materialized population: who exists, who answers what.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    networks: Vec<NetworkSpec>,
    hosts: Vec<Vec<Address>>,
    responsive: HashMap<Address, BTreeSet<Protocol>>,
    aliased_prefixes: PrefixSet,
}

/// Materialize a population: per network, lay out `host_count` distinct
/// addresses following its pattern and draw each host's protocol set once
/// from the profile. Every network consumes an independent random stream
/// derived from `(rng_seed, network index)`, so the result is deterministic
/// and insensitive to evaluation order.
pub fn build_population(cfg: &PopulationConfig) -> Result<GroundTruth, SimError> {
    cfg.validate()?;
    let mut hosts = Vec::with_capacity(cfg.networks.len());
    let mut responsive = HashMap::new();
    let mut aliased_prefixes = PrefixSet::default();

    for (index, network) in cfg.networks.iter().enumerate() {
        let mut rng = seed::rng_from(cfg.rng_seed, &[seed::salt_str("network"), index as u64]);
        let mut seen = HashSet::with_capacity(network.host_count as usize);
        let mut network_hosts = Vec::with_capacity(network.host_count as usize);
        let base = network.prefix.base().bits();
        let length = u32::from(network.prefix.length());

        let mut attempts = 0u64;
        let max_attempts = network.host_count.saturating_mul(100).saturating_add(1000);
        while (network_hosts.len() as u64) < network.host_count {
            let bits = match &network.pattern {
                HostPattern::LowByte => {
                    base | (network_hosts.len() as u128) << 64 | 1
                }
                HostPattern::Structured(suffix) => {
                    let fixed = 4 * suffix.len() as u32;
                    let middle_bits = 128 - length - fixed;
                    let middle = if middle_bits == 0 {
                        0
                    } else {
                        (rng.random::<u128>() & mask_low(middle_bits)) << fixed
                    };
                    let tail = suffix
                        .iter()
                        .fold(0u128, |acc, &nib| acc << 4 | u128::from(nib));
                    base | middle | tail
                }
                HostPattern::Random => base | (rng.random::<u128>() & mask_low(128 - length)),
            };
            attempts += 1;
            if attempts > max_attempts {
                return Err(SimError::ConfigInvalid {
                    reason: format!(
                        "{}: could not materialize {} distinct hosts",
                        network.prefix, network.host_count
                    ),
                });
            }
            if seen.insert(bits) {
                network_hosts.push(Address::from_bits(bits));
            }
        }

        for &host in &network_hosts {
            let mut protocols = BTreeSet::new();
            for p in Protocol::ALL {
                let prob = network.profile.get(&p).copied().unwrap_or(0.0);
                if prob > 0.0 && rng.random::<f64>() < prob {
                    protocols.insert(p);
                }
            }
            if !protocols.is_empty() {
                responsive.insert(host, protocols);
            }
        }

        if network.aliased {
            aliased_prefixes.insert(network.prefix);
        }
        hosts.push(network_hosts);
    }

    Ok(GroundTruth {
        networks: cfg.networks.clone(),
        hosts,
        responsive,
        aliased_prefixes,
    })
}

fn mask_low(bits: u32) -> u128 {
    match bits {
        0 => 0,
        128 => u128::MAX,
        b => (1u128 << b) - 1,
    }
}

impl GroundTruth {
    /// True iff `a` answers a probe on `p`. Pure: no state, no randomness.
    pub fn probe(&self, a: Address, p: Protocol) -> bool {
        if p == Protocol::Icmp && self.aliased_prefixes.covers(a) {
            return true;
        }
        self.responsive.get(&a).is_some_and(|set| set.contains(&p))
    }

    pub fn networks(&self) -> &[NetworkSpec] {
        &self.networks
    }

    /// Materialized hosts of network `index`, in creation order.
    pub fn hosts(&self, index: usize) -> &[Address] {
        &self.hosts[index]
    }

    pub fn all_hosts(&self) -> impl Iterator<Item = Address> + '_ {
        self.hosts.iter().flatten().copied()
    }

    /// Enumerated responders and their protocol sets (aliased-by-rule
    /// space not included).
    pub fn responsive(&self) -> &HashMap<Address, BTreeSet<Protocol>> {
        &self.responsive
    }

    pub fn aliased_prefixes(&self) -> &PrefixSet {
        &self.aliased_prefixes
    }

    /// RIB rows consistent with this population: every announced network
    /// (category other than Unknown), sorted by prefix.
    pub fn write_rib_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut rows: Vec<(Prefix, u32)> = self
            .networks
            .iter()
            .filter(|n| n.category != NetworkCategory::Unknown)
            .map(|n| (n.prefix, n.asn))
            .collect();
        rows.sort();
        let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "prefix,asn").map_err(|e| io_err(path, e))?;
        for (prefix, asn) in rows {
            writeln!(w, "{prefix},{asn}").map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    /// Category rows consistent with this population. Networks categorized
    /// `Others` are announced but get no registry row — that is exactly
    /// what makes them Others — and `Unknown` networks are not announced
    /// at all.
    pub fn write_categories_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut rows: BTreeMap<u32, &'static str> = BTreeMap::new();
        for n in &self.networks {
            let label = match n.category {
                NetworkCategory::Content => "Content",
                NetworkCategory::Isp => "Cable/DSL/ISP",
                NetworkCategory::Nsp => "NSP",
                NetworkCategory::Educational => "Educational/Research",
                NetworkCategory::NonProfit => "Non-Profit",
                NetworkCategory::Others | NetworkCategory::Unknown => continue,
            };
            rows.insert(n.asn, label);
        }
        let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "asn,label").map_err(|e| io_err(path, e))?;
        for (asn, label) in rows {
            writeln!(w, "{asn},{label}").map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    /// Known-aliased prefix list (one CIDR per line), sorted.
    pub fn write_aliased_prefixes(&self, path: &Path) -> Result<(), SimError> {
        let mut prefixes: Vec<Prefix> = self.aliased_prefixes.iter().collect();
        prefixes.sort();
        crate::addr::write_prefix_list(path, &prefixes).map_err(|e| SimError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }
}

impl ProbeOracle for GroundTruth {
    fn probe_icmp(&self, a: &Address) -> Result<bool, ProbeFailure> {
        Ok(self.probe(*a, Protocol::Icmp))
    }
}

/// Outcome of probing a target list: which addresses were probed at all,
/// and the non-empty protocol sets observed.
#[derive(Clone, Debug, Default)]
pub struct ScanResult {
    pub probed: BTreeSet<Address>,
    pub responses: HashMap<Address, BTreeSet<Protocol>>,
}

impl ScanResult {
    /// Addresses that answered at least one protocol, sorted.
    pub fn responders(&self) -> Vec<Address> {
        let mut out: Vec<Address> = self.responses.keys().copied().collect();
        out.sort();
        out
    }
}

/// Probe every target on every requested protocol against the ground
/// truth. Deterministic; targets outside the population simply never
/// answer.
pub fn scan(gt: &GroundTruth, targets: &[Address], protocols: &[Protocol]) -> ScanResult {
    let mut result = ScanResult::default();
    for &target in targets {
        result.probed.insert(target);
        let answered: BTreeSet<Protocol> = protocols
            .iter()
            .copied()
            .filter(|&p| gt.probe(target, p))
            .collect();
        if !answered.is_empty() {
            result.responses.insert(target, answered);
        }
    }
    result
}

fn probed_sibling(path: &Path) -> PathBuf {
    path.with_extension("probed")
}

/// Write a scan result as a response CSV (`saddr,protocol`, one row per
/// positive response, sorted) plus the sibling `.probed` address list.
pub fn export_scan(result: &ScanResult, path: &Path) -> Result<(), SimError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "saddr,protocol").map_err(|e| io_err(path, e))?;
    let mut rows: Vec<(Address, Protocol)> = result
        .responses
        .iter()
        .flat_map(|(&a, set)| set.iter().map(move |&p| (a, p)))
        .collect();
    rows.sort();
    for (a, p) in rows {
        writeln!(w, "{a},{p}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;

    let probed = probed_sibling(path);
    write_address_list(&probed, &result.probed).map_err(|e| SimError::Io {
        path: probed.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })
}

/// Read a scanner output CSV (header must include `saddr` and `protocol`
/// columns; extra columns are ignored) plus its sibling `.probed` file.
/// A response row for an address missing from the probed list is malformed:
/// a result that contains answers from addresses that were never probed
/// cannot be trusted.
pub fn import_scan(path: &Path) -> Result<ScanResult, SimError> {
    let probed_path = probed_sibling(path);
    if !probed_path.exists() {
        return Err(SimError::MissingProbedFile {
            path: path.display().to_string(),
            probed: probed_path.display().to_string(),
        });
    }
    let probed_list = read_address_list(&probed_path).map_err(|e| SimError::MalformedRow {
        path: probed_path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })?;
    let probed: BTreeSet<Address> = probed_list.into_iter().collect();

    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .unwrap_or_default();
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let saddr_col = columns.iter().position(|&c| c == "saddr");
    let proto_col = columns.iter().position(|&c| c == "protocol");
    let (Some(saddr_col), Some(proto_col)) = (saddr_col, proto_col) else {
        return Err(SimError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            reason: format!("header {header:?} lacks saddr/protocol columns"),
        });
    };

    let mut responses: HashMap<Address, BTreeSet<Protocol>> = HashMap::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let row = idx + 2;
        let malformed = |reason: String| SimError::MalformedRow {
            path: path.display().to_string(),
            line: row,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        let (Some(&saddr), Some(&proto)) = (fields.get(saddr_col), fields.get(proto_col)) else {
            return Err(malformed(format!("expected {} fields", columns.len())));
        };
        let address: Address = saddr
            .trim()
            .parse()
            .map_err(|e: crate::addr::AddrError| malformed(e.to_string()))?;
        let protocol: Protocol = proto
            .trim()
            .parse()
            .map_err(|e: crate::addr::UnknownProtocol| malformed(e.to_string()))?;
        if !probed.contains(&address) {
            return Err(malformed(format!("response from unprobed address {address}")));
        }
        responses.entry(address).or_default().insert(protocol);
    }
    Ok(ScanResult { probed, responses })
}
