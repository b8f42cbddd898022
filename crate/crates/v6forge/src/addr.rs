//! Canonical IPv6 address, prefix, and protocol types.
//!
//! An [`Address`] is a 128-bit value viewed as 32 nibbles (4-bit hex digits),
//! most significant first. Textual input accepts any valid IPv6 form (full,
//! compressed, mixed case); output is always the canonical lowercase form
//! with the leftmost longest zero run compressed. IPv4-mapped shorthand with
//! embedded dots is rejected: the toolkit is IPv6-only and silent conversion
//! would hide input errors.
//!
//! The address-list file format used across the pipeline is one canonical
//! address per line, LF-terminated, with no comments and no blank lines.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::Ipv6Addr;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Number of nibbles in an IPv6 address.
pub const NIBBLE_COUNT: usize = 32;

#[derive(Debug, Error)]
pub enum AddrError {
    #[error("malformed IPv6 address {text:?}: {reason}")]
    MalformedAddress { text: String, reason: String },
    #[error("malformed prefix {text:?}: {reason}")]
    MalformedPrefix { text: String, reason: String },
    #[error("{path}:{line}: {source}")]
    Entry {
        path: String,
        line: usize,
        #[source]
        source: Box<AddrError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AddrError {
    fn at(self, path: &Path, line: usize) -> AddrError {
        AddrError::Entry {
            path: path.display().to_string(),
            line,
            source: Box::new(self),
        }
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> AddrError {
    AddrError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A 128-bit IPv6 address, stored most-significant-nibble first.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(u128);

impl Address {
    pub const fn from_bits(bits: u128) -> Self {
        Address(bits)
    }

    pub const fn bits(self) -> u128 {
        self.0
    }

    /// Nibble at position `i` (0 = most significant, 31 = least).
    pub fn nibble(self, i: usize) -> u8 {
        debug_assert!(i < NIBBLE_COUNT);
        ((self.0 >> ((NIBBLE_COUNT - 1 - i) * 4)) & 0xf) as u8
    }

    /// All 32 nibbles, most significant first.
    pub fn nibbles(self) -> [u8; NIBBLE_COUNT] {
        let mut out = [0u8; NIBBLE_COUNT];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.nibble(i);
        }
        out
    }

    pub fn from_nibbles(nibbles: &[u8; NIBBLE_COUNT]) -> Self {
        let mut bits = 0u128;
        for &n in nibbles {
            debug_assert!(n < 16);
            bits = (bits << 4) | u128::from(n & 0xf);
        }
        Address(bits)
    }

    /// Copy of `self` with nibble `i` replaced by `value`.
    pub fn with_nibble(self, i: usize, value: u8) -> Self {
        debug_assert!(i < NIBBLE_COUNT && value < 16);
        let shift = (NIBBLE_COUNT - 1 - i) * 4;
        Address((self.0 & !(0xfu128 << shift)) | (u128::from(value) << shift))
    }
}

impl FromStr for Address {
    type Err = AddrError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        if text.contains('.') {
            return Err(AddrError::MalformedAddress {
                text: text.to_string(),
                reason: "IPv4-mapped shorthand is not accepted".to_string(),
            });
        }
        let parsed: Ipv6Addr = text.parse().map_err(|_| AddrError::MalformedAddress {
            text: text.to_string(),
            reason: "invalid IPv6 syntax".to_string(),
        })?;
        Ok(Address(u128::from(parsed)))
    }
}

impl fmt::Display for Address {
    /// Canonical form: lowercase, longest zero-group run compressed,
    /// leftmost on tie, never compressing a single zero group.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let groups: [u16; 8] = std::array::from_fn(|i| (self.0 >> ((7 - i) * 16)) as u16);

        // Longest run of zero groups, length >= 2, leftmost wins ties.
        let mut best_start = 0usize;
        let mut best_len = 0usize;
        let mut i = 0;
        while i < 8 {
            if groups[i] == 0 {
                let start = i;
                while i < 8 && groups[i] == 0 {
                    i += 1;
                }
                if i - start > best_len {
                    best_start = start;
                    best_len = i - start;
                }
            } else {
                i += 1;
            }
        }

        if best_len < 2 {
            for (i, g) in groups.iter().enumerate() {
                if i > 0 {
                    write!(f, ":")?;
                }
                write!(f, "{g:x}")?;
            }
            return Ok(());
        }

        for (i, g) in groups.iter().enumerate().take(best_start) {
            if i > 0 {
                write!(f, ":")?;
            }
            write!(f, "{g:x}")?;
        }
        write!(f, "::")?;
        for (i, g) in groups.iter().enumerate().skip(best_start + best_len) {
            if i > best_start + best_len {
                write!(f, ":")?;
            }
            write!(f, "{g:x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

/// An IPv6 prefix: base address plus length in bits, stored normalized
/// (all bits past the prefix length are zero).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    base: Address,
    length: u8,
}

pub(crate) fn length_mask(length: u8) -> u128 {
    match length {
        0 => 0,
        128 => u128::MAX,
        l => u128::MAX << (128 - l),
    }
}

impl Prefix {
    pub fn new(base: Address, length: u8) -> Result<Self, AddrError> {
        if length > 128 {
            return Err(AddrError::MalformedPrefix {
                text: format!("{base}/{length}"),
                reason: "length exceeds 128".to_string(),
            });
        }
        Ok(Prefix {
            base: Address(base.0 & length_mask(length)),
            length,
        })
    }

    pub fn base(self) -> Address {
        self.base
    }

    pub fn length(self) -> u8 {
        self.length
    }

    /// True iff the first `length` bits of `a` equal the base.
    pub fn contains(self, a: Address) -> bool {
        a.0 & length_mask(self.length) == self.base.0
    }
}

impl FromStr for Prefix {
    type Err = AddrError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (addr_part, len_part) = text.split_once('/').ok_or_else(|| {
            AddrError::MalformedPrefix {
                text: text.to_string(),
                reason: "missing '/'".to_string(),
            }
        })?;
        let base: Address = addr_part.parse().map_err(|_| AddrError::MalformedPrefix {
            text: text.to_string(),
            reason: "invalid base address".to_string(),
        })?;
        let length: u8 = len_part.parse().map_err(|_| AddrError::MalformedPrefix {
            text: text.to_string(),
            reason: "invalid length".to_string(),
        })?;
        Prefix::new(base, length)
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.length)
    }
}

impl fmt::Debug for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Prefix({self})")
    }
}

/// The five probed protocols.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Protocol {
    Icmp,
    Tcp80,
    Tcp443,
    Udp53,
    Udp443,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Icmp,
        Protocol::Tcp80,
        Protocol::Tcp443,
        Protocol::Udp53,
        Protocol::Udp443,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Icmp => "icmp",
            Protocol::Tcp80 => "tcp80",
            Protocol::Tcp443 => "tcp443",
            Protocol::Udp53 => "udp53",
            Protocol::Udp443 => "udp443",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("unknown protocol {0:?} (expected icmp, tcp80, tcp443, udp53, or udp443)")]
pub struct UnknownProtocol(String);

impl FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "icmp" => Ok(Protocol::Icmp),
            "tcp80" => Ok(Protocol::Tcp80),
            "tcp443" => Ok(Protocol::Tcp443),
            "udp53" => Ok(Protocol::Udp53),
            "udp443" => Ok(Protocol::Udp443),
            _ => Err(UnknownProtocol(s.to_string())),
        }
    }
}

/// A set of prefixes supporting "does any prefix cover this address"
/// queries, one hash probe per distinct prefix length.
#[derive(Clone, Debug, Default)]
pub struct PrefixSet {
    // (length, masked bases), lengths descending
    by_len: Vec<(u8, HashSet<u128>)>,
    count: usize,
}

impl PrefixSet {
    pub fn new(prefixes: impl IntoIterator<Item = Prefix>) -> Self {
        let mut set = PrefixSet::default();
        for p in prefixes {
            set.insert(p);
        }
        set
    }

    pub fn insert(&mut self, p: Prefix) -> bool {
        let idx = match self.by_len.binary_search_by(|(l, _)| p.length().cmp(l)) {
            Ok(i) => i,
            Err(i) => {
                self.by_len.insert(i, (p.length(), HashSet::new()));
                i
            }
        };
        let fresh = self.by_len[idx].1.insert(p.base().bits());
        if fresh {
            self.count += 1;
        }
        fresh
    }

    pub fn covers(&self, a: Address) -> bool {
        self.by_len
            .iter()
            .any(|(len, bases)| bases.contains(&(a.bits() & length_mask(*len))))
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Prefix> + '_ {
        self.by_len.iter().flat_map(|(len, bases)| {
            let len = *len;
            bases
                .iter()
                .map(move |&bits| Prefix::new(Address::from_bits(bits), len).expect("stored normalized"))
        })
    }
}

impl FromIterator<Prefix> for PrefixSet {
    fn from_iter<T: IntoIterator<Item = Prefix>>(iter: T) -> Self {
        PrefixSet::new(iter)
    }
}

/// Read an address-list file: one canonical address per line, no comments,
/// no blank lines.
pub fn read_address_list(path: &Path) -> Result<Vec<Address>, AddrError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let addr: Address = line.parse().map_err(|e: AddrError| e.at(path, idx + 1))?;
        out.push(addr);
    }
    Ok(out)
}

/// Write an address-list file in the pipeline-wide format.
pub fn write_address_list<'a>(
    path: &Path,
    addrs: impl IntoIterator<Item = &'a Address>,
) -> Result<(), AddrError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for a in addrs {
        writeln!(w, "{a}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read a prefix-list file: one CIDR prefix per line.
pub fn read_prefix_list(path: &Path) -> Result<Vec<Prefix>, AddrError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let p: Prefix = line.parse().map_err(|e: AddrError| e.at(path, idx + 1))?;
        out.push(p);
    }
    Ok(out)
}

/// Write a prefix-list file, one CIDR prefix per line.
pub fn write_prefix_list<'a>(
    path: &Path,
    prefixes: impl IntoIterator<Item = &'a Prefix>,
) -> Result<(), AddrError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for p in prefixes {
        writeln!(w, "{p}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
