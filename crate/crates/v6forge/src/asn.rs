//! Origin-AS lookup and network categorization.
//!
//! A [`PrefixTable`] maps addresses to origin ASNs by longest-prefix match
//! over announced routes; a [`CategoryMap`] maps ASNs to the network
//! category their operator registered. Together they answer "what kind of
//! network does this address live in": addresses outside every announced
//! prefix are [`NetworkCategory::Unknown`], addresses whose origin AS has
//! no registered category are [`NetworkCategory::Others`].
//!
//! Input files are CSV. A RIB dump has header `prefix,asn`; a category dump
//! has header `asn,label` with the registry's own label strings (e.g.
//! `Cable/DSL/ISP`).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::addr::{length_mask, Address, Prefix};

#[derive(Debug, Error)]
pub enum AsnError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected header {expected:?}, found {found:?}")]
    MalformedHeader {
        path: String,
        expected: &'static str,
        found: String,
    },
    #[error("{path}: no valid rows")]
    EmptyTable { path: String },
    #[error("{path}: no snapshot dated {date} or earlier")]
    NoSnapshot {
        path: String,
        date: chrono::NaiveDate,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> AsnError {
    AsnError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Network categories, following the registry's classification.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum NetworkCategory {
    Content,
    Isp,
    Nsp,
    Educational,
    NonProfit,
    Others,
    Unknown,
}

impl NetworkCategory {
    /// All categories, in reporting order.
    pub const ALL: [NetworkCategory; 7] = [
        NetworkCategory::Content,
        NetworkCategory::Isp,
        NetworkCategory::Nsp,
        NetworkCategory::Educational,
        NetworkCategory::NonProfit,
        NetworkCategory::Others,
        NetworkCategory::Unknown,
    ];

    /// Display label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            NetworkCategory::Content => "Content",
            NetworkCategory::Isp => "ISP",
            NetworkCategory::Nsp => "NSP",
            NetworkCategory::Educational => "Educational",
            NetworkCategory::NonProfit => "Non-Profit",
            NetworkCategory::Others => "Others",
            NetworkCategory::Unknown => "Unknown",
        }
    }

    /// Lowercase token safe for file names and CLI arguments.
    pub fn slug(self) -> &'static str {
        match self {
            NetworkCategory::Content => "content",
            NetworkCategory::Isp => "isp",
            NetworkCategory::Nsp => "nsp",
            NetworkCategory::Educational => "educational",
            NetworkCategory::NonProfit => "non-profit",
            NetworkCategory::Others => "others",
            NetworkCategory::Unknown => "unknown",
        }
    }

    /// Map a registry label to a category. Labels that carry their own
    /// category keep it; everything else registered falls into `Others`.
    pub fn from_registry_label(label: &str) -> NetworkCategory {
        match label {
            "Content" => NetworkCategory::Content,
            "Cable/DSL/ISP" => NetworkCategory::Isp,
            "NSP" => NetworkCategory::Nsp,
            "Educational/Research" => NetworkCategory::Educational,
            "Non-Profit" => NetworkCategory::NonProfit,
            _ => NetworkCategory::Others,
        }
    }

    /// Parse a slug or display label, case-insensitively.
    pub fn from_token(token: &str) -> Option<NetworkCategory> {
        let lower = token.to_ascii_lowercase();
        NetworkCategory::ALL
            .into_iter()
            .find(|c| c.slug() == lower || c.label().eq_ignore_ascii_case(token))
    }
}

impl fmt::Display for NetworkCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Longest-prefix-match table from announced prefixes to origin ASNs.
///
/// Routes are bucketed by prefix length; a lookup masks the address once
/// per distinct length, longest first, so cost is bounded by the number of
/// distinct lengths (at most 129) rather than the number of routes.
#[derive(Clone, Debug, Default)]
pub struct PrefixTable {
    // (length, masked base -> origin ASN), lengths descending
    by_len: Vec<(u8, HashMap<u128, u32>)>,
    routes: usize,
    malformed_rows: usize,
}

impl PrefixTable {
    pub fn new() -> Self {
        PrefixTable::default()
    }

    /// Insert a route. When the same prefix is announced by several origins,
    /// the lowest ASN wins, independent of insertion order.
    pub fn insert(&mut self, prefix: Prefix, asn: u32) {
        let idx = match self
            .by_len
            .binary_search_by(|(l, _)| prefix.length().cmp(l))
        {
            Ok(i) => i,
            Err(i) => {
                self.by_len.insert(i, (prefix.length(), HashMap::new()));
                i
            }
        };
        let slot = self.by_len[idx].1.entry(prefix.base().bits());
        match slot {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                if asn < *e.get() {
                    e.insert(asn);
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(asn);
                self.routes += 1;
            }
        }
    }

    /// Origin AS of the longest announced prefix covering `a`, if any.
    pub fn lookup(&self, a: Address) -> Option<u32> {
        self.by_len
            .iter()
            .find_map(|(len, bases)| bases.get(&(a.bits() & length_mask(*len))).copied())
    }

    /// Number of distinct routes held.
    pub fn len(&self) -> usize {
        self.routes
    }

    pub fn is_empty(&self) -> bool {
        self.routes == 0
    }

    /// Rows skipped as malformed during the load that built this table.
    pub fn malformed_rows(&self) -> usize {
        self.malformed_rows
    }

    /// All (prefix, origin) entries, in unspecified order.
    pub fn entries(&self) -> impl Iterator<Item = (Prefix, u32)> + '_ {
        self.by_len.iter().flat_map(|(len, bases)| {
            let len = *len;
            bases.iter().map(move |(&bits, &asn)| {
                (
                    Prefix::new(Address::from_bits(bits), len).expect("stored normalized"),
                    asn,
                )
            })
        })
    }
}

/// Load a RIB dump (`prefix,asn` CSV) into a [`PrefixTable`].
///
/// Malformed rows are skipped and counted ([`PrefixTable::malformed_rows`]);
/// a file that yields no valid route at all is an error.
pub fn load_rib(path: &Path) -> Result<PrefixTable, AsnError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .unwrap_or_default();
    if header.trim() != "prefix,asn" {
        return Err(AsnError::MalformedHeader {
            path: path.display().to_string(),
            expected: "prefix,asn",
            found: header,
        });
    }
    let mut table = PrefixTable::new();
    for line in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        let parsed = line.split_once(',').and_then(|(p, a)| {
            Some((p.trim().parse::<Prefix>().ok()?, a.trim().parse::<u32>().ok()?))
        });
        match parsed {
            Some((prefix, asn)) => table.insert(prefix, asn),
            None => table.malformed_rows += 1,
        }
    }
    if table.is_empty() {
        return Err(AsnError::EmptyTable {
            path: path.display().to_string(),
        });
    }
    Ok(table)
}

/// Map from origin ASN to registered network category.
#[derive(Clone, Debug, Default)]
pub struct CategoryMap {
    by_asn: HashMap<u32, NetworkCategory>,
    malformed_rows: usize,
}

impl CategoryMap {
    pub fn new() -> Self {
        CategoryMap::default()
    }

    /// Register a category for an ASN. The first registration wins.
    pub fn insert(&mut self, asn: u32, category: NetworkCategory) {
        self.by_asn.entry(asn).or_insert(category);
    }

    pub fn get(&self, asn: u32) -> Option<NetworkCategory> {
        self.by_asn.get(&asn).copied()
    }

    pub fn len(&self) -> usize {
        self.by_asn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_asn.is_empty()
    }

    pub fn malformed_rows(&self) -> usize {
        self.malformed_rows
    }
}

/// Load a category dump (`asn,label` CSV) into a [`CategoryMap`].
pub fn load_categories(path: &Path) -> Result<CategoryMap, AsnError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .unwrap_or_default();
    if header.trim() != "asn,label" {
        return Err(AsnError::MalformedHeader {
            path: path.display().to_string(),
            expected: "asn,label",
            found: header,
        });
    }
    let mut map = CategoryMap::new();
    for line in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        match line.split_once(',') {
            Some((asn, label)) => match asn.trim().parse::<u32>() {
                Ok(asn) => map.insert(asn, NetworkCategory::from_registry_label(label.trim())),
                Err(_) => map.malformed_rows += 1,
            },
            None => map.malformed_rows += 1,
        }
    }
    if map.is_empty() {
        return Err(AsnError::EmptyTable {
            path: path.display().to_string(),
        });
    }
    Ok(map)
}

/// Pick the snapshot file in `dir` matching `date`: exact match on the
/// `YYYY-MM-DD.csv` file name, else the nearest earlier snapshot. Used to
/// align routing/category data with the date of the scan being analyzed.
pub fn select_dated_file(
    dir: &Path,
    date: chrono::NaiveDate,
) -> Result<std::path::PathBuf, AsnError> {
    let mut best: Option<(chrono::NaiveDate, std::path::PathBuf)> = None;
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Ok(file_date) = chrono::NaiveDate::parse_from_str(stem, "%Y-%m-%d") else {
            continue;
        };
        if file_date <= date && best.as_ref().is_none_or(|(d, _)| file_date > *d) {
            best = Some((file_date, path));
        }
    }
    best.map(|(_, path)| path).ok_or_else(|| AsnError::NoSnapshot {
        path: dir.display().to_string(),
        date,
    })
}

/// Category of a single address: `Unknown` when no announced prefix covers
/// it, `Others` when its origin AS has no registered category.
pub fn categorize(a: Address, table: &PrefixTable, categories: &CategoryMap) -> NetworkCategory {
    match table.lookup(a) {
        None => NetworkCategory::Unknown,
        Some(asn) => categories.get(asn).unwrap_or(NetworkCategory::Others),
    }
}

/// Split an address list by category, preserving input order within each
/// category's list.
pub fn split_by_category(
    addrs: &[Address],
    table: &PrefixTable,
    categories: &CategoryMap,
) -> BTreeMap<NetworkCategory, Vec<Address>> {
    let mut out: BTreeMap<NetworkCategory, Vec<Address>> = BTreeMap::new();
    for &a in addrs {
        out.entry(categorize(a, table, categories)).or_default().push(a);
    }
    out
}

/// Write a category summary CSV (`category,count,share`) covering every
/// category, in reporting order. Shares are fractions of the total count.
pub fn write_category_summary(
    path: &Path,
    split: &BTreeMap<NetworkCategory, Vec<Address>>,
) -> Result<(), AsnError> {
    let total: usize = split.values().map(Vec::len).sum();
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "category,count,share").map_err(|e| io_err(path, e))?;
    for cat in NetworkCategory::ALL {
        let count = split.get(&cat).map_or(0, Vec::len);
        let share = if total == 0 {
            0.0
        } else {
            count as f64 / total as f64
        };
        writeln!(w, "{},{count},{share}", cat.label()).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
