//! Longitudinal scan history and address stability.
//!
//! A [`ScanHistory`] is an ordered series of scan snapshots plus an analysis
//! date. Between snapshots an address is assumed to hold its last observed
//! state, and the final state extends to the analysis date, so uptime and
//! downtime always partition the span from first appearance to analysis
//! exactly.
//!
//! On disk a history is a directory of `YYYY-MM-DD.csv` files, one per
//! snapshot, each row `address` or `address,protocol`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::addr::{Address, Protocol};
use crate::asn::{categorize, CategoryMap, NetworkCategory, PrefixTable};

/// Addresses first seen fewer than this many days before the analysis date
/// are too young for stability statistics.
pub const DEFAULT_ELIGIBILITY_WINDOW_DAYS: i64 = 100;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: snapshot file name must be YYYY-MM-DD.csv")]
    BadFileName { path: String },
    #[error("{path}: {malformed} of {total} rows malformed (first at line {first_line})")]
    TooManyMalformed {
        path: String,
        malformed: usize,
        total: usize,
        first_line: usize,
    },
    #[error("{path}: no snapshot files found")]
    EmptyHistory { path: String },
    #[error("snapshot dates must be strictly increasing ({prev} then {next})")]
    SnapshotOrder { prev: NaiveDate, next: NaiveDate },
    #[error("analysis date {analysis} precedes last snapshot {last}")]
    AnalysisDateBeforeLast { analysis: NaiveDate, last: NaiveDate },
}

fn io_err(path: &Path, source: std::io::Error) -> HistoryError {
    HistoryError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One scan's view: which addresses answered, and on which protocols when
/// the source recorded them.
#[derive(Clone, Debug)]
pub struct ScanSnapshot {
    date: NaiveDate,
    responsive: HashSet<Address>,
    per_protocol: HashMap<Address, BTreeSet<Protocol>>,
}

impl ScanSnapshot {
    pub fn new(date: NaiveDate, responsive: impl IntoIterator<Item = Address>) -> Self {
        ScanSnapshot {
            date,
            responsive: responsive.into_iter().collect(),
            per_protocol: HashMap::new(),
        }
    }

    /// Record that `a` answered on `protocol`; marks it responsive.
    pub fn add_response(&mut self, a: Address, protocol: Option<Protocol>) {
        self.responsive.insert(a);
        if let Some(p) = protocol {
            self.per_protocol.entry(a).or_default().insert(p);
        }
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn is_responsive(&self, a: Address) -> bool {
        self.responsive.contains(&a)
    }

    pub fn responsive(&self) -> &HashSet<Address> {
        &self.responsive
    }

    pub fn protocols(&self, a: Address) -> Option<&BTreeSet<Protocol>> {
        self.per_protocol.get(&a)
    }

    pub fn len(&self) -> usize {
        self.responsive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responsive.is_empty()
    }
}

/// A date-ordered series of snapshots plus the analysis date that closes
/// the final observation period.
#[derive(Clone, Debug)]
pub struct ScanHistory {
    snapshots: Vec<ScanSnapshot>,
    analysis_date: NaiveDate,
    skipped_rows: usize,
}

impl ScanHistory {
    /// Build a history; snapshots must be strictly date-ordered and the
    /// analysis date must not precede the last snapshot.
    pub fn new(
        snapshots: Vec<ScanSnapshot>,
        analysis_date: NaiveDate,
    ) -> Result<Self, HistoryError> {
        for pair in snapshots.windows(2) {
            if pair[0].date >= pair[1].date {
                return Err(HistoryError::SnapshotOrder {
                    prev: pair[0].date,
                    next: pair[1].date,
                });
            }
        }
        if let Some(last) = snapshots.last() {
            if analysis_date < last.date {
                return Err(HistoryError::AnalysisDateBeforeLast {
                    analysis: analysis_date,
                    last: last.date,
                });
            }
        }
        Ok(ScanHistory {
            snapshots,
            analysis_date,
            skipped_rows: 0,
        })
    }

    /// Same history with a different (later or equal) analysis date.
    pub fn with_analysis_date(self, analysis_date: NaiveDate) -> Result<Self, HistoryError> {
        let skipped = self.skipped_rows;
        let mut h = ScanHistory::new(self.snapshots, analysis_date)?;
        h.skipped_rows = skipped;
        Ok(h)
    }

    pub fn snapshots(&self) -> &[ScanSnapshot] {
        &self.snapshots
    }

    pub fn analysis_date(&self) -> NaiveDate {
        self.analysis_date
    }

    /// Rows skipped as malformed while loading, summed over all files.
    pub fn skipped_rows(&self) -> usize {
        self.skipped_rows
    }

    /// Every address responsive in at least one snapshot.
    pub fn ever_responsive(&self) -> HashSet<Address> {
        let mut out = HashSet::new();
        for s in &self.snapshots {
            out.extend(s.responsive.iter().copied());
        }
        out
    }
}

/// Load every `YYYY-MM-DD.csv` under `dir` into a history whose analysis
/// date is the newest snapshot's date. Files with other extensions are
/// ignored; a `.csv` whose stem is not a date is an error.
///
/// Malformed rows are skipped and counted, but a file where they reach 1%
/// is rejected outright: at that rate the input is the wrong format, not a
/// scan with stray noise.
pub fn load_history(dir: &Path) -> Result<ScanHistory, HistoryError> {
    let mut dated: Vec<(NaiveDate, std::path::PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| HistoryError::BadFileName {
                path: path.display().to_string(),
            })?;
        let date = NaiveDate::parse_from_str(stem, "%Y-%m-%d").map_err(|_| {
            HistoryError::BadFileName {
                path: path.display().to_string(),
            }
        })?;
        dated.push((date, path));
    }
    if dated.is_empty() {
        return Err(HistoryError::EmptyHistory {
            path: dir.display().to_string(),
        });
    }
    dated.sort();

    let mut snapshots = Vec::with_capacity(dated.len());
    let mut skipped_total = 0usize;
    for (date, path) in dated {
        let (snapshot, skipped) = load_snapshot(date, &path)?;
        skipped_total += skipped;
        snapshots.push(snapshot);
    }
    let analysis_date = snapshots.last().expect("non-empty").date;
    let mut history = ScanHistory::new(snapshots, analysis_date)?;
    history.skipped_rows = skipped_total;
    Ok(history)
}

fn load_snapshot(date: NaiveDate, path: &Path) -> Result<(ScanSnapshot, usize), HistoryError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut snapshot = ScanSnapshot::new(date, []);
    let mut total = 0usize;
    let mut malformed = 0usize;
    let mut first_bad = 0usize;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        total += 1;
        let (addr_part, proto_part) = match line.split_once(',') {
            Some((a, p)) => (a, Some(p)),
            None => (line.as_str(), None),
        };
        let parsed_addr = addr_part.trim().parse::<Address>();
        let parsed_proto = proto_part.map(|p| p.trim().parse::<Protocol>());
        match (parsed_addr, parsed_proto) {
            (Ok(a), None) => snapshot.add_response(a, None),
            (Ok(a), Some(Ok(p))) => snapshot.add_response(a, Some(p)),
            _ => {
                if malformed == 0 {
                    first_bad = idx + 1;
                }
                malformed += 1;
            }
        }
    }
    if malformed > 0 && malformed * 100 >= total {
        return Err(HistoryError::TooManyMalformed {
            path: path.display().to_string(),
            malformed,
            total,
            first_line: first_bad,
        });
    }
    Ok((snapshot, malformed))
}

/// Stability of one address across a history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressStability {
    pub first_seen: NaiveDate,
    /// Observed state transitions, counting the initial appearance as one.
    pub state_changes: u32,
    pub uptime_days: i64,
    pub downtime_days: i64,
}

/// Stability of `a`, or `None` if it never answered.
///
/// Each snapshot's up/down indicator holds until the next snapshot; the
/// last holds until the analysis date, so
/// `uptime_days + downtime_days == analysis_date - first_seen` exactly.
/// With `count_trailing_removal`, an address that is down at the end is
/// charged one change for the removal; without it, only transitions that
/// were followed by another observation count.
pub fn stability(
    history: &ScanHistory,
    a: Address,
    count_trailing_removal: bool,
) -> Option<AddressStability> {
    let snapshots = history.snapshots();
    let first = snapshots.iter().position(|s| s.is_responsive(a))?;
    let first_seen = snapshots[first].date;

    let mut state_changes = 1u32;
    let mut uptime_days = 0i64;
    let mut downtime_days = 0i64;
    let mut prev_up = true;
    let mut last_up = true;
    for (i, s) in snapshots.iter().enumerate().skip(first) {
        let up = s.is_responsive(a);
        if up != prev_up {
            state_changes += 1;
        }
        let end = snapshots
            .get(i + 1)
            .map_or(history.analysis_date(), |next| next.date);
        let days = (end - s.date).num_days();
        if up {
            uptime_days += days;
        } else {
            downtime_days += days;
        }
        prev_up = up;
        last_up = up;
    }
    if !count_trailing_removal && !last_up {
        state_changes -= 1;
    }
    Some(AddressStability {
        first_seen,
        state_changes,
        uptime_days,
        downtime_days,
    })
}

/// Whether `a` has been tracked long enough for stability statistics:
/// at least `window_days` between first appearance and the analysis date
/// (inclusive).
pub fn eligible(history: &ScanHistory, a: Address, window_days: i64) -> bool {
    match stability(history, a, true) {
        Some(st) => (history.analysis_date() - st.first_seen).num_days() >= window_days,
        None => false,
    }
}

/// Five-number summary (quartiles by linear interpolation).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    /// Summary of a non-empty sample. Sorts internally.
    pub fn of(values: &[f64]) -> Option<FiveNumber> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|x, y| x.partial_cmp(y).expect("no NaN in stability values"));
        let q = |p: f64| {
            let rank = p * (sorted.len() - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = rank.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
        };
        Some(FiveNumber {
            min: sorted[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Per-category stability statistics over eligible addresses.
#[derive(Clone, Debug)]
pub struct CategoryStability {
    pub eligible_count: usize,
    pub state_changes: FiveNumber,
    pub uptime_days: FiveNumber,
    pub downtime_days: FiveNumber,
}

#[derive(Default)]
struct StabilitySamples {
    changes: Vec<f64>,
    uptime: Vec<f64>,
    downtime: Vec<f64>,
}

/// Stability summaries per network category, covering every address that
/// was ever responsive and is old enough for the window. Categories with
/// no eligible address are omitted.
pub fn stability_by_category(
    history: &ScanHistory,
    table: &PrefixTable,
    categories: &CategoryMap,
    window_days: i64,
    count_trailing_removal: bool,
) -> BTreeMap<NetworkCategory, CategoryStability> {
    let mut samples: BTreeMap<NetworkCategory, StabilitySamples> = BTreeMap::new();
    for a in history.ever_responsive() {
        if !eligible(history, a, window_days) {
            continue;
        }
        let st = stability(history, a, count_trailing_removal).expect("ever responsive");
        let entry = samples.entry(categorize(a, table, categories)).or_default();
        entry.changes.push(f64::from(st.state_changes));
        entry.uptime.push(st.uptime_days as f64);
        entry.downtime.push(st.downtime_days as f64);
    }
    samples
        .into_iter()
        .map(|(cat, s)| {
            let stats = CategoryStability {
                eligible_count: s.changes.len(),
                state_changes: FiveNumber::of(&s.changes).expect("non-empty"),
                uptime_days: FiveNumber::of(&s.uptime).expect("non-empty"),
                downtime_days: FiveNumber::of(&s.downtime).expect("non-empty"),
            };
            (cat, stats)
        })
        .collect()
}

/// Write one row per eligible address, sorted by address:
/// `address,category,first_seen,state_changes,uptime_days,downtime_days`.
pub fn write_address_stability_csv(
    path: &Path,
    history: &ScanHistory,
    table: &PrefixTable,
    categories: &CategoryMap,
    window_days: i64,
    count_trailing_removal: bool,
) -> Result<(), HistoryError> {
    let mut addrs: Vec<Address> = history
        .ever_responsive()
        .into_iter()
        .filter(|&a| eligible(history, a, window_days))
        .collect();
    addrs.sort();

    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "address,category,first_seen,state_changes,uptime_days,downtime_days")
        .map_err(|e| io_err(path, e))?;
    for a in addrs {
        let st = stability(history, a, count_trailing_removal).expect("ever responsive");
        writeln!(
            w,
            "{a},{},{},{},{},{}",
            categorize(a, table, categories).label(),
            st.first_seen,
            st.state_changes,
            st.uptime_days,
            st.downtime_days
        )
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Write per-category stability summaries as CSV
/// (`category,eligible,metric,min,q1,median,q3,max`).
pub fn write_stability_csv(
    path: &Path,
    stats: &BTreeMap<NetworkCategory, CategoryStability>,
) -> Result<(), HistoryError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "category,eligible,metric,min,q1,median,q3,max").map_err(|e| io_err(path, e))?;
    for (cat, s) in stats {
        for (metric, f) in [
            ("state_changes", s.state_changes),
            ("uptime_days", s.uptime_days),
            ("downtime_days", s.downtime_days),
        ] {
            writeln!(
                w,
                "{},{},{metric},{},{},{},{},{}",
                cat.label(),
                s.eligible_count,
                f.min,
                f.q1,
                f.median,
                f.q3,
                f.max
            )
            .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}
