//! Evaluation metrics for candidate sets against scan results.
//!
//! Every metric is a pure function over immutable inputs; [`build_report`]
//! assembles them into one [`MetricsReport`] per (algorithm, seed-category)
//! cell. The aliased ratio is the one metric computed on *raw* (pre-filter)
//! candidates, because it measures how much of the generator's output the
//! alias filter discards; everything else evaluates the post-filter set
//! that was actually probed.
//!
//! Reports render to a machine-exact CSV (`metric,label,category,value`,
//! value round-trips through f64 formatting) and to a markdown table with
//! k/M-suffixed counts for eyeball comparison. [`compare_rows`] diffs a
//! computed report against an expected CSV and flags relative deviations
//! above a tolerance.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::addr::{Address, PrefixSet, Protocol};
use crate::asn::{CategoryMap, NetworkCategory, PrefixTable};
use crate::sim::ScanResult;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("seed set is empty; generation factor is undefined")]
    EmptySeed,
    #[error("{missing} candidate(s) missing from the probed set (first: {first})")]
    NotFullyProbed { missing: usize, first: Address },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedReport {
        path: String,
        line: usize,
        reason: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> MetricsError {
    MetricsError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// AS-level statistics of a candidate/responsive/seed triple. Addresses
/// without a covering announced prefix have no AS and are excluded from
/// the counts and shares.
#[derive(Clone, Debug, PartialEq)]
pub struct AsStats {
    pub candidate_ases: usize,
    pub responsive_ases: usize,
    /// |responsive ASes ∩ seed ASes| / |seed ASes|; 0 when no seed
    /// address resolves to an AS.
    pub seed_as_coverage: f64,
    pub newly_covered_ases: usize,
    /// Per-AS shares of responsive addresses, sorted descending and
    /// cumulatively summed; ends at 1 for non-empty resolvable input.
    pub cumulative_shares: Vec<f64>,
}

/// All evaluation metrics for one (algorithm, seed-category) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub algorithm: String,
    pub seed_label: String,
    pub candidate_count: u64,
    pub responsive_count: u64,
    pub generation_factor: f64,
    pub response_rate: f64,
    pub aliased_ratio: f64,
    pub category_distribution: BTreeMap<NetworkCategory, f64>,
    pub protocol_rates: BTreeMap<Protocol, f64>,
    pub as_stats: AsStats,
}

impl MetricsReport {
    pub fn label(&self) -> String {
        format!("{}/{}", self.algorithm, self.seed_label)
    }
}

/// responsive / candidates, defined as 0 for an empty candidate set.
pub fn relative_response_rate(responsive_count: u64, candidate_count: u64) -> f64 {
    if candidate_count == 0 {
        0.0
    } else {
        responsive_count as f64 / candidate_count as f64
    }
}

/// Candidate-set size relative to the distinct seed size.
pub fn generation_factor(candidates: &[Address], seed: &[Address]) -> Result<f64, MetricsError> {
    let seed_count = seed.iter().collect::<HashSet<_>>().len();
    if seed_count == 0 {
        return Err(MetricsError::EmptySeed);
    }
    Ok(candidates.len() as f64 / seed_count as f64)
}

/// Fraction of candidates that answered at least one protocol. Every
/// candidate must have been probed — a rate over a partially probed set
/// would silently understate responsiveness.
pub fn response_rate(candidates: &[Address], result: &ScanResult) -> Result<f64, MetricsError> {
    let mut missing = 0usize;
    let mut first = None;
    for a in candidates {
        if !result.probed.contains(a) {
            missing += 1;
            first.get_or_insert(*a);
        }
    }
    if let Some(first) = first {
        return Err(MetricsError::NotFullyProbed { missing, first });
    }
    let responsive = candidates
        .iter()
        .filter(|a| result.responses.contains_key(a))
        .count();
    Ok(relative_response_rate(
        responsive as u64,
        candidates.len() as u64,
    ))
}

/// Per-category shares of an address list; sums to 1 for non-empty input,
/// empty map for empty input.
pub fn category_distribution(
    addresses: &[Address],
    table: &PrefixTable,
    categories: &CategoryMap,
) -> BTreeMap<NetworkCategory, f64> {
    if addresses.is_empty() {
        return BTreeMap::new();
    }
    let mut counts: BTreeMap<NetworkCategory, u64> = BTreeMap::new();
    for &a in addresses {
        *counts
            .entry(crate::asn::categorize(a, table, categories))
            .or_insert(0) += 1;
    }
    let total = addresses.len() as f64;
    counts
        .into_iter()
        .map(|(c, n)| (c, n as f64 / total))
        .collect()
}

fn distinct_ases(addresses: &[Address], table: &PrefixTable) -> BTreeSet<u32> {
    addresses.iter().filter_map(|&a| table.lookup(a)).collect()
}

/// AS-level coverage and concentration statistics.
pub fn as_stats(
    candidates: &[Address],
    responsive: &[Address],
    seed: &[Address],
    table: &PrefixTable,
) -> AsStats {
    let candidate_ases = distinct_ases(candidates, table);
    let seed_ases = distinct_ases(seed, table);

    let mut per_as: BTreeMap<u32, u64> = BTreeMap::new();
    for &a in responsive {
        if let Some(asn) = table.lookup(a) {
            *per_as.entry(asn).or_insert(0) += 1;
        }
    }
    let responsive_ases: BTreeSet<u32> = per_as.keys().copied().collect();

    let covered = responsive_ases.intersection(&seed_ases).count();
    let seed_as_coverage = if seed_ases.is_empty() {
        0.0
    } else {
        covered as f64 / seed_ases.len() as f64
    };
    let newly_covered_ases = responsive_ases.difference(&seed_ases).count();

    let resolved_total: u64 = per_as.values().sum();
    let mut shares: Vec<f64> = per_as
        .values()
        .map(|&n| n as f64 / resolved_total as f64)
        .collect();
    shares.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut running = 0.0;
    let cumulative_shares = shares
        .into_iter()
        .map(|s| {
            running += s;
            running
        })
        .collect();

    AsStats {
        candidate_ases: candidate_ases.len(),
        responsive_ases: responsive_ases.len(),
        seed_as_coverage,
        newly_covered_ases,
        cumulative_shares,
    }
}

/// Fraction of raw (pre-filter) candidates that fall inside an aliased
/// prefix.
pub fn aliased_ratio(raw_candidates: &[Address], aliased: &PrefixSet) -> f64 {
    if raw_candidates.is_empty() {
        return 0.0;
    }
    let inside = raw_candidates.iter().filter(|&&a| aliased.covers(a)).count();
    inside as f64 / raw_candidates.len() as f64
}

/// Per-protocol response shares, normalized by the number of addresses
/// that answered at least one protocol. Every protocol appears in the
/// output, so rows are comparable across reports.
pub fn protocol_rates(responsive: &[Address], result: &ScanResult) -> BTreeMap<Protocol, f64> {
    let mut out: BTreeMap<Protocol, f64> = Protocol::ALL.iter().map(|&p| (p, 0.0)).collect();
    if responsive.is_empty() {
        return out;
    }
    let total = responsive.len() as f64;
    for p in Protocol::ALL {
        let count = responsive
            .iter()
            .filter(|a| result.responses.get(a).is_some_and(|set| set.contains(&p)))
            .count();
        out.insert(p, count as f64 / total);
    }
    out
}

/// Everything one report needs; `raw_candidates` is the generator output
/// before any filtering, `candidates` the set that was actually probed.
pub struct ReportInputs<'a> {
    pub algorithm: &'a str,
    pub seed_label: &'a str,
    pub raw_candidates: &'a [Address],
    pub candidates: &'a [Address],
    pub seed: &'a [Address],
    pub result: &'a ScanResult,
    pub table: &'a PrefixTable,
    pub categories: &'a CategoryMap,
    pub aliased: &'a PrefixSet,
}

/// Compute the full metric suite for one cell.
pub fn build_report(inputs: &ReportInputs) -> Result<MetricsReport, MetricsError> {
    let responsive: Vec<Address> = inputs
        .candidates
        .iter()
        .copied()
        .filter(|a| inputs.result.responses.contains_key(a))
        .collect();
    Ok(MetricsReport {
        algorithm: inputs.algorithm.to_string(),
        seed_label: inputs.seed_label.to_string(),
        candidate_count: inputs.candidates.len() as u64,
        responsive_count: responsive.len() as u64,
        generation_factor: generation_factor(inputs.candidates, inputs.seed)?,
        response_rate: response_rate(inputs.candidates, inputs.result)?,
        aliased_ratio: aliased_ratio(inputs.raw_candidates, inputs.aliased),
        category_distribution: category_distribution(&responsive, inputs.table, inputs.categories),
        protocol_rates: protocol_rates(&responsive, inputs.result),
        as_stats: as_stats(inputs.candidates, &responsive, inputs.seed, inputs.table),
    })
}

/// One flat report row, exactly as serialized to CSV. `category` is empty
/// for scalar metrics, a category label for `category_share`, a protocol
/// name for `protocol_rate`, and a 1-based rank for `cumulative_share`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub label: String,
    pub category: String,
    pub value: f64,
}

/// Scalar metrics in report order, with their markdown display names.
const SCALAR_METRICS: [(&str, &str); 9] = [
    ("candidates", "Number of candidate addresses"),
    ("generation_factor", "Generation factor"),
    ("responsive", "Number of responsive addresses"),
    ("response_rate", "Relative response rate"),
    ("aliased_ratio", "Aliased prefix ratio"),
    ("candidate_ases", "Candidate ASes"),
    ("responsive_ases", "Responsive ASes"),
    ("seed_as_coverage", "Coverage of seed ASes"),
    ("newly_covered_ases", "Number of newly covered ASes"),
];

fn scalar_value(report: &MetricsReport, metric: &str) -> f64 {
    match metric {
        "candidates" => report.candidate_count as f64,
        "generation_factor" => report.generation_factor,
        "responsive" => report.responsive_count as f64,
        "response_rate" => report.response_rate,
        "aliased_ratio" => report.aliased_ratio,
        "candidate_ases" => report.as_stats.candidate_ases as f64,
        "responsive_ases" => report.as_stats.responsive_ases as f64,
        "seed_as_coverage" => report.as_stats.seed_as_coverage,
        "newly_covered_ases" => report.as_stats.newly_covered_ases as f64,
        other => unreachable!("unknown scalar metric {other}"),
    }
}

/// Flatten reports into rows, ordered by metric (report order), then label
/// lexicographically, then category.
pub fn flatten_reports(reports: &[MetricsReport]) -> Vec<ReportRow> {
    let mut order: Vec<&MetricsReport> = reports.iter().collect();
    order.sort_by_key(|r| r.label());
    let mut rows = Vec::new();
    for (metric, _) in SCALAR_METRICS {
        for report in &order {
            rows.push(ReportRow {
                metric: metric.to_string(),
                label: report.label(),
                category: String::new(),
                value: scalar_value(report, metric),
            });
        }
    }
    for report in &order {
        for (&category, &share) in &report.category_distribution {
            rows.push(ReportRow {
                metric: "category_share".to_string(),
                label: report.label(),
                category: category.label().to_string(),
                value: share,
            });
        }
    }
    for report in &order {
        for (&protocol, &rate) in &report.protocol_rates {
            rows.push(ReportRow {
                metric: "protocol_rate".to_string(),
                label: report.label(),
                category: protocol.as_str().to_string(),
                value: rate,
            });
        }
    }
    for report in &order {
        for (rank, &share) in report.as_stats.cumulative_shares.iter().enumerate() {
            rows.push(ReportRow {
                metric: "cumulative_share".to_string(),
                label: report.label(),
                category: (rank + 1).to_string(),
                value: share,
            });
        }
    }
    rows
}

/// Write the machine-readable report CSV. Values print via f64 `Display`,
/// which round-trips exactly.
pub fn render_report_csv(reports: &[MetricsReport], path: &Path) -> Result<(), MetricsError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "metric,label,category,value").map_err(|e| io_err(path, e))?;
    for row in flatten_reports(reports) {
        writeln!(w, "{},{},{},{}", row.metric, row.label, row.category, row.value)
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Format a count the way the report tables print them: ≥10⁶ with an M
/// suffix, ≥10³ with k, both at two decimals, plain below that.
pub fn format_count(n: u64) -> String {
    if n >= 1_000_000 {
        format!("{:.2}M", n as f64 / 1e6)
    } else if n >= 1_000 {
        format!("{:.2}k", n as f64 / 1e3)
    } else {
        n.to_string()
    }
}

fn format_percent(share: f64) -> String {
    format!("{:.2}%", share * 100.0)
}

fn markdown_cell(report: &MetricsReport, metric: &str) -> String {
    match metric {
        "candidates" => format_count(report.candidate_count),
        "responsive" => format_count(report.responsive_count),
        "candidate_ases" => format_count(report.as_stats.candidate_ases as u64),
        "responsive_ases" => format_count(report.as_stats.responsive_ases as u64),
        "newly_covered_ases" => format_count(report.as_stats.newly_covered_ases as u64),
        "generation_factor" => format!("{:.2}", report.generation_factor),
        "response_rate" => format_percent(report.response_rate),
        "aliased_ratio" => format_percent(report.aliased_ratio),
        "seed_as_coverage" => format_percent(report.as_stats.seed_as_coverage),
        other => unreachable!("unknown scalar metric {other}"),
    }
}

/// Write the human-readable report: one row group per metric, one row per
/// seed category, one column per algorithm.
pub fn render_report_markdown(reports: &[MetricsReport], path: &Path) -> Result<(), MetricsError> {
    let mut algorithms: Vec<&str> = reports.iter().map(|r| r.algorithm.as_str()).collect();
    algorithms.sort_unstable();
    algorithms.dedup();
    let mut seeds: Vec<&str> = reports.iter().map(|r| r.seed_label.as_str()).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let by_cell: HashMap<(&str, &str), &MetricsReport> = reports
        .iter()
        .map(|r| ((r.algorithm.as_str(), r.seed_label.as_str()), r))
        .collect();

    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |line: String| writeln!(w, "{line}").map_err(|e| io_err(path, e));
    put("# Evaluation metrics".to_string())?;
    put(String::new())?;
    put(format!("| Metric | Seed | {} |", algorithms.join(" | ")))?;
    put(format!("| --- | --- |{}", " ---: |".repeat(algorithms.len())))?;
    for (metric, display) in SCALAR_METRICS {
        for (i, seed) in seeds.iter().enumerate() {
            let name = if i == 0 { display } else { "" };
            let cells: Vec<String> = algorithms
                .iter()
                .map(|alg| {
                    by_cell
                        .get(&(*alg, *seed))
                        .map_or_else(|| "–".to_string(), |r| markdown_cell(r, metric))
                })
                .collect();
            put(format!("| {name} | {seed} | {} |", cells.join(" | ")))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read raw report rows from a CSV produced by [`render_report_csv`] (or a
/// hand-written subset of one).
pub fn read_report_rows(path: &Path) -> Result<Vec<ReportRow>, MetricsError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .unwrap_or_default();
    if header.trim() != "metric,label,category,value" {
        return Err(MetricsError::MalformedReport {
            path: path.display().to_string(),
            line: 1,
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let malformed = |reason: String| MetricsError::MalformedReport {
            path: path.display().to_string(),
            line: idx + 2,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        let [metric, label, category, value] = fields[..] else {
            return Err(malformed(format!("expected 4 fields, got {}", fields.len())));
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| malformed(format!("bad value {value:?}: {e}")))?;
        rows.push(ReportRow {
            metric: metric.to_string(),
            label: label.to_string(),
            category: category.to_string(),
            value,
        });
    }
    Ok(rows)
}

/// Reconstruct full reports from a report CSV. Labels split at the first
/// `/` into algorithm and seed category.
pub fn parse_report_csv(path: &Path) -> Result<Vec<MetricsReport>, MetricsError> {
    let rows = read_report_rows(path)?;
    let mut labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();

    let mut reports = Vec::new();
    for label in labels {
        let (algorithm, seed_label) = label.split_once('/').unwrap_or((label, ""));
        let mut report = MetricsReport {
            algorithm: algorithm.to_string(),
            seed_label: seed_label.to_string(),
            candidate_count: 0,
            responsive_count: 0,
            generation_factor: 0.0,
            response_rate: 0.0,
            aliased_ratio: 0.0,
            category_distribution: BTreeMap::new(),
            protocol_rates: BTreeMap::new(),
            as_stats: AsStats {
                candidate_ases: 0,
                responsive_ases: 0,
                seed_as_coverage: 0.0,
                newly_covered_ases: 0,
                cumulative_shares: Vec::new(),
            },
        };
        let mut cumulative: Vec<(usize, f64)> = Vec::new();
        for row in rows.iter().filter(|r| r.label == label) {
            match row.metric.as_str() {
                "candidates" => report.candidate_count = row.value as u64,
                "responsive" => report.responsive_count = row.value as u64,
                "generation_factor" => report.generation_factor = row.value,
                "response_rate" => report.response_rate = row.value,
                "aliased_ratio" => report.aliased_ratio = row.value,
                "candidate_ases" => report.as_stats.candidate_ases = row.value as usize,
                "responsive_ases" => report.as_stats.responsive_ases = row.value as usize,
                "seed_as_coverage" => report.as_stats.seed_as_coverage = row.value,
                "newly_covered_ases" => report.as_stats.newly_covered_ases = row.value as usize,
                "category_share" => {
                    let category = NetworkCategory::ALL
                        .into_iter()
                        .find(|c| c.label() == row.category)
                        .ok_or_else(|| MetricsError::MalformedReport {
                            path: path.display().to_string(),
                            line: 0,
                            reason: format!("unknown category {:?}", row.category),
                        })?;
                    report.category_distribution.insert(category, row.value);
                }
                "protocol_rate" => {
                    let protocol: Protocol =
                        row.category
                            .parse()
                            .map_err(|_| MetricsError::MalformedReport {
                                path: path.display().to_string(),
                                line: 0,
                                reason: format!("unknown protocol {:?}", row.category),
                            })?;
                    report.protocol_rates.insert(protocol, row.value);
                }
                "cumulative_share" => {
                    let rank: usize =
                        row.category
                            .parse()
                            .map_err(|_| MetricsError::MalformedReport {
                                path: path.display().to_string(),
                                line: 0,
                                reason: format!("bad cumulative rank {:?}", row.category),
                            })?;
                    cumulative.push((rank, row.value));
                }
                other => {
                    return Err(MetricsError::MalformedReport {
                        path: path.display().to_string(),
                        line: 0,
                        reason: format!("unknown metric {other:?}"),
                    })
                }
            }
        }
        cumulative.sort_by_key(|&(rank, _)| rank);
        report.as_stats.cumulative_shares = cumulative.into_iter().map(|(_, v)| v).collect();
        reports.push(report);
    }
    Ok(reports)
}

/// One metric whose computed value strays from its expected value.
#[derive(Clone, Debug)]
pub struct Deviation {
    pub metric: String,
    pub label: String,
    pub category: String,
    pub expected: f64,
    /// NaN when the expected row has no computed counterpart.
    pub actual: f64,
    /// |actual − expected| / |expected|; infinite when expected is 0 and
    /// actual is not.
    pub relative: f64,
}

/// Compare computed rows against expected rows; every expected row must
/// exist and lie within `tolerance` relative deviation. Rows the expected
/// file does not mention are not checked, so partial expectations work.
pub fn compare_rows(actual: &[ReportRow], expected: &[ReportRow], tolerance: f64) -> Vec<Deviation> {
    let by_key: HashMap<(&str, &str, &str), f64> = actual
        .iter()
        .map(|r| ((r.metric.as_str(), r.label.as_str(), r.category.as_str()), r.value))
        .collect();
    let mut out = Vec::new();
    for row in expected {
        let key = (row.metric.as_str(), row.label.as_str(), row.category.as_str());
        let deviation = match by_key.get(&key) {
            None => Deviation {
                metric: row.metric.clone(),
                label: row.label.clone(),
                category: row.category.clone(),
                expected: row.value,
                actual: f64::NAN,
                relative: f64::INFINITY,
            },
            Some(&actual_value) => {
                let relative = if row.value == 0.0 {
                    if actual_value == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (actual_value - row.value).abs() / row.value.abs()
                };
                Deviation {
                    metric: row.metric.clone(),
                    label: row.label.clone(),
                    category: row.category.clone(),
                    expected: row.value,
                    actual: actual_value,
                    relative,
                }
            }
        };
        if deviation.relative > tolerance {
            out.push(deviation);
        }
    }
    out
}
