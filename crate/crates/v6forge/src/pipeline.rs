//! End-to-end evaluation pipeline: seed → generate → blocklist → alias
//! detection → scan → GFW/DNS-only filtering → metrics.
//!
//! A [`PipelineConfig`] (TOML, loaded relative to its own directory) names
//! the inputs and the (algorithm × seed-category) grid to run. Each cell
//! executes independently — a failing cell is recorded in the manifest and
//! never blocks or corrupts the others — and cells run concurrently up to
//! the configured job bound. All randomness inside a cell derives from
//! `(rng_seed, algorithm, category)`, and every output is written in
//! sorted order, so identical configs reproduce byte-identical artifacts.
//!
//! Artifacts per cell, under `out_dir/<algorithm>/<category>/`:
//! `candidates.txt` + `candidates.meta` (generator output), `after_blocklist.txt`,
//! `aliased.txt` (prefixes the alias filter removed), `filtered.txt` (the
//! probed target list), `scan.csv`/`scan.probed` (simulated scans only),
//! and `responsive.txt` (responders after GFW and DNS-only filtering).
//! At the top level: `manifest.csv` (stage counts), `report.csv`, and
//! `report.md`. When several algorithms run, their per-category unions are
//! evaluated once more under the pseudo-algorithm name `combined`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::addr::{
    read_address_list, read_prefix_list, write_address_list, write_prefix_list, Address, Prefix,
    PrefixSet, Protocol,
};
use crate::asn::{self, CategoryMap, NetworkCategory, PrefixTable};
use crate::filters::{
    apply_blocklist, apply_gfw_filter, detect_aliased, dns_only_filter, filter_aliased,
    load_dns_responses, Blocklist, DnsResponse,
};
use crate::metrics::{self, MetricsReport, ReportInputs};
use crate::seed;
use crate::sim::{self, GroundTruth, ScanResult};
use crate::tga::{
    dense_generate, dense_meta, entropy_generate, entropy_meta, write_meta, CandidateSet,
    DenseParams, EntropyParams,
};

pub const DEFAULT_BUDGET: usize = 100_000;
pub const DEFAULT_PROBES_PER_LEVEL: u32 = 16;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid pipeline config:\n{0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Addr(#[from] crate::addr::AddrError),
    #[error(transparent)]
    Asn(#[from] crate::asn::AsnError),
    #[error(transparent)]
    Filter(#[from] crate::filters::FilterError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Target-generation algorithms the pipeline can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Dense,
    Entropy,
}

impl Algorithm {
    pub fn from_token(token: &str) -> Option<Algorithm> {
        match token {
            "dense" => Some(Algorithm::Dense),
            "entropy" => Some(Algorithm::Entropy),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dense => "dense",
            Algorithm::Entropy => "entropy",
        }
    }
}

/// A seed split: one network category, or the whole seed set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedCategory {
    Full,
    Category(NetworkCategory),
}

impl SeedCategory {
    pub fn from_token(token: &str) -> Option<SeedCategory> {
        if token.eq_ignore_ascii_case("full") {
            Some(SeedCategory::Full)
        } else {
            NetworkCategory::from_token(token).map(SeedCategory::Category)
        }
    }

    /// Directory and manifest name.
    pub fn slug(self) -> &'static str {
        match self {
            SeedCategory::Full => "full",
            SeedCategory::Category(c) => c.slug(),
        }
    }

    /// Report label (the seed half of `algorithm/seed`).
    pub fn label(self) -> &'static str {
        match self {
            SeedCategory::Full => "Full",
            SeedCategory::Category(c) => c.label(),
        }
    }
}

/// Where scan results come from: the deterministic simulator, or a
/// previously captured scanner output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScanSource {
    Simulate(PathBuf),
    Import(PathBuf),
}

/// Fully resolved pipeline configuration. Paths are absolute or relative
/// to the process working directory; [`load_config`] resolves them against
/// the config file's own directory.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub seed_file: PathBuf,
    pub rib_file: PathBuf,
    pub category_file: PathBuf,
    pub blocklist_file: Option<PathBuf>,
    pub known_aliased_file: Option<PathBuf>,
    pub injection_prefix_file: Option<PathBuf>,
    pub dns_responses_file: Option<PathBuf>,
    pub algorithms: Vec<String>,
    pub categories: Vec<String>,
    pub budget: usize,
    pub rng_seed: u64,
    pub leaf_max: usize,
    pub segment_threshold: f64,
    pub probes_per_level: u32,
    pub scan_source: ScanSource,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    inputs: RawInputs,
    run: RawRun,
    scan: RawScan,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputs {
    seed_file: String,
    rib_file: String,
    category_file: String,
    blocklist_file: Option<String>,
    known_aliased_file: Option<String>,
    injection_prefix_file: Option<String>,
    dns_responses_file: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    algorithms: Vec<String>,
    categories: Vec<String>,
    budget: Option<usize>,
    rng_seed: u64,
    out_dir: String,
    jobs: Option<usize>,
    leaf_max: Option<usize>,
    segment_threshold: Option<f64>,
    probes_per_level: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    source: String,
    path: String,
}

impl PipelineConfig {
    /// Parse a config; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let raw: RawPipeline = toml::from_str(text).map_err(|e| PipelineError::Parse {
            path: "<config>".to_string(),
            message: e.to_string(),
        })?;
        let resolve = |p: String| -> PathBuf {
            let path = PathBuf::from(p);
            if path.is_absolute() {
                path
            } else {
                base_dir.join(path)
            }
        };
        let scan_path = resolve(raw.scan.path);
        let scan_source = match raw.scan.source.as_str() {
            "simulate" => ScanSource::Simulate(scan_path),
            "import" => ScanSource::Import(scan_path),
            other => {
                return Err(PipelineError::Parse {
                    path: "<config>".to_string(),
                    message: format!("scan.source must be simulate or import, got {other:?}"),
                })
            }
        };
        Ok(PipelineConfig {
            seed_file: resolve(raw.inputs.seed_file),
            rib_file: resolve(raw.inputs.rib_file),
            category_file: resolve(raw.inputs.category_file),
            blocklist_file: raw.inputs.blocklist_file.map(&resolve),
            known_aliased_file: raw.inputs.known_aliased_file.map(&resolve),
            injection_prefix_file: raw.inputs.injection_prefix_file.map(&resolve),
            dns_responses_file: raw.inputs.dns_responses_file.map(&resolve),
            algorithms: raw.run.algorithms,
            categories: raw.run.categories,
            budget: raw.run.budget.unwrap_or(DEFAULT_BUDGET),
            rng_seed: raw.run.rng_seed,
            leaf_max: raw.run.leaf_max.unwrap_or_else(|| DenseParams::default().leaf_max),
            segment_threshold: raw
                .run
                .segment_threshold
                .unwrap_or_else(|| EntropyParams::default().segment_threshold),
            probes_per_level: raw.run.probes_per_level.unwrap_or(DEFAULT_PROBES_PER_LEVEL),
            scan_source,
            out_dir: resolve(raw.run.out_dir),
            jobs: raw.run.jobs.unwrap_or(0),
        })
    }
}

/// Load a pipeline config file; relative paths inside it resolve against
/// the file's directory, so configs stay portable.
pub fn load_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    PipelineConfig::from_toml(&text, base).map_err(|e| match e {
        PipelineError::Parse { message, .. } => PipelineError::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

/// One config violation, naming the field it concerns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Check a parsed config for everything that would make a run fail early:
/// missing files, bad budget, unknown algorithm or category names. Pure —
/// no side effects, all violations reported at once.
pub fn validate_config(cfg: &PipelineConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut finding = |field: &str, message: String| {
        findings.push(Finding {
            field: field.to_string(),
            message,
        })
    };
    let mut need_file = |field: &str, path: &Path| {
        if !path.is_file() {
            finding(field, format!("file {} does not exist", path.display()));
        }
    };
    need_file("inputs.seed_file", &cfg.seed_file);
    need_file("inputs.rib_file", &cfg.rib_file);
    need_file("inputs.category_file", &cfg.category_file);
    for (field, path) in [
        ("inputs.blocklist_file", &cfg.blocklist_file),
        ("inputs.known_aliased_file", &cfg.known_aliased_file),
        ("inputs.injection_prefix_file", &cfg.injection_prefix_file),
        ("inputs.dns_responses_file", &cfg.dns_responses_file),
    ] {
        if let Some(path) = path {
            need_file(field, path);
        }
    }
    match &cfg.scan_source {
        ScanSource::Simulate(path) => need_file("scan.path", path),
        ScanSource::Import(path) => need_file("scan.path", path),
    }

    if cfg.budget == 0 {
        finding("run.budget", "budget must be positive".to_string());
    }
    if cfg.algorithms.is_empty() {
        finding("run.algorithms", "at least one algorithm required".to_string());
    }
    for name in &cfg.algorithms {
        if Algorithm::from_token(name).is_none() {
            finding("run.algorithms", format!("unknown algorithm {name:?}"));
        }
    }
    if cfg.categories.is_empty() {
        finding("run.categories", "at least one category required".to_string());
    }
    for name in &cfg.categories {
        if SeedCategory::from_token(name).is_none() {
            finding("run.categories", format!("unknown category {name:?}"));
        }
    }
    if cfg.probes_per_level == 0 || cfg.probes_per_level > 16 {
        finding(
            "run.probes_per_level",
            format!("must be in 1..=16, got {}", cfg.probes_per_level),
        );
    }
    findings
}

/// Per-cell status as recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Skipped,
    Failed,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Skipped => "skipped",
            CellStatus::Failed => "failed",
        }
    }
}

/// Stage counts and outcome of one (algorithm × category) cell.
#[derive(Clone, Debug)]
pub struct CellRecord {
    pub algorithm: Algorithm,
    pub category: SeedCategory,
    pub status: CellStatus,
    pub seed_count: usize,
    pub candidates: Option<usize>,
    pub after_blocklist: Option<usize>,
    pub after_alias_filter: Option<usize>,
    pub responsive: Option<usize>,
    pub after_gfw: Option<usize>,
    pub responsive_final: Option<usize>,
    pub error: Option<String>,
    pub report: Option<MetricsReport>,
}

impl CellRecord {
    fn empty(algorithm: Algorithm, category: SeedCategory, seed_count: usize) -> Self {
        CellRecord {
            algorithm,
            category,
            status: CellStatus::Skipped,
            seed_count,
            candidates: None,
            after_blocklist: None,
            after_alias_filter: None,
            responsive: None,
            after_gfw: None,
            responsive_final: None,
            error: None,
            report: None,
        }
    }
}

/// Result of a whole pipeline run.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub cells: Vec<CellRecord>,
    pub warnings: Vec<String>,
    pub manifest_path: PathBuf,
    pub report_csv_path: PathBuf,
    pub report_md_path: PathBuf,
}

impl PipelineOutcome {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.status == CellStatus::Failed)
    }
}

/// Immutable inputs shared by every cell.
struct Shared {
    seed_by_category: BTreeMap<&'static str, Vec<Address>>,
    table: PrefixTable,
    categories: CategoryMap,
    blocklist: Option<Blocklist>,
    known_aliased: PrefixSet,
    injection_prefixes: PrefixSet,
    dns_responses: Vec<DnsResponse>,
    scan: ScanContext,
    probes_per_level: u32,
}

enum ScanContext {
    Simulate(GroundTruth),
    Import(ScanResult),
}

/// Everything a successful cell hands to the combined evaluation.
struct CellData {
    raw_candidates: Vec<Address>,
    filtered: Vec<Address>,
    aliased: PrefixSet,
    result: ScanResult,
}

fn cell_dir(cfg: &PipelineConfig, algorithm: Algorithm, category: SeedCategory) -> PathBuf {
    cfg.out_dir.join(algorithm.as_str()).join(category.slug())
}

fn distinct_slash64s(addrs: &[Address]) -> Vec<Prefix> {
    let mut out: BTreeSet<Prefix> = BTreeSet::new();
    for &a in addrs {
        out.insert(Prefix::new(a, 64).expect("64 is a valid prefix length"));
    }
    out.into_iter().collect()
}

fn run_cell(
    cfg: &PipelineConfig,
    shared: &Shared,
    algorithm: Algorithm,
    category: SeedCategory,
) -> (CellRecord, Option<CellData>) {
    let seed_addrs = shared
        .seed_by_category
        .get(category.slug())
        .map(Vec::as_slice)
        .unwrap_or(&[]);
    let mut record = CellRecord::empty(algorithm, category, seed_addrs.len());
    if seed_addrs.is_empty() {
        return (record, None);
    }
    match run_cell_inner(cfg, shared, algorithm, category, seed_addrs, &mut record) {
        Ok(data) => {
            record.status = CellStatus::Ok;
            (record, Some(data))
        }
        Err(message) => {
            record.status = CellStatus::Failed;
            record.error = Some(message);
            (record, None)
        }
    }
}

fn run_cell_inner(
    cfg: &PipelineConfig,
    shared: &Shared,
    algorithm: Algorithm,
    category: SeedCategory,
    seed_addrs: &[Address],
    record: &mut CellRecord,
) -> Result<CellData, String> {
    let dir = cell_dir(cfg, algorithm, category);
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let err = |e: &dyn std::fmt::Display| e.to_string();

    // all randomness in this cell flows from (rng_seed, algorithm, category)
    let cell_seed = seed::derive(
        cfg.rng_seed,
        &[
            seed::salt_str(algorithm.as_str()),
            seed::salt_str(category.slug()),
        ],
    );

    let candidate_set: CandidateSet = match algorithm {
        Algorithm::Dense => {
            let params = DenseParams {
                budget: cfg.budget,
                leaf_max: cfg.leaf_max,
                rng_seed: cell_seed,
            };
            let (set, regions) =
                dense_generate(seed_addrs, &params, category.label()).map_err(|e| err(&e))?;
            let meta = dense_meta(&set, &params, seed_addrs.len(), &regions);
            write_meta(&dir.join("candidates.meta"), &meta).map_err(|e| err(&e))?;
            set
        }
        Algorithm::Entropy => {
            let params = EntropyParams {
                budget: cfg.budget,
                segment_threshold: cfg.segment_threshold,
                rng_seed: cell_seed,
            };
            let (set, model) =
                entropy_generate(seed_addrs, &params, category.label()).map_err(|e| err(&e))?;
            let meta = entropy_meta(&set, &params, seed_addrs.len(), &model);
            write_meta(&dir.join("candidates.meta"), &meta).map_err(|e| err(&e))?;
            set
        }
    };
    let raw_candidates: Vec<Address> = candidate_set.addresses.iter().copied().collect();
    record.candidates = Some(raw_candidates.len());
    write_address_list(&dir.join("candidates.txt"), &raw_candidates).map_err(|e| err(&e))?;

    let after_blocklist = match &shared.blocklist {
        Some(blocklist) => apply_blocklist(&raw_candidates, blocklist),
        None => raw_candidates.clone(),
    };
    record.after_blocklist = Some(after_blocklist.len());
    write_address_list(&dir.join("after_blocklist.txt"), &after_blocklist)
        .map_err(|e| err(&e))?;

    // alias detection probes each candidate /64 against the live oracle;
    // imported scans have no oracle, so only known-aliased prefixes apply
    let verdicts = match &shared.scan {
        ScanContext::Simulate(gt) => {
            let prefixes = distinct_slash64s(&after_blocklist);
            detect_aliased(gt, &prefixes, shared.probes_per_level, cell_seed)
                .map_err(|e| err(&e))?
        }
        ScanContext::Import(_) => Vec::new(),
    };
    let filtered = filter_aliased(&after_blocklist, &verdicts, &shared.known_aliased);
    record.after_alias_filter = Some(filtered.len());
    write_address_list(&dir.join("filtered.txt"), &filtered).map_err(|e| err(&e))?;

    let mut aliased = shared.known_aliased.clone();
    for v in &verdicts {
        if v.aliased {
            aliased.insert(v.prefix);
        }
    }
    let mut aliased_list: Vec<Prefix> = aliased.iter().collect();
    aliased_list.sort();
    write_prefix_list(&dir.join("aliased.txt"), &aliased_list).map_err(|e| err(&e))?;

    let scan_result = match &shared.scan {
        ScanContext::Simulate(gt) => {
            let result = sim::scan(gt, &filtered, &Protocol::ALL);
            sim::export_scan(&result, &dir.join("scan.csv")).map_err(|e| err(&e))?;
            result
        }
        ScanContext::Import(imported) => {
            if let Some(missing) = filtered.iter().find(|a| !imported.probed.contains(a)) {
                return Err(format!(
                    "imported scan never probed candidate {missing}; \
                     re-run the scan over this candidate set"
                ));
            }
            let responses: HashMap<Address, BTreeSet<Protocol>> = filtered
                .iter()
                .filter_map(|a| imported.responses.get(a).map(|set| (*a, set.clone())))
                .collect();
            ScanResult {
                probed: filtered.iter().copied().collect(),
                responses,
            }
        }
    };
    record.responsive = Some(scan_result.responses.len());

    let mut responses = scan_result.responses.clone();
    apply_gfw_filter(
        &mut responses,
        &shared.dns_responses,
        &shared.injection_prefixes,
    );
    record.after_gfw = Some(responses.len());
    let kept = dns_only_filter(&responses);
    record.responsive_final = Some(kept.len());
    write_address_list(&dir.join("responsive.txt"), &kept).map_err(|e| err(&e))?;

    let final_responses: HashMap<Address, BTreeSet<Protocol>> = kept
        .iter()
        .map(|a| (*a, responses[a].clone()))
        .collect();
    let final_result = ScanResult {
        probed: scan_result.probed.clone(),
        responses: final_responses,
    };
    let report = metrics::build_report(&ReportInputs {
        algorithm: algorithm.as_str(),
        seed_label: category.label(),
        raw_candidates: &raw_candidates,
        candidates: &filtered,
        seed: seed_addrs,
        result: &final_result,
        table: &shared.table,
        categories: &shared.categories,
        aliased: &aliased,
    })
    .map_err(|e| err(&e))?;
    record.report = Some(report);

    Ok(CellData {
        raw_candidates,
        filtered,
        aliased,
        result: final_result,
    })
}

/// Evaluate the deduplicated union of all algorithms' outputs for one
/// category under the pseudo-algorithm name `combined`.
fn combined_report(
    category: SeedCategory,
    seed_addrs: &[Address],
    cells: &[&CellData],
    shared: &Shared,
) -> Result<MetricsReport, String> {
    let mut raw: BTreeSet<Address> = BTreeSet::new();
    let mut filtered: BTreeSet<Address> = BTreeSet::new();
    let mut aliased = PrefixSet::default();
    let mut result = ScanResult::default();
    for data in cells {
        raw.extend(data.raw_candidates.iter().copied());
        filtered.extend(data.filtered.iter().copied());
        for p in data.aliased.iter() {
            aliased.insert(p);
        }
        result.probed.extend(data.result.probed.iter().copied());
        for (&a, set) in &data.result.responses {
            result.responses.entry(a).or_insert_with(|| set.clone());
        }
    }
    let raw: Vec<Address> = raw.into_iter().collect();
    let filtered: Vec<Address> = filtered.into_iter().collect();
    metrics::build_report(&ReportInputs {
        algorithm: "combined",
        seed_label: category.label(),
        raw_candidates: &raw,
        candidates: &filtered,
        seed: seed_addrs,
        result: &result,
        table: &shared.table,
        categories: &shared.categories,
        aliased: &aliased,
    })
    .map_err(|e| e.to_string())
}

fn write_manifest(path: &Path, cells: &[CellRecord]) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "algorithm,category,status,seed_count,candidates,after_blocklist,\
         after_alias_filter,responsive,after_gfw,responsive_final,error"
    )
    .map_err(|e| io_err(path, e))?;
    let count = |v: &Option<usize>| v.map_or(String::new(), |n| n.to_string());
    for cell in cells {
        let error = cell
            .error
            .as_deref()
            .unwrap_or("")
            .replace([',', '\n'], ";");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            cell.algorithm.as_str(),
            cell.category.slug(),
            cell.status.as_str(),
            cell.seed_count,
            count(&cell.candidates),
            count(&cell.after_blocklist),
            count(&cell.after_alias_filter),
            count(&cell.responsive),
            count(&cell.after_gfw),
            count(&cell.responsive_final),
            error,
        )
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Run the full pipeline. Validation failures abort before any output;
/// per-cell failures are isolated and recorded. Returns the outcome with
/// every cell's stage counts, never failing the run for a failed cell.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let findings = validate_config(cfg);
    if !findings.is_empty() {
        let listing: Vec<String> = findings.iter().map(|f| format!("  {f}")).collect();
        return Err(PipelineError::ConfigInvalid(listing.join("\n")));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    let manifest_path = cfg.out_dir.join("manifest.csv");
    let report_csv_path = cfg.out_dir.join("report.csv");
    let report_md_path = cfg.out_dir.join("report.md");
    let mut warnings = Vec::new();

    let seed_raw = read_address_list(&cfg.seed_file)?;
    let seed_all: Vec<Address> = seed_raw
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if seed_all.is_empty() {
        warnings.push(format!(
            "seed file {} is empty; nothing to generate",
            cfg.seed_file.display()
        ));
        write_manifest(&manifest_path, &[])?;
        metrics::render_report_csv(&[], &report_csv_path)?;
        metrics::render_report_markdown(&[], &report_md_path)?;
        return Ok(PipelineOutcome {
            cells: Vec::new(),
            warnings,
            manifest_path,
            report_csv_path,
            report_md_path,
        });
    }

    let table = asn::load_rib(&cfg.rib_file)?;
    let categories = asn::load_categories(&cfg.category_file)?;
    let blocklist = cfg
        .blocklist_file
        .as_deref()
        .map(Blocklist::from_file)
        .transpose()?;
    let known_aliased = match cfg.known_aliased_file.as_deref() {
        Some(path) => PrefixSet::new(read_prefix_list(path)?),
        None => PrefixSet::default(),
    };
    let injection_prefixes = match cfg.injection_prefix_file.as_deref() {
        Some(path) => PrefixSet::new(read_prefix_list(path)?),
        None => crate::filters::default_injection_prefixes(),
    };
    let dns_responses = match cfg.dns_responses_file.as_deref() {
        Some(path) => load_dns_responses(path)?,
        None => Vec::new(),
    };
    let scan = match &cfg.scan_source {
        ScanSource::Simulate(path) => {
            let population = sim::PopulationConfig::from_file(path)?;
            ScanContext::Simulate(sim::build_population(&population)?)
        }
        ScanSource::Import(path) => ScanContext::Import(sim::import_scan(path)?),
    };

    // split once; every cell reads its slice immutably
    let mut split = asn::split_by_category(&seed_all, &table, &categories);
    let mut seed_by_category: BTreeMap<&'static str, Vec<Address>> = BTreeMap::new();
    let requested: Vec<SeedCategory> = cfg
        .categories
        .iter()
        .map(|name| SeedCategory::from_token(name).expect("validated above"))
        .collect();
    for &category in &requested {
        let addrs = match category {
            SeedCategory::Full => seed_all.clone(),
            SeedCategory::Category(c) => split.remove(&c).unwrap_or_default(),
        };
        seed_by_category.insert(category.slug(), addrs);
    }
    let algorithms: Vec<Algorithm> = cfg
        .algorithms
        .iter()
        .map(|name| Algorithm::from_token(name).expect("validated above"))
        .collect();

    let shared = Shared {
        seed_by_category,
        table,
        categories,
        blocklist,
        known_aliased,
        injection_prefixes,
        dns_responses,
        scan,
        probes_per_level: cfg.probes_per_level,
    };

    let grid: Vec<(Algorithm, SeedCategory)> = algorithms
        .iter()
        .flat_map(|&a| requested.iter().map(move |&c| (a, c)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    let executed: Vec<(CellRecord, Option<CellData>)> = pool.install(|| {
        grid.par_iter()
            .map(|&(algorithm, category)| run_cell(cfg, &shared, algorithm, category))
            .collect()
    });

    let mut cells = Vec::with_capacity(executed.len());
    let mut data_by_category: BTreeMap<&'static str, Vec<&CellData>> = BTreeMap::new();
    let mut reports: Vec<MetricsReport> = Vec::new();
    for (record, data) in &executed {
        if record.status == CellStatus::Skipped {
            warnings.push(format!(
                "cell {}/{} skipped: no seed addresses in category",
                record.algorithm.as_str(),
                record.category.slug()
            ));
        }
        if let Some(report) = &record.report {
            reports.push(report.clone());
        }
        if let Some(data) = data {
            data_by_category
                .entry(record.category.slug())
                .or_default()
                .push(data);
        }
        cells.push(record.clone());
    }

    if algorithms.len() >= 2 {
        for &category in &requested {
            let Some(parts) = data_by_category.get(category.slug()) else {
                continue;
            };
            if parts.len() < 2 {
                continue;
            }
            let seed_addrs = &shared.seed_by_category[category.slug()];
            match combined_report(category, seed_addrs, parts, &shared) {
                Ok(report) => reports.push(report),
                Err(message) => warnings.push(format!(
                    "combined evaluation for {} failed: {message}",
                    category.slug()
                )),
            }
        }
    }

    write_manifest(&manifest_path, &cells)?;
    metrics::render_report_csv(&reports, &report_csv_path)?;
    metrics::render_report_markdown(&reports, &report_md_path)?;

    Ok(PipelineOutcome {
        cells,
        warnings,
        manifest_path,
        report_csv_path,
        report_md_path,
    })
}
