//! Command-line front-end. Every subcommand is a thin wrapper over the
//! library: parse flags, call one library entry point, write files, and
//! log key=value progress lines to stderr (data goes only to files).
//!
//! Exit codes: 0 success (warnings allowed), 1 invalid config or input,
//! 2 when at least one pipeline cell failed or an expected-value check
//! found deviations.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use v6forge::addr::{read_address_list, read_prefix_list, write_address_list, Protocol};
use v6forge::asn;
use v6forge::filters;
use v6forge::history;
use v6forge::metrics;
use v6forge::pipeline;
use v6forge::sim;
use v6forge::tga;
use v6forge::{Address, PrefixSet};

#[derive(Parser)]
#[command(
    name = "v6forge",
    version,
    about = "IPv6 hitlist categorization, stability analysis, and \
             target-generation evaluation"
)]
struct Cli {
    /// Pipeline config file (used by `pipeline` and `validate`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker thread bound for parallel stages; 0 means one per core
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Base seed for every derived random stream
    #[arg(long, global = true, default_value_t = 0)]
    rng_seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an address list by network category and summarize shares
    Categorize {
        /// RIB dump CSV (prefix,asn)
        #[arg(long)]
        rib: PathBuf,
        /// Category registry CSV (asn,label)
        #[arg(long)]
        categories: PathBuf,
        /// Address list to categorize
        #[arg(long)]
        input: PathBuf,
        /// Directory for per-category lists and summary.csv
        #[arg(long)]
        out_dir: PathBuf,
    },

    /// Compute per-address stability over a directory of dated snapshots
    Stability {
        /// Directory of YYYY-MM-DD.csv snapshot files
        #[arg(long)]
        history: PathBuf,
        /// Analysis date (YYYY-MM-DD); defaults to the last snapshot date
        #[arg(long)]
        analysis_date: Option<chrono::NaiveDate>,
        /// Eligibility window in days before the analysis date
        #[arg(long, default_value_t = history::DEFAULT_ELIGIBILITY_WINDOW_DAYS)]
        window: i64,
        /// Count an address's disappearance after its last snapshot as a
        /// state change
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        count_trailing_removal: bool,
        /// Optional RIB for the category column
        #[arg(long)]
        rib: Option<PathBuf>,
        /// Optional category registry for the category column
        #[arg(long)]
        categories: Option<PathBuf>,
        /// Per-address stability CSV
        #[arg(long)]
        out: PathBuf,
        /// Optional per-category five-number summary CSV
        #[arg(long)]
        summary: Option<PathBuf>,
    },

    /// Filter an address list through blocklist, alias, and GFW stages
    Filter {
        /// Blocklist prefix file; matching addresses are dropped
        #[arg(long)]
        blocklist: Option<PathBuf>,
        /// Run aliased-prefix detection on the candidates' /64s
        #[arg(long)]
        apd: bool,
        /// Probes per prefix level for detection
        #[arg(long, default_value_t = pipeline::DEFAULT_PROBES_PER_LEVEL)]
        probes: u32,
        /// Seed for detection probe placement (defaults to --rng-seed)
        #[arg(long)]
        seed: Option<u64>,
        /// Simulator population answering the detection probes
        #[arg(long)]
        sim_config: Option<PathBuf>,
        /// Prefixes already known to be aliased
        #[arg(long)]
        known_aliased: Option<PathBuf>,
        /// Drop addresses whose DNS responses were injected
        #[arg(long)]
        gfw: bool,
        /// DNS response CSV (responder,query_name,answers)
        #[arg(long)]
        dns_responses: Option<PathBuf>,
        /// Injection marker prefixes (default: Teredo 2001::/32)
        #[arg(long)]
        injection_prefixes: Option<PathBuf>,
        /// Address list to filter
        #[arg(long)]
        input: PathBuf,
        /// Filtered address list
        #[arg(long)]
        out: PathBuf,
    },

    /// Generate candidate addresses from a seed set
    Generate {
        /// Generation algorithm
        #[arg(long)]
        algo: Algo,
        /// Seed address list
        #[arg(long)]
        seed_file: PathBuf,
        /// Candidate budget
        #[arg(long, default_value_t = pipeline::DEFAULT_BUDGET)]
        budget: usize,
        /// Largest region size before the seed partition stops splitting
        #[arg(long)]
        leaf_max: Option<usize>,
        /// Entropy gap that starts a new segment
        #[arg(long)]
        segment_threshold: Option<f64>,
        /// Label recorded in the .meta sidecar (default: seed file stem)
        #[arg(long)]
        seed_label: Option<String>,
        /// Candidate address list; a .meta sidecar is written next to it
        #[arg(long)]
        out: PathBuf,
    },

    /// Build a synthetic population and scan targets against it
    Simulate {
        /// Population config TOML
        #[arg(long)]
        population: PathBuf,
        /// Targets to probe (default: every materialized host)
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Scan response CSV; a .probed sibling is written next to it
        #[arg(long)]
        out: PathBuf,
        /// Also write the population's RIB CSV here
        #[arg(long)]
        emit_rib: Option<PathBuf>,
        /// Also write the population's category CSV here
        #[arg(long)]
        emit_categories: Option<PathBuf>,
        /// Also write the population's aliased prefix list here
        #[arg(long)]
        emit_aliased: Option<PathBuf>,
        /// Also write every materialized host address here
        #[arg(long)]
        emit_hosts: Option<PathBuf>,
    },

    /// Compute the metric suite for one candidate set against a scan
    Evaluate {
        /// Post-filter candidate list (the probed targets)
        #[arg(long)]
        candidates: PathBuf,
        /// Pre-filter candidate list, for the aliased ratio (default:
        /// same as --candidates)
        #[arg(long)]
        raw_candidates: Option<PathBuf>,
        /// Seed address list
        #[arg(long)]
        seed: PathBuf,
        /// Scan response CSV with its .probed sibling
        #[arg(long)]
        scan: PathBuf,
        /// RIB dump CSV
        #[arg(long)]
        rib: PathBuf,
        /// Category registry CSV
        #[arg(long)]
        categories: PathBuf,
        /// Aliased prefix list used for the ratio
        #[arg(long)]
        aliased: Option<PathBuf>,
        /// Report label halves, as algorithm and seed name
        #[arg(long, default_value = "eval")]
        algorithm: String,
        #[arg(long)]
        seed_label: Option<String>,
        /// Output format
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Report file
        #[arg(long)]
        out: PathBuf,
        /// Expected report CSV; deviations beyond --tolerance exit 2
        #[arg(long)]
        expected: Option<PathBuf>,
        /// Relative deviation allowed against --expected
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },

    /// Run the full generate→filter→scan→evaluate grid from a config
    Pipeline,

    /// Check a pipeline config and report every violation
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Dense,
    Entropy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

fn log(fields: &[(&str, String)]) {
    let line: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("{}", line.join(" "));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error={:?}", e.to_string());
            for cause in e.chain().skip(1) {
                eprintln!("cause={:?}", cause.to_string());
            }
            ExitCode::from(1)
        }
    }
}

fn config_path(cli_config: &Option<PathBuf>) -> Result<PathBuf> {
    cli_config
        .clone()
        .context("--config <file> is required for this subcommand")
}

fn load_optional_prefixes(path: &Option<PathBuf>) -> Result<Option<PrefixSet>> {
    match path {
        Some(p) => Ok(Some(PrefixSet::new(read_prefix_list(p)?))),
        None => Ok(None),
    }
}

fn file_stem_label(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("seed")
        .to_string()
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Categorize {
            rib,
            categories,
            input,
            out_dir,
        } => {
            let table = asn::load_rib(&rib)?;
            let map = asn::load_categories(&categories)?;
            let addrs = read_address_list(&input)?;
            let split = asn::split_by_category(&addrs, &table, &map);
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            for category in v6forge::NetworkCategory::ALL {
                let list = split.get(&category).map(Vec::as_slice).unwrap_or(&[]);
                write_address_list(&out_dir.join(format!("{}.txt", category.slug())), list)?;
                log(&[
                    ("stage", "categorize".to_string()),
                    ("category", category.slug().to_string()),
                    ("count", list.len().to_string()),
                ]);
            }
            asn::write_category_summary(&out_dir.join("summary.csv"), &split)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Stability {
            history: history_dir,
            analysis_date,
            window,
            count_trailing_removal,
            rib,
            categories,
            out,
            summary,
        } => {
            let mut loaded = history::load_history(&history_dir)?;
            if let Some(date) = analysis_date {
                loaded = loaded.with_analysis_date(date)?;
            }
            let table = rib.as_deref().map(asn::load_rib).transpose()?.unwrap_or_default();
            let map = categories
                .as_deref()
                .map(asn::load_categories)
                .transpose()?
                .unwrap_or_default();
            history::write_address_stability_csv(
                &out,
                &loaded,
                &table,
                &map,
                window,
                count_trailing_removal,
            )?;
            if let Some(summary_path) = summary {
                let stats = history::stability_by_category(
                    &loaded,
                    &table,
                    &map,
                    window,
                    count_trailing_removal,
                );
                history::write_stability_csv(&summary_path, &stats)?;
            }
            log(&[
                ("stage", "stability".to_string()),
                ("window_days", window.to_string()),
                ("out", out.display().to_string()),
            ]);
            Ok(ExitCode::SUCCESS)
        }

        Command::Filter {
            blocklist,
            apd,
            probes,
            seed,
            sim_config,
            known_aliased,
            gfw,
            dns_responses,
            injection_prefixes,
            input,
            out,
        } => {
            let mut addrs = read_address_list(&input)?;
            let initial = addrs.len();

            if let Some(path) = blocklist {
                let list = filters::Blocklist::from_file(&path)?;
                addrs = filters::apply_blocklist(&addrs, &list);
                log(&[
                    ("stage", "blocklist".to_string()),
                    ("kept", addrs.len().to_string()),
                ]);
            }

            let known = load_optional_prefixes(&known_aliased)?.unwrap_or_default();
            if apd || !known.is_empty() {
                let verdicts = if apd {
                    let population_path = sim_config.context(
                        "--apd needs --sim-config <population.toml> to answer probes",
                    )?;
                    let population = sim::PopulationConfig::from_file(&population_path)?;
                    let gt = sim::build_population(&population)?;
                    let prefixes: BTreeSet<v6forge::Prefix> = addrs
                        .iter()
                        .map(|&a| v6forge::Prefix::new(a, 64).expect("/64 is valid"))
                        .collect();
                    let prefixes: Vec<v6forge::Prefix> = prefixes.into_iter().collect();
                    filters::detect_aliased(
                        &gt,
                        &prefixes,
                        probes,
                        seed.unwrap_or(cli.rng_seed),
                    )?
                } else {
                    Vec::new()
                };
                let aliased_found = verdicts.iter().filter(|v| v.aliased).count();
                addrs = filters::filter_aliased(&addrs, &verdicts, &known);
                log(&[
                    ("stage", "alias-filter".to_string()),
                    ("detected_aliased", aliased_found.to_string()),
                    ("kept", addrs.len().to_string()),
                ]);
            }

            if gfw {
                let dns_path = dns_responses
                    .context("--gfw needs --dns-responses <csv> to classify responders")?;
                let responses = filters::load_dns_responses(&dns_path)?;
                let injection = load_optional_prefixes(&injection_prefixes)?
                    .unwrap_or_else(filters::default_injection_prefixes);
                // a responder whose DNS answers were all injected is a
                // phantom: its apparent responsiveness is fabricated
                let mut injected_only: BTreeSet<Address> = BTreeSet::new();
                let mut has_legit: BTreeSet<Address> = BTreeSet::new();
                for r in &responses {
                    match filters::gfw_classify(r, &injection) {
                        filters::DnsVerdict::Injected => {
                            injected_only.insert(r.responder);
                        }
                        filters::DnsVerdict::Legit => {
                            has_legit.insert(r.responder);
                        }
                    }
                }
                addrs.retain(|a| !(injected_only.contains(a) && !has_legit.contains(a)));
                log(&[
                    ("stage", "gfw".to_string()),
                    ("kept", addrs.len().to_string()),
                ]);
            }

            write_address_list(&out, &addrs)?;
            log(&[
                ("stage", "filter-done".to_string()),
                ("input", initial.to_string()),
                ("kept", addrs.len().to_string()),
            ]);
            Ok(ExitCode::SUCCESS)
        }

        Command::Generate {
            algo,
            seed_file,
            budget,
            leaf_max,
            segment_threshold,
            seed_label,
            out,
        } => {
            let seed_addrs = read_address_list(&seed_file)?;
            let label = seed_label.unwrap_or_else(|| file_stem_label(&seed_file));
            let meta_path = out.with_extension("meta");
            let set = match algo {
                Algo::Dense => {
                    let params = tga::DenseParams {
                        budget,
                        leaf_max: leaf_max
                            .unwrap_or_else(|| tga::DenseParams::default().leaf_max),
                        rng_seed: cli.rng_seed,
                    };
                    let (set, regions) = tga::dense_generate(&seed_addrs, &params, &label)?;
                    tga::write_meta(
                        &meta_path,
                        &tga::dense_meta(&set, &params, seed_addrs.len(), &regions),
                    )?;
                    set
                }
                Algo::Entropy => {
                    let params = tga::EntropyParams {
                        budget,
                        segment_threshold: segment_threshold
                            .unwrap_or_else(|| tga::EntropyParams::default().segment_threshold),
                        rng_seed: cli.rng_seed,
                    };
                    let (set, model) = tga::entropy_generate(&seed_addrs, &params, &label)?;
                    tga::write_meta(
                        &meta_path,
                        &tga::entropy_meta(&set, &params, seed_addrs.len(), &model),
                    )?;
                    set
                }
            };
            write_address_list(&out, &set.addresses)?;
            log(&[
                ("stage", "generate".to_string()),
                ("algorithm", set.provenance.algorithm.clone()),
                ("seed_count", seed_addrs.len().to_string()),
                ("candidates", set.len().to_string()),
                ("out", out.display().to_string()),
            ]);
            Ok(ExitCode::SUCCESS)
        }

        Command::Simulate {
            population,
            targets,
            out,
            emit_rib,
            emit_categories,
            emit_aliased,
            emit_hosts,
        } => {
            let cfg = sim::PopulationConfig::from_file(&population)?;
            let gt = sim::build_population(&cfg)?;
            let target_addrs: Vec<Address> = match targets {
                Some(path) => read_address_list(&path)?,
                None => gt.all_hosts().collect(),
            };
            let result = sim::scan(&gt, &target_addrs, &Protocol::ALL);
            sim::export_scan(&result, &out)?;
            if let Some(path) = emit_rib {
                gt.write_rib_csv(&path)?;
            }
            if let Some(path) = emit_categories {
                gt.write_categories_csv(&path)?;
            }
            if let Some(path) = emit_aliased {
                gt.write_aliased_prefixes(&path)?;
            }
            if let Some(path) = emit_hosts {
                let mut hosts: Vec<Address> = gt.all_hosts().collect();
                hosts.sort();
                write_address_list(&path, &hosts)?;
            }
            log(&[
                ("stage", "simulate".to_string()),
                ("networks", gt.networks().len().to_string()),
                ("probed", result.probed.len().to_string()),
                ("responsive", result.responses.len().to_string()),
            ]);
            Ok(ExitCode::SUCCESS)
        }

        Command::Evaluate {
            candidates,
            raw_candidates,
            seed,
            scan,
            rib,
            categories,
            aliased,
            algorithm,
            seed_label,
            format,
            out,
            expected,
            tolerance,
        } => {
            let candidate_addrs = read_address_list(&candidates)?;
            let raw_addrs = match raw_candidates {
                Some(path) => read_address_list(&path)?,
                None => candidate_addrs.clone(),
            };
            let seed_addrs = read_address_list(&seed)?;
            let result = sim::import_scan(&scan)?;
            let table = asn::load_rib(&rib)?;
            let map = asn::load_categories(&categories)?;
            let aliased_set = load_optional_prefixes(&aliased)?.unwrap_or_default();
            let label = seed_label.unwrap_or_else(|| file_stem_label(&seed));

            let report = metrics::build_report(&metrics::ReportInputs {
                algorithm: &algorithm,
                seed_label: &label,
                raw_candidates: &raw_addrs,
                candidates: &candidate_addrs,
                seed: &seed_addrs,
                result: &result,
                table: &table,
                categories: &map,
                aliased: &aliased_set,
            })?;
            let reports = vec![report];
            match format {
                Format::Csv => metrics::render_report_csv(&reports, &out)?,
                Format::Markdown => metrics::render_report_markdown(&reports, &out)?,
            }
            log(&[
                ("stage", "evaluate".to_string()),
                ("label", reports[0].label()),
                ("candidates", reports[0].candidate_count.to_string()),
                ("responsive", reports[0].responsive_count.to_string()),
                (
                    "response_rate",
                    format!("{:.4}", reports[0].response_rate),
                ),
            ]);

            if let Some(expected_path) = expected {
                let expected_rows = metrics::read_report_rows(&expected_path)?;
                let actual_rows = metrics::flatten_reports(&reports);
                let deviations = metrics::compare_rows(&actual_rows, &expected_rows, tolerance);
                for d in &deviations {
                    log(&[
                        ("deviation", d.metric.clone()),
                        ("label", d.label.clone()),
                        ("category", d.category.clone()),
                        ("expected", d.expected.to_string()),
                        ("actual", d.actual.to_string()),
                        ("relative", format!("{:.4}", d.relative)),
                    ]);
                }
                if !deviations.is_empty() {
                    log(&[("deviations", deviations.len().to_string())]);
                    return Ok(ExitCode::from(2));
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Pipeline => {
            let path = config_path(&cli.config)?;
            let mut cfg = pipeline::load_config(&path)?;
            if cli.jobs != 0 {
                cfg.jobs = cli.jobs;
            }
            if cli.rng_seed != 0 {
                cfg.rng_seed = cli.rng_seed;
            }
            let findings = pipeline::validate_config(&cfg);
            if !findings.is_empty() {
                for f in &findings {
                    log(&[("finding", f.field.clone()), ("message", f.message.clone())]);
                }
                return Ok(ExitCode::from(1));
            }
            let outcome = pipeline::run_pipeline(&cfg)?;
            for warning in &outcome.warnings {
                log(&[("warning", warning.clone())]);
            }
            for cell in &outcome.cells {
                log(&[
                    ("cell", format!("{}/{}", cell.algorithm.as_str(), cell.category.slug())),
                    ("status", cell.status.as_str().to_string()),
                    (
                        "responsive_final",
                        cell.responsive_final.map_or(String::new(), |n| n.to_string()),
                    ),
                ]);
            }
            log(&[
                ("stage", "pipeline-done".to_string()),
                ("manifest", outcome.manifest_path.display().to_string()),
                ("report", outcome.report_csv_path.display().to_string()),
            ]);
            if outcome.any_failed() {
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Validate => {
            let path = config_path(&cli.config)?;
            let cfg = pipeline::load_config(&path)?;
            let findings = pipeline::validate_config(&cfg);
            if findings.is_empty() {
                log(&[("config", "ok".to_string())]);
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &findings {
                    log(&[("finding", f.field.clone()), ("message", f.message.clone())]);
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}
