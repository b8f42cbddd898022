//! Compute the full metric suite for one candidate set.
//!
//! Generates candidates from the content-category slice of the demo seed
//! list, scans them against the simulated population, and builds the
//! complete evaluation report — response rate, generation factor, aliased
//! ratio, AS coverage, category distribution, and per-protocol rates.
//!
//! Run with: cargo run --example evaluate_metrics

use std::path::Path;

use v6forge::addr::{read_address_list, Protocol};
use v6forge::asn::{load_categories, load_rib, split_by_category};
use v6forge::metrics::{build_report, ReportInputs};
use v6forge::sim::{build_population, scan, PopulationConfig};
use v6forge::tga::{dense_generate, DenseParams};
use v6forge::NetworkCategory;

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let table = load_rib(&data.join("demo_rib.csv"))?;
    let categories = load_categories(&data.join("demo_categories.csv"))?;
    let gt = build_population(&PopulationConfig::from_file(
        &data.join("demo_population.toml"),
    )?)?;

    let all_seeds = read_address_list(&data.join("demo_seed.txt"))?;
    let split = split_by_category(&all_seeds, &table, &categories);
    let seed = split
        .get(&NetworkCategory::Content)
        .expect("demo seed has content addresses")
        .clone();

    let params = DenseParams {
        budget: 2000,
        leaf_max: 16,
        rng_seed: 1,
    };
    let (set, _) = dense_generate(&seed, &params, "content")?;
    let candidates: Vec<_> = set.addresses.iter().copied().collect();
    let result = scan(&gt, &candidates, &Protocol::ALL);

    let report = build_report(&ReportInputs {
        algorithm: "dense",
        seed_label: "content",
        raw_candidates: &candidates,
        candidates: &candidates,
        seed: &seed,
        result: &result,
        table: &table,
        categories: &categories,
        aliased: gt.aliased_prefixes(),
    })?;

    println!("label                {}", report.label());
    println!("candidates           {}", report.candidate_count);
    println!("responsive           {}", report.responsive_count);
    println!("generation factor    {:.3}", report.generation_factor);
    println!("response rate        {:.2}%", 100.0 * report.response_rate);
    println!("aliased ratio        {:.2}%", 100.0 * report.aliased_ratio);
    println!("candidate ASes       {}", report.as_stats.candidate_ases);
    println!("responsive ASes      {}", report.as_stats.responsive_ases);
    println!(
        "seed AS coverage     {:.2}%",
        100.0 * report.as_stats.seed_as_coverage
    );
    println!();
    println!("category distribution of responsive candidates:");
    for (category, share) in &report.category_distribution {
        println!("  {:<22} {:>6.2}%", category.label(), 100.0 * share);
    }
    println!();
    println!("protocol rates among responders:");
    for (protocol, rate) in &report.protocol_rates {
        println!("  {:<8} {:>6.2}%", protocol.to_string(), 100.0 * rate);
    }
    Ok(())
}
