//! Run candidates through the full filter chain.
//!
//! Generates candidates from the demo seed list, then applies each filter
//! stage in pipeline order — blocklist, aliased-prefix detection against
//! the simulated population, and DNS-injection classification — printing
//! the count surviving each stage.
//!
//! Run with: cargo run --example filter_candidates

use std::collections::BTreeSet;
use std::path::Path;

use v6forge::addr::read_address_list;
use v6forge::filters::{
    apply_blocklist, default_injection_prefixes, detect_aliased, filter_aliased, gfw_classify,
    load_dns_responses, Blocklist, DnsVerdict,
};
use v6forge::sim::{build_population, PopulationConfig};
use v6forge::tga::{dense_generate, DenseParams};
use v6forge::{Prefix, PrefixSet};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let seed = read_address_list(&data.join("demo_seed.txt"))?;
    let gt = build_population(&PopulationConfig::from_file(
        &data.join("demo_population.toml"),
    )?)?;

    let params = DenseParams {
        budget: 5000,
        leaf_max: 16,
        rng_seed: 1,
    };
    let (set, _) = dense_generate(&seed, &params, "demo")?;
    let mut candidates = set.addresses.into_iter().collect::<Vec<_>>();
    println!("{:<28} {}", "generated", candidates.len());

    let blocklist = Blocklist::from_file(&data.join("demo_blocklist.txt"))?;
    candidates = apply_blocklist(&candidates, &blocklist);
    println!("{:<28} {}", "after blocklist", candidates.len());

    // probe the distinct /64s the candidates fall in, plus the planted
    // aliased block, against the simulated ground truth
    let mut prefixes: BTreeSet<Prefix> = candidates
        .iter()
        .map(|&a| Prefix::new(a, 64).expect("/64 is valid"))
        .collect();
    prefixes.insert("2001:db8:f00:1::/64".parse()?);
    let prefixes: Vec<Prefix> = prefixes.into_iter().collect();
    let verdicts = detect_aliased(&gt, &prefixes, 16, 1)?;
    let flagged: Vec<_> = verdicts.iter().filter(|v| v.aliased).collect();
    println!(
        "{:<28} {} of {} probed /64s",
        "aliased prefixes found",
        flagged.len(),
        prefixes.len()
    );
    for v in &flagged {
        println!("  {}", v.prefix);
    }
    candidates = filter_aliased(&candidates, &verdicts, &PrefixSet::default());
    println!("{:<28} {}", "after alias filter", candidates.len());

    // classify the recorded DNS responses; injected-only responders with
    // no other evidence would be dropped from scan results
    let responses = load_dns_responses(&data.join("demo_dns_responses.csv"))?;
    let injection = default_injection_prefixes();
    let injected: Vec<_> = responses
        .iter()
        .filter(|r| gfw_classify(r, &injection) == DnsVerdict::Injected)
        .collect();
    println!(
        "{:<28} {} of {} recorded responses",
        "injected DNS answers",
        injected.len(),
        responses.len()
    );
    for r in &injected {
        println!("  {} answering {}", r.responder, r.query_name);
    }
    Ok(())
}
