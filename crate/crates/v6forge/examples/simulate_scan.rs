//! Build the synthetic population and scan every host in it.
//!
//! Materializes the demo population (twelve networks across five
//! categories plus an aliased block), probes every host on all five
//! protocols, and prints per-protocol response counts. Also shows the
//! aliased block answering ICMP at an arbitrary address.
//!
//! Run with: cargo run --example simulate_scan

use std::collections::BTreeMap;
use std::path::Path;

use v6forge::addr::Protocol;
use v6forge::sim::{build_population, scan, PopulationConfig};
use v6forge::Address;

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let cfg = PopulationConfig::from_file(&data.join("demo_population.toml"))?;
    let gt = build_population(&cfg)?;

    println!("{:<22} {:>6} {:>7} {:>8}", "prefix", "asn", "hosts", "category");
    for (i, network) in gt.networks().iter().enumerate() {
        println!(
            "{:<22} {:>6} {:>7} {:>8}",
            network.prefix.to_string(),
            network.asn,
            gt.hosts(i).len(),
            network.category.label()
        );
    }
    println!();

    let targets: Vec<Address> = gt.all_hosts().collect();
    let result = scan(&gt, &targets, &Protocol::ALL);
    println!(
        "scanned {} hosts, {} responsive",
        result.probed.len(),
        result.responses.len()
    );

    let mut per_protocol: BTreeMap<Protocol, usize> = BTreeMap::new();
    for protocols in result.responses.values() {
        for &p in protocols {
            *per_protocol.entry(p).or_default() += 1;
        }
    }
    for (p, count) in &per_protocol {
        println!("  {p}: {count}");
    }
    println!();

    let inside_alias: Address = "2001:db8:f00::dead:beef".parse()?;
    println!(
        "{} (inside the aliased /48, never materialized) answers ICMP: {}",
        inside_alias,
        gt.probe(inside_alias, Protocol::Icmp)
    );
    Ok(())
}
