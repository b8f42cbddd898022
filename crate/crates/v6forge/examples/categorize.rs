//! Split an address list by network category.
//!
//! Loads the demo RIB and category registry, maps every seed address to
//! the category of its longest-matching announced prefix, and prints the
//! per-category counts and shares.
//!
//! Run with: cargo run --example categorize

use std::path::Path;

use v6forge::addr::read_address_list;
use v6forge::asn::{load_categories, load_rib, split_by_category};
use v6forge::NetworkCategory;

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");

    let table = load_rib(&data.join("demo_rib.csv"))?;
    let categories = load_categories(&data.join("demo_categories.csv"))?;
    let addrs = read_address_list(&data.join("demo_seed.txt"))?;

    let split = split_by_category(&addrs, &table, &categories);

    println!("{} addresses across {} routed prefixes", addrs.len(), table.len());
    println!();
    println!("{:<22} {:>8} {:>8}", "category", "count", "share");
    for category in NetworkCategory::ALL {
        let count = split.get(&category).map_or(0, Vec::len);
        let share = count as f64 / addrs.len() as f64;
        println!(
            "{:<22} {:>8} {:>7.2}%",
            category.label(),
            count,
            100.0 * share
        );
    }
    Ok(())
}
