//! Mine dense regions from a seed set and expand them into candidates.
//!
//! Partitions the demo seed list into pattern regions, shows the largest
//! mined patterns, then generates a candidate set and prints a sample.
//!
//! Run with: cargo run --example generate_dense

use std::path::Path;

use v6forge::addr::read_address_list;
use v6forge::tga::{dense_generate, partition, DenseParams, Slot};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let seed = read_address_list(&data.join("demo_seed.txt"))?;

    let params = DenseParams {
        budget: 5000,
        leaf_max: 16,
        rng_seed: 1,
    };

    let regions = partition(&seed, params.leaf_max)?;
    println!("{} seeds -> {} regions", seed.len(), regions.len());
    println!();

    let mut by_size: Vec<_> = regions.iter().collect();
    by_size.sort_by_key(|r| std::cmp::Reverse(r.members().len()));
    println!("largest regions (pattern: fixed nibbles, * = free):");
    for region in by_size.iter().take(5) {
        let pattern: String = region
            .slots()
            .iter()
            .map(|s| match s {
                Slot::Fixed(v) => char::from_digit(u32::from(*v), 16).expect("nibble"),
                Slot::Wildcard(_) => '*',
            })
            .collect();
        println!(
            "  {pattern}  members={} wildcards={}",
            region.members().len(),
            region.wildcard_count()
        );
    }
    println!();

    let (set, _) = dense_generate(&seed, &params, "demo")?;
    println!(
        "generated {} candidates (budget {})",
        set.len(),
        params.budget
    );
    for a in set.addresses.iter().take(5) {
        println!("  {a}");
    }
    Ok(())
}
