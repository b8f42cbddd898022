//! Learn an entropy segmentation from a seed set and sample candidates.
//!
//! Computes per-nibble entropy over the demo seed list, cuts the address
//! into segments where the entropy profile jumps, and samples each
//! segment independently from its observed value frequencies.
//!
//! Run with: cargo run --example generate_entropy

use std::path::Path;

use v6forge::addr::read_address_list;
use v6forge::tga::{entropy_generate, EntropyModel, EntropyParams};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let seed = read_address_list(&data.join("demo_seed.txt"))?;

    let params = EntropyParams {
        budget: 5000,
        segment_threshold: 0.1,
        rng_seed: 1,
    };

    let model = EntropyModel::build(&seed, params.segment_threshold)?;
    println!("{} seeds -> {} segments", seed.len(), model.segments().len());
    println!();
    println!("{:<10} {:>6} {:>10} {:>10}", "nibbles", "width", "values", "entropy");
    for segment in model.segments() {
        let mean_entropy: f64 = model.entropies()[segment.start..segment.end]
            .iter()
            .sum::<f64>()
            / segment.width() as f64;
        println!(
            "{:<10} {:>6} {:>10} {:>10.3}",
            format!("{}..{}", segment.start, segment.end),
            segment.width(),
            segment.values.len(),
            mean_entropy
        );
    }
    println!();

    let (set, _) = entropy_generate(&seed, &params, "demo")?;
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
