//! Run the complete generate → filter → scan → evaluate grid.
//!
//! Loads the demo pipeline config (two algorithms × six seed categories
//! against the simulated population), runs every cell in parallel, and
//! prints the stage counts from the manifest. Output files land in a
//! temporary directory.
//!
//! Run with: cargo run --example full_pipeline

use std::path::Path;

use v6forge::pipeline::{load_config, run_pipeline};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let out = tempfile::tempdir()?;

    let mut cfg = load_config(&data.join("demo_pipeline.toml"))?;
    cfg.out_dir = out.path().to_path_buf();

    let outcome = run_pipeline(&cfg)?;
    for warning in &outcome.warnings {
        println!("warning: {warning}");
    }

    println!(
        "{:<10} {:<12} {:>7} {:>10} {:>8} {:>8} {:>10} {:>6}",
        "algorithm", "category", "seeds", "candidates", "blocked", "aliased", "responsive", "final"
    );
    for cell in &outcome.cells {
        let n = |v: Option<usize>| v.map_or(String::from("-"), |n| n.to_string());
        let delta = |a: Option<usize>, b: Option<usize>| match (a, b) {
            (Some(a), Some(b)) => (a - b).to_string(),
            _ => String::from("-"),
        };
        println!(
            "{:<10} {:<12} {:>7} {:>10} {:>8} {:>8} {:>10} {:>6}",
            cell.algorithm.as_str(),
            cell.category.slug(),
            cell.seed_count,
            n(cell.candidates),
            delta(cell.candidates, cell.after_blocklist),
            delta(cell.after_blocklist, cell.after_alias_filter),
            n(cell.responsive),
            n(cell.responsive_final),
        );
    }
    println!();
    println!("manifest: {}", outcome.manifest_path.display());
    println!("report:   {}", outcome.report_csv_path.display());

    let markdown = std::fs::read_to_string(&outcome.report_md_path)?;
    let preview: Vec<&str> = markdown.lines().take(16).collect();
    println!();
    println!("{}", preview.join("\n"));
    Ok(())
}
