//! Measure address stability over a synthetic scan history.
//!
//! Builds six months of weekly snapshot files for three addresses with
//! different uptime patterns — always on, flapping, and recently first
//! seen — then computes per-address uptime, downtime, and state changes.
//! The recently-seen address is excluded by the eligibility window.
//!
//! Run with: cargo run --example stability

use chrono::NaiveDate;
use v6forge::history::{load_history, DEFAULT_ELIGIBILITY_WINDOW_DAYS};
use v6forge::{CategoryMap, PrefixTable};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;

    let stable = "2001:db8:10::1";
    let flapping = "2001:db8:20::1";
    let newcomer = "2001:db8:30::1";

    let start = NaiveDate::from_ymd_opt(2023, 1, 2).expect("valid date");
    for week in 0..26 {
        let date = start + chrono::Days::new(7 * week);
        let mut rows = vec![stable];
        // the flapping host answers only every other week
        if week % 2 == 0 {
            rows.push(flapping);
        }
        // the newcomer first appears 14 days before the analysis date,
        // inside the 100-day eligibility window
        if week >= 23 {
            rows.push(newcomer);
        }
        std::fs::write(
            dir.path().join(format!("{date}.csv")),
            rows.join("\n") + "\n",
        )?;
    }

    let history = load_history(dir.path())?;
    println!(
        "{} snapshots, analysis date {}",
        history.snapshots().len(),
        history.analysis_date()
    );
    println!();

    let out = dir.path().join("stability.csv");
    v6forge::history::write_address_stability_csv(
        &out,
        &history,
        &PrefixTable::default(),
        &CategoryMap::default(),
        DEFAULT_ELIGIBILITY_WINDOW_DAYS,
        true,
    )?;
    print!("{}", std::fs::read_to_string(&out)?);
    println!();
    println!(
        "(the address first seen 21 days before analysis is missing: only \
         addresses observed at least {DEFAULT_ELIGIBILITY_WINDOW_DAYS} days \
         before the analysis date are eligible)"
    );
    Ok(())
}
