//! IPv6 hitlist analysis and target-generation evaluation toolkit.
//!
//! The crate is organized around a desk-scale evaluation pipeline for IPv6
//! target generation:
//!
//! - [`addr`] — canonical address, prefix, and protocol types plus the
//!   address-list file format used everywhere else.
//! - [`asn`] — longest-prefix-match origin-AS lookup and AS-to-category
//!   mapping from routing-table and category snapshots.
//! - [`history`] — dated scan snapshots and per-address stability metrics
//!   (state changes, uptime, downtime).
//! - [`filters`] — blocklist, aliased-prefix detection, DNS-injection
//!   classification, and the DNS-only rule.
//! - [`tga`] — the two built-in target generation algorithms: dense-region
//!   space partitioning and entropy-segment sampling.
//! - [`sim`] — a deterministic synthetic-Internet ground truth that answers
//!   probes and executes simulated scans, plus scanner-output import.
//! - [`metrics`] — the evaluation metric suite for (candidate set, seed set,
//!   scan result) triples and report rendering.
//! - [`pipeline`] — the end-to-end orchestrator behind the `v6forge` binary:
//!   seed split, generation, filtering, scanning, and evaluation.
//!
//! Every randomized component takes an explicit seed and is deterministic:
//! identical inputs and seeds reproduce identical outputs byte for byte.
//!
//! Runnable walkthroughs for each capability live in `examples/`; start with
//! `cargo run --example simulate_scan`.

pub mod addr;
pub mod asn;
pub mod filters;
pub mod history;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod tga;

mod seed;

pub use addr::{Address, Prefix, PrefixSet, Protocol};
pub use asn::{CategoryMap, NetworkCategory, PrefixTable};
