//! Target generation algorithms: learn structure from a seed address set
//! and emit new candidate addresses likely to be responsive.
//!
//! Two generators are built in. The dense generator ([`dense`]) partitions
//! the seed into low-entropy regions and expands their free nibbles; the
//! entropy generator ([`entropy`]) segments nibble positions by entropy
//! profile and samples each segment independently. Both feed [`finalize`],
//! which enforces the candidate-set contract: no duplicates, no seed
//! addresses.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::addr::{Address, NIBBLE_COUNT};

pub mod dense;
pub mod entropy;

pub use dense::{dense_generate, generate_from_region, partition, DenseParams, PatternRegion, Slot};
pub use entropy::{entropy_generate, EntropyModel, EntropyParams, Segment};

#[derive(Debug, Error)]
pub enum TgaError {
    #[error("seed set is empty")]
    EmptySeed,
    #[error("seed set has {got} addresses, need at least {minimum}")]
    SeedTooSmall { minimum: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where a candidate set came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub algorithm: String,
    pub seed_label: String,
}

/// A deduplicated, seed-disjoint set of generated addresses.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub addresses: BTreeSet<Address>,
    pub provenance: Provenance,
    /// Number of addresses actually delivered (equals `addresses.len()`).
    pub budget_used: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }
}

/// Settle a raw generator output into a [`CandidateSet`]: drop duplicates
/// (set semantics) and every address already present in the seed.
pub fn finalize(
    raw: impl IntoIterator<Item = Address>,
    seed: &[Address],
    algorithm: &str,
    seed_label: &str,
) -> CandidateSet {
    let seed_set: HashSet<Address> = seed.iter().copied().collect();
    let addresses: BTreeSet<Address> = raw
        .into_iter()
        .filter(|a| !seed_set.contains(a))
        .collect();
    let budget_used = addresses.len();
    CandidateSet {
        addresses,
        provenance: Provenance {
            algorithm: algorithm.to_string(),
            seed_label: seed_label.to_string(),
        },
        budget_used,
    }
}

/// Per-position Shannon entropy of the nibble values observed in `addrs`,
/// base 16 so each value lies in [0, 1].
pub(crate) fn nibble_entropies(addrs: &[Address]) -> [f64; NIBBLE_COUNT] {
    let mut out = [0.0f64; NIBBLE_COUNT];
    if addrs.is_empty() {
        return out;
    }
    let n = addrs.len() as f64;
    for (pos, slot) in out.iter_mut().enumerate() {
        let mut counts = [0u32; 16];
        for a in addrs {
            counts[usize::from(a.nibble(pos))] += 1;
        }
        let mut h = 0.0;
        for c in counts {
            if c > 0 {
                let p = f64::from(c) / n;
                h -= p * p.log2();
            }
        }
        *slot = h / 4.0; // log2(16) = 4
    }
    out
}

/// Write a `.meta` sidecar: ordered `key=value` lines describing a
/// generation run.
pub fn write_meta(path: &Path, entries: &[(&str, String)]) -> Result<(), TgaError> {
    let io = |source| TgaError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    for (key, value) in entries {
        writeln!(w, "{key}={value}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Meta entries for a dense-generator run.
pub fn dense_meta(
    set: &CandidateSet,
    params: &DenseParams,
    seed_count: usize,
    regions: &[PatternRegion],
) -> Vec<(&'static str, String)> {
    let mut entries = vec![
        ("algorithm", "dense".to_string()),
        ("seed_label", set.provenance.seed_label.clone()),
        ("seed_count", seed_count.to_string()),
        ("budget", params.budget.to_string()),
        ("leaf_max", params.leaf_max.to_string()),
        ("rng_seed", params.rng_seed.to_string()),
        ("regions", regions.len().to_string()),
        ("candidate_count", set.len().to_string()),
    ];
    if let Some(largest) = regions.iter().max_by_key(|r| r.members().len()) {
        entries.push(("largest_region_members", largest.members().len().to_string()));
        // positions are reported 1-based, matching survey convention
        let positions: Vec<String> = largest
            .wildcard_positions()
            .iter()
            .map(|p| (p + 1).to_string())
            .collect();
        entries.push(("largest_region_wildcards", positions.join(",")));
    }
    entries
}

/// Meta entries for an entropy-generator run. The sampling line records
/// that segments are drawn independently from observed frequencies — a
/// deliberate simplification relative to full joint modeling.
pub fn entropy_meta(
    set: &CandidateSet,
    params: &EntropyParams,
    seed_count: usize,
    model: &EntropyModel,
) -> Vec<(&'static str, String)> {
    vec![
        ("algorithm", "entropy".to_string()),
        ("seed_label", set.provenance.seed_label.clone()),
        ("seed_count", seed_count.to_string()),
        ("budget", params.budget.to_string()),
        ("segment_threshold", params.segment_threshold.to_string()),
        ("rng_seed", params.rng_seed.to_string()),
        ("segments", model.segments().len().to_string()),
        ("sampling", "independent_segment_frequencies".to_string()),
        ("candidate_count", set.len().to_string()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(s: &str) -> Address {
        s.parse().unwrap()
    }

    #[test]
    fn finalize_strips_seed_and_duplicates() {
        let seed = vec![addr("2001:db8::1"), addr("2001:db8::2")];
        let raw = vec![
            addr("2001:db8::1"), // in seed
            addr("2001:db8::3"),
            addr("2001:db8::3"), // duplicate
            addr("2001:db8::4"),
        ];
        let set = finalize(raw, &seed, "dense", "full");
        assert_eq!(set.len(), 2);
        assert_eq!(set.budget_used, 2);
        assert!(!set.addresses.contains(&addr("2001:db8::1")));
        assert_eq!(set.provenance.algorithm, "dense");
        assert_eq!(set.provenance.seed_label, "full");
    }

    #[test]
    fn finalize_of_seed_itself_is_empty() {
        let seed = vec![addr("2001:db8::1"), addr("2001:db8::2")];
        let set = finalize(seed.clone(), &seed, "dense", "full");
        assert!(set.is_empty());
        assert_eq!(set.budget_used, 0);
    }

    #[test]
    fn finalize_counts_set_difference() {
        let mut rng = crate::seed::rng_from(3, &[]);
        use rand::Rng;
        for _ in 0..50 {
            let seed: Vec<Address> = (0..rng.random_range(1..40))
                .map(|_| Address::from_bits(rng.random_range(0..200u128)))
                .collect();
            let raw: BTreeSet<Address> = (0..rng.random_range(0..60))
                .map(|_| Address::from_bits(rng.random_range(0..200u128)))
                .collect();
            let expected: BTreeSet<Address> = raw
                .iter()
                .filter(|a| !seed.contains(a))
                .copied()
                .collect();
            let set = finalize(raw.iter().copied(), &seed, "x", "y");
            assert_eq!(set.addresses, expected);
        }
    }

    #[test]
    fn entropy_is_zero_for_constant_and_one_for_uniform() {
        let constant: Vec<Address> = (0..8).map(|_| addr("2001:db8::1")).collect();
        let h = nibble_entropies(&constant);
        assert!(h.iter().all(|&x| x == 0.0));

        // last nibble uniform over all 16 values
        let uniform: Vec<Address> = (0..16u128)
            .map(|v| Address::from_bits(0x2001_0db8 << 96 | v))
            .collect();
        let h = nibble_entropies(&uniform);
        assert!((h[31] - 1.0).abs() < 1e-12);
        assert_eq!(h[30], 0.0);
    }

    #[test]
    fn meta_file_is_ordered_key_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.meta");
        write_meta(
            &path,
            &[("algorithm", "dense".to_string()), ("budget", "100".to_string())],
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "algorithm=dense\nbudget=100\n"
        );
    }
}
