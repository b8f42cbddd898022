//! Entropy-segment generation.
//!
//! Nibble positions are grouped into segments wherever the per-nibble
//! entropy profile is flat, cutting at jumps larger than a threshold; each
//! segment then gets a frequency table of the values observed across the
//! seed. Candidates are drawn by sampling every segment independently in
//! proportion to those frequencies — deliberately simpler than joint
//! modeling of segment dependencies, and recorded as such in run metadata.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::addr::{Address, NIBBLE_COUNT};
use crate::seed;
use crate::tga::{finalize, nibble_entropies, CandidateSet, TgaError};

/// A run of consecutive nibble positions `[start, end)` with the observed
/// values across the seed and their occurrence counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    /// Observed value tuples (one nibble per position) with counts,
    /// sorted by tuple.
    pub values: Vec<(Vec<u8>, u32)>,
}

impl Segment {
    pub fn width(&self) -> usize {
        self.end - self.start
    }
}

/// Frequency model learned from a seed: entropy-delimited segments plus
/// per-segment value tables.
#[derive(Clone, Debug)]
pub struct EntropyModel {
    segments: Vec<Segment>,
    entropies: [f64; NIBBLE_COUNT],
    total: u32,
}

impl EntropyModel {
    /// Learn segments and frequencies. Needs at least two seed addresses;
    /// duplicates are allowed and weight the frequency tables.
    pub fn build(seed_addrs: &[Address], segment_threshold: f64) -> Result<Self, TgaError> {
        if seed_addrs.len() < 2 {
            return Err(TgaError::SeedTooSmall {
                minimum: 2,
                got: seed_addrs.len(),
            });
        }
        let entropies = nibble_entropies(seed_addrs);
        let mut boundaries = vec![0usize];
        for i in 0..NIBBLE_COUNT - 1 {
            if (entropies[i] - entropies[i + 1]).abs() > segment_threshold {
                boundaries.push(i + 1);
            }
        }
        boundaries.push(NIBBLE_COUNT);

        let segments = boundaries
            .windows(2)
            .map(|w| {
                let (start, end) = (w[0], w[1]);
                let mut counts: BTreeMap<Vec<u8>, u32> = BTreeMap::new();
                for a in seed_addrs {
                    let tuple: Vec<u8> = (start..end).map(|pos| a.nibble(pos)).collect();
                    *counts.entry(tuple).or_insert(0) += 1;
                }
                Segment {
                    start,
                    end,
                    values: counts.into_iter().collect(),
                }
            })
            .collect();
        Ok(EntropyModel {
            segments,
            entropies,
            total: seed_addrs.len() as u32,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Per-nibble entropies the segmentation was derived from.
    pub fn entropies(&self) -> &[f64; NIBBLE_COUNT] {
        &self.entropies
    }

    /// Draw one address, sampling each segment independently in proportion
    /// to observed value frequency.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Address {
        let mut nibbles = [0u8; NIBBLE_COUNT];
        for segment in &self.segments {
            let mut pick = rng.random_range(0..self.total);
            let tuple = segment
                .values
                .iter()
                .find_map(|(tuple, count)| {
                    if pick < *count {
                        Some(tuple)
                    } else {
                        pick -= count;
                        None
                    }
                })
                .expect("counts sum to total");
            nibbles[segment.start..segment.end].copy_from_slice(tuple);
        }
        Address::from_nibbles(&nibbles)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EntropyParams {
    pub budget: usize,
    pub segment_threshold: f64,
    pub rng_seed: u64,
}

impl Default for EntropyParams {
    fn default() -> Self {
        EntropyParams {
            budget: 100_000,
            segment_threshold: 0.1,
            rng_seed: 0,
        }
    }
}

/// Run the entropy generator: learn the model, then sample until `budget`
/// distinct addresses exist or the stall limit (`budget` × 100 draws) is
/// hit, and finalize. Returns the candidate set and the learned model.
pub fn entropy_generate(
    seed_addrs: &[Address],
    params: &EntropyParams,
    seed_label: &str,
) -> Result<(CandidateSet, EntropyModel), TgaError> {
    let model = EntropyModel::build(seed_addrs, params.segment_threshold)?;
    let mut rng = seed::rng_from(params.rng_seed, &[seed::salt_str("entropy")]);

    let mut raw: BTreeSet<Address> = BTreeSet::new();
    let stall_limit = params.budget.saturating_mul(100);
    let mut draws = 0usize;
    while raw.len() < params.budget && draws < stall_limit {
        raw.insert(model.sample(&mut rng));
        draws += 1;
    }
    Ok((finalize(raw, seed_addrs, "entropy", seed_label), model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(s: &str) -> Address {
        s.parse().unwrap()
    }

    // Small budgets keep saturated-model tests quick: once every possible
    // address has been drawn, the generator spins until the stall limit,
    // which scales with the budget.
    fn small_budget(budget: usize) -> EntropyParams {
        EntropyParams {
            budget,
            ..EntropyParams::default()
        }
    }

    #[test]
    fn identical_seed_collapses_to_one_segment_and_no_candidates() {
        let seed = vec![addr("2001:db8::1"); 4];
        let (set, model) = entropy_generate(&seed, &small_budget(100), "full").unwrap();
        assert_eq!(model.segments().len(), 1);
        assert_eq!(model.segments()[0].width(), NIBBLE_COUNT);
        // the model can only reproduce the seed, which finalize removes
        assert!(set.is_empty());
    }

    #[test]
    fn one_free_nibble_stays_inside_its_prefix() {
        let seed: Vec<Address> = (0..16u128)
            .map(|v| Address::from_bits(0x2001_0db8 << 96 | v))
            .collect();
        let (set, model) = entropy_generate(&seed, &small_budget(100), "full").unwrap();
        // entropy jumps from 0 to 1 at the last nibble
        assert_eq!(model.segments().len(), 2);
        let prefix: crate::addr::Prefix = "2001:db8::/124".parse().unwrap();
        for a in &set.addresses {
            assert!(prefix.contains(*a));
        }
        // every in-prefix address is a seed member, so nothing novel exists
        assert!(set.is_empty());
    }

    #[test]
    fn independent_segments_produce_novel_cross_combinations() {
        // nibble 28 uniform over 8 values (entropy 0.75), nibble 29 over 2
        // values (0.25): the jump separates them into different segments,
        // so sampling recombines them beyond the 8 seeded pairs.
        let seed: Vec<Address> = (0..8u128)
            .map(|v| Address::from_bits(0x2001_0db8 << 96 | v << 12 | (v % 2) << 8))
            .collect();
        let (set, model) = entropy_generate(&seed, &small_budget(16), "full").unwrap();
        assert_eq!(
            model.segments().iter().map(Segment::width).collect::<Vec<_>>(),
            vec![28, 1, 1, 2]
        );
        let expected: BTreeSet<Address> = (0..8u128)
            .flat_map(|hi| {
                (0..2u128).map(move |lo| Address::from_bits(0x2001_0db8 << 96 | hi << 12 | lo << 8))
            })
            .filter(|a| !seed.contains(a))
            .collect();
        assert_eq!(set.addresses, expected);
        assert_eq!(set.len(), 8);
    }

    #[test]
    fn sampled_joint_distribution_matches_frequency_product() {
        // segment A: nibble 30 with counts {0: 12, 1: 4}; segment B:
        // nibble 31 uniform over 4 values. With independent sampling the
        // joint must match the product of the marginals (chi-squared,
        // 8 cells, df 7; 24.32 is the 0.999 quantile).
        let seed: Vec<Address> = (0..16u128)
            .map(|i| {
                let hi = u128::from(i >= 12); // 12 zeros, 4 ones
                Address::from_bits(0x2001_0db8 << 96 | hi << 4 | (i % 4))
            })
            .collect();
        let model = EntropyModel::build(&seed, 0.1).unwrap();
        assert_eq!(model.segments().len(), 3);

        let mut rng = crate::seed::rng_from(0xc41, &[]);
        let draws = 100_000usize;
        let mut observed = [[0u32; 4]; 2];
        for _ in 0..draws {
            let a = model.sample(&mut rng);
            observed[usize::from(a.nibble(30))][usize::from(a.nibble(31))] += 1;
        }
        let mut chi2 = 0.0f64;
        for (hi, row) in observed.iter().enumerate() {
            let p_hi = if hi == 0 { 12.0 / 16.0 } else { 4.0 / 16.0 };
            for &count in row {
                let expected = draws as f64 * p_hi * 0.25;
                chi2 += (f64::from(count) - expected).powi(2) / expected;
            }
        }
        assert!(chi2 < 24.32, "chi-squared {chi2:.2} too large");
    }

    #[test]
    fn budget_caps_output_and_runs_are_deterministic() {
        let seed: Vec<Address> = (0..64u128)
            .map(|v| Address::from_bits(0x2001_0db8 << 96 | (v * v) << 16 | (v % 7)))
            .collect();
        let params = EntropyParams {
            budget: 40,
            ..EntropyParams::default()
        };
        let (a, _) = entropy_generate(&seed, &params, "full").unwrap();
        let (b, _) = entropy_generate(&seed, &params, "full").unwrap();
        assert!(a.len() <= 40);
        assert_eq!(a.addresses, b.addresses);

        let reseeded = EntropyParams {
            rng_seed: 9,
            ..params
        };
        let (c, _) = entropy_generate(&seed, &reseeded, "full").unwrap();
        assert_ne!(a.addresses, c.addresses);
    }

    #[test]
    fn undersized_seed_is_rejected() {
        let err = entropy_generate(&[addr("::1")], &EntropyParams::default(), "full");
        assert!(matches!(err, Err(TgaError::SeedTooSmall { minimum: 2, got: 1 })));
    }

    #[test]
    fn segment_tables_count_every_member() {
        let seed: Vec<Address> = (0..10u128)
            .map(|v| Address::from_bits((v % 3) << 8 | v))
            .collect();
        let model = EntropyModel::build(&seed, 0.1).unwrap();
        for segment in model.segments() {
            let total: u32 = segment.values.iter().map(|(_, c)| c).sum();
            assert_eq!(total, 10);
            assert!(segment.values.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
