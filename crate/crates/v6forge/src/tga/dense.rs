//! Dense-region generation: recursive space partitioning plus per-region
//! expansion.
//!
//! The seed is split into regions by repeatedly fixing the nibble position
//! with the smallest non-zero entropy (the dimension the members already
//! almost agree on), until a region is small enough. Each region is then a
//! pattern — fixed nibbles plus free "wildcard" dimensions — and candidates
//! are drawn from that pattern: exhaustively when fewer than four wildcards
//! keep the combination space at most 16³, by member-resampling otherwise.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::addr::{Address, NIBBLE_COUNT};
use crate::seed;
use crate::tga::{finalize, nibble_entropies, CandidateSet, TgaError};

/// One nibble position of a region pattern: shared by every member, or
/// free with the observed value multiset (counts indexed by nibble value).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Slot {
    Fixed(u8),
    Wildcard([u32; 16]),
}

/// A mined seed region: 32 pattern slots plus the member addresses the
/// pattern was learned from. Every Wildcard slot has at least two distinct
/// observed values; every Fixed slot's value appears in all members.
#[derive(Clone, Debug)]
pub struct PatternRegion {
    slots: Vec<Slot>,
    members: Vec<Address>,
}

impl PatternRegion {
    /// Learn the pattern of a member set. Members are deduplicated and
    /// sorted; at least one is required.
    pub fn from_members(members: impl IntoIterator<Item = Address>) -> Result<Self, TgaError> {
        let members: Vec<Address> = members
            .into_iter()
            .collect::<BTreeSet<Address>>()
            .into_iter()
            .collect();
        if members.is_empty() {
            return Err(TgaError::EmptySeed);
        }
        let slots = (0..NIBBLE_COUNT)
            .map(|pos| {
                let mut counts = [0u32; 16];
                for a in &members {
                    counts[usize::from(a.nibble(pos))] += 1;
                }
                if counts.iter().filter(|&&c| c > 0).count() == 1 {
                    Slot::Fixed(members[0].nibble(pos))
                } else {
                    Slot::Wildcard(counts)
                }
            })
            .collect();
        Ok(PatternRegion { slots, members })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn members(&self) -> &[Address] {
        &self.members
    }

    pub fn wildcard_count(&self) -> usize {
        self.wildcard_positions().len()
    }

    pub fn wildcard_positions(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, Slot::Wildcard(_)))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Recursively partition a seed into pattern regions.
///
/// A node is emitted as a region once its members all agree on every nibble
/// or number at most `leaf_max`; otherwise it splits on the nibble position
/// with the smallest non-zero entropy (ties to the lowest index), one child
/// per observed value. Every seed address lands in exactly one region.
pub fn partition(seed: &[Address], leaf_max: usize) -> Result<Vec<PatternRegion>, TgaError> {
    let distinct: Vec<Address> = seed
        .iter()
        .copied()
        .collect::<BTreeSet<Address>>()
        .into_iter()
        .collect();
    if distinct.is_empty() {
        return Err(TgaError::EmptySeed);
    }
    let mut regions = Vec::new();
    split(distinct, leaf_max.max(1), &mut regions)?;
    Ok(regions)
}

fn split(
    members: Vec<Address>,
    leaf_max: usize,
    out: &mut Vec<PatternRegion>,
) -> Result<(), TgaError> {
    if members.len() <= leaf_max {
        out.push(PatternRegion::from_members(members)?);
        return Ok(());
    }
    let entropies = nibble_entropies(&members);
    let split_pos = entropies
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0.0)
        .min_by(|(i, a), (j, b)| a.partial_cmp(b).expect("finite entropy").then(i.cmp(j)))
        .map(|(i, _)| i)
        .expect("more addresses than leaf_max implies a varying nibble");

    let mut children: BTreeMap<u8, Vec<Address>> = BTreeMap::new();
    for a in members {
        children.entry(a.nibble(split_pos)).or_default().push(a);
    }
    for (_, child) in children {
        split(child, leaf_max, out)?;
    }
    Ok(())
}

/// Generate candidate addresses from one region.
///
/// With fewer than four wildcards the full combination space (16^w
/// addresses, every value per free nibble) is emitted, truncated uniformly
/// at random to `budget` if larger. With four or more, exhaustion is off
/// the table, so members are copied and their wildcard nibbles resampled
/// from the observed value distribution until `budget` distinct non-member
/// addresses exist or the stall limit (`budget` × 100 draws) is hit.
/// Deterministic for a given `rng_seed`.
pub fn generate_from_region(
    region: &PatternRegion,
    budget: usize,
    rng_seed: u64,
) -> BTreeSet<Address> {
    let mut rng = seed::rng_from(rng_seed, &[seed::salt_str("dense-region")]);
    let positions = region.wildcard_positions();

    if positions.len() < 4 {
        let total = 16usize.pow(positions.len() as u32);
        let template = region.members()[0];
        let mut combos: Vec<Address> = (0..total)
            .map(|combo| {
                let mut a = template;
                for (j, &pos) in positions.iter().enumerate() {
                    a = a.with_nibble(pos, (combo >> (4 * j) & 0xf) as u8);
                }
                a
            })
            .collect();
        if combos.len() > budget {
            combos.shuffle(&mut rng);
            combos.truncate(budget);
        }
        return combos.into_iter().collect();
    }

    let member_set: HashSet<Address> = region.members().iter().copied().collect();
    let weights: Vec<(usize, &[u32; 16], u32)> = positions
        .iter()
        .map(|&pos| match &region.slots()[pos] {
            Slot::Wildcard(counts) => (pos, counts, counts.iter().sum()),
            Slot::Fixed(_) => unreachable!("positions holds only wildcards"),
        })
        .collect();

    let mut out = BTreeSet::new();
    let stall_limit = budget.saturating_mul(100);
    let mut draws = 0usize;
    while out.len() < budget && draws < stall_limit {
        draws += 1;
        let mut a = region.members()[rng.random_range(0..region.members().len())];
        for &(pos, counts, total) in &weights {
            let mut pick = rng.random_range(0..total);
            let mut value = 0u8;
            for (v, &c) in counts.iter().enumerate() {
                if pick < c {
                    value = v as u8;
                    break;
                }
                pick -= c;
            }
            a = a.with_nibble(pos, value);
        }
        if !member_set.contains(&a) {
            out.insert(a);
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct DenseParams {
    pub budget: usize,
    pub leaf_max: usize,
    pub rng_seed: u64,
}

impl Default for DenseParams {
    fn default() -> Self {
        DenseParams {
            budget: 100_000,
            leaf_max: 16,
            rng_seed: 0,
        }
    }
}

/// Run the full dense generator: partition, divide the budget across
/// regions proportionally to member count (remainder to the largest
/// regions), generate per region in parallel on independent derived random
/// streams, and finalize. Returns the candidate set and the mined regions.
pub fn dense_generate(
    seed_addrs: &[Address],
    params: &DenseParams,
    seed_label: &str,
) -> Result<(CandidateSet, Vec<PatternRegion>), TgaError> {
    let regions = partition(seed_addrs, params.leaf_max)?;
    let total_members: usize = regions.iter().map(|r| r.members().len()).sum();

    let mut budgets: Vec<usize> = regions
        .iter()
        .map(|r| params.budget * r.members().len() / total_members)
        .collect();
    let remainder = params.budget - budgets.iter().sum::<usize>();
    let mut by_size: Vec<usize> = (0..regions.len()).collect();
    by_size.sort_by_key(|&i| (std::cmp::Reverse(regions[i].members().len()), i));
    for &i in by_size.iter().take(remainder) {
        budgets[i] += 1;
    }

    let per_region: Vec<BTreeSet<Address>> = regions
        .par_iter()
        .zip(budgets.par_iter())
        .enumerate()
        .map(|(index, (region, &budget))| {
            let region_seed = seed::derive(params.rng_seed, &[seed::salt_str("dense"), index as u64]);
            generate_from_region(region, budget, region_seed)
        })
        .collect();

    let raw = per_region.into_iter().flatten();
    Ok((finalize(raw, seed_addrs, "dense", seed_label), regions))
}
