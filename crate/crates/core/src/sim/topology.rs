//! Static Kademlia topologies with maximally full buckets.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::system::{distance, SystemSpec};

/// One bucket of a routing table: the aligned ID block it covers and its
/// capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketRegion {
    /// Distance from the owner of every ID in the block.
    pub d: u32,
    /// Guaranteed gain: the block holds `2^{d−l}` IDs.
    pub l: u32,
    pub lo: u128,
    pub capacity: u32,
}

impl BucketRegion {
    pub fn size_log2(&self) -> u32 {
        self.d - self.l
    }

    pub fn contains(&self, id: u128) -> bool {
        block_of(id, self.size_log2()) == self.lo
    }
}

/// Lowest ID of the aligned block of `2^e` IDs containing `id`.
#[inline]
pub(crate) fn block_of(id: u128, e: u32) -> u128 {
    if e >= 128 {
        0
    } else {
        id & !((1u128 << e) - 1)
    }
}

/// Last ID of the aligned block of `2^e` IDs starting at `lo`.
#[inline]
pub(crate) fn block_end(lo: u128, e: u32) -> u128 {
    if e >= 128 {
        u128::MAX
    } else {
        lo + ((1u128 << e) - 1)
    }
}

/// Bucket blocks at distance `d` from `owner`.
///
/// The `2^{d−1}` IDs at distance `d` are split, highest XOR offsets first and
/// gains in ascending order, into `L[d][l]·2^{l−1}` aligned blocks of
/// `2^{d−l}` IDs each.
pub fn bucket_regions(spec: &SystemSpec, owner: u128, d: u32) -> Result<Vec<BucketRegion>> {
    let mut out = Vec::new();
    let half = d - 1;
    let mut cursor: u128 = 1u128 << half;
    for (l, w) in spec.gains(d as usize) {
        let l = l as u32;
        if l == 0 || l > d {
            return Err(Error::Topology(format!("gain {l} at distance {d} has no block layout")));
        }
        let blocks = w * (l as f64 - 1.0).exp2();
        let count = blocks.round();
        if (blocks - count).abs() > 1e-9 {
            return Err(Error::Topology(format!(
                "L[{d}][{l}] = {w} does not split distance {d} into whole blocks"
            )));
        }
        let e = d - l;
        let size = 1u128 << e;
        for _ in 0..count as u64 {
            if cursor < size {
                return Err(Error::Topology(format!("row {d} of L covers more than its level")));
            }
            cursor -= size;
            let offset = (1u128 << half) + cursor;
            out.push(BucketRegion {
                d,
                l,
                lo: block_of(owner ^ offset, e),
                capacity: spec.k[d as usize],
            });
        }
    }
    if cursor != 0 {
        return Err(Error::Topology(format!("row {d} of L leaves part of its level uncovered")));
    }
    Ok(out)
}

/// `n` node IDs and one routing table per node.
#[derive(Debug, Clone)]
pub struct Topology {
    bits: u32,
    seed: u64,
    /// Sorted, distinct.
    ids: Vec<u128>,
    offsets: Vec<usize>,
    /// Contact node indices per owner, ascending (hence sorted by ID).
    contacts: Vec<u32>,
}

/// Index range of `ids[list[..]]` inside `[lo, hi]`.
fn range_in(ids: &[u128], list: &[u32], lo: u128, hi: u128) -> std::ops::Range<usize> {
    let a = list.partition_point(|&c| ids[c as usize] < lo);
    let b = list.partition_point(|&c| ids[c as usize] <= hi);
    a..b
}

impl Topology {
    /// Draws `spec.n` distinct IDs uniformly from `[0, 2^b)` and fills every
    /// bucket with a uniform subset of its region's nodes (all of them when
    /// they fit).
    pub fn generate(spec: &SystemSpec, seed: u64) -> Result<Self> {
        let bits = spec.b;
        let n = spec.n;
        if n < 2 {
            return Err(Error::Topology("at least two nodes are required".into()));
        }
        if bits < 128 && (n as u128) > (1u128 << bits) {
            return Err(Error::Topology(format!("{n} nodes do not fit into {bits} bits")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = if bits >= 128 { u128::MAX } else { (1u128 << bits) - 1 };
        let mut ids: Vec<u128> = Vec::with_capacity(n as usize);
        while (ids.len() as u64) < n {
            while (ids.len() as u64) < n {
                ids.push(rng.random::<u128>() & mask);
            }
            ids.sort_unstable();
            ids.dedup();
        }

        let mut offsets = Vec::with_capacity(n as usize + 1);
        let mut contacts: Vec<u32> = Vec::new();
        offsets.push(0);
        let all: Vec<u32> = (0..n as u32).collect();
        for &owner in &ids {
            let start = contacts.len();
            for d in (1..=bits).rev() {
                // nodes within distance d of the owner, itself included
                let lo = block_of(owner, d);
                let within = range_in(&ids, &all, lo, block_end(lo, d));
                if within.len() <= 1 {
                    break;
                }
                for region in bucket_regions(spec, owner, d)? {
                    let e = region.size_log2();
                    let r = range_in(&ids, &all, region.lo, block_end(region.lo, e));
                    let m = r.len();
                    let k = region.capacity as usize;
                    if m <= k {
                        contacts.extend(r.map(|i| i as u32));
                    } else {
                        contacts.extend(index::sample(&mut rng, m, k).iter().map(|i| (r.start + i) as u32));
                    }
                }
            }
            contacts[start..].sort_unstable();
            offsets.push(contacts.len());
        }
        Ok(Topology {
            bits,
            seed,
            ids,
            offsets,
            contacts,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, node: u32) -> u128 {
        self.ids[node as usize]
    }

    pub fn ids(&self) -> &[u128] {
        &self.ids
    }

    /// Routing-table entries of `node`, sorted by ID.
    pub fn table(&self, node: u32) -> &[u32] {
        &self.contacts[self.offsets[node as usize]..self.offsets[node as usize + 1]]
    }

    pub fn total_contacts(&self) -> usize {
        self.contacts.len()
    }

    /// Entries of `node`'s table inside the aligned block of `2^e` IDs
    /// around `id`.
    pub fn table_block(&self, node: u32, id: u128, e: u32) -> &[u32] {
        let table = self.table(node);
        let lo = block_of(id, e);
        &table[range_in(&self.ids, table, lo, block_end(lo, e))]
    }

    /// Nodes of the whole network inside `[lo, hi]`.
    pub fn population(&self, lo: u128, hi: u128) -> usize {
        let a = self.ids.partition_point(|&x| x < lo);
        let b = self.ids.partition_point(|&x| x <= hi);
        b - a
    }

    /// Checks the structural invariants: no self entries, no duplicates, no
    /// bucket over capacity, and every under-full bucket holding its whole
    /// region. Returns the first violation found.
    pub fn audit(&self, spec: &SystemSpec) -> Result<()> {
        for v in 0..self.len() as u32 {
            let owner = self.id(v);
            let table = self.table(v);
            if table.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Topology(format!("node {v}: duplicate or unsorted entries")));
            }
            if table.contains(&v) {
                return Err(Error::Topology(format!("node {v}: self entry")));
            }
            let mut covered = 0usize;
            for d in 1..=self.bits {
                let lo = block_of(owner, d);
                if self.population(lo, block_end(lo, d)) <= 1 {
                    continue;
                }
                for region in bucket_regions(spec, owner, d)? {
                    let e = region.size_log2();
                    let held = self.table_block(v, region.lo, e).len();
                    let present = self.population(region.lo, block_end(region.lo, e));
                    if held > region.capacity as usize {
                        return Err(Error::Topology(format!("node {v}: bucket over capacity")));
                    }
                    if held < region.capacity as usize && held != present {
                        return Err(Error::Topology(format!(
                            "node {v}: bucket at distance {d} holds {held} of {present} nodes"
                        )));
                    }
                    covered += held;
                }
            }
            if covered != table.len() {
                return Err(Error::Topology(format!("node {v}: entries outside every bucket")));
            }
            debug_assert!(table.iter().all(|&c| distance(owner, self.id(c)) > 0));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Preset;

    #[test]
    fn kad_level_layout() {
        let spec = SystemSpec::preset(Preset::Kad, 16, 100, 3, 2).unwrap();
        let owner = 0x1234u128;
        let regions = bucket_regions(&spec, owner, 10).unwrap();
        assert_eq!(regions.len(), 5);
        let sizes: Vec<u32> = regions.iter().map(|r| r.size_log2()).collect();
        assert_eq!(sizes, vec![7, 7, 7, 6, 6]);
        for r in &regions {
            assert_eq!(distance(owner, r.lo), 10);
            assert_eq!(distance(owner, block_end(r.lo, r.size_log2())), 10);
        }
        let top = bucket_regions(&spec, owner, 16).unwrap();
        assert_eq!(top.len(), 8);
    }

    #[test]
    fn small_networks_know_everyone() {
        let spec = SystemSpec::preset(Preset::Mdht, 4, 3, 1, 1).unwrap();
        for seed in 0..20 {
            let t = Topology::generate(&spec, seed).unwrap();
            assert_eq!(t.table(0), &[1, 2]);
            assert_eq!(t.table(1), &[0, 2]);
            assert_eq!(t.table(2), &[0, 1]);
        }
    }

    #[test]
    fn audit_passes_and_is_deterministic() {
        for preset in Preset::ALL {
            let spec = SystemSpec::preset(preset, 16, 400, 3, 2).unwrap();
            let a = Topology::generate(&spec, 7).unwrap();
            a.audit(&spec).unwrap();
            let b = Topology::generate(&spec, 7).unwrap();
            assert_eq!(a.ids, b.ids);
            assert_eq!(a.contacts, b.contacts);
        }
    }

    #[test]
    fn too_many_nodes() {
        let spec = SystemSpec::preset(Preset::Mdht, 4, 17, 1, 1).unwrap();
        assert!(Topology::generate(&spec, 1).is_err());
    }
}
