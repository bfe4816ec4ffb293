//! Distinct-contact resolution for one round of returned contacts.
//!
//! Returned contacts at different distances never coincide, so the
//! distinctness of the α·β returned contacts factorizes over distances. At a
//! distance `a`, node `j` returned `c_j` contacts. The node with the most
//! contacts there (lowest index on ties) is the definitive set `Y*`; every
//! other contact survives with probability `E[M/(M + count)]`, where `M` is
//! the number of uncontacted nodes at distance `a` and `count` the number of
//! already-accepted contacts it might coincide with.

use std::collections::HashMap;
use std::sync::Arc;

use crate::binomial;

/// Survival probabilities `g(a, count)` and cached survivor-count laws.
pub(crate) struct Distinctness {
    /// `near[a][count]` for `count ∈ 0..=α·β`.
    near: Vec<Vec<f64>>,
    /// Survival against the fixed contacted-node cap, per distance.
    far: Vec<f64>,
    cache: HashMap<u64, Arc<Vec<f64>>>,
}

/// Probability that an uncontacted node at distance `a` is picked when `m`
/// such nodes compete with `count` contacted ones, averaged over `m`.
fn survival_row(b: u32, n: u64, alpha: u32, beta: u32, a: u32, counts: &[u64]) -> Vec<f64> {
    let q = if a == 0 {
        (-(b as f64)).exp2()
    } else {
        (a as f64 - 1.0 - b as f64).exp2()
    };
    let trials = n.saturating_sub(alpha as u64 * beta as u64);
    let mut acc = vec![0.0; counts.len()];
    binomial::for_each_weight(trials, q, |m, w| {
        let m = m as f64;
        for (slot, &c) in acc.iter_mut().zip(counts) {
            *slot += if c == 0 { w } else { w * m / (m + c as f64) };
        }
    });
    acc
}

impl Distinctness {
    /// `far_count` is the contacted-node cap used beyond the minimal queried
    /// distance in the lower bound (`α·b`, or `htl·α` under churn).
    pub(crate) fn new(b: u32, n: u64, alpha: u32, beta: u32, far_count: u64) -> Self {
        let mut counts: Vec<u64> = (0..=(alpha * beta) as u64).collect();
        counts.push(far_count);
        let mut near = Vec::with_capacity(b as usize + 1);
        let mut far = Vec::with_capacity(b as usize + 1);
        for a in 0..=b {
            let mut row = survival_row(b, n, alpha, beta, a, &counts);
            far.push(row.pop().unwrap());
            near.push(row);
        }
        Distinctness {
            near,
            far,
            cache: HashMap::new(),
        }
    }

    #[cfg(test)]
    pub(crate) fn survival(&self, a: usize, count: usize) -> f64 {
        self.near[a][count]
    }

    /// Law of the number of distinct contacts at distance `a` given the
    /// per-node counts `c` (packed 4 bits per node). `capped` selects the
    /// fixed contacted-node cap instead of the round-local count.
    pub(crate) fn law(&mut self, a: usize, capped: bool, packed: u64, alpha: usize) -> Arc<Vec<f64>> {
        let key = packed | ((a as u64) << 48) | ((capped as u64) << 56);
        if let Some(hit) = self.cache.get(&key) {
            return Arc::clone(hit);
        }
        let counts: Vec<usize> = (0..alpha).map(|j| ((packed >> (4 * j)) & 0xF) as usize).collect();
        let law = Arc::new(if capped {
            capped_law(self.far[a], counts.iter().sum())
        } else {
            round_law(&self.near[a], &counts)
        });
        self.cache.insert(key, Arc::clone(&law));
        law
    }
}

/// All contacts compete against the cap independently.
fn capped_law(g: f64, total: usize) -> Vec<f64> {
    (0..=total)
        .map(|s| crate::binomial::small_pmf(total as u32, g, s as u32))
        .collect()
}

/// Survivor count when only this round's contacts can coincide.
pub(crate) fn round_law(g: &[f64], counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let mut out = vec![0.0; total + 1];
    if total == 0 {
        out[0] = 1.0;
        return out;
    }
    let (star, &c_max) = counts
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(&x.0)))
        .unwrap();

    // law[s]: s survivors among non-definitive contacts of earlier nodes
    let mut law = vec![0.0; total + 1];
    law[0] = 1.0;
    for (j, &c) in counts.iter().enumerate() {
        if j == star || c == 0 {
            continue;
        }
        let mut next = vec![0.0; total + 1];
        for (s, &p) in law.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            // own[dup] over this node's contacts processed so far
            let mut own = vec![0.0; c + 1];
            own[0] = 1.0;
            for _ in 0..c {
                let mut step = vec![0.0; c + 1];
                for (dup, &q) in own.iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    let keep = g[c_max + s - dup];
                    step[dup] += q * keep;
                    step[dup + 1] += q * (1.0 - keep);
                }
                own = step;
            }
            for (dup, &q) in own.iter().enumerate() {
                next[s + c - dup] += p * q;
            }
        }
        law = next;
    }
    for (s, &p) in law.iter().enumerate() {
        if p > 0.0 {
            out[c_max + s] += p;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_contacts_are_definitive() {
        let g = vec![1.0, 0.5, 0.4, 0.3, 0.2];
        assert_eq!(round_law(&g, &[0, 2, 0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn two_nodes_one_contact_each() {
        let g = vec![1.0, 0.7, 0.5];
        // node 0 is Y*, node 1's contact survives with g(1)
        let law = round_law(&g, &[1, 1]);
        assert!((law[1] - 0.3).abs() < 1e-15);
        assert!((law[2] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn own_duplicates_lower_the_count() {
        let g = vec![1.0, 0.9, 0.6, 0.3, 0.1];
        // Y* = node 0 (2 contacts); node 1 has 2 contacts.
        // first: count 2; second: count 2 - dup
        let law = round_law(&g, &[2, 2]);
        let (g2, g1) = (g[2], g[1]);
        let expect4 = g2 * g2;
        let expect3 = g2 * (1.0 - g2) + (1.0 - g2) * g1;
        let expect2 = (1.0 - g2) * (1.0 - g1);
        assert!((law[4] - expect4).abs() < 1e-15);
        assert!((law[3] - expect3).abs() < 1e-15);
        assert!((law[2] - expect2).abs() < 1e-15);
    }

    #[test]
    fn survival_is_decreasing_in_count() {
        let d = Distinctness::new(14, 100_000, 3, 2, 42);
        for a in 0..=14 {
            for c in 1..6 {
                assert!(d.survival(a, c + 1) <= d.survival(a, c));
            }
            assert!((d.survival(a, 0) - 1.0).abs() < 1e-12);
        }
        // crowded distances almost never repeat a contact
        assert!(d.survival(14, 6) > 0.999);
    }

    #[test]
    fn laws_are_normalized() {
        let mut d = Distinctness::new(10, 5000, 3, 2, 30);
        for packed in [0x000u64, 0x121, 0x222, 0x012, 0x210] {
            for capped in [false, true] {
                let law = d.law(5, capped, packed, 3);
                assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
