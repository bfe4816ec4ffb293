//! Direct sampling of one routing table's bucket for the target, used to
//! check the closest-contacts kernel.
//!
//! The owner sits at distance `d` from the target. With probability `w_l`
//! the covering bucket spans `2^{d−l}` IDs around the target. The other
//! `n − 2` nodes fall into that region independently; the bucket keeps `k`
//! of the region's nodes (target included) chosen uniformly.

use std::collections::BTreeMap;

use rand::distr::{Distribution as _, weighted::WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use crate::contacts::ContactDistribution;
use crate::state::binomial as choose;

/// One bucket configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCase {
    pub b: u32,
    pub n: u64,
    pub k: u32,
    /// `(l, L[d][l])` pairs with positive weight summing to one.
    pub row: Vec<(u32, f64)>,
    pub d: u32,
    pub gamma: u32,
}

/// Sampled distribution together with the number of draws behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate {
    pub dist: ContactDistribution,
    /// Zero for an exact enumeration.
    pub trials: u64,
}

impl OracleEstimate {
    /// Standard error of an outcome with estimated probability `p`.
    pub fn std_error(&self, p: f64) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            (p * (1.0 - p) / self.trials as f64).sqrt()
        }
    }

    /// Largest absolute difference from `other` over all outcomes.
    pub fn max_abs_diff(&self, other: &ContactDistribution) -> f64 {
        let mut worst = (self.dist.terminal_mass - other.terminal_mass).abs();
        for (key, &p) in &other.mass {
            worst = worst.max((self.dist.mass.get(key).copied().unwrap_or(0.0) - p).abs());
        }
        for (key, &p) in &self.dist.mass {
            if !other.mass.contains_key(key) {
                worst = worst.max(p);
            }
        }
        worst
    }

    /// Largest deviation from `other` in units of the standard error, taken
    /// over every outcome either side assigns mass to. Outcomes whose
    /// expected count is tiny get the one-draw error as a floor.
    pub fn max_sigma(&self, other: &ContactDistribution) -> f64 {
        let floor = if self.trials == 0 { 1e-12 } else { 1.0 / self.trials as f64 };
        let mut worst = 0.0f64;
        let mut check = |est: f64, exact: f64| {
            let se = self.std_error(exact).max(floor);
            worst = worst.max((est - exact).abs() / se);
        };
        check(self.dist.terminal_mass, other.terminal_mass);
        for (key, &p) in &other.mass {
            check(self.dist.mass.get(key).copied().unwrap_or(0.0), p);
        }
        for (key, &p) in &self.dist.mass {
            if !other.mass.contains_key(key) {
                check(p, 0.0);
            }
        }
        worst
    }
}

/// Distance class of a uniform ID in an aligned block of `2^span` IDs
/// around the target: 0 for the target itself, else the XOR bit length.
fn class_of(offset: u64) -> u8 {
    (64 - offset.leading_zeros()) as u8
}

/// Probability of each distance class `0..=span` for a uniform region ID.
fn class_pmf(span: u32) -> Vec<f64> {
    (0..=span)
        .map(|x| {
            if x == 0 {
                (-(span as f64)).exp2()
            } else {
                (x as f64 - 1.0 - span as f64).exp2()
            }
        })
        .collect()
}

fn empty() -> ContactDistribution {
    ContactDistribution {
        terminal_mass: 0.0,
        mass: BTreeMap::new(),
    }
}

/// Monte-Carlo estimate from `trials` independent bucket draws.
pub fn kernel_oracle(case: &KernelCase, trials: u64, seed: u64) -> OracleEstimate {
    assert!(case.d <= case.b && case.b <= 63, "case outside the sampled range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    let mut terminal = 0u64;
    if case.d == 0 {
        let mut dist = empty();
        dist.terminal_mass = 1.0;
        return OracleEstimate { dist, trials };
    }
    let pick = WeightedIndex::new(case.row.iter().map(|r| r.1)).expect("positive row weights");
    let laws: Vec<Binomial> = case
        .row
        .iter()
        .map(|&(l, _)| {
            let q = ((case.d - l) as f64 - case.b as f64).exp2();
            Binomial::new(case.n - 2, q).expect("valid binomial")
        })
        .collect();
    let len = case.gamma.min(case.k) as usize;
    let mut entries: Vec<u8> = Vec::with_capacity(case.k as usize);
    for _ in 0..trials {
        let i = pick.sample(&mut rng);
        let span = case.d - case.row[i].0;
        let others = laws[i].sample(&mut rng) as usize;
        // slot 0 is the target
        let chosen = index::sample(&mut rng, others + 1, (case.k as usize).min(others + 1));
        if case.k == 0 || chosen.iter().any(|j| j == 0) {
            terminal += 1;
            continue;
        }
        entries.clear();
        for _ in 0..chosen.len() {
            let offset = if span == 0 { 0 } else { rng.random_range(0..1u64 << span) };
            entries.push(class_of(offset));
        }
        entries.sort_unstable();
        *counts.entry(entries[..len].to_vec()).or_insert(0) += 1;
    }
    let total = trials as f64;
    OracleEstimate {
        dist: ContactDistribution {
            terminal_mass: terminal as f64 / total,
            mass: counts.into_iter().map(|(key, c)| (key, c as f64 / total)).collect(),
        },
        trials,
    }
}

/// Every `k`-subset of `0..m` as a bit mask.
fn subsets(m: usize, k: usize, mut visit: impl FnMut(u64)) {
    for mask in 0u64..(1u64 << m) {
        if mask.count_ones() as usize == k {
            visit(mask);
        }
    }
}

/// Exact distribution by enumerating the region population, the bucket's
/// subset and the distance class of every chosen node.
pub fn kernel_exhaustive(case: &KernelCase) -> OracleEstimate {
    assert!(case.b <= 5 && case.n <= 8, "exhaustive oracle limited to b ≤ 5, n ≤ 8");
    let mut dist = empty();
    if case.d == 0 {
        dist.terminal_mass = 1.0;
        return OracleEstimate { dist, trials: 0 };
    }
    let k = case.k as usize;
    let len = (case.gamma as usize).min(k);
    for &(l, w) in &case.row {
        let span = case.d - l;
        let pmf = class_pmf(span);
        let q = (span as f64 - case.b as f64).exp2();
        let trials = case.n - 2;
        for others in 0..=trials {
            let p_m = choose(trials, others) as f64
                * q.powi(others as i32)
                * (1.0 - q).powi((trials - others) as i32);
            let pop = others as usize + 1;
            let take = k.min(pop);
            let each = 1.0 / choose(pop as u64, take as u64) as f64;
            subsets(pop, take, |mask| {
                let weight = w * p_m * each;
                if k == 0 || mask & 1 == 1 {
                    dist.terminal_mass += weight;
                    return;
                }
                // classes of the `take` chosen nodes, all combinations
                let mut classes = vec![0u8; take];
                loop {
                    let p: f64 = classes.iter().map(|&c| pmf[c as usize]).product();
                    let mut key = classes.clone();
                    key.sort_unstable();
                    key.truncate(len);
                    *dist.mass.entry(key).or_insert(0.0) += weight * p;
                    // odometer
                    let mut pos = 0;
                    while pos < take && classes[pos] as u32 == span {
                        classes[pos] = 0;
                        pos += 1;
                    }
                    if pos == take {
                        break;
                    }
                    classes[pos] += 1;
                }
            });
        }
    }
    OracleEstimate { dist, trials: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(b: u32, n: u64, k: u32, d: u32, gamma: u32) -> KernelCase {
        KernelCase {
            b,
            n,
            k,
            row: vec![(1, 1.0)],
            d,
            gamma,
        }
    }

    #[test]
    fn distance_zero_is_terminal() {
        let case = single(4, 6, 2, 0, 1);
        assert_eq!(kernel_oracle(&case, 10, 1).dist.terminal_mass, 1.0);
        assert_eq!(kernel_exhaustive(&case).dist.terminal_mass, 1.0);
    }

    #[test]
    fn exhaustive_is_normalized() {
        let case = KernelCase {
            b: 5,
            n: 8,
            k: 2,
            row: vec![(1, 0.75), (2, 0.25)],
            d: 5,
            gamma: 2,
        };
        let e = kernel_exhaustive(&case);
        assert!((e.dist.total() - 1.0).abs() < 1e-12);
        assert!(e.dist.mass.keys().all(|key| key.len() == 2));
    }

    #[test]
    fn sampling_agrees_with_enumeration() {
        let case = single(4, 6, 2, 4, 1);
        let exact = kernel_exhaustive(&case).dist;
        let est = kernel_oracle(&case, 200_000, 3);
        assert!(est.max_sigma(&exact) < 4.0);
    }

    #[test]
    fn class_pmf_sums_to_one() {
        for span in 0..10 {
            assert!((class_pmf(span).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(class_of(0), 0);
        assert_eq!(class_of(5), 3);
    }
}
