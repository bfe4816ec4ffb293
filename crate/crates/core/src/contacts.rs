//! Distribution of the γ closest contacts to a target in one routing table,
//! conditioned on the owner's distance `d` to the target.
//!
//! For `d ≥ 1` the target lies in a bucket whose region holds `2^{d−l}` IDs
//! with probability `L[d][l]`. The bucket contains the target with the
//! probability from [`target_found_prob`]; otherwise its `k_d` entries are
//! i.i.d. uniform over the region and the returned contacts are the γ
//! smallest order statistics of their distances.

use std::collections::BTreeMap;

use crate::binomial;
use crate::state::binomial as choose;
use crate::system::SystemSpec;

/// Masses below this are dropped from a [`ContactDistribution`].
pub const PRUNE_BELOW: f64 = 1e-15;

/// `F_{d,l}(x) = min{1, 2^⌊x⌋ / 2^{d−l}}` for `x ≥ 0`, zero below.
pub fn bucket_cdf(d: u32, l: u32, x: f64) -> f64 {
    debug_assert!(l <= d);
    if x < 0.0 {
        return 0.0;
    }
    region_cdf(d - l, x.floor() as i64)
}

/// CDF of the distance of a uniform contact in a region of `2^span` IDs
/// around the target.
#[inline]
pub fn region_cdf(span: u32, x: i64) -> f64 {
    if x < 0 {
        0.0
    } else if x as u32 >= span {
        1.0
    } else {
        (x as f64 - span as f64).exp2()
    }
}

/// Probability that the bucket covering the target contains it, for a table
/// owner at distance `d ≥ 1` with guaranteed gain `l` and bucket size `k`.
///
/// The other nodes of the region are `M ~ B(n−2, 2^{d−l−b})`; the bucket
/// keeps `k` of the `M+1` region nodes uniformly, so the target is present
/// with probability `min{1, k/(M+1)}`.
pub fn target_found_prob(b: u32, n: u64, k: u32, d: u32, l: u32) -> f64 {
    debug_assert!(d >= 1 && l <= d && d <= b);
    if k == 0 {
        return 0.0;
    }
    let p = ((d - l) as f64 - b as f64).exp2();
    let k = k as f64;
    binomial::expectation(n.saturating_sub(2), p, |m| (k / (m as f64 + 1.0)).min(1.0))
}

/// The γ closest contacts of one routing table.
///
/// Keys are sorted distance tuples. A key shorter than γ means the bucket held
/// fewer than γ entries and the remaining slots are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactDistribution {
    pub terminal_mass: f64,
    pub mass: BTreeMap<Vec<u8>, f64>,
}

impl ContactDistribution {
    pub fn total(&self) -> f64 {
        self.terminal_mass + self.mass.values().sum::<f64>()
    }

    /// Drops entries below `floor` and rescales the remainder to unit mass.
    pub fn prune(&mut self, floor: f64) {
        self.mass.retain(|_, p| *p >= floor);
        let total = self.total();
        if total > 0.0 {
            self.terminal_mass /= total;
            for p in self.mass.values_mut() {
                *p /= total;
            }
        }
    }
}

/// Groups a sorted tuple into `(value, multiplicity)` runs.
fn runs(tuple: &[u8]) -> Vec<(i64, u32)> {
    let mut out: Vec<(i64, u32)> = Vec::new();
    for &v in tuple {
        match out.last_mut() {
            Some((y, c)) if *y == v as i64 => *c += 1,
            _ => out.push((v as i64, 1)),
        }
    }
    out
}

/// Probability that the smallest `tuple.len()` of `draws` i.i.d. values with
/// CDF `cdf` are exactly `tuple` (sorted), closed form.
///
/// Every run but the last contributes `C(C_{i−1}, c_i)·f(y_i)^{c_i}`; the last
/// run needs at least `c` hits at `y` with all remaining draws `≥ y`.
pub fn order_statistic_probability(cdf: impl Fn(i64) -> f64, draws: u32, tuple: &[u8]) -> f64 {
    if tuple.len() as u32 > draws {
        return 0.0;
    }
    let groups = runs(tuple);
    let Some((&(y_last, c_last), head)) = groups.split_last() else {
        return 1.0;
    };
    let mut remaining = draws;
    let mut prob = 1.0;
    for &(y, c) in head {
        let f = cdf(y) - cdf(y - 1);
        prob *= choose(remaining as u64, c as u64) as f64 * f.powi(c as i32);
        remaining -= c;
    }
    let f = cdf(y_last) - cdf(y_last - 1);
    let above = 1.0 - cdf(y_last);
    let mut tail = (1.0 - cdf(y_last - 1)).powi(remaining as i32);
    for j in 0..c_last {
        tail -= choose(remaining as u64, j as u64) as f64
            * f.powi(j as i32)
            * above.powi((remaining - j) as i32);
    }
    prob * tail.max(0.0)
}

/// The same probability as [`order_statistic_probability`], evaluated as the
/// product of per-run conditional binomial factors.
pub fn order_statistic_probability_factored(
    cdf: impl Fn(i64) -> f64,
    draws: u32,
    tuple: &[u8],
) -> f64 {
    if tuple.len() as u32 > draws {
        return 0.0;
    }
    let groups = runs(tuple);
    let last = groups.len().saturating_sub(1);
    let mut remaining = draws;
    let mut prev_cdf = 0.0; // F(y₀) with y₀ = −1
    let mut prob = 1.0;
    for (i, &(y, c)) in groups.iter().enumerate() {
        let below = 1.0 - cdf(y - 1);
        let cond = 1.0 - prev_cdf;
        if cond <= 0.0 || below <= 0.0 {
            return 0.0;
        }
        let reach = (below / cond).powi(remaining as i32);
        let hit = (cdf(y) - cdf(y - 1)) / below;
        if i < last {
            prob *= reach
                * choose(remaining as u64, c as u64) as f64
                * hit.powi(c as i32)
                * (1.0 - hit).powi((remaining - c) as i32);
            remaining -= c;
            prev_cdf = cdf(y);
        } else {
            let mut short = 0.0;
            for j in 0..c {
                short += choose(remaining as u64, j as u64) as f64
                    * hit.powi(j as i32)
                    * (1.0 - hit).powi((remaining - j) as i32);
            }
            prob *= reach * (1.0 - short);
        }
    }
    prob
}

/// Calls `visit` with every sorted tuple of length `len` over `[0, max]`.
pub fn for_each_sorted_tuple(len: usize, max: u8, mut visit: impl FnMut(&[u8])) {
    fn rec(buf: &mut Vec<u8>, len: usize, lo: u8, max: u8, visit: &mut dyn FnMut(&[u8])) {
        if buf.len() == len {
            visit(buf);
            return;
        }
        for v in lo..=max {
            buf.push(v);
            rec(buf, len, v, max, visit);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(len);
    rec(&mut buf, len, 0, max, &mut visit);
}

/// Per-spec cache of the quantities shared by the initial distribution and
/// the transition rows.
#[derive(Debug, Clone)]
pub struct ContactKernel {
    b: u32,
    n: u64,
    /// Effective bucket size per distance.
    buckets: Vec<u32>,
    /// `gains[d]` = non-zero `(l, L[d][l])`.
    gains: Vec<Vec<(u32, f64)>>,
    /// `found[d][i]` = target probability for the i-th gain of row `d`.
    found: Vec<Vec<f64>>,
}

impl ContactKernel {
    pub fn new(spec: &SystemSpec) -> Self {
        Self::with_buckets(spec, spec.k.clone())
    }

    /// Kernel with bucket sizes overridden (e.g. reduced by a fill factor).
    pub fn with_buckets(spec: &SystemSpec, buckets: Vec<u32>) -> Self {
        assert_eq!(buckets.len(), spec.len());
        let gains: Vec<Vec<(u32, f64)>> = (0..spec.len())
            .map(|d| spec.gains(d).map(|(l, w)| (l as u32, w)).collect())
            .collect();
        let found = gains
            .iter()
            .enumerate()
            .map(|(d, row)| {
                row.iter()
                    .map(|&(l, _)| {
                        if d == 0 {
                            1.0
                        } else {
                            target_found_prob(spec.b, spec.n, buckets[d], d as u32, l)
                        }
                    })
                    .collect()
            })
            .collect();
        ContactKernel {
            b: spec.b,
            n: spec.n,
            buckets,
            gains,
            found,
        }
    }

    pub fn bits(&self) -> u32 {
        self.b
    }

    pub fn network_order(&self) -> u64 {
        self.n
    }

    pub fn bucket(&self, d: usize) -> u32 {
        self.buckets[d]
    }

    /// `(l, L[d][l], P(target found | d, l))` for every populated gain.
    pub fn branches(&self, d: usize) -> impl Iterator<Item = (u32, f64, f64)> + '_ {
        self.gains[d]
            .iter()
            .zip(&self.found[d])
            .map(|(&(l, w), &f)| (l, w, f))
    }

    /// Probability that a table at distance `d` contains the target.
    pub fn found(&self, d: usize) -> f64 {
        if d == 0 {
            return 1.0;
        }
        self.branches(d).map(|(_, w, f)| w * f).sum()
    }

    /// Full γ-closest distribution for an owner at distance `d`, unpruned.
    pub fn distribution(&self, d: usize, gamma: usize) -> ContactDistribution {
        let mut out = ContactDistribution {
            terminal_mass: 0.0,
            mass: BTreeMap::new(),
        };
        if d == 0 {
            out.terminal_mass = 1.0;
            return out;
        }
        let k = self.buckets[d];
        let len = gamma.min(k as usize);
        for (l, w, found) in self.branches(d) {
            out.terminal_mass += w * found;
            let rest = w * (1.0 - found);
            if rest <= 0.0 {
                continue;
            }
            let span = d as u32 - l;
            let cdf = |x: i64| region_cdf(span, x);
            for_each_sorted_tuple(len, span as u8, |tuple| {
                let p = order_statistic_probability(cdf, k, tuple);
                if p > 0.0 {
                    *out.mass.entry(tuple.to_vec()).or_insert(0.0) += rest * p;
                }
            });
        }
        out
    }
}

/// Distribution of the γ closest contacts for an owner at distance `d`,
/// with masses below [`PRUNE_BELOW`] dropped and the rest renormalized.
pub fn closest_contacts(spec: &SystemSpec, d: u32, gamma: u32) -> ContactDistribution {
    assert!(d <= spec.b, "distance beyond b");
    let mut dist = ContactKernel::new(spec).distribution(d as usize, gamma as usize);
    dist.prune(PRUNE_BELOW);
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Preset;

    #[test]
    fn cdf_examples() {
        assert_eq!(bucket_cdf(5, 2, 3.0), 1.0);
        assert_eq!(bucket_cdf(5, 2, 0.0), 0.125);
        assert_eq!(bucket_cdf(5, 2, 2.0), 0.5);
        assert_eq!(bucket_cdf(5, 2, 2.7), 0.5);
        assert_eq!(bucket_cdf(5, 2, -1.0), 0.0);
        assert_eq!(bucket_cdf(5, 2, 9.0), 1.0);
    }

    #[test]
    fn found_is_near_one_for_sparse_region() {
        // expected 1e-3 other nodes in the region, bucket of 8
        let p = target_found_prob(40, 1000, 8, 20, 1);
        assert!(p > 1.0 - 1e-12 && p <= 1.0);
    }

    #[test]
    fn found_small_case_by_hand() {
        // b=4, d=4, l=1, n=6, k=2: M ~ B(4, 1/2), q = min(1, 2/(M+1))
        let pm = [1.0, 4.0, 6.0, 4.0, 1.0].map(|c: f64| c / 16.0);
        let expect: f64 = pm
            .iter()
            .enumerate()
            .map(|(m, p)| p * (2.0 / (m as f64 + 1.0)).min(1.0))
            .sum();
        assert!((target_found_prob(4, 6, 2, 4, 1) - expect).abs() < 1e-15);
    }

    #[test]
    fn found_decreases_with_network_order() {
        let mut last = 1.0;
        for n in [10u64, 100, 1000, 10_000, 100_000] {
            let p = target_found_prob(16, n, 8, 14, 1);
            assert!(p <= last + 1e-15);
            last = p;
        }
    }

    #[test]
    fn distance_zero_is_terminal() {
        let spec = SystemSpec::preset(Preset::Kad, 10, 1000, 3, 2).unwrap();
        let dist = closest_contacts(&spec, 0, 2);
        assert_eq!(dist.terminal_mass, 1.0);
        assert!(dist.mass.is_empty());
    }

    #[test]
    fn normalized_with_support_below_d() {
        for preset in Preset::ALL {
            let spec = SystemSpec::preset(preset, 14, 100_000, 3, 2).unwrap();
            let kernel = ContactKernel::new(&spec);
            for d in 1..=14usize {
                for gamma in [2usize, 3] {
                    let dist = kernel.distribution(d, gamma);
                    assert!((dist.total() - 1.0).abs() < 1e-9, "{preset} d={d}");
                    let lmin = spec.gains(d).map(|(l, _)| l).min().unwrap();
                    for key in dist.mass.keys() {
                        assert!(key.iter().all(|&x| (x as usize) <= d - lmin));
                    }
                }
            }
        }
    }

    #[test]
    fn single_run_is_the_tail_term() {
        let cdf = |x: i64| region_cdf(3, x);
        // three draws, closest two both at distance 2
        let p = order_statistic_probability(cdf, 3, &[2, 2]);
        let f = cdf(2) - cdf(1);
        let above = 1.0 - cdf(2);
        let expect = (1.0 - cdf(1)).powi(3) - above.powi(3) - 3.0 * f * above.powi(2);
        assert!((p - expect).abs() < 1e-15);
    }

    #[test]
    fn empty_bucket_returns_no_contacts() {
        let mut spec = SystemSpec::preset(Preset::Mdht, 6, 50, 2, 2).unwrap();
        spec.k[4] = 0;
        let dist = ContactKernel::new(&spec).distribution(4, 2);
        assert_eq!(dist.terminal_mass, 0.0);
        assert_eq!(dist.mass.len(), 1);
        assert_eq!(dist.mass[&Vec::new()], 1.0);
    }
}
