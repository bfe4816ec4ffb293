//! Markov chain over queried-contact distances: initial distribution,
//! bound transition matrices, and hop-count iteration.

mod row;
mod survivors;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contacts::ContactKernel;
use crate::error::{Error, Result};
use crate::state::{State, StateSpace};
use crate::system::SystemSpec;

use row::{RowBuilder, Scratch};
use survivors::Distinctness;

/// Largest α·β the transition construction accepts.
pub const MAX_RETURNED: u32 = 12;

/// Largest joint node-state space per row.
const MAX_JOINT_STATES: usize = 1 << 20;

/// Which bound on the termination probability a matrix realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// Replacement contacts at the largest queried distance (optimistic).
    Upper,
    /// Replacement contacts at distance `b` (pessimistic).
    Lower,
}

impl Bound {
    pub const BOTH: [Bound; 2] = [Bound::Lower, Bound::Upper];

    pub fn name(self) -> &'static str {
        match self {
            Bound::Upper => "upper",
            Bound::Lower => "lower",
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stale entries, hops-to-live and bucket incompleteness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnParams {
    /// Probability that a queried contact does not answer.
    pub p: f64,
    /// Maximum number of query rounds.
    pub htl: u32,
    /// Bucket fill factor per distance.
    pub fill: Vec<f64>,
}

impl ChurnParams {
    /// Stale entries only, buckets at full size.
    pub fn stale(p: f64, htl: u32, b: u32) -> Self {
        ChurnParams {
            p,
            htl,
            fill: vec![1.0; b as usize + 1],
        }
    }

    /// Fill 0.9 on the ten highest distances and 0.8 below, as measured for
    /// KAD buckets.
    pub fn measured_fill(p: f64, htl: u32, b: u32) -> Self {
        let fill = (0..=b)
            .map(|d| if d + 9 >= b { 0.9 } else { 0.8 })
            .collect();
        ChurnParams { p, htl, fill }
    }

    pub fn validate(&self, b: u32) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("stale probability {} outside [0, 1]", self.p)));
        }
        if self.htl == 0 {
            return Err(Error::Config("htl must be at least 1".into()));
        }
        if self.fill.len() != b as usize + 1 {
            return Err(Error::Config(format!(
                "fill has {} entries, expected {}",
                self.fill.len(),
                b + 1
            )));
        }
        if let Some(c) = self.fill.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
            return Err(Error::Config(format!("fill factor {c} outside (0, 1]")));
        }
        Ok(())
    }

    /// Bucket sizes after applying the fill factors, `⌈c[d]·k_d⌉`.
    pub fn effective_buckets(&self, spec: &SystemSpec) -> Vec<u32> {
        spec.k
            .iter()
            .zip(&self.fill)
            .map(|(&k, &c)| (c * k as f64 - 1e-9).ceil().max(0.0) as u32)
            .collect()
    }
}

/// Probability mass over a [`StateSpace`], terminal state at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn zeros(len: usize) -> Self {
        Distribution {
            probs: vec![0.0; len],
        }
    }

    pub fn point(space: &StateSpace, state: &State) -> Self {
        let mut d = Self::zeros(space.len());
        d.probs[space.index(state)] = 1.0;
        d
    }

    pub fn from_vec(probs: Vec<f64>) -> Self {
        Distribution { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn terminal(&self) -> f64 {
        self.probs[0]
    }

    pub fn total(&self) -> f64 {
        neumaier(self.probs.iter().copied())
    }
}

/// Compensated sum.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Row-stochastic operator over a [`StateSpace`], stored as CSR.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    bound: Bound,
    space: StateSpace,
    churn: Option<ChurnParams>,
    fingerprint: String,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl TransitionMatrix {
    /// Identity operator, mostly useful for tests.
    pub fn identity(space: StateSpace, bound: Bound) -> Self {
        let len = space.len();
        TransitionMatrix {
            bound,
            space,
            churn: None,
            fingerprint: String::new(),
            offsets: (0..=len).collect(),
            cols: (0..len as u32).collect(),
            vals: vec![1.0; len],
        }
    }

    pub fn bound(&self) -> Bound {
        self.bound
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn churn(&self) -> Option<&ChurnParams> {
        self.churn.as_ref()
    }

    pub fn spec_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Non-zero entries of row `i` as `(column, probability)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        neumaier(self.vals[self.offsets[i]..self.offsets[i + 1]].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Heap bytes held by the sparse representation.
    pub fn heap_bytes(&self) -> usize {
        self.offsets.len() * std::mem::size_of::<usize>()
            + self.cols.len() * std::mem::size_of::<u32>()
            + self.vals.len() * std::mem::size_of::<f64>()
    }

    /// `dist · T`.
    pub fn step(&self, dist: &Distribution) -> Result<Distribution> {
        if dist.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                found: dist.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        for (i, &p) in dist.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (c, v) in self.row(i) {
                out[c] += p * v;
            }
        }
        Ok(Distribution { probs: out })
    }
}

/// Per-hop cumulative termination fractions for one bound.
#[derive(Debug, Clone, PartialEq)]
pub struct HopCountReport {
    pub bound: Bound,
    /// `cumulative[h − 1]` is the fraction of lookups done within `h` hops.
    pub cumulative: Vec<f64>,
    /// Mean hop count of the lookups that terminated within the horizon.
    pub mean: f64,
    /// Mass not terminated by the last hop.
    pub residual: f64,
    pub spec_fingerprint: String,
    pub churn: Option<ChurnParams>,
}

impl HopCountReport {
    pub fn max_gap(&self, other: &HopCountReport) -> f64 {
        self.cumulative
            .iter()
            .zip(&other.cumulative)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Cumulative fraction within `h` hops (`h ≥ 1`), saturating at the horizon.
    pub fn at(&self, h: usize) -> f64 {
        match h {
            0 => 0.0,
            _ => self.cumulative[(h - 1).min(self.cumulative.len() - 1)],
        }
    }
}

/// Mean hop count over terminated lookups: `Σ h·ΔP(h) / P(h_max)`.
pub fn mean_hop_count(cumulative: &[f64]) -> f64 {
    let done = cumulative.last().copied().unwrap_or(0.0);
    if done <= 0.0 {
        return 0.0;
    }
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (i, &c) in cumulative.iter().enumerate() {
        acc += (i + 1) as f64 * (c - prev);
        prev = c;
    }
    acc / done
}

/// Default number of hops to evaluate: `htl` under churn, else `b + 1`.
pub fn default_horizon(spec: &SystemSpec, churn: Option<&ChurnParams>) -> usize {
    match churn {
        Some(c) => c.htl as usize,
        None => spec.b as usize + 1,
    }
}

fn kernel_for(spec: &SystemSpec, churn: Option<&ChurnParams>) -> Result<ContactKernel> {
    spec.validate().map_err(Error::InvalidSpec)?;
    match churn {
        Some(c) => {
            c.validate(spec.b)?;
            Ok(ContactKernel::with_buckets(spec, c.effective_buckets(spec)))
        }
        None => Ok(ContactKernel::new(spec)),
    }
}

/// Distances of the α closest contacts in the requester's table, for a
/// requester at uniform distance from the target.
pub fn initial_distribution(spec: &SystemSpec) -> Result<Distribution> {
    initial_distribution_with(spec, None)
}

/// [`initial_distribution`] with bucket sizes reduced by the churn fill.
pub fn initial_distribution_with(
    spec: &SystemSpec,
    churn: Option<&ChurnParams>,
) -> Result<Distribution> {
    let kernel = kernel_for(spec, churn)?;
    let space = StateSpace::new(spec.alpha, spec.b)?;
    let alpha = spec.alpha as usize;
    let b = spec.b;
    let mut probs = vec![0.0; space.len()];
    let mut key = Vec::with_capacity(alpha);
    for d in 0..=b {
        let weight = if d == 0 {
            (-(b as f64)).exp2()
        } else {
            (d as f64 - 1.0 - b as f64).exp2()
        };
        let dist = kernel.distribution(d as usize, alpha);
        probs[0] += weight * dist.terminal_mass;
        for (tuple, p) in &dist.mass {
            key.clear();
            key.extend_from_slice(tuple);
            key.resize(alpha, b as u8);
            probs[space.index_sorted(&key)] += weight * p;
        }
    }
    Ok(Distribution { probs })
}

/// Builds `T^up` or `T^low` for `spec`, optionally with churn.
pub fn transition_matrix(
    spec: &SystemSpec,
    bound: Bound,
    churn: Option<&ChurnParams>,
) -> Result<TransitionMatrix> {
    if spec.alpha * spec.beta > MAX_RETURNED {
        return Err(Error::Capacity(format!(
            "alpha * beta = {} exceeds {MAX_RETURNED}",
            spec.alpha * spec.beta
        )));
    }
    let kernel = kernel_for(spec, churn)?;
    let space = StateSpace::new(spec.alpha, spec.b)?;
    let widest = (1..=spec.b as usize)
        .map(|d| kernel.branches(d).count())
        .max()
        .unwrap_or(1);
    let joint = (1 + widest * spec.beta as usize).saturating_pow(spec.alpha);
    if joint > MAX_JOINT_STATES {
        return Err(Error::Capacity(format!(
            "{joint} joint node states per transition row"
        )));
    }
    let far = match churn {
        Some(c) => c.htl as u64 * spec.alpha as u64,
        None => spec.alpha as u64 * spec.b as u64,
    };
    let mut builder = RowBuilder {
        kernel: &kernel,
        space: &space,
        beta: spec.beta,
        stale: churn.map_or(0.0, |c| c.p),
        upper: bound == Bound::Upper,
        distinct: Distinctness::new(spec.b, spec.n, spec.alpha, spec.beta, far),
    };
    let mut scratch = Scratch::new(space.len());
    let mut offsets = Vec::with_capacity(space.len() + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    offsets.push(0);
    cols.push(0);
    vals.push(1.0);
    offsets.push(1);
    for i in 1..space.len() {
        let State::Query(ds) = space.state(i) else {
            unreachable!()
        };
        for (c, v) in builder.row(&ds, &mut scratch) {
            cols.push(c);
            vals.push(v);
        }
        offsets.push(vals.len());
    }
    cols.shrink_to_fit();
    vals.shrink_to_fit();
    Ok(TransitionMatrix {
        bound,
        space,
        churn: churn.cloned(),
        fingerprint: spec.fingerprint(),
        offsets,
        cols,
        vals,
    })
}

/// Propagates `initial` through `matrix` for `h_max` hops;
/// `cumulative(h) = (T^{h−1} I)(∅)`.
pub fn iterate(
    initial: &Distribution,
    matrix: &TransitionMatrix,
    h_max: usize,
) -> Result<HopCountReport> {
    if initial.len() != matrix.len() {
        return Err(Error::Dimension {
            expected: matrix.len(),
            found: initial.len(),
        });
    }
    if h_max == 0 {
        return Err(Error::Config("h_max must be at least 1".into()));
    }
    let mut cumulative = Vec::with_capacity(h_max);
    let mut cur = initial.clone();
    cumulative.push(cur.terminal().min(1.0));
    for _ in 1..h_max {
        cur = matrix.step(&cur)?;
        let c = cur.terminal().clamp(0.0, 1.0);
        // guard against rounding making the curve dip
        let last = *cumulative.last().unwrap();
        cumulative.push(c.max(last));
    }
    let done = *cumulative.last().unwrap();
    Ok(HopCountReport {
        bound: matrix.bound,
        mean: mean_hop_count(&cumulative),
        residual: (1.0 - done).max(0.0),
        cumulative,
        spec_fingerprint: matrix.fingerprint.clone(),
        churn: matrix.churn.clone(),
    })
}

/// Builds `I` and `T` for one bound and iterates to `h_max` (default horizon
/// when `None`).
pub fn analyze(
    spec: &SystemSpec,
    bound: Bound,
    churn: Option<&ChurnParams>,
    h_max: Option<usize>,
) -> Result<HopCountReport> {
    let initial = initial_distribution_with(spec, churn)?;
    let matrix = transition_matrix(spec, bound, churn)?;
    iterate(&initial, &matrix, h_max.unwrap_or_else(|| default_horizon(spec, churn)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Preset;

    #[test]
    fn identity_keeps_terminal_point_mass() {
        let space = StateSpace::new(2, 4).unwrap();
        let init = Distribution::point(&space, &State::Terminal);
        let t = TransitionMatrix::identity(space, Bound::Upper);
        let rep = iterate(&init, &t, 5).unwrap();
        assert!(rep.cumulative.iter().all(|&c| c == 1.0));
        assert_eq!(rep.mean, 1.0);
    }

    #[test]
    fn mean_of_single_hop() {
        assert_eq!(mean_hop_count(&[1.0]), 1.0);
        assert!((mean_hop_count(&[0.5, 1.0]) - 1.5).abs() < 1e-15);
        assert!((mean_hop_count(&[0.25, 0.5]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let space = StateSpace::new(2, 4).unwrap();
        let t = TransitionMatrix::identity(space, Bound::Lower);
        let err = iterate(&Distribution::zeros(3), &t, 2).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn initial_is_normalized() {
        for preset in Preset::ALL {
            let spec = SystemSpec::preset(preset, 10, 5000, 3, 2).unwrap();
            let init = initial_distribution(&spec).unwrap();
            assert!((init.total() - 1.0).abs() < 1e-9, "{preset}");
            assert!(init.terminal() > 0.0);
        }
    }

    #[test]
    fn rows_are_stochastic_small() {
        for preset in [Preset::Mdht, Preset::Kad] {
            let spec = SystemSpec::preset(preset, 8, 2000, 3, 2).unwrap();
            for bound in Bound::BOTH {
                let t = transition_matrix(&spec, bound, None).unwrap();
                for i in 0..t.len() {
                    assert!((t.row_sum(i) - 1.0).abs() < 1e-9, "{preset} {bound} row {i}");
                }
            }
        }
    }

    #[test]
    fn capacity_guard() {
        let spec = SystemSpec::preset(Preset::Mdht, 8, 2000, 4, 4).unwrap();
        let err = transition_matrix(&spec, Bound::Upper, None).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn fill_rounds_up() {
        let spec = SystemSpec::preset(Preset::Kad, 20, 1000, 3, 2).unwrap();
        let churn = ChurnParams::measured_fill(0.1, 7, 20);
        let k = churn.effective_buckets(&spec);
        assert_eq!(k[20], 9);
        assert_eq!(k[11], 9);
        assert_eq!(k[10], 8);
    }
}
