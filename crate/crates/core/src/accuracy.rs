//! Identifier-space reduction.
//!
//! A system over `b` bits and the same system over `b̃ < b` bits only differ
//! for lookups where more than `κ` nodes share the target's reduced prefix
//! without being the target. The probability of that event bounds the
//! absolute difference of every cumulative hop-count value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{clamped_row, SystemSpec, MAX_BITS};

/// Chosen reduced width together with the error it guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionPlan {
    pub b_full: u32,
    pub b_reduced: u32,
    pub delta: f64,
    pub kappa: u32,
    pub error_bound: f64,
}

impl ReductionPlan {
    /// Smallest reduced width for `spec` meeting `delta`, with `κ` the
    /// smallest bucket of the spec.
    pub fn for_spec(spec: &SystemSpec, delta: f64) -> Self {
        let kappa = spec.min_bucket();
        let b_reduced = min_bits_from(spec.b, spec.n, delta, kappa);
        ReductionPlan {
            b_full: spec.b,
            b_reduced,
            delta,
            kappa,
            error_bound: reduction_error(spec.b, b_reduced, spec.n, kappa),
        }
    }
}

/// Probability that a node shares the target's `b̃`-bit prefix without
/// matching it on all `b` bits, at the resolution of one distance class.
fn collision_probability(b_full: u32, b_reduced: u32) -> f64 {
    (-(b_reduced as f64 + 1.0)).exp2() - (-(b_full as f64 + 1.0)).exp2()
}

/// Upper bound on `|P(i) − P̃(i)|` when analysing a `b_full`-bit system over
/// `b_reduced` bits: `P(X > κ)` for `X ~ B(n, p)`.
pub fn reduction_error(b_full: u32, b_reduced: u32, n: u64, kappa: u32) -> f64 {
    assert!(b_reduced <= b_full, "reduced width exceeds full width");
    if b_reduced == b_full {
        return 0.0;
    }
    let p = collision_probability(b_full, b_reduced);
    if p <= 0.0 {
        return 0.0;
    }
    // ln P(X = j) by the ratio recurrence, summed in log space
    let ln_odds = p.ln() - (-p).ln_1p();
    let mut ln_term = n as f64 * (-p).ln_1p();
    let mut ln_sum = ln_term;
    for j in 0..(kappa as u64).min(n) {
        ln_term += ((n - j) as f64).ln() - ((j + 1) as f64).ln() + ln_odds;
        let (hi, lo) = if ln_sum > ln_term { (ln_sum, ln_term) } else { (ln_term, ln_sum) };
        ln_sum = hi + (lo - hi).exp().ln_1p();
    }
    (-ln_sum.exp_m1()).clamp(0.0, 1.0)
}

/// Smallest `b̃` with `reduction_error(128, b̃, n, κ) ≤ δ`.
pub fn min_bits(n: u64, delta: f64, kappa: u32) -> u32 {
    min_bits_from(MAX_BITS, n, delta, kappa)
}

/// Smallest `b̃ ≤ b_full` with `reduction_error(b_full, b̃, n, κ) ≤ δ`.
pub fn min_bits_from(b_full: u32, n: u64, delta: f64, kappa: u32) -> u32 {
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    // the error is monotone in b̃, so bisect
    let (mut lo, mut hi) = (1u32, b_full);
    if reduction_error(b_full, lo, n, kappa) <= delta {
        return lo;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if reduction_error(b_full, mid, n, kappa) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Width from the closed-form rule `⌈log₂(2n / ln(1/δ))⌉`.
pub fn closed_form_bits(n: u64, delta: f64) -> u32 {
    ((2.0 * n as f64 / (1.0 / delta).ln()).log2().ceil()).max(1.0) as u32
}

/// The same system over `b_reduced` bits.
///
/// Presets are rebuilt at the new width. Other specs keep their top
/// `b_reduced` levels: row `d` of the result is row `d + b − b̃` of the
/// original, with gains beyond `d` folded into `l = d`.
pub fn reduce_spec(spec: &SystemSpec, b_reduced: u32) -> Result<SystemSpec> {
    if b_reduced == 0 || b_reduced > spec.b {
        return Err(Error::Config(format!(
            "reduced width {b_reduced} outside [1, {}]",
            spec.b
        )));
    }
    if let Some(preset) = spec.preset {
        return SystemSpec::preset(preset, b_reduced, spec.n, spec.alpha, spec.beta);
    }
    let shift = (spec.b - b_reduced) as usize;
    let top = b_reduced as usize;
    let mut k = vec![0u32; top + 1];
    let mut gain = vec![vec![0.0; top + 1]; top + 1];
    gain[0][0] = 1.0;
    for d in 1..=top {
        let src = d + shift;
        k[d] = spec.k[src];
        let gains: Vec<(usize, f64)> = spec.gains(src).collect();
        if gains.is_empty() {
            return Err(Error::Reduction { b_reduced, d });
        }
        gain[d] = clamped_row(top, d, &gains);
    }
    k[0] = k[1];
    let reduced = SystemSpec {
        b: b_reduced,
        k,
        gain,
        preset: None,
        ..spec.clone()
    };
    reduced.validate().map_err(Error::InvalidSpec)?;
    Ok(reduced)
}
