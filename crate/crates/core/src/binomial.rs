//! Expectations over `Binomial(trials, p)` for trial counts up to ~10⁹.
//!
//! Terms are generated from the mode outward with the ratio recurrence
//! `P(m+1)/P(m) = (trials−m)/(m+1) · p/(1−p)` and normalized by their own sum,
//! so no factorial or `ln Γ` of a large argument is ever evaluated. Walking
//! stops once a term falls below `CUTOFF` relative to the mode.

/// Relative weight below which tail terms are ignored.
const CUTOFF: f64 = 1e-18;

/// Calls `visit(m, w)` for every non-negligible `m`, with weights normalized
/// to sum to one.
pub fn for_each_weight(trials: u64, p: f64, mut visit: impl FnMut(u64, f64)) {
    if trials == 0 || p <= 0.0 {
        visit(0, 1.0);
        return;
    }
    if p >= 1.0 {
        visit(trials, 1.0);
        return;
    }
    let n = trials as f64;
    let mode = (((n + 1.0) * p).floor() as u64).min(trials);
    let odds = p / (1.0 - p);

    let mut terms: Vec<(u64, f64)> = Vec::new();
    terms.push((mode, 1.0));
    let mut w = 1.0;
    let mut m = mode;
    while m > 0 {
        // P(m-1)/P(m) = m / (trials - m + 1) / odds
        w *= m as f64 / ((trials - m + 1) as f64 * odds);
        m -= 1;
        if w < CUTOFF {
            break;
        }
        terms.push((m, w));
    }
    let mut w = 1.0;
    let mut m = mode;
    while m < trials {
        w *= (trials - m) as f64 / (m + 1) as f64 * odds;
        m += 1;
        if w < CUTOFF {
            break;
        }
        terms.push((m, w));
    }
    let total: f64 = terms.iter().map(|t| t.1).sum();
    for (m, w) in terms {
        visit(m, w / total);
    }
}

/// `E[f(M)]` for `M ~ Binomial(trials, p)`.
pub fn expectation(trials: u64, p: f64, mut f: impl FnMut(u64) -> f64) -> f64 {
    let mut acc = 0.0;
    for_each_weight(trials, p, |m, w| acc += w * f(m));
    acc
}

/// Probability mass function of `Binomial(trials, p)` at `c` for small
/// trial counts (bucket sizes), evaluated directly.
pub fn small_pmf(trials: u32, p: f64, c: u32) -> f64 {
    if c > trials {
        return 0.0;
    }
    let coeff = crate::state::binomial(trials as u64, c as u64) as f64;
    coeff * p.powi(c as i32) * (1.0 - p).powi((trials - c) as i32)
}
