//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every binding returns a JSON string; the plain functions behind them are
//! usable (and tested) natively.

use kadhop::accuracy::{closed_form_bits, min_bits_from};
use kadhop::system::MAX_BITS;
use kadhop::{analyze, reduce_spec, reduction_error, state_count, Bound, ChurnParams};
use kadhop::{Preset, ReductionPlan, SystemSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

// keep a browser tab responsive; roughly n ≤ 10^7
const MAX_DEMO_BITS: u32 = 22;
const MAX_DEMO_STATES: u128 = 20_000;

#[derive(Serialize)]
struct Curve {
    bound: &'static str,
    cumulative: Vec<f64>,
    mean: f64,
}

#[derive(Serialize)]
struct HopCurves {
    b_reduced: u32,
    error_bound: f64,
    states: u128,
    curves: Vec<Curve>,
}

fn reduced(preset: &str, n: u64, alpha: u32, beta: u32, delta: f64) -> Result<(SystemSpec, ReductionPlan), String> {
    let preset: Preset = preset.parse().map_err(|e: kadhop::Error| e.to_string())?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(format!("delta {delta} outside (0, 1)"));
    }
    let full = SystemSpec::preset(preset, MAX_BITS, n, alpha, beta).map_err(|e| e.to_string())?;
    let plan = ReductionPlan::for_spec(&full, delta);
    let states = state_count(alpha, plan.b_reduced);
    if plan.b_reduced > MAX_DEMO_BITS || states > MAX_DEMO_STATES {
        return Err(format!(
            "{} bits and {states} states is more than the demo computes; use the command-line tool",
            plan.b_reduced
        ));
    }
    let spec = reduce_spec(&full, plan.b_reduced).map_err(|e| e.to_string())?;
    Ok((spec, plan))
}

/// Both bounds of the cumulative hop-count curve.
pub fn hop_curve_json(preset: &str, n: u64, alpha: u32, beta: u32, delta: f64, stale: f64) -> Result<String, String> {
    let (spec, plan) = reduced(preset, n, alpha, beta, delta)?;
    let churn = (stale > 0.0).then(|| ChurnParams::stale(stale, spec.b + 1, spec.b));
    let curves = Bound::BOTH
        .iter()
        .map(|&bound| {
            let r = analyze(&spec, bound, churn.as_ref(), None).map_err(|e| e.to_string())?;
            Ok(Curve {
                bound: bound.name(),
                cumulative: r.cumulative,
                mean: r.mean,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let doc = HopCurves {
        b_reduced: plan.b_reduced,
        error_bound: plan.error_bound,
        states: state_count(alpha, plan.b_reduced),
        curves,
    };
    Ok(serde_json::to_string(&doc).expect("serializes"))
}

#[derive(Serialize)]
struct Outcome {
    distances: Vec<u8>,
    p: f64,
}

#[derive(Serialize)]
struct Contacts {
    b_reduced: u32,
    d: u32,
    terminal: f64,
    /// Probability that the closest returned contact sits at each distance.
    closest: Vec<f64>,
    outcomes: Vec<Outcome>,
}

/// Distribution of the `gamma` closest contacts returned by a node at
/// distance `d` (clamped to the reduced width).
pub fn contacts_json(preset: &str, n: u64, d: u32, gamma: u32, delta: f64) -> Result<String, String> {
    let (spec, plan) = reduced(preset, n, 1, 1, delta)?;
    if gamma == 0 || gamma > 4 {
        return Err("gamma must lie in 1..=4".into());
    }
    let d = d.min(spec.b);
    let dist = kadhop::closest_contacts(&spec, d, gamma);
    let mut closest = vec![0.0; d as usize + 1];
    for (key, &p) in &dist.mass {
        closest[key[0] as usize] += p;
    }
    let mut outcomes: Vec<Outcome> = dist
        .mass
        .into_iter()
        .map(|(distances, p)| Outcome { distances, p })
        .collect();
    outcomes.sort_by(|a, b| b.p.total_cmp(&a.p));
    outcomes.truncate(50);
    let doc = Contacts {
        b_reduced: plan.b_reduced,
        d,
        terminal: dist.terminal_mass,
        closest,
        outcomes,
    };
    Ok(serde_json::to_string(&doc).expect("serializes"))
}

#[derive(Serialize)]
struct Width {
    n: u64,
    bits: u32,
    error: f64,
    closed_form: u32,
}

/// Reduced widths over the `2^i · 1000` grid, `i = 0..=20`.
pub fn min_bits_json(delta: f64, kappa: u32) -> Result<String, String> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(format!("delta {delta} outside (0, 1)"));
    }
    let rows: Vec<Width> = (0..=20)
        .map(|i| {
            let n = 1000u64 << i;
            let bits = min_bits_from(MAX_BITS, n, delta, kappa);
            Width {
                n,
                bits,
                error: reduction_error(MAX_BITS, bits, n, kappa),
                closed_form: closed_form_bits(n, delta),
            }
        })
        .collect();
    Ok(serde_json::to_string(&rows).expect("serializes"))
}

#[wasm_bindgen]
pub fn hop_curve(preset: &str, n: f64, alpha: u32, beta: u32, delta: f64, stale: f64) -> Result<String, JsValue> {
    hop_curve_json(preset, n as u64, alpha, beta, delta, stale).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn contacts(preset: &str, n: f64, d: u32, gamma: u32, delta: f64) -> Result<String, JsValue> {
    contacts_json(preset, n as u64, d, gamma, delta).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn min_bits(delta: f64, kappa: u32) -> Result<String, JsValue> {
    min_bits_json(delta, kappa).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn hop_curve_has_both_bounds() {
        let v: Value = serde_json::from_str(&hop_curve_json("kad", 10_000, 3, 2, 0.001, 0.0).unwrap()).unwrap();
        let curves = v["curves"].as_array().unwrap();
        assert_eq!(curves.len(), 2);
        for c in curves {
            let last = c["cumulative"].as_array().unwrap().last().unwrap().as_f64().unwrap();
            assert!((last - 1.0).abs() < 1e-9);
        }
        assert!(v["error_bound"].as_f64().unwrap() <= 0.001);
    }

    #[test]
    fn oversized_requests_are_refused() {
        assert!(hop_curve_json("kad", 1_000_000_000, 3, 2, 0.001, 0.0).is_err());
        assert!(hop_curve_json("kad", 10_000, 4, 4, 0.001, 0.0).is_err());
        assert!(hop_curve_json("zz", 10_000, 3, 2, 0.001, 0.0).is_err());
    }

    #[test]
    fn closest_marginal_sums_with_terminal_to_one() {
        let v: Value = serde_json::from_str(&contacts_json("mdht", 50_000, 12, 2, 0.001).unwrap()).unwrap();
        let sum: f64 = v["closest"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((sum + v["terminal"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn widths_grow_with_n() {
        let rows: Vec<Value> = serde_json::from_str(&min_bits_json(0.001, 10).unwrap()).unwrap();
        assert_eq!(rows.len(), 21);
        let bits: Vec<u64> = rows.iter().map(|r| r["bits"].as_u64().unwrap()).collect();
        assert!(bits.windows(2).all(|w| w[0] <= w[1]));
        assert!(rows.iter().all(|r| r["error"].as_f64().unwrap() <= 0.001));
    }
}
