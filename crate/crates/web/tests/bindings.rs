use kadhop_web::{contacts_json, hop_curve_json, min_bits_json};
use serde_json::Value;

fn parse(text: String) -> Value {
    serde_json::from_str(&text).unwrap()
}

#[test]
fn page_defaults_evaluate() {
    let hops = parse(hop_curve_json("kad", 100_000, 3, 2, 0.001, 0.0).unwrap());
    assert_eq!(hops["b_reduced"], 14);
    let means: Vec<f64> = hops["curves"].as_array().unwrap().iter().map(|c| c["mean"].as_f64().unwrap()).collect();
    assert!((means[0] - means[1]).abs() < 0.01);

    let near = parse(contacts_json("kad", 100_000, 14, 2, 0.001).unwrap());
    assert_eq!(near["d"], 14);
    assert!(near["outcomes"].as_array().unwrap().len() <= 50);

    let widths = parse(min_bits_json(0.001, 10).unwrap());
    assert_eq!(widths[0]["n"], 1000);
    assert_eq!(widths[20]["n"], 1000u64 << 20);
}

#[test]
fn stale_entries_slow_the_curve() {
    let mean = |stale| {
        let v = parse(hop_curve_json("mdht", 20_000, 3, 2, 0.001, stale).unwrap());
        v["curves"][1]["mean"].as_f64().unwrap()
    };
    assert!(mean(0.2) > mean(0.0));
}

#[test]
fn bad_input_is_an_error_not_a_panic() {
    assert!(min_bits_json(0.0, 10).is_err());
    assert!(contacts_json("kad", 100_000, 5, 0, 0.001).is_err());
    assert!(hop_curve_json("kad", 100_000, 3, 2, 1.5, 0.0).is_err());
}
