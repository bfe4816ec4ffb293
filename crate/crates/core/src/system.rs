//! System specification `Kad(b, α, β, k, L)` plus network order, the deployed
//! presets, and the XOR prefix distance.
//!
//! Vectors are indexed by *distance* `d ∈ [0, b]` (distance `d` is the bucket at
//! level `b − d`). Row `d` of the gain matrix is the distribution of the
//! guaranteed bit gain for a target at distance `d` from the table owner.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest identifier width supported (identifiers are held in a `u128`).
pub const MAX_BITS: u32 = 128;

const ROW_TOLERANCE: f64 = 1e-9;

/// Deployed routing-table structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// Mainline BitTorrent DHT: 8-buckets, one bucket per level.
    Mdht,
    /// MDHT with enlarged top buckets (128, 64, 32, 16, then 8).
    Imdht,
    /// eMule KAD: 10-buckets, 4 bits resolved at the top level, 3 or 4 below.
    Kad,
    /// KAD variant with four equal buckets on every lower level.
    Kad4,
    /// Single bucket per level holding as many contacts as a KAD level.
    Kademlia80x50,
    /// Single-bucket counterpart of [`Preset::Kad4`].
    Kademlia80x40,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Mdht,
        Preset::Imdht,
        Preset::Kad,
        Preset::Kad4,
        Preset::Kademlia80x50,
        Preset::Kademlia80x40,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Mdht => "mdht",
            Preset::Imdht => "imdht",
            Preset::Kad => "kad",
            Preset::Kad4 => "kad4",
            Preset::Kademlia80x50 => "kademlia80:50",
            Preset::Kademlia80x40 => "kademlia80:40",
        }
    }

    /// Routing parameters the deployed system uses by default.
    pub fn default_routing(self) -> (u32, u32) {
        match self {
            Preset::Mdht | Preset::Imdht => (4, 1),
            _ => (3, 2),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '_', 'x'], ":");
        Ok(match norm.as_str() {
            "mdht" => Preset::Mdht,
            "imdht" => Preset::Imdht,
            "kad" => Preset::Kad,
            "kad4" => Preset::Kad4,
            "kademlia80:50" | "kademlia:80:50" => Preset::Kademlia80x50,
            "kademlia80:40" | "kademlia:80:40" => Preset::Kademlia80x40,
            _ => return Err(Error::UnknownPreset(s.to_string())),
        })
    }
}

/// A violated constraint reported by [`SystemSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BitsOutOfRange(u32),
    AlphaZero,
    BetaZero,
    NetworkTooSmall { n: u64, alpha: u32 },
    BucketLength { expected: usize, found: usize },
    GainShape { expected: usize },
    GainEntry { d: usize, l: usize, value: f64 },
    GainBeyondDistance { d: usize, l: usize },
    RowSum { d: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BitsOutOfRange(b) => write!(f, "b = {b} outside [1, {MAX_BITS}]"),
            Violation::AlphaZero => f.write_str("alpha must be at least 1"),
            Violation::BetaZero => f.write_str("beta must be at least 1"),
            Violation::NetworkTooSmall { n, alpha } => {
                write!(f, "n = {n} is below alpha + 2 = {}", *alpha as u64 + 2)
            }
            Violation::BucketLength { expected, found } => {
                write!(f, "k has {found} entries, expected {expected}")
            }
            Violation::GainShape { expected } => {
                write!(f, "L must be a {expected}x{expected} matrix")
            }
            Violation::GainEntry { d, l, value } => {
                write!(f, "L[{d}][{l}] = {value} is not a probability")
            }
            Violation::GainBeyondDistance { d, l } => {
                write!(f, "L[{d}][{l}] > 0 resolves more bits than remain")
            }
            Violation::RowSum { d, sum } => write!(f, "row {d} of L sums to {sum}, not 1"),
        }
    }
}

/// `Kad(b, α, β, k, L)` together with the network order `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub b: u32,
    pub alpha: u32,
    pub beta: u32,
    /// Bucket size `k_d`, one entry per distance `d ∈ [0, b]`.
    pub k: Vec<u32>,
    /// Bit-gain matrix `L`, `(b+1)×(b+1)`, row `d` sums to one for `d ≥ 1`.
    pub gain: Vec<Vec<f64>>,
    pub n: u64,
    /// Set when the spec was produced from a preset; reduction rebuilds it.
    pub preset: Option<Preset>,
}

impl SystemSpec {
    /// Builds a deployed-system preset for a `b`-bit identifier space.
    pub fn preset(preset: Preset, b: u32, n: u64, alpha: u32, beta: u32) -> Result<Self> {
        if b == 0 || b > MAX_BITS {
            return Err(Error::InvalidSpec(vec![Violation::BitsOutOfRange(b)]));
        }
        let top = b as usize;
        let mut k = vec![0u32; top + 1];
        let mut gain = vec![vec![0.0; top + 1]; top + 1];
        gain[0][0] = 1.0;
        for d in 1..=top {
            let (size, row): (u32, &[(usize, f64)]) = match preset {
                Preset::Mdht => (8, &[(1, 1.0)]),
                Preset::Imdht => {
                    let level = top - d;
                    let size = match level {
                        0 => 128,
                        1 => 64,
                        2 => 32,
                        3 => 16,
                        _ => 8,
                    };
                    (size, &[(1, 1.0)])
                }
                Preset::Kad if d == top => (10, &[(4, 1.0)]),
                Preset::Kad => (10, &[(3, 0.75), (4, 0.25)]),
                Preset::Kad4 if d == top => (10, &[(4, 1.0)]),
                Preset::Kad4 => (10, &[(3, 1.0)]),
                Preset::Kademlia80x50 => (if d == top { 80 } else { 50 }, &[(1, 1.0)]),
                Preset::Kademlia80x40 => (if d == top { 80 } else { 40 }, &[(1, 1.0)]),
            };
            k[d] = size;
            gain[d] = clamped_row(top, d, row);
        }
        k[0] = k.get(1).copied().unwrap_or(8);
        let spec = SystemSpec {
            b,
            alpha,
            beta,
            k,
            gain,
            n,
            preset: Some(preset),
        };
        spec.validate().map_err(Error::InvalidSpec)?;
        Ok(spec)
    }

    /// Checks every structural constraint; returns all violations found.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut issues = Vec::new();
        if self.b == 0 || self.b > MAX_BITS {
            issues.push(Violation::BitsOutOfRange(self.b));
            return Err(issues);
        }
        let len = self.b as usize + 1;
        if self.alpha == 0 {
            issues.push(Violation::AlphaZero);
        }
        if self.beta == 0 {
            issues.push(Violation::BetaZero);
        }
        if self.n < self.alpha as u64 + 2 {
            issues.push(Violation::NetworkTooSmall {
                n: self.n,
                alpha: self.alpha,
            });
        }
        if self.k.len() != len {
            issues.push(Violation::BucketLength {
                expected: len,
                found: self.k.len(),
            });
        }
        if self.gain.len() != len || self.gain.iter().any(|r| r.len() != len) {
            issues.push(Violation::GainShape { expected: len });
            return Err(issues);
        }
        for (d, row) in self.gain.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    issues.push(Violation::GainEntry { d, l, value: v });
                } else if v > 0.0 && l > d {
                    issues.push(Violation::GainBeyondDistance { d, l });
                }
            }
            if d >= 1 {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    issues.push(Violation::RowSum { d, sum });
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    /// Number of distances, `b + 1`.
    pub fn len(&self) -> usize {
        self.b as usize + 1
    }

    /// Always false: a spec covers at least distances 0 and 1.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Smallest bucket size over all distances.
    pub fn min_bucket(&self) -> u32 {
        self.k.iter().copied().min().unwrap_or(0)
    }

    /// Largest bucket size over all distances.
    pub fn max_bucket(&self) -> u32 {
        self.k.iter().copied().max().unwrap_or(0)
    }

    /// Non-zero gains `(l, L[d][l])` of row `d`.
    pub fn gains(&self, d: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.gain[d]
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(l, &w)| (l, w))
    }

    /// Same system with different routing parameters.
    pub fn with_routing(&self, alpha: u32, beta: u32) -> Self {
        SystemSpec {
            alpha,
            beta,
            ..self.clone()
        }
    }

    /// Short stable digest of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(&SpecDoc::from(self)).unwrap_or_default();
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpecDoc::from(self)).expect("spec serializes")
    }

    /// Parses the JSON document form, including the `preset` shorthand and
    /// the sparse `L` encoding.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(text)?;
        doc.into_spec()
    }
}

/// Builds row `d` of `L` from `(gain, weight)` pairs, folding gains that
/// exceed the remaining distance into `l = d`.
pub fn clamped_row(b: usize, d: usize, gains: &[(usize, f64)]) -> Vec<f64> {
    let mut row = vec![0.0; b + 1];
    for &(l, w) in gains {
        row[l.min(d)] += w;
    }
    row
}

/// Distance of two `bits`-wide identifiers: `b` minus the common prefix
/// length, i.e. `⌊log₂(x ⊕ y)⌋ + 1`, and 0 for equal identifiers.
pub fn distance(x: u128, y: u128) -> u32 {
    let xor = x ^ y;
    if xor == 0 {
        0
    } else {
        128 - xor.leading_zeros()
    }
}

/// Serialized form of a [`SystemSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    b: u32,
    #[serde(default = "default_alpha")]
    alpha: u32,
    #[serde(default = "default_beta")]
    beta: u32,
    n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<Vec<u32>>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    gain: Option<GainDoc>,
}

fn default_alpha() -> u32 {
    3
}

fn default_beta() -> u32 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum GainDoc {
    Dense(Vec<Vec<f64>>),
    Sparse(SparseGain),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SparseGain {
    #[serde(default)]
    rows: Vec<SparseRow>,
    #[serde(default)]
    default: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SparseRow {
    d: usize,
    gains: BTreeMap<String, f64>,
}

impl From<&SystemSpec> for SpecDoc {
    fn from(spec: &SystemSpec) -> Self {
        SpecDoc {
            preset: spec.preset.map(|p| p.name().to_string()),
            b: spec.b,
            alpha: spec.alpha,
            beta: spec.beta,
            n: spec.n,
            k: Some(spec.k.clone()),
            gain: Some(GainDoc::Dense(spec.gain.clone())),
        }
    }
}

fn parse_gain_map(map: &BTreeMap<String, f64>) -> Result<Vec<(usize, f64)>> {
    map.iter()
        .map(|(key, &w)| {
            key.trim()
                .parse::<usize>()
                .map(|l| (l, w))
                .map_err(|_| Error::Config(format!("gain key {key:?} is not an integer")))
        })
        .collect()
}

impl SpecDoc {
    fn into_spec(self) -> Result<SystemSpec> {
        let len = self.b as usize + 1;
        let base = match &self.preset {
            Some(name) => Some(SystemSpec::preset(
                name.parse()?,
                self.b,
                self.n,
                self.alpha,
                self.beta,
            )?),
            None => None,
        };
        let k = match (self.k, &base) {
            (Some(k), _) => k,
            (None, Some(base)) => base.k.clone(),
            (None, None) => return Err(Error::Config("spec needs `k` or `preset`".into())),
        };
        let gain = match (self.gain, &base) {
            (Some(GainDoc::Dense(rows)), _) => rows,
            (Some(GainDoc::Sparse(sparse)), _) => {
                let mut rows = vec![vec![0.0; len]; len];
                if len > 0 {
                    rows[0][0] = 1.0;
                }
                if let Some(default) = &sparse.default {
                    let gains = parse_gain_map(default)?;
                    for (d, row) in rows.iter_mut().enumerate().skip(1) {
                        *row = clamped_row(len - 1, d, &gains);
                    }
                }
                for row in &sparse.rows {
                    if row.d >= len {
                        return Err(Error::Config(format!("row d = {} beyond b", row.d)));
                    }
                    let mut dense = vec![0.0; len];
                    for (l, w) in parse_gain_map(&row.gains)? {
                        if l >= len {
                            return Err(Error::Config(format!("gain l = {l} beyond b")));
                        }
                        dense[l] += w;
                    }
                    rows[row.d] = dense;
                }
                rows
            }
            (None, Some(base)) => base.gain.clone(),
            (None, None) => return Err(Error::Config("spec needs `L` or `preset`".into())),
        };
        let same_as_base = base
            .as_ref()
            .is_some_and(|p| p.k == k && p.gain == gain);
        let spec = SystemSpec {
            b: self.b,
            alpha: self.alpha,
            beta: self.beta,
            k,
            gain,
            n: self.n,
            preset: if same_as_base {
                base.and_then(|p| p.preset)
            } else {
                None
            },
        };
        spec.validate().map_err(Error::InvalidSpec)?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kad_preset_rows() {
        let spec = SystemSpec::preset(Preset::Kad, 14, 100_000, 3, 2).unwrap();
        assert_eq!(spec.gain[14][4], 1.0);
        for d in 4..14 {
            assert_eq!(spec.gain[d][3], 0.75);
            assert_eq!(spec.gain[d][4], 0.25);
        }
        assert!(spec.k.iter().all(|&k| k == 10));
        // low rows fold the unreachable gains into l = d
        assert_eq!(spec.gain[3][3], 1.0);
        assert_eq!(spec.gain[2][2], 1.0);
    }

    #[test]
    fn mdht_and_imdht_presets() {
        let mdht = SystemSpec::preset(Preset::Mdht, 15, 100_000, 4, 1).unwrap();
        assert!((1..=15).all(|d| mdht.gain[d][1] == 1.0));
        assert!(mdht.k.iter().all(|&k| k == 8));

        let imdht = SystemSpec::preset(Preset::Imdht, 21, 10_000_000, 4, 1).unwrap();
        assert_eq!(&imdht.k[18..], &[16, 32, 64, 128]);
        assert!(imdht.k[..18].iter().all(|&k| k == 8));
    }

    #[test]
    fn bad_row_and_small_network_are_reported() {
        let mut spec = SystemSpec::preset(Preset::Mdht, 8, 1000, 3, 2).unwrap();
        spec.gain[5][1] = 0.9;
        let issues = spec.validate().unwrap_err();
        assert!(issues
            .iter()
            .any(|v| matches!(v, Violation::RowSum { d: 5, .. })));

        let mut spec = SystemSpec::preset(Preset::Mdht, 8, 1000, 3, 2).unwrap();
        spec.n = 3;
        assert!(matches!(
            spec.validate().unwrap_err()[0],
            Violation::NetworkTooSmall { n: 3, alpha: 3 }
        ));
    }

    #[test]
    fn presets_valid_across_widths() {
        for preset in Preset::ALL {
            for b in 8..=24 {
                let spec = SystemSpec::preset(preset, b, 10_000, 3, 2).unwrap();
                assert!(spec.validate().is_ok(), "{preset} b={b}");
            }
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(0b1010, 0b1010), 0);
        assert_eq!(distance(0b1010, 0b1011), 1);
        assert_eq!(distance(0b0000, 0b1000), 4);
    }

    #[test]
    fn json_round_trip_and_shorthand() {
        let spec = SystemSpec::preset(Preset::Kad, 10, 5000, 3, 2).unwrap();
        let back = SystemSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, back);

        let short = SystemSpec::from_json(r#"{"preset":"kad","b":10,"n":5000}"#).unwrap();
        assert_eq!(short, spec);

        let sparse = SystemSpec::from_json(
            r#"{"b":10,"n":5000,"k":[10,10,10,10,10,10,10,10,10,10,10],
                "L":{"rows":[{"d":10,"gains":{"4":1.0}}],"default":{"3":0.75,"4":0.25}}}"#,
        )
        .unwrap();
        assert_eq!(sparse.gain, spec.gain);
        assert_eq!(sparse.preset, None);
    }

    #[test]
    fn preset_names_parse() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("chord".parse::<Preset>().is_err());
    }
}
