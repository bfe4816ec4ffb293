//! Run configuration, as read from `--config` or assembled from flags.

use std::path::PathBuf;
use std::str::FromStr;

use kadhop::markov::Bound;
use kadhop::state::MAX_STATES;
use kadhop::{ChurnParams, Preset, SystemSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Simulate,
    Compare,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BoundChoice {
    Lower,
    Upper,
    Both,
}

impl BoundChoice {
    pub fn bounds(self) -> Vec<Bound> {
        match self {
            BoundChoice::Lower => vec![Bound::Lower],
            BoundChoice::Upper => vec![Bound::Upper],
            BoundChoice::Both => Bound::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Bucket fill under churn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fill {
    #[default]
    Full,
    /// 0.9 on the ten highest distances, 0.8 below.
    Measured,
    Uniform(f64),
}

impl FromStr for Fill {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Fill::Full),
            "measured" => Ok(Fill::Measured),
            _ => match s.parse::<f64>() {
                Ok(c) if c > 0.0 && c <= 1.0 => Ok(Fill::Uniform(c)),
                _ => Err(format!("fill must be full, measured or a factor in (0, 1], got {s:?}")),
            },
        }
    }
}

/// `alpha:beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routing(pub u32, pub u32);

impl FromStr for Routing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("routing must look like 3:2, got {s:?}"))?;
        let parse = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("{s:?}: {e}"));
        Ok(Routing(parse(a)?, parse(b)?))
    }
}

/// `lo:hi` exponents of the `2^i · 1000` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid(pub u32, pub u32);

impl Grid {
    pub fn sizes(self) -> impl Iterator<Item = u64> {
        (self.0..=self.1).map(|i| 1000u64 << i)
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s.split_once(':').unwrap_or((s, s));
        let parse = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("{s:?}: {e}"));
        let (lo, hi) = (parse(lo)?, parse(hi)?);
        if lo > hi || hi > 40 {
            return Err(format!("grid {s:?} must satisfy lo ≤ hi ≤ 40"));
        }
        Ok(Grid(lo, hi))
    }
}

/// Where the system comes from: a preset or a spec file, plus overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecSource {
    pub preset: Option<String>,
    pub file: Option<PathBuf>,
    /// Full identifier width for presets (128 when absent).
    pub bits: Option<u32>,
    pub n: Option<u64>,
    pub alpha: Option<u32>,
    pub beta: Option<u32>,
}

impl SpecSource {
    /// Label used in the `system` output column.
    pub fn label(&self) -> String {
        match (&self.preset, &self.file) {
            (Some(p), _) => p.parse::<Preset>().map(|p| p.name().to_string()).unwrap_or_else(|_| p.clone()),
            (None, Some(f)) => f
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into()),
            (None, None) => "custom".into(),
        }
    }

    pub fn resolve(&self) -> Result<SystemSpec, CliError> {
        let spec = match (&self.preset, &self.file) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either a preset or a spec file, not both".into())),
            (None, None) => return Err(CliError::Config("no system given: use --preset or --spec".into())),
            (Some(name), None) => {
                let preset: Preset = name.parse()?;
                let n = self
                    .n
                    .ok_or_else(|| CliError::Config("--n is required with a preset".into()))?;
                let (a, b) = preset.default_routing();
                SystemSpec::preset(
                    preset,
                    self.bits.unwrap_or(128),
                    n,
                    self.alpha.unwrap_or(a),
                    self.beta.unwrap_or(b),
                )?
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let mut spec = SystemSpec::from_json(&text)?;
                if self.bits.is_some_and(|b| b != spec.b) {
                    return Err(CliError::Config("--bits cannot change the width of a spec file".into()));
                }
                spec.n = self.n.unwrap_or(spec.n);
                spec.alpha = self.alpha.unwrap_or(spec.alpha);
                spec.beta = self.beta.unwrap_or(spec.beta);
                spec
            }
        };
        spec.validate().map_err(kadhop::Error::InvalidSpec)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChurnConfig {
    /// Probability that a contacted node does not answer.
    pub stale: f64,
    /// Hops-to-live; `b̃ + 1` when absent.
    pub htl: Option<u32>,
    pub fill: Fill,
}

impl ChurnConfig {
    pub fn is_active(&self) -> bool {
        self.stale > 0.0 || self.htl.is_some() || self.fill != Fill::Full
    }

    /// Parameters over a `b`-bit space.
    pub fn params(&self, b: u32) -> ChurnParams {
        let htl = self.htl.unwrap_or(b + 1);
        match self.fill {
            Fill::Full => ChurnParams::stale(self.stale, htl, b),
            Fill::Measured => ChurnParams::measured_fill(self.stale, htl, b),
            Fill::Uniform(c) => ChurnParams {
                fill: vec![c; b as usize + 1],
                ..ChurnParams::stale(self.stale, htl, b)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSettings {
    pub topologies: u32,
    pub targets: u32,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        CampaignSettings {
            topologies: 20,
            targets: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub presets: Vec<String>,
    pub routing: Vec<Routing>,
    pub n_grid: Grid,
    pub stale: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        SweepAxes {
            presets: vec!["mdht".into(), "kad".into()],
            routing: vec![Routing(3, 2), Routing(4, 1)],
            n_grid: Grid(0, 20),
            stale: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub spec: SpecSource,
    pub delta: f64,
    /// Explicit reduced width instead of the one `delta` calls for.
    pub reduced_bits: Option<u32>,
    pub bound: BoundChoice,
    pub churn: ChurnConfig,
    pub h_max: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    /// Largest state space a single analysis may build.
    pub max_states: u64,
    pub campaign: CampaignSettings,
    pub sweep: SweepAxes,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Analytic,
            spec: SpecSource::default(),
            delta: 0.001,
            reduced_bits: None,
            bound: BoundChoice::Both,
            churn: ChurnConfig::default(),
            h_max: None,
            output: None,
            format: Format::Csv,
            seed: 1,
            max_states: MAX_STATES as u64,
            campaign: CampaignSettings::default(),
            sweep: SweepAxes::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that does not need the system itself.
    pub fn check(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} outside (0, 1)", self.delta));
        }
        if !(0.0..1.0).contains(&self.churn.stale) {
            return bad(format!("stale probability {} outside [0, 1)", self.churn.stale));
        }
        if self.churn.htl == Some(0) || self.h_max == Some(0) {
            return bad("htl and h_max must be at least 1".into());
        }
        if let Fill::Uniform(c) = self.churn.fill {
            if !(c > 0.0 && c <= 1.0) {
                return bad(format!("fill factor {c} outside (0, 1]"));
            }
        }
        match self.mode {
            Mode::Simulate | Mode::Compare if self.churn.fill != Fill::Full => {
                bad("the simulator keeps buckets full; fill applies to analytic runs only".into())
            }
            Mode::Simulate | Mode::Compare
                if self.campaign.topologies == 0 || self.campaign.targets == 0 =>
            {
                bad("topologies and targets must be at least 1".into())
            }
            Mode::Sweep => {
                if self.sweep.presets.is_empty() || self.sweep.routing.is_empty() || self.sweep.stale.is_empty() {
                    return bad("every sweep axis needs at least one value".into());
                }
                for p in &self.sweep.presets {
                    p.parse::<Preset>()?;
                }
                if let Some(&s) = self.sweep.stale.iter().find(|s| !(0.0..1.0).contains(*s)) {
                    return bad(format!("stale probability {s} outside [0, 1)"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_axes() {
        assert_eq!("3:2".parse::<Routing>().unwrap(), Routing(3, 2));
        assert!("3".parse::<Routing>().is_err());
        assert_eq!("0:20".parse::<Grid>().unwrap().sizes().last(), Some(1000 << 20));
        assert_eq!("4".parse::<Grid>().unwrap(), Grid(4, 4));
        assert!("5:2".parse::<Grid>().is_err());
        assert_eq!("measured".parse::<Fill>().unwrap(), Fill::Measured);
        assert_eq!("0.9".parse::<Fill>().unwrap(), Fill::Uniform(0.9));
        assert!("1.5".parse::<Fill>().is_err());
    }

    #[test]
    fn empty_document_takes_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.delta, 0.001);
        assert_eq!(cfg.bound, BoundChoice::Both);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"detla": 0.1}"#), Err(CliError::Config(_))));
    }

    #[test]
    fn preset_needs_n() {
        let src = SpecSource {
            preset: Some("kad".into()),
            ..Default::default()
        };
        assert!(matches!(src.resolve(), Err(CliError::Config(_))));
        let spec = SpecSource { n: Some(1000), ..src }.resolve().unwrap();
        assert_eq!((spec.b, spec.alpha, spec.beta), (128, 3, 2));
    }

    #[test]
    fn churn_defaults_to_one_hop_past_the_width() {
        let c = ChurnConfig {
            stale: 0.1,
            ..Default::default()
        };
        assert!(c.is_active());
        let p = c.params(14);
        assert_eq!(p.htl, 15);
        assert!(p.fill.iter().all(|&f| f == 1.0));
        assert!(!ChurnConfig::default().is_active());
    }

    #[test]
    fn simulator_rejects_fill() {
        let cfg = RunConfig {
            mode: Mode::Compare,
            churn: ChurnConfig {
                fill: Fill::Measured,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(cfg.check().is_err());
    }
}
