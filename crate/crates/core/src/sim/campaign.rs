//! Simulation campaigns: many lookups over several random topologies, with
//! confidence intervals taken across topology-level means.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::lookup::{Router, Routing};
use super::topology::Topology;
use crate::error::{Error, Result};
use crate::system::SystemSpec;

/// Campaign shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub topologies: u32,
    pub targets_per_source: u32,
    pub seed: u64,
    #[serde(default)]
    pub stale: f64,
    #[serde(default)]
    pub htl: Option<u32>,
    /// Worker threads; topologies are distributed round-robin.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl CampaignConfig {
    pub fn new(topologies: u32, targets_per_source: u32, seed: u64) -> Self {
        CampaignConfig {
            topologies,
            targets_per_source,
            seed,
            stale: 0.0,
            htl: None,
            workers: 1,
        }
    }
}

/// Mean and 95% confidence interval of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    /// Student-t interval over per-topology values.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Estimate {
                mean,
                ci_low: mean,
                ci_high: mean,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        let half = t * (var / n as f64).sqrt();
        Estimate {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
        }
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.ci_low - slack && x <= self.ci_high + slack
    }
}

/// Per-topology outcome counts.
#[derive(Debug, Clone, Default, PartialEq)]
struct RunTally {
    /// `by_hop[h − 1]` lookups finishing in exactly `h` hops.
    by_hop: Vec<u64>,
    failed: u64,
}

impl RunTally {
    fn lookups(&self) -> u64 {
        self.by_hop.iter().sum::<u64>() + self.failed
    }

    fn cumulative(&self, h_max: usize) -> Vec<f64> {
        let total = self.lookups() as f64;
        let mut acc = 0u64;
        (0..h_max)
            .map(|i| {
                acc += self.by_hop.get(i).copied().unwrap_or(0);
                acc as f64 / total
            })
            .collect()
    }

    fn mean(&self) -> f64 {
        let done: u64 = self.by_hop.iter().sum();
        if done == 0 {
            return 0.0;
        }
        let weighted: u64 = self
            .by_hop
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as u64 + 1) * c)
            .sum();
        weighted as f64 / done as f64
    }
}

/// Aggregated campaign result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub alpha: u32,
    pub beta: u32,
    pub topologies: u32,
    pub lookups: u64,
    /// `cumulative[h − 1]`: fraction of lookups done within `h` hops.
    pub cumulative: Vec<Estimate>,
    /// Mean hop count of terminated lookups.
    pub mean: Estimate,
    /// Fraction of lookups that never reached the target.
    pub failed: f64,
}

impl SimStats {
    pub fn at(&self, h: usize) -> Option<&Estimate> {
        h.checked_sub(1).and_then(|i| self.cumulative.get(i))
    }
}

fn run_topology(spec: &SystemSpec, cfg: &CampaignConfig, seed: u64) -> Result<RunTally> {
    let topo = Topology::generate(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let routing = Routing {
        alpha: spec.alpha,
        beta: spec.beta,
        stale: cfg.stale,
        htl: cfg.htl,
    };
    let mut router = Router::new(&topo, routing);
    let n = topo.len();
    let per_source = (cfg.targets_per_source as usize).min(n - 1);
    let mut tally = RunTally::default();
    for source in 0..n as u32 {
        for pick in index::sample(&mut rng, n - 1, per_source).iter() {
            // skip the source itself
            let target = if pick >= source as usize { pick + 1 } else { pick } as u32;
            match router.hops(source, target, &mut rng) {
                Some(h) => {
                    let h = h as usize;
                    if tally.by_hop.len() < h {
                        tally.by_hop.resize(h, 0);
                    }
                    tally.by_hop[h - 1] += 1;
                }
                None => tally.failed += 1,
            }
        }
    }
    Ok(tally)
}

/// Simulates `cfg.topologies` random networks for `spec` and routes from
/// every node to `targets_per_source` distinct random targets.
pub fn run_campaign(spec: &SystemSpec, cfg: &CampaignConfig) -> Result<SimStats> {
    if cfg.topologies == 0 || cfg.targets_per_source == 0 {
        return Err(Error::Config("campaign counts must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.stale) {
        return Err(Error::Config(format!("stale probability {} outside [0, 1]", cfg.stale)));
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.topologies).map(|_| master.random()).collect();
    let workers = cfg.workers.clamp(1, seeds.len());
    let mut results: Vec<Option<Result<RunTally>>> = (0..seeds.len()).map(|_| None).collect();
    if workers == 1 {
        for (slot, &s) in results.iter_mut().zip(&seeds) {
            *slot = Some(run_topology(spec, cfg, s));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let seeds = &seeds;
                    scope.spawn(move || {
                        (w..seeds.len())
                            .step_by(workers)
                            .map(|i| (i, run_topology(spec, cfg, seeds[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("campaign worker panicked") {
                    results[i] = Some(r);
                }
            }
        });
    }
    let tallies: Vec<RunTally> = results
        .into_iter()
        .map(|r| r.expect("every topology ran"))
        .collect::<Result<_>>()?;

    let h_max = tallies.iter().map(|t| t.by_hop.len()).max().unwrap_or(0).max(1);
    let curves: Vec<Vec<f64>> = tallies.iter().map(|t| t.cumulative(h_max)).collect();
    let cumulative = (0..h_max)
        .map(|h| Estimate::from_samples(&curves.iter().map(|c| c[h]).collect::<Vec<_>>()))
        .collect();
    let means: Vec<f64> = tallies.iter().map(RunTally::mean).collect();
    let lookups: u64 = tallies.iter().map(RunTally::lookups).sum();
    let failed: u64 = tallies.iter().map(|t| t.failed).sum();
    Ok(SimStats {
        alpha: spec.alpha,
        beta: spec.beta,
        topologies: cfg.topologies,
        lookups,
        cumulative,
        mean: Estimate::from_samples(&means),
        failed: failed as f64 / lookups as f64,
    })
}
