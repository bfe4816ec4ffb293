//! Mode execution.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use kadhop::markov::{default_horizon, MAX_RETURNED};
use kadhop::sim::{run_campaign, CampaignConfig, SimStats};
use kadhop::{analyze, reduce_spec, reduction_error, state_count};
use kadhop::{Bound, ChurnParams, HopCountReport, Preset, ReductionPlan, SystemSpec};

use crate::config::{Mode, RunConfig};
use crate::error::CliError;
use crate::output::{write_rows, CellKey, Row};

/// Environment variable holding the worker count for sweeps and campaigns.
pub const WORKERS_ENV: &str = "KADHOP_WORKERS";

pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|w| w.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// A system ready for analysis at its reduced width.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub full: SystemSpec,
    pub plan: ReductionPlan,
    pub reduced: SystemSpec,
    pub churn: Option<ChurnParams>,
    pub h_max: usize,
    pub states: u128,
}

impl Prepared {
    pub fn new(full: SystemSpec, cfg: &RunConfig, stale: f64) -> Result<Self, CliError> {
        let mut plan = ReductionPlan::for_spec(&full, cfg.delta);
        if let Some(b) = cfg.reduced_bits {
            if b == 0 || b > full.b {
                return Err(CliError::Config(format!("reduced width {b} outside [1, {}]", full.b)));
            }
            plan.b_reduced = b;
            plan.error_bound = reduction_error(full.b, b, full.n, plan.kappa);
        }
        let b = plan.b_reduced;
        if full.alpha * full.beta > MAX_RETURNED {
            return Err(CliError::Capacity(format!(
                "alpha * beta = {} exceeds {MAX_RETURNED}",
                full.alpha * full.beta
            )));
        }
        let states = state_count(full.alpha, b);
        if states > cfg.max_states as u128 {
            return Err(CliError::Capacity(format!(
                "{states} states at {b} bits exceed the budget of {}",
                cfg.max_states
            )));
        }
        let reduced = reduce_spec(&full, b)?;
        let mut churn_cfg = cfg.churn.clone();
        churn_cfg.stale = stale;
        let churn = churn_cfg.is_active().then(|| churn_cfg.params(b));
        let h_max = cfg.h_max.unwrap_or_else(|| default_horizon(&reduced, churn.as_ref()));
        Ok(Prepared {
            full,
            plan,
            reduced,
            churn,
            h_max,
            states,
        })
    }

    pub fn summary(&self) -> String {
        format!(
            "b̃ = {} (from {}, κ = {}), error bound {:.3e} (δ = {}), {} states, horizon {} hops",
            self.plan.b_reduced,
            self.plan.b_full,
            self.plan.kappa,
            self.plan.error_bound,
            self.plan.delta,
            self.states,
            self.h_max
        )
    }

    pub fn analyze(&self, bounds: &[Bound]) -> Result<Vec<HopCountReport>, CliError> {
        bounds
            .iter()
            .map(|&b| Ok(analyze(&self.reduced, b, self.churn.as_ref(), Some(self.h_max))?))
            .collect()
    }

    pub fn simulate(&self, cfg: &RunConfig) -> Result<SimStats, CliError> {
        let campaign = CampaignConfig {
            stale: cfg.churn.stale,
            htl: self.churn.as_ref().map(|c| c.htl),
            workers: workers(),
            ..CampaignConfig::new(cfg.campaign.topologies, cfg.campaign.targets, cfg.seed)
        };
        Ok(run_campaign(&self.full, &campaign)?)
    }
}

fn key_for(system: &str, spec: &SystemSpec, stale: f64) -> CellKey {
    CellKey {
        system: system.to_string(),
        n: spec.n,
        alpha: spec.alpha,
        beta: spec.beta,
        stale,
    }
}

/// Rows produced by a run, plus how many sweep cells hit a capacity guard.
#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub capacity_errors: usize,
}

/// Runs `cfg`, writing progress and summaries to `info`.
pub fn execute(cfg: &RunConfig, info: &mut dyn Write) -> Result<Outcome, CliError> {
    cfg.check()?;
    if cfg.mode == Mode::Sweep {
        return sweep(cfg, info);
    }
    let system = cfg.spec.label();
    let full = cfg.spec.resolve()?;
    let stale = cfg.churn.stale;
    let key = key_for(&system, &full, stale);
    let prep = Prepared::new(full, cfg, stale)?;
    writeln!(info, "{system} n={} R{},{}: {}", key.n, key.alpha, key.beta, prep.summary())?;
    let mut rows = Vec::new();
    let reports = match cfg.mode {
        Mode::Analytic | Mode::Compare => prep.analyze(&cfg.bound.bounds())?,
        _ => Vec::new(),
    };
    for r in &reports {
        writeln!(info, "{} bound: mean {:.4}, residual {:.2e}", r.bound, r.mean, r.residual)?;
        rows.extend(key.analytic_rows(r));
    }
    if matches!(cfg.mode, Mode::Simulate | Mode::Compare) {
        let stats = prep.simulate(cfg)?;
        writeln!(
            info,
            "simulated: {} lookups over {} topologies, mean {:.4} [{:.4}, {:.4}], failed {:.2e}",
            stats.lookups, stats.topologies, stats.mean.mean, stats.mean.ci_low, stats.mean.ci_high, stats.failed
        )?;
        if cfg.mode == Mode::Compare {
            compare_table(info, &reports, &stats)?;
        }
        rows.extend(key.sim_rows(&stats));
    }
    Ok(Outcome {
        rows,
        capacity_errors: 0,
    })
}

fn compare_table(info: &mut dyn Write, reports: &[HopCountReport], stats: &SimStats) -> std::io::Result<()> {
    let hops = reports
        .iter()
        .map(|r| r.cumulative.len())
        .chain([stats.cumulative.len()])
        .max()
        .unwrap_or(0);
    write!(info, "{:>4}", "hop")?;
    for r in reports {
        write!(info, " {:>9}", r.bound.name())?;
    }
    writeln!(info, " {:>9} {:>21}  inside", "simulated", "95% CI")?;
    let mut inside_all = 0;
    for h in 1..=hops {
        let Some(e) = stats.at(h.min(stats.cumulative.len())) else {
            break;
        };
        write!(info, "{h:>4}")?;
        let mut inside = true;
        for r in reports {
            let v = r.at(h);
            inside &= e.contains(v, 1e-9);
            write!(info, " {v:>9.5}")?;
        }
        inside_all += inside as usize;
        writeln!(
            info,
            " {:>9.5} [{:>9.5}, {:>9.5}]  {}",
            e.mean,
            e.ci_low,
            e.ci_high,
            if inside { "yes" } else { "no" }
        )?;
    }
    writeln!(info, "bounds inside the simulated interval at {inside_all} of {hops} hops")
}

struct Cell {
    preset: Preset,
    n: u64,
    alpha: u32,
    beta: u32,
    stale: f64,
}

struct CellResult {
    line: String,
    rows: Vec<Row>,
    capacity: bool,
}

fn sweep_cell(cfg: &RunConfig, cell: &Cell) -> CellResult {
    let key = CellKey {
        system: cell.preset.name().to_string(),
        n: cell.n,
        alpha: cell.alpha,
        beta: cell.beta,
        stale: cell.stale,
    };
    let label = format!("{} n={} R{},{} stale={}", key.system, key.n, key.alpha, key.beta, key.stale);
    let result = SystemSpec::preset(cell.preset, 128, cell.n, cell.alpha, cell.beta)
        .map_err(CliError::from)
        .and_then(|full| Prepared::new(full, cfg, cell.stale))
        .and_then(|prep| Ok((prep.analyze(&cfg.bound.bounds())?, prep)));
    match result {
        Ok((reports, prep)) => {
            let means: Vec<String> = reports.iter().map(|r| format!("{} {:.4}", r.bound, r.mean)).collect();
            CellResult {
                line: format!("{label}: b̃ = {}, {}", prep.plan.b_reduced, means.join(", ")),
                rows: reports.iter().flat_map(|r| key.analytic_rows(r)).collect(),
                capacity: false,
            }
        }
        Err(e) => CellResult {
            line: format!("{label}: error: {e}"),
            rows: cfg
                .bound
                .bounds()
                .iter()
                .map(|b| key.error_row(b.name(), &e.to_string()))
                .collect(),
            capacity: matches!(e, CliError::Capacity(_)),
        },
    }
}

fn sweep(cfg: &RunConfig, info: &mut dyn Write) -> Result<Outcome, CliError> {
    let mut cells = Vec::new();
    for name in &cfg.sweep.presets {
        let preset: Preset = name.parse()?;
        for r in &cfg.sweep.routing {
            for n in cfg.sweep.n_grid.sizes() {
                for &stale in &cfg.sweep.stale {
                    cells.push(Cell {
                        preset,
                        n,
                        alpha: r.0,
                        beta: r.1,
                        stale,
                    });
                }
            }
        }
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, CellResult)>();
    let mut outcome = Outcome::default();
    std::thread::scope(|scope| -> Result<(), CliError> {
        for _ in 0..workers().min(cells.len()) {
            let tx = tx.clone();
            let (cells, next) = (&cells, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                if tx.send((i, sweep_cell(cfg, cell))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // emit in cell order whatever order the workers finish in
        let mut pending: Vec<Option<CellResult>> = (0..cells.len()).map(|_| None).collect();
        let mut done = 0;
        for (i, result) in rx {
            pending[i] = Some(result);
            while let Some(r) = pending.get_mut(done).and_then(Option::take) {
                writeln!(info, "{}", r.line)?;
                outcome.capacity_errors += r.capacity as usize;
                outcome.rows.extend(r.rows);
                done += 1;
            }
        }
        Ok(())
    })?;
    Ok(outcome)
}

/// Runs `cfg` and writes its rows to the configured output, or to `stdout`
/// when none is set. Summaries go to `stdout` when rows go to a file and to
/// `stderr` otherwise.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    // open the destination first so a bad path fails before any work
    let mut file = match &cfg.output {
        Some(path) => Some(BufWriter::new(File::create(path).map_err(|e| {
            CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?)),
        None => None,
    };
    let info: &mut dyn Write = if file.is_some() { &mut *stdout } else { &mut *stderr };
    let outcome = execute(cfg, info)?;
    match (&mut file, &cfg.output) {
        (Some(file), Some(path)) => {
            write_rows(file, cfg.format, &outcome.rows)?;
            file.flush()?;
            writeln!(stdout, "wrote {} rows to {}", outcome.rows.len(), path.display())?;
            writeln!(stdout, "wall time {:.2?}", start.elapsed())?;
        }
        _ => {
            write_rows(stdout, cfg.format, &outcome.rows)?;
            writeln!(stderr, "wall time {:.2?}", start.elapsed())?;
        }
    }
    if outcome.capacity_errors > 0 {
        return Err(CliError::Capacity(format!(
            "{} sweep cells exceeded a capacity guard and are marked as error rows",
            outcome.capacity_errors
        )));
    }
    Ok(())
}
