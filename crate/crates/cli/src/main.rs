use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kadhop::closest_contacts;
use kadhop_cli::config::{BoundChoice, ChurnConfig, Fill, Format, Grid, Mode, Routing, SpecSource, SweepAxes};
use kadhop_cli::run::Prepared;
use kadhop_cli::{run, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "kadhop", version, about = "Hop-count bounds and simulation for Kademlia-type DHTs")]
struct Cli {
    /// Run the configuration document at this path.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Upper and lower bounds on the hop-count distribution.
    Analytic(AnalyticArgs),
    /// Lookups on random static topologies.
    Simulate(SimArgs),
    /// Analytic bounds next to simulated confidence intervals.
    Compare(SimArgs),
    /// Analytic means over presets, routing parameters, sizes and stale rates.
    Sweep(SweepArgs),
    /// Distribution of the closest returned contacts at one distance.
    Contacts(ContactsArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// mdht, imdht, kad, kad4, kademlia80:50 or kademlia80:40.
    #[arg(long)]
    preset: Option<String>,
    /// System spec JSON document.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Identifier width of a preset.
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    alpha: Option<u32>,
    #[arg(long)]
    beta: Option<u32>,
}

impl SystemArgs {
    fn source(self) -> SpecSource {
        SpecSource {
            preset: self.preset,
            file: self.spec,
            bits: self.bits,
            n: self.n,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Admissible reduction error.
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    /// Reduced width to use instead of the one delta calls for.
    #[arg(long)]
    reduced_bits: Option<u32>,
    #[arg(long, value_enum, default_value_t = BoundChoice::Both)]
    bound: BoundChoice,
    /// Hops to evaluate (b̃ + 1, or htl under churn, by default).
    #[arg(long)]
    h_max: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest state space a single analysis may build.
    #[arg(long)]
    max_states: Option<u64>,
}

impl OutputArgs {
    fn apply(self, cfg: &mut RunConfig) {
        cfg.delta = self.delta;
        cfg.reduced_bits = self.reduced_bits;
        cfg.bound = self.bound;
        cfg.h_max = self.h_max;
        cfg.output = self.output;
        cfg.format = self.format;
        cfg.seed = self.seed;
        if let Some(m) = self.max_states {
            cfg.max_states = m;
        }
    }
}

#[derive(Args)]
struct AnalyticArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    out: OutputArgs,
    /// Probability that a contacted node does not answer.
    #[arg(long, default_value_t = 0.0)]
    stale: f64,
    /// Hops-to-live under churn.
    #[arg(long)]
    htl: Option<u32>,
    /// Bucket fill: full, measured, or a factor in (0, 1].
    #[arg(long, default_value = "full")]
    fill: Fill,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, default_value_t = 0.0)]
    stale: f64,
    #[arg(long)]
    htl: Option<u32>,
    #[arg(long, default_value_t = 20)]
    topologies: u32,
    /// Distinct targets per source node.
    #[arg(long, default_value_t = 5)]
    targets: u32,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, value_delimiter = ',', default_value = "mdht,kad")]
    presets: Vec<String>,
    /// alpha:beta pairs.
    #[arg(long, value_delimiter = ',', default_value = "3:2,4:1")]
    routing: Vec<Routing>,
    /// Exponents lo:hi of the 2^i·1000 network sizes.
    #[arg(long, default_value = "0:20")]
    n_grid: Grid,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    stale: Vec<f64>,
    #[arg(long)]
    htl: Option<u32>,
    #[arg(long, default_value = "full")]
    fill: Fill,
}

#[derive(Args)]
struct ContactsArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    #[arg(long)]
    reduced_bits: Option<u32>,
    /// Distance of the queried node (b̃ by default).
    #[arg(long)]
    d: Option<u32>,
    /// Number of closest contacts tracked (alpha by default).
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn config_for(command: Command) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let compare = matches!(command, Command::Compare(_));
    match command {
        Command::Analytic(a) => {
            cfg.mode = Mode::Analytic;
            cfg.spec = a.system.source();
            a.out.apply(&mut cfg);
            cfg.churn = ChurnConfig {
                stale: a.stale,
                htl: a.htl,
                fill: a.fill,
            };
        }
        Command::Simulate(s) | Command::Compare(s) => {
            cfg.mode = if compare { Mode::Compare } else { Mode::Simulate };
            cfg.spec = s.system.source();
            s.out.apply(&mut cfg);
            cfg.churn = ChurnConfig {
                stale: s.stale,
                htl: s.htl,
                fill: Fill::Full,
            };
            cfg.campaign.topologies = s.topologies;
            cfg.campaign.targets = s.targets;
        }
        Command::Sweep(s) => {
            cfg.mode = Mode::Sweep;
            s.out.apply(&mut cfg);
            cfg.churn = ChurnConfig {
                stale: 0.0,
                htl: s.htl,
                fill: s.fill,
            };
            cfg.sweep = SweepAxes {
                presets: s.presets,
                routing: s.routing,
                n_grid: s.n_grid,
                stale: s.stale,
            };
        }
        Command::Contacts(_) => unreachable!("handled separately"),
    }
    Ok(cfg)
}

fn contacts(args: ContactsArgs) -> Result<(), CliError> {
    let cfg = RunConfig {
        spec: args.system.source(),
        delta: args.delta,
        reduced_bits: args.reduced_bits,
        ..RunConfig::default()
    };
    cfg.check()?;
    let prep = Prepared::new(cfg.spec.resolve()?, &cfg, 0.0)?;
    let b = prep.reduced.b;
    let d = args.d.unwrap_or(b);
    if d > b {
        return Err(CliError::Config(format!("distance {d} exceeds the reduced width {b}")));
    }
    let gamma = args.gamma.unwrap_or(prep.reduced.alpha);
    if gamma == 0 {
        return Err(CliError::Config("gamma must be at least 1".into()));
    }
    eprintln!("{}", prep.summary());
    let dist = closest_contacts(&prep.reduced, d, gamma);
    let mut text = String::from("tuple,probability\n");
    text.push_str(&format!("terminal,{}\n", dist.terminal_mass));
    for (tuple, p) in &dist.mass {
        let t: Vec<String> = tuple.iter().map(u8::to_string).collect();
        text.push_str(&format!("{},{p}\n", t.join(" ")));
    }
    match args.output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let cfg = match (cli.config, cli.command) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("--config cannot be combined with a subcommand".into()))
        }
        (None, None) => return Err(CliError::Config("nothing to do: give a subcommand or --config".into())),
        (None, Some(Command::Contacts(args))) => return contacts(args),
        (None, Some(command)) => config_for(command)?,
        (Some(path), None) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
    };
    if cli.dump_config {
        cfg.check()?;
        println!("{}", cfg.to_json());
        return Ok(());
    }
    run(&cfg, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kadhop: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
