//! `uamr`: validate networks, solve the routing MDP, simulate policies and
//! run the case-study experiments.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use uam_routing::experiments::{experiment_charging, experiment_qsafe, write_charging_csv};
use uam_routing::mdp::build_mdp;
use uam_routing::model::{Demand, Network, NetworkDocument};
use uam_routing::rollout::{trace_route, LinkSampling, RolloutConfig, Simulator};
use uam_routing::safety::{find_safe_route, is_safe_route};
use uam_routing::solver::{
    extract_policy, first_uncovered, policy_iteration, read_policy_csv, value_iteration, write_policy_csv,
    SolverConfig, Sweep,
};
use uam_routing::Error;

#[derive(Parser)]
#[command(name = "uamr", version, about = "Battery-aware routing over stochastic air-mobility networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = SweepArg::Jacobi)]
    sweep: SweepArg,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            tolerance: self.tol,
            max_iterations: self.max_iter,
            sweep: match self.sweep {
                SweepArg::Jacobi => Sweep::Jacobi,
                SweepArg::GaussSeidel => Sweep::GaussSeidel,
            },
        }
    }
}

#[derive(clap::Args)]
struct NetworkArgs {
    /// Network document (JSON).
    network: PathBuf,
    /// Re-discretize distance-based links at this time step (minutes).
    #[arg(long)]
    delta_t: Option<f64>,
    /// Override the document's demand origin.
    #[arg(long)]
    origin: Option<String>,
    /// Override the document's demand destination.
    #[arg(long)]
    destination: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Jacobi,
    GaussSeidel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Vi,
    Pi,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    Single,
    Tick,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a network document.
    Validate { network: PathBuf },
    /// Solve the MDP over the states reachable from the initial state.
    Solve {
        #[command(flatten)]
        net: NetworkArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = Method::Vi)]
        method: Method,
        /// Policy and value CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo evaluation of a policy written by `solve`.
    Simulate {
        #[command(flatten)]
        net: NetworkArgs,
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        #[arg(long, value_enum, default_value_t = Sampling::Single)]
        link_sampling: Sampling,
        /// Statistics CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV of one sampled trajectory (episode 0).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Shortest route whose links all satisfy the worst-case battery bound.
    SafeRoute {
        #[command(flatten)]
        net: NetworkArgs,
    },
    /// Fraction of queue settings under which routes and links stay safe.
    ExperimentQsafe {
        #[command(flatten)]
        net: NetworkArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Inclusive range of maximal queue lengths, `lo..hi`.
        #[arg(long, default_value = "0..4", value_parser = parse_range)]
        qmax_range: (u32, u32),
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimized charging against charging to full along fixed routes.
    ExperimentCharging {
        #[command(flatten)]
        net: NetworkArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_delimiter = ',', default_value = "dallas,cameron")]
        origins: Vec<String>,
        /// Full-charge times in minutes: a list `6,12` or `lo..hi:step`.
        #[arg(long, default_value = "6..60:6", value_parser = parse_minutes)]
        tb_range: Minutes,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Debug)]
struct Minutes(Vec<f64>);

fn parse_range(text: &str) -> Result<(u32, u32), String> {
    let (lo, hi) = text
        .split_once("..=")
        .or_else(|| text.split_once(".."))
        .ok_or_else(|| format!("expected `lo..hi`, got `{text}`"))?;
    let lo: u32 = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: u32 = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn parse_minutes(text: &str) -> Result<Minutes, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s}: {e}"));
    let values = if let Some((range, step)) = text.split_once(':') {
        let (lo, hi) = range
            .split_once("..")
            .ok_or_else(|| format!("expected `lo..hi:step`, got `{text}`"))?;
        let (lo, hi, step) = (num(lo)?, num(hi.trim_start_matches('='))?, num(step)?);
        if step <= 0.0 {
            return Err("step must be positive".into());
        }
        let n = ((hi - lo) / step + 1e-9).floor();
        if n < 0.0 {
            return Err(format!("empty range {lo}..{hi}"));
        }
        (0..=n as usize).map(|i| lo + step * i as f64).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err("no charge times".into());
    }
    Ok(Minutes(values))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_)
        | Error::DegenerateLink { .. }
        | Error::OffGrid { .. }
        | Error::UnknownNode(_)
        | Error::UnknownLink(_)
        | Error::InvalidDemand(_)
        | Error::Config(_) => 2,
        Error::PolicyUndefined(_) => 3,
        _ => 1,
    }
}

/// Twelve significant digits.
fn sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..12).contains(&exp) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn load(args: &NetworkArgs) -> Result<(Network, Demand), Error> {
    let text = std::fs::read_to_string(&args.network)?;
    let mut doc = NetworkDocument::from_json(&text)?;
    if let Some(dt) = args.delta_t {
        doc = doc.with_delta_t(dt);
    }
    let net = doc.load()?;
    let demand = match (&args.origin, &args.destination) {
        (None, None) => net.require_demand()?,
        (o, d) => {
            let current = net.demand();
            let name = |v: usize| net.node(v).id.clone();
            let origin = o.clone().or_else(|| current.map(|c| name(c.origin)));
            let destination = d.clone().or_else(|| current.map(|c| name(c.destination)));
            match (origin, destination) {
                (Some(o), Some(d)) => net.demand_between(&o, &d)?,
                _ => return Err(Error::InvalidDemand("origin and destination are both required".into())),
            }
        }
    };
    let net = net.with_demand(demand);
    Ok((net, demand))
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { network } => {
            let text = std::fs::read_to_string(&network)?;
            let doc = NetworkDocument::from_json(&text)?;
            let net = doc.load()?;
            println!("ok: {} nodes, {} links", net.nodes().len(), net.links().len());
            Ok(())
        }
        Command::Solve {
            net,
            solver,
            method,
            out,
        } => {
            let (network, demand) = load(&net)?;
            let config = solver.config();
            let start = Instant::now();
            let full = build_mdp(&network, demand)?;
            let model = full.reachable_subset(full.initial);
            let (policy, values, iterations, residual) = match method {
                Method::Vi => {
                    let vi = value_iteration(&model, &config)?;
                    let policy = extract_policy(&model, &vi.values, config.gamma);
                    (policy, vi.values, vi.iterations, Some(vi.residual))
                }
                Method::Pi => {
                    let pi = policy_iteration(&model, &config)?;
                    (pi.policy, pi.values, pi.improvements, None)
                }
            };
            let elapsed = start.elapsed();
            println!("{} states", full.len());
            println!("{} reachable from the initial state", model.len());
            println!("transitions: {}", model.transition_count());
            match residual {
                Some(r) => println!("iterations: {iterations}\nresidual: {}", sig(r)),
                None => println!("improvements: {iterations}"),
            }
            println!("wall time: {:.3} s", elapsed.as_secs_f64());
            println!("initial value: {}", sig(values.values[model.initial]));
            let rollout = RolloutConfig {
                gamma: config.gamma,
                ..RolloutConfig::default()
            };
            let worst = Simulator::new(&network, demand, &model, &policy, rollout)?.worst_case()?;
            match trace_route(&worst, &network) {
                Ok(t) => println!(
                    "worst-case route: {}\nworst-case time: {} min",
                    t.describe(&network),
                    sig(worst.total_time)
                ),
                Err(_) => println!("worst-case realization does not arrive ({:?})", worst.outcome),
            }
            if let Some(path) = out {
                write_policy_csv(&model, &network, &policy, &values, output(Some(&path))?)?;
            }
            Ok(())
        }
        Command::Simulate {
            net,
            policy,
            episodes,
            seed,
            gamma,
            max_steps,
            link_sampling,
            out,
            trajectory,
        } => {
            let (network, demand) = load(&net)?;
            let full = build_mdp(&network, demand)?;
            let model = full.reachable_subset(full.initial);
            let policy = read_policy_csv(&model, &network, BufReader::new(File::open(&policy)?))?;
            if let Some(s) = first_uncovered(&model, &policy, model.initial) {
                return Err(Error::PolicyUndefined(model.states[s].describe(&network)));
            }
            let config = RolloutConfig {
                gamma,
                max_steps,
                link_sampling: match link_sampling {
                    Sampling::Single => LinkSampling::SingleDraw,
                    Sampling::Tick => LinkSampling::TickByTick,
                },
            };
            let sim = Simulator::new(&network, demand, &model, &policy, config)?;
            let stats = sim.estimate(episodes, seed)?;
            stats.write_csv(output(out.as_deref())?)?;
            if let Some(path) = trajectory {
                sim.sample_episode(seed, 0)?.write_csv(&network, output(Some(&path))?)?;
            }
            Ok(())
        }
        Command::SafeRoute { net } => {
            let (network, demand) = load(&net)?;
            match find_safe_route(&network, demand) {
                Some(route) => {
                    println!("route: {}", route.describe(&network));
                    let mut stdout = io::stdout().lock();
                    is_safe_route(&route, &network).write_csv(&network, &mut stdout)?;
                }
                None => println!("none found"),
            }
            Ok(())
        }
        Command::ExperimentQsafe {
            net,
            solver,
            qmax_range,
            out,
        } => {
            let (network, _) = load(&net)?;
            let outcome = experiment_qsafe(&network, qmax_range.0..=qmax_range.1, &solver.config())?;
            outcome.write_csv(output(out.as_deref())?)
        }
        Command::ExperimentCharging {
            net,
            solver,
            origins,
            tb_range,
            out,
        } => {
            let (network, _) = load(&net)?;
            let rows = experiment_charging(&network, &origins, &tb_range.0, &solver.config())?;
            write_charging_csv(&rows, output(out.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
