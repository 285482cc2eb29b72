use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rsma_mc::baselines::{self, TdmScheme};
use rsma_mc::config::load_config;
use rsma_mc::experiments::{self, Experiment, Scheme, SweepSpec};
use rsma_mc::model::{ArrivalRates, ServiceRates, SystemConfig};
use rsma_mc::queuesim::{simulate, ArrivalProcess, QUEUE_NAMES};
use rsma_mc::scasolver::{solve_mc_rsma, Objective, SolveOptions};

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "rsma-mc", version, about = "Rate-splitting multi-connectivity uplink power allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Max-min LC load versus HC load.
    StabilityRegion(SweepArgs),
    /// Relative LC rate loss versus blocklength.
    RateLoss(SweepArgs),
    /// Max-min LC rate versus SNR.
    RateVsSnr(SweepArgs),
    /// Solve one operating point.
    Solve(SolveArgs),
    /// Solve one operating point and simulate the queues.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed for the stochastic parts (queue simulation).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-iteration solver diagnostics.
    #[arg(long)]
    trace: bool,
    /// Accept blocklengths below 100 channel uses.
    #[arg(long)]
    allow_short_blocklength: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "mc-rsma,mc-tdm,sc-tdm")]
    schemes: Vec<Scheme>,
    /// `start:step:stop` or a comma-separated list; defaults per experiment.
    #[arg(long)]
    grid: Option<String>,
    /// HC load held fixed in the blocklength and SNR sweeps, packets/slot.
    #[arg(long, default_value_t = experiments::DEFAULT_A_HC)]
    a_hc: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "mc-rsma")]
    scheme: Scheme,
    /// HC arrivals per UE, packets/slot.
    #[arg(long, default_value_t = experiments::DEFAULT_A_HC)]
    a_hc: f64,
    /// LC arrivals per UE, packets/slot.
    #[arg(long, default_value_t = 0.0)]
    a_lc: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Process {
    Deterministic,
    Poisson,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long, default_value_t = 10_000)]
    slots: usize,
    #[arg(long, value_enum, default_value_t = Process::Deterministic)]
    process: Process,
    /// Offered LC load as a fraction of the max-min LC service found.
    #[arg(long, default_value_t = 0.95)]
    margin: f64,
}

fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("bad grid `{text}`");
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let (start, step, stop) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| start + step * k as f64).collect());
    }
    text.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect()
}

fn open_out(path: &Path) -> Result<BufWriter<File>, ExitCode> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        eprintln!("cannot write {}: {e}", path.display());
        ExitCode::FAILURE
    })
}

fn load(common: &Common) -> Result<SystemConfig, ExitCode> {
    load_config(&common.config, common.allow_short_blocklength).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn io_fail(e: std::io::Error) -> ExitCode {
    eprintln!("write failed: {e}");
    ExitCode::FAILURE
}

fn sweep(experiment: Experiment, args: SweepArgs) -> Result<ExitCode, ExitCode> {
    let cfg = load(&args.common)?;
    let mut plan = SweepSpec::new(experiment, args.schemes);
    plan.a_hc = args.a_hc;
    if let Some(g) = &args.grid {
        plan.grid = parse_grid(g).map_err(|e| {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        })?;
    }
    let result = experiments::run(&plan, &cfg).map_err(|e| {
        eprintln!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    let mut out = open_out(&args.common.out)?;
    result.write_csv(&mut out).and_then(|_| out.flush()).map_err(io_fail)?;
    if result.rows.is_empty() {
        eprintln!("every grid point is infeasible");
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    }
    Ok(ExitCode::SUCCESS)
}

/// Service rates for one operating point, or `None` if infeasible.
fn solve_point(args: &SolveArgs, cfg: &SystemConfig, arrivals: &ArrivalRates) -> Result<Option<ServiceRates>, ExitCode> {
    let obj = Objective::MaxMinPrivate;
    match args.scheme {
        Scheme::McRsma => match solve_mc_rsma(arrivals, obj, cfg, &SolveOptions::default()) {
            Ok(report) => {
                println!("status: {:?}, iterations: {}", report.status, report.iterations.len());
                println!("power: pc = {:?}, pp = {:?}", report.power.pc, report.power.pp);
                println!("rates (bits/s): rc = {:?}, rp = {:?}", report.rates.rc, report.rates.rp);
                if args.common.trace {
                    let mut out = open_out(&args.common.out)?;
                    report.write_trace_csv(&mut out).and_then(|_| out.flush()).map_err(io_fail)?;
                }
                Ok(Some(ServiceRates::from_rates(&report.rates, cfg)))
            }
            Err(e) => {
                println!("{e}");
                Ok(None)
            }
        },
        Scheme::McTdm | Scheme::ScTdm => {
            let kind = if args.scheme == Scheme::McTdm {
                TdmScheme::MultiConnectivity
            } else {
                TdmScheme::SingleConnectivity
            };
            match baselines::solve(kind, arrivals, obj, cfg) {
                Ok(sol) => {
                    println!("alpha: {}", sol.alpha);
                    println!("rates (bits/s): hc = {:?}, lc = {:?}", sol.rates.rc, sol.rates.rp);
                    Ok(Some(sol.effective_service))
                }
                Err(e) => {
                    println!("{e}");
                    Ok(None)
                }
            }
        }
    }
}

fn solve_cmd(args: SolveArgs) -> Result<ExitCode, ExitCode> {
    let cfg = load(&args.common)?;
    let arrivals = ArrivalRates::symmetric(args.a_hc, args.a_lc).map_err(|e| {
        eprintln!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    let Some(service) = solve_point(&args, &cfg, &arrivals)? else {
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    };
    if !args.common.trace {
        let mut out = open_out(&args.common.out)?;
        writeln!(out, "scheme,a_hc_pkts,a_lc_pkts,s_hc_1,s_hc_2,s_lc_1,s_lc_2")
            .and_then(|_| {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    args.scheme, args.a_hc, args.a_lc, service.hc[0], service.hc[1], service.lc[0], service.lc[1]
                )
            })
            .and_then(|_| out.flush())
            .map_err(io_fail)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate_cmd(args: SimulateArgs) -> Result<ExitCode, ExitCode> {
    let s = &args.solve;
    let cfg = load(&s.common)?;
    let arrivals = ArrivalRates::symmetric(s.a_hc, s.a_lc).map_err(|e| {
        eprintln!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    let Some(service) = solve_point(s, &cfg, &arrivals)? else {
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    };
    // offer a margin of the found service to every queue
    let offered = ArrivalRates::new(service.hc.map(|r| r * args.margin), service.lc.map(|r| r * args.margin)).map_err(|e| {
        eprintln!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    let process = match args.process {
        Process::Deterministic => ArrivalProcess::Deterministic,
        Process::Poisson => ArrivalProcess::Poisson,
    };
    let trace = simulate(&service, &offered, process, args.slots, s.common.seed);
    for (name, v) in QUEUE_NAMES.iter().zip(trace.verdicts()) {
        println!("{name}: {v:?}");
    }
    let mut out = open_out(&s.common.out)?;
    trace.write_csv(&mut out).and_then(|_| out.flush()).map_err(io_fail)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let trace = match &cli.command {
        Command::StabilityRegion(a) | Command::RateLoss(a) | Command::RateVsSnr(a) => a.common.trace,
        Command::Solve(a) => a.common.trace,
        Command::Simulate(a) => a.solve.common.trace,
    };
    let level = if trace { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::StabilityRegion(a) => sweep(Experiment::StabilityRegion, a),
        Command::RateLoss(a) => sweep(Experiment::RateLossVsBlocklength, a),
        Command::RateVsSnr(a) => sweep(Experiment::RateVsSnr, a),
        Command::Solve(a) => solve_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
    };
    result.unwrap_or_else(|code| code)
}
