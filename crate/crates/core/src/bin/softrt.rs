use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use softrt::analysis::metrics;
use softrt::config::{Config, ControllerKind};
use softrt::control::{
    build_modes, c2d, dlqr, kalman_gain, lqg_assemble, radius_vs_dropout, Feedback, HoldStrategy,
};
use softrt::experiment::bandwidth_sweep;
use softrt::linalg::to_rows;
use softrt::moc::{build_delay_chain, cosimulate, MocKind};
use softrt::render::{render_ascii, render_svg};
use softrt::{simulate, Error, Result, Tick, Trace};

#[derive(Parser)]
#[command(name = "softrt", version, about = "Reservation scheduling simulator and control co-design analyzer")]
struct Cli {
    /// JSON experiment document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the document's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Ascii,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheduler on the configured task set and emit its event trace.
    Simulate,
    /// Per-task metrics of a trace file written by `simulate`.
    Analyze {
        trace: PathBuf,
        /// Trace horizon; defaults to the last event tick.
        #[arg(long)]
        horizon: Option<Tick>,
    },
    /// Discretize the plant, synthesize the controller and tabulate the
    /// second-moment radius against the dropout probability.
    ControlSynth,
    /// Backlog chain of the configured control task under `tt_sort`.
    Chain {
        /// Overrides the bound taken from the configured model of computation.
        #[arg(long)]
        max_delay: Option<u32>,
    },
    /// Monte Carlo second moment of the configured control loop.
    Cosim,
    /// Fraction of random systems stabilized per bandwidth and model of computation.
    Sweep,
    /// Draw the schedule of the configured task set.
    Render {
        #[arg(long, value_enum, default_value = "ascii")]
        style: Style,
    },
}

fn load(cli: &Cli) -> Result<Config> {
    match &cli.config {
        Some(p) => Config::load(p),
        None => Err(Error::config("--config", "this command needs a configuration file")),
    }
}

fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, body)?,
        None => io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn seed_of(cli: &Cli, cfg: &Config) -> u64 {
    cli.seed.or(cfg.seed).unwrap_or(0)
}

fn simulated(cli: &Cli, cfg: &Config) -> Result<Trace> {
    let (tasks, sched) = cfg.simulation()?;
    simulate(&tasks, &sched, seed_of(cli, cfg))
}

fn run(cli: &Cli) -> Result<String> {
    let format = cli.format;
    match &cli.command {
        Command::Simulate => {
            let cfg = load(cli)?;
            let trace = simulated(cli, &cfg)?;
            let mut buf = Vec::new();
            match format.unwrap_or(Format::Csv) {
                Format::Csv => trace.write_csv(&mut buf)?,
                Format::Json => trace.write_jsonl(&mut buf)?,
            }
            Ok(String::from_utf8_lossy(&buf).into_owned())
        }
        Command::Analyze { trace, horizon } => {
            let constraint = match &cli.config {
                Some(p) => Config::load(p)?.constraint,
                None => None,
            };
            if let Some(c) = &constraint {
                c.validate("constraint")?;
            }
            let file = File::open(trace).map_err(|e| Error::config("trace", format!("{}: {e}", trace.display())))?;
            let trace = Trace::read_events(BufReader::new(file), *horizon)?;
            let report = metrics(&trace, constraint.as_ref())?;
            match format.unwrap_or(Format::Json) {
                Format::Json => pretty(&report),
                Format::Csv => {
                    let mut s = String::from("task,jobs,completed,met,late,aborted,skipped,misses,tardiness,max_response,constraint_holds\n");
                    for t in &report.tasks {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{},{},{},{},{},{}",
                            t.task,
                            t.jobs,
                            t.completed,
                            t.met,
                            t.late,
                            t.aborted,
                            t.skipped,
                            t.misses,
                            t.tardiness,
                            t.max_response.map(|r| r.to_string()).unwrap_or_default(),
                            t.constraint.map(|c| c.holds.to_string()).unwrap_or_default()
                        );
                    }
                    Ok(s)
                }
            }
        }
        Command::ControlSynth => {
            let cfg = load(cli)?;
            let plant = cfg.plant()?;
            let h = cfg.sample_period()?;
            let d = c2d(&plant.model, h)?;
            let lqr = dlqr(&d.a, &d.b, &cfg.weights()?)?;
            let (feedback, extra) = match plant.controller {
                ControllerKind::Lqr => (Feedback::State(lqr.k.clone()), json!(null)),
                ControllerKind::Lqg => {
                    let noise = plant
                        .noise
                        .as_ref()
                        .ok_or_else(|| Error::config("plant.noise", "required by the lqg controller"))?;
                    let l = kalman_gain(&d.a, &d.c, &noise.process, &noise.measurement)?;
                    let ctrl = lqg_assemble(&d, &lqr.k, &l)?;
                    let extra = json!({ "kalman_gain": to_rows(&l), "controller": ctrl });
                    (Feedback::Dynamic(ctrl), extra)
                }
            };
            let modes = build_modes(&d, &feedback, HoldStrategy::Immediate)?;
            let grid = match &plant.mu_grid {
                Some(g) => g.clone(),
                None => (0..=20).map(|i| i as f64 / 20.0).collect(),
            };
            let table = radius_vs_dropout(&modes, &grid).map_err(|e| match e {
                Error::Config { reason, .. } => Error::config("plant.mu_grid", reason),
                other => other,
            })?;
            match format.unwrap_or(Format::Json) {
                Format::Csv => {
                    let mut s = String::from("mu,rho\n");
                    for (mu, rho) in &table {
                        let _ = writeln!(s, "{mu},{rho}");
                    }
                    Ok(s)
                }
                Format::Json => pretty(&json!({
                    "discrete": d,
                    "gain": to_rows(&lqr.k),
                    "riccati_iterations": lqr.iterations,
                    "lqg": extra,
                    "modes": modes,
                    "radius_vs_dropout": table
                        .iter()
                        .map(|(mu, rho)| json!({ "mu": mu, "rho": rho }))
                        .collect::<Vec<_>>(),
                })),
            }
        }
        Command::Chain { max_delay } => {
            let cfg = load(cli)?;
            let task = cfg.control_task()?;
            let bound = match (max_delay, task.moc) {
                (Some(d), _) => *d,
                (None, MocKind::TtSort { max_delay } | MocKind::Cs { max_delay }) => max_delay,
                (None, _) => {
                    return Err(Error::config(
                        "control_task.moc",
                        "no delay bound; use tt_sort or pass --max-delay",
                    ))
                }
            };
            let chain = build_delay_chain(&task.served(), bound)?;
            match format.unwrap_or(Format::Csv) {
                Format::Json => pretty(&chain),
                Format::Csv => {
                    let n = chain.n_states();
                    let mut s = String::from("state,steady");
                    for j in 0..n {
                        let _ = write!(s, ",to_{j}");
                    }
                    s.push('\n');
                    for i in 0..n {
                        let _ = write!(s, "{i},{}", chain.steady[i]);
                        for j in 0..n {
                            let _ = write!(s, ",{}", chain.transition[(i, j)]);
                        }
                        s.push('\n');
                    }
                    Ok(s)
                }
            }
        }
        Command::Cosim => {
            let cfg = load(cli)?;
            let setup = cfg.cosim_setup()?;
            let res = cosimulate(&setup, &cfg.cosim_config(cli.seed))?;
            match format.unwrap_or(Format::Csv) {
                Format::Json => pretty(&res),
                Format::Csv => {
                    let mut s = String::from("step,second_moment\n");
                    for (k, v) in res.second_moment().iter().enumerate() {
                        let _ = writeln!(s, "{k},{v:e}");
                    }
                    Ok(s)
                }
            }
        }
        Command::Sweep => {
            let cfg = match &cli.config {
                Some(p) => Config::load(p)?,
                None => Config::default(),
            };
            let table = bandwidth_sweep(&cfg.sweep_config(cli.seed)?)?;
            if !table.synthesis_failures.is_empty() {
                eprintln!("no stabilizing controller for systems {:?}", table.synthesis_failures);
            }
            match format.unwrap_or(Format::Csv) {
                Format::Csv => Ok(table.to_csv()),
                Format::Json => pretty(&table),
            }
        }
        Command::Render { style } => {
            let cfg = load(cli)?;
            let trace = simulated(cli, &cfg)?;
            Ok(match style {
                Style::Ascii => render_ascii(&trace),
                Style::Svg => render_svg(&trace),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|body| emit(cli.out.as_deref(), &body)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("softrt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
