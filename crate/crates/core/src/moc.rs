//! Models of computation: how a reservation-served control task binds
//! sampling, job release and actuation, and what that does to the loop.
//!
//! All four models share the same reservation arithmetic. A job of demand
//! `c` served by a hard reservation `(Q, R)` occupies `ceil(c / Q)` whole
//! reservation periods, and its output is released at the end of the last
//! one.
//!
//! * `tt_hard`: periodic sampling at `kT` with a budget that covers the WCET.
//! * `tt_maxb`: periodic sampling; a job not done by the next period is
//!   cancelled and the previous command is held.
//! * `tt_sort`: periodic sampling with buffered activations. A late job
//!   delays its successor and its own output. Jobs later than `max_delay`
//!   reservation periods past the next release point are cancelled.
//! * `cs`: the next sample is taken at the release point where the previous
//!   job ends, or where it is cancelled after `max_delay` periods.
//!
//! Commands follow the immediate convention of
//! [`HoldStrategy::Immediate`](crate::control::HoldStrategy): a job that
//! meets its release point acts from its sampling instant. Under `tt_sort`
//! a job whose output slips `d` periods past its release point acts `d`
//! periods after its sampling instant.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{check_reservation_grid, dropout_probability};
use crate::control::{
    build_modes, c2d, ClosedLoopModes, ContinuousLti, DiscreteLti, Feedback, HoldStrategy, Mode,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::taskmodel::{ExecTimeModel, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MocKind {
    TtHard,
    TtMaxb,
    TtSort { max_delay: u32 },
    Cs { max_delay: u32 },
}

impl MocKind {
    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            MocKind::TtSort { max_delay } | MocKind::Cs { max_delay } if *max_delay < 1 => {
                Err(Error::config(format!("{field}.max_delay"), "must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MocKind::TtHard => "tt_hard",
            MocKind::TtMaxb => "tt_maxb",
            MocKind::TtSort { .. } => "tt_sort",
            MocKind::Cs { .. } => "cs",
        }
    }
}

impl fmt::Display for MocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MocKind::TtSort { max_delay } | MocKind::Cs { max_delay } => {
                f.pad(&format!("{}:{max_delay}", self.name()))
            }
            _ => f.pad(self.name()),
        }
    }
}

/// `tt_hard`, `tt_maxb`, `tt_sort:D` or `cs:D`.
impl FromStr for MocKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let delay = || -> Result<u32> {
            let a = arg.ok_or_else(|| Error::config("moc", format!("{name} needs a max delay, e.g. {name}:2")))?;
            a.parse()
                .map_err(|_| Error::config("moc", format!("bad max delay {a:?}")))
        };
        let kind = match name {
            "tt_hard" if arg.is_none() => MocKind::TtHard,
            "tt_maxb" if arg.is_none() => MocKind::TtMaxb,
            "tt_sort" => MocKind::TtSort { max_delay: delay()? },
            "cs" => MocKind::Cs { max_delay: delay()? },
            _ => return Err(Error::config("moc", format!("unknown model of computation {s:?}"))),
        };
        kind.validate("moc")?;
        Ok(kind)
    }
}

/// Reservation periods a job of demand `c` occupies under budget `q`.
pub fn service_periods(c: Tick, q: Tick) -> Tick {
    debug_assert!(q > 0, "budget must be positive");
    (c.max(1) + q - 1) / q
}

/// The control task together with the reservation that serves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServedTask {
    pub exec: ExecTimeModel,
    pub budget: Tick,
    pub res_period: Tick,
    /// Nominal sampling period `T`, a multiple of `res_period`.
    pub period: Tick,
}

impl ServedTask {
    pub fn validate(&self) -> Result<()> {
        self.exec.validate("exec_model")?;
        check_reservation_grid(self.budget, self.res_period, self.period)
    }

    /// Reservation periods per sampling period.
    pub fn slots(&self) -> Tick {
        self.period / self.res_period
    }

    /// Distribution of [`service_periods`], sorted by period count.
    pub fn service_pmf(&self) -> Result<Vec<(Tick, f64)>> {
        let mut out: Vec<(Tick, f64)> = Vec::new();
        for (c, p) in self.exec.pmf()? {
            let s = service_periods(c, self.budget);
            match out.last_mut() {
                Some((last, mass)) if *last == s => *mass += p,
                _ => out.push((s, p)),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayChain {
    pub max_delay: u32,
    #[serde(with = "linalg::rows")]
    pub transition: Matrix,
    pub steady: Vec<f64>,
}

impl DelayChain {
    pub fn n_states(&self) -> usize {
        self.steady.len()
    }

    /// `‖πP − π‖∞`.
    pub fn residual(&self) -> f64 {
        let pi = DVector::from_column_slice(&self.steady);
        (self.transition.transpose() * &pi - &pi).amax()
    }
}

/// Next backlog at a release point, `None` when the job is cancelled.
fn next_delay(delay: Tick, s: Tick, slots: Tick, max_delay: Tick) -> Option<Tick> {
    let raw = delay + s - slots;
    (raw <= max_delay).then_some(raw.max(0))
}

/// Markov chain of the backlog `d ∈ {0..max_delay}` (in reservation periods)
/// seen at the release points of a `tt_sort` task, with the recursion
/// `d' = max(0, d + s − T/R)` and cancellation back to `0` beyond
/// `max_delay`.
pub fn build_delay_chain(task: &ServedTask, max_delay: u32) -> Result<DelayChain> {
    task.validate()?;
    if max_delay < 1 {
        return Err(Error::config("max_delay", "must be at least 1"));
    }
    let n = max_delay as usize + 1;
    let pmf = task.service_pmf()?;
    let mut p = Matrix::zeros(n, n);
    for d in 0..n {
        for &(s, mass) in &pmf {
            let to = next_delay(d as Tick, s, task.slots(), max_delay as Tick).unwrap_or(0);
            p[(d, to as usize)] += mass;
        }
    }
    // Backlog starts at 0. Restricting to the states reachable from there
    // keeps the stationary law unique even when every job takes exactly
    // T/R periods and each state is absorbing.
    let mut reach = vec![false; n];
    let mut stack = vec![0usize];
    reach[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if p[(i, j)] > 0.0 && !reach[j] {
                reach[j] = true;
                stack.push(j);
            }
        }
    }
    let idx: Vec<usize> = (0..n).filter(|i| reach[*i]).collect();
    let sub = Matrix::from_fn(idx.len(), idx.len(), |i, j| p[(idx[i], idx[j])]);
    let mut steady = vec![0.0; n];
    for (i, v) in idx.iter().zip(stationary(&sub)?) {
        steady[*i] = v;
    }
    Ok(DelayChain {
        max_delay,
        transition: p,
        steady,
    })
}

/// Stationary distribution of a row-stochastic matrix. Solves `πP = π`,
/// `Σπ = 1` directly and falls back to power iteration when the system is
/// singular or the solution is off.
pub fn stationary(p: &Matrix) -> Result<Vec<f64>> {
    linalg::check_square(p, "transition matrix")?;
    let n = p.nrows();
    let mut a = p.transpose() - Matrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut rhs = Matrix::zeros(n, 1);
    rhs[(n - 1, 0)] = 1.0;
    let check = |pi: &DVector<f64>| (p.transpose() * pi - pi).amax() < 1e-10 && pi.iter().all(|v| *v > -1e-12);
    if let Ok(x) = linalg::solve(&a, &rhs) {
        let pi = DVector::from_iterator(n, x.iter().copied());
        if check(&pi) {
            return Ok(pi.iter().map(|v| v.max(0.0)).collect());
        }
    }
    let pt = p.transpose();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..1_000_000 {
        // Lazy step: converges on periodic chains too.
        let next = (&pt * &pi + &pi) * 0.5;
        let done = (&next - &pi).amax() < 1e-14;
        pi = next;
        if done && check(&pi) {
            return Ok(pi.iter().copied().collect());
        }
    }
    Err(Error::Numerical("stationary distribution did not converge".into()))
}

/// Modes of the continuous-stream loop over `x̂ = (x, u_held)`.
///
/// Mode `s` (for `s = 1..=max_delay`) lasts `s` reservation periods with the
/// fresh command `−K x` applied over the interval. The `cancel` mode lasts
/// `max_delay` periods with the previous command held. `tick` is the length
/// of one tick in the plant's time unit.
pub fn cs_modes(plant: &ContinuousLti, k: &Matrix, task: &ServedTask, max_delay: u32, tick: f64) -> Result<ClosedLoopModes> {
    task.validate()?;
    if max_delay < 1 {
        return Err(Error::config("max_delay", "must be at least 1"));
    }
    let pmf = task.service_pmf()?;
    let mut modes = Vec::new();
    let mut probs = Vec::new();
    let interval = |s: Tick| -> Result<DiscreteLti> { c2d(plant, (s * task.res_period) as f64 * tick) };
    for s in 1..=max_delay as Tick {
        let m = build_modes(&interval(s)?, &Feedback::State(k.clone()), HoldStrategy::Immediate)?;
        modes.push(Mode {
            label: format!("s={s}"),
            matrix: m.modes[0].matrix.clone(),
            probability: None,
        });
        probs.push(pmf.iter().filter(|(v, _)| *v == s).map(|(_, p)| p).sum());
    }
    let held = build_modes(&interval(max_delay as Tick)?, &Feedback::State(k.clone()), HoldStrategy::Immediate)?;
    modes.push(Mode {
        label: "cancel".into(),
        matrix: held.modes[1].matrix.clone(),
        probability: None,
    });
    probs.push(pmf.iter().filter(|(v, _)| *v > max_delay as Tick).map(|(_, p)| p).sum());
    ClosedLoopModes::new(modes)?.with_probabilities(&probs)
}

/// Two-mode loop of the dropout model, with `μ` the dropout probability.
/// `plant` must be discretized at the task period.
pub fn tt_maxb_modes(plant: &DiscreteLti, k: &Matrix, task: &ServedTask) -> Result<ClosedLoopModes> {
    let mu = dropout_probability(&task.exec, task.budget, task.res_period, task.period)?;
    build_modes(plant, &Feedback::State(k.clone()), HoldStrategy::Immediate)?.with_probabilities(&[1.0 - mu, mu])
}

/// What one job does to the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Decision {
    mode: usize,
    /// Reservation periods after the sampling instant at which the fresh
    /// command takes effect; `None` if the job is cancelled.
    update_at: Option<Tick>,
    /// Reservation periods until the next sampling instant.
    advance: Tick,
    next_delay: Tick,
}

fn decide(moc: MocKind, s: Tick, delay: Tick, slots: Tick) -> Decision {
    match moc {
        MocKind::TtHard => Decision {
            mode: 0,
            update_at: Some(0),
            advance: slots,
            next_delay: 0,
        },
        MocKind::TtMaxb => {
            let ok = s <= slots;
            Decision {
                mode: usize::from(!ok),
                update_at: ok.then_some(0),
                advance: slots,
                next_delay: 0,
            }
        }
        MocKind::Cs { max_delay } => {
            let d = max_delay as Tick;
            if s <= d {
                Decision {
                    mode: (s - 1) as usize,
                    update_at: Some(0),
                    advance: s,
                    next_delay: 0,
                }
            } else {
                Decision {
                    mode: max_delay as usize,
                    update_at: None,
                    advance: d,
                    next_delay: 0,
                }
            }
        }
        MocKind::TtSort { max_delay } => match next_delay(delay, s, slots, max_delay as Tick) {
            Some(d) => Decision {
                mode: d as usize,
                update_at: Some(d),
                advance: slots,
                next_delay: d,
            },
            None => Decision {
                mode: max_delay as usize + 1,
                update_at: None,
                advance: slots,
                next_delay: 0,
            },
        },
    }
}

/// Inverse-CDF sampler over a probability mass function.
#[derive(Debug, Clone)]
struct PmfSampler {
    values: Vec<Tick>,
    cdf: Vec<f64>,
}

impl PmfSampler {
    fn new(pmf: &[(Tick, f64)]) -> Self {
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        PmfSampler {
            values: pmf.iter().map(|(v, _)| *v).collect(),
            cdf,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Tick {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let u = rng.gen::<f64>() * total;
        let i = self.cdf.partition_point(|c| *c <= u);
        self.values[i.min(self.values.len() - 1)]
    }
}

fn check_hard(moc: MocKind, task: &ServedTask) -> Result<()> {
    if moc == MocKind::TtHard && task.budget * task.slots() < task.exec.max_value() {
        return Err(Error::config(
            "reservation.budget",
            "tt_hard needs budget * (T / R) to cover the worst-case execution time",
        ));
    }
    Ok(())
}

/// Timing-only run of `n_jobs` sampling instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTrace {
    /// Mode index per job: `s − 1` or `max_delay` (cancel) for `cs`, `0`/`1`
    /// for `tt_maxb`, the output delay or `max_delay + 1` (cancel) for
    /// `tt_sort`.
    pub modes: Vec<usize>,
    /// Backlog seen at each release point, in reservation periods.
    pub delays: Vec<Tick>,
}

pub fn mode_sequence(moc: MocKind, task: &ServedTask, n_jobs: usize, seed: u64) -> Result<ModeTrace> {
    moc.validate("moc")?;
    task.validate()?;
    check_hard(moc, task)?;
    let sampler = PmfSampler::new(&task.exec.pmf()?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut delay = 0;
    let mut trace = ModeTrace {
        modes: Vec::with_capacity(n_jobs),
        delays: Vec::with_capacity(n_jobs),
    };
    for _ in 0..n_jobs {
        let s = service_periods(sampler.sample(&mut rng), task.budget);
        let d = decide(moc, s, delay, task.slots());
        trace.delays.push(delay);
        trace.modes.push(d.mode);
        delay = d.next_delay;
    }
    Ok(trace)
}

/// Sample lag-1 autocorrelation; `0` for a constant series.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoSimSetup {
    pub plant: ContinuousLti,
    /// State feedback `u = −K x`.
    #[serde(with = "linalg::rows")]
    pub gain: Matrix,
    /// Length of one tick in the plant's time unit.
    pub tick: f64,
    pub moc: MocKind,
    pub task: ServedTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Normalized particles resampled by their squared-norm growth. The
    /// product of the mean growth factors is an unbiased estimate of
    /// `E‖x̂_k‖²` whose relative error does not blow up with `k`.
    #[default]
    Resampled,
    /// Independent trajectories averaged directly. The average is dominated
    /// by rare trajectories once the modes disagree, so it tracks the
    /// typical rather than the mean-square behavior on long horizons.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoSimConfig {
    /// Number of sampling instants.
    pub horizon: usize,
    pub n_traj: usize,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Estimator,
    /// Initial plant state; `e₁` when absent. Held input starts at zero.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl Default for CoSimConfig {
    fn default() -> Self {
        CoSimConfig {
            horizon: 600,
            n_traj: 256,
            seed: 0,
            estimator: Estimator::Resampled,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

pub const STABLE_FACTOR: f64 = 1e-6;
pub const UNSTABLE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoSimResult {
    /// `ln E‖x̂_k‖²` for `k = 0..=horizon`; `-inf` once the state is exactly
    /// zero.
    pub log_second_moment: Vec<f64>,
    pub trajectories: usize,
    /// `ln` of the tail average over the last quarter of the horizon.
    pub tail_log_mean: f64,
    pub verdict: Verdict,
}

impl CoSimResult {
    pub fn second_moment(&self) -> Vec<f64> {
        self.log_second_moment.iter().map(|l| l.exp()).collect()
    }
}

fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (xs.iter().map(|x| (x - m).exp()).sum::<f64>() / xs.len() as f64).ln()
}

#[derive(Debug, Clone)]
struct Particle {
    x: DVector<f64>,
    u: DVector<f64>,
    /// Commands waiting for their actuation instant, in reservation periods
    /// from now.
    pending: VecDeque<(Tick, DVector<f64>)>,
    delay: Tick,
    /// `ln` of the factor the stored state was divided by (plain estimator).
    log_scale: f64,
    scratch: DVector<f64>,
}

impl Particle {
    fn norm_sq(&self) -> f64 {
        self.x.norm_squared() + self.u.norm_squared()
    }

    fn scale(&mut self, f: f64) {
        self.x *= f;
        self.u *= f;
        for (_, c) in &mut self.pending {
            *c *= f;
        }
    }
}

struct Stepper<'a> {
    setup: &'a CoSimSetup,
    phi: Matrix,
    gamma: Matrix,
    sampler: PmfSampler,
}

impl Stepper<'_> {
    fn step<R: Rng>(&self, p: &mut Particle, rng: &mut R) {
        let task = &self.setup.task;
        let s = service_periods(self.sampler.sample(rng), task.budget);
        let d = decide(self.setup.moc, s, p.delay, task.slots());
        p.delay = d.next_delay;
        if let Some(at) = d.update_at {
            let cmd = -(&self.setup.gain * &p.x);
            p.pending.push_back((at, cmd));
        }
        for _ in 0..d.advance {
            while p.pending.front().is_some_and(|(at, _)| *at == 0) {
                p.u = p.pending.pop_front().map(|(_, c)| c).unwrap_or_else(|| p.u.clone());
            }
            p.scratch.gemv(1.0, &self.phi, &p.x, 0.0);
            p.scratch.gemv(1.0, &self.gamma, &p.u, 1.0);
            std::mem::swap(&mut p.x, &mut p.scratch);
            for (at, _) in &mut p.pending {
                *at -= 1;
            }
        }
    }
}

/// Monte Carlo estimate of `E‖x̂_k‖²` at successive sampling instants, with
/// `x̂ = (x, u_held)` and a stability verdict from its tail.
pub fn cosimulate(setup: &CoSimSetup, config: &CoSimConfig) -> Result<CoSimResult> {
    setup.moc.validate("moc")?;
    setup.task.validate()?;
    check_hard(setup.moc, &setup.task)?;
    if config.n_traj == 0 {
        return Err(Error::config("cosim.n_traj", "must be at least 1"));
    }
    if config.horizon < 4 {
        return Err(Error::config("cosim.horizon", "must be at least 4"));
    }
    if !(setup.tick > 0.0 && setup.tick.is_finite()) {
        return Err(Error::config("cosim.tick", "must be positive"));
    }
    let n = setup.plant.state_dim();
    let p_in = setup.plant.input_dim();
    if setup.gain.nrows() != p_in || setup.gain.ncols() != n {
        return Err(Error::Dimension(format!("gain must be {p_in}x{n}")));
    }
    let x0 = match &config.x0 {
        Some(v) if v.len() != n => return Err(Error::config("cosim.x0", format!("expected {n} entries"))),
        Some(v) => DVector::from_column_slice(v),
        None => DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }),
    };
    let init_norm = x0.norm_squared();
    if init_norm == 0.0 {
        return Err(Error::config("cosim.x0", "initial state must be nonzero"));
    }
    let disc = c2d(&setup.plant, setup.task.res_period as f64 * setup.tick)?;
    let stepper = Stepper {
        setup,
        phi: disc.a,
        gamma: disc.b,
        sampler: PmfSampler::new(&setup.task.exec.pmf()?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut parts: Vec<Particle> = (0..config.n_traj)
        .map(|_| {
            let mut p = Particle {
                x: x0.clone(),
                u: DVector::zeros(p_in),
                pending: VecDeque::new(),
                delay: 0,
                log_scale: 0.0,
                scratch: DVector::zeros(n),
            };
            p.scale(1.0 / init_norm.sqrt());
            p.log_scale = 0.5 * init_norm.ln();
            p
        })
        .collect();

    let mut log_m = Vec::with_capacity(config.horizon + 1);
    log_m.push(init_norm.ln());
    let mut acc = init_norm.ln();
    for _ in 0..config.horizon {
        for p in parts.iter_mut() {
            stepper.step(p, &mut rng);
        }
        match config.estimator {
            Estimator::Resampled => {
                if acc == f64::NEG_INFINITY {
                    log_m.push(acc);
                    continue;
                }
                let g: Vec<f64> = parts.iter().map(Particle::norm_sq).collect();
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                if !mean.is_finite() {
                    return Err(Error::Numerical("co-simulation overflowed".into()));
                }
                if mean == 0.0 {
                    acc = f64::NEG_INFINITY;
                    log_m.push(acc);
                    continue;
                }
                acc += mean.ln();
                log_m.push(acc);
                parts = systematic_resample(&parts, &g, rng.gen());
                for p in parts.iter_mut() {
                    let nn = p.norm_sq();
                    p.scale(1.0 / nn.sqrt());
                }
            }
            Estimator::Plain => {
                let logs: Vec<f64> = parts
                    .iter_mut()
                    .map(|p| {
                        let nn = p.norm_sq();
                        if nn == 0.0 {
                            return f64::NEG_INFINITY;
                        }
                        p.log_scale += 0.5 * nn.ln();
                        p.scale(1.0 / nn.sqrt());
                        2.0 * p.log_scale
                    })
                    .collect();
                log_m.push(log_mean_exp(&logs));
            }
        }
    }
    let tail_start = config.horizon - config.horizon / 4;
    let tail_log_mean = log_mean_exp(&log_m[tail_start..]);
    let rel = tail_log_mean - init_norm.ln();
    let verdict = if rel < STABLE_FACTOR.ln() {
        Verdict::Stable
    } else if rel > UNSTABLE_FACTOR.ln() {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    };
    Ok(CoSimResult {
        log_second_moment: log_m,
        trajectories: config.n_traj,
        tail_log_mean,
        verdict,
    })
}

fn systematic_resample(parts: &[Particle], weights: &[f64], u0: f64) -> Vec<Particle> {
    let n = parts.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for j in 0..n {
        let target = (j as f64 + u0) / n as f64;
        while cum < target && i + 1 < n {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(parts[i].clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{dlqr, second_moment_stable, stability_radius, CostWeights, DEFAULT_MARGIN};
    use crate::linalg::mat;

    fn task(exec: ExecTimeModel, q: Tick, r: Tick, t: Tick) -> ServedTask {
        ServedTask {
            exec,
            budget: q,
            res_period: r,
            period: t,
        }
    }

    #[test]
    fn service_period_ceiling() {
        assert_eq!(service_periods(3, 3), 1);
        assert_eq!(service_periods(4, 3), 2);
        assert_eq!(service_periods(1, 3), 1);
    }

    #[test]
    fn moc_parsing() {
        assert_eq!("cs:3".parse::<MocKind>().unwrap(), MocKind::Cs { max_delay: 3 });
        assert_eq!("tt_maxb".parse::<MocKind>().unwrap(), MocKind::TtMaxb);
        assert!("cs".parse::<MocKind>().is_err());
        assert!("cs:0".parse::<MocKind>().is_err());
        assert!("tt".parse::<MocKind>().is_err());
        for k in [MocKind::TtHard, MocKind::TtSort { max_delay: 2 }] {
            assert_eq!(k.to_string().parse::<MocKind>().unwrap(), k);
        }
        let j: MocKind = serde_json::from_str(r#"{"kind": "tt_sort", "max_delay": 4}"#).unwrap();
        assert_eq!(j, MocKind::TtSort { max_delay: 4 });
    }

    #[test]
    fn never_late_chain_absorbs_at_zero() {
        let t = task(ExecTimeModel::Deterministic { c: 1 }, 1, 2, 4);
        let ch = build_delay_chain(&t, 3).unwrap();
        assert!((ch.steady[0] - 1.0).abs() < 1e-12);
        assert!(ch.steady[1..].iter().all(|p| p.abs() < 1e-12));
        // Backlog drains by one period per job.
        for d in 0..4usize {
            assert_eq!(ch.transition[(d, d.saturating_sub(1))], 1.0);
        }
    }

    #[test]
    fn exact_fit_keeps_the_start_state() {
        // s = T/R: every backlog persists, and the task starts with none.
        let t = task(ExecTimeModel::Deterministic { c: 2 }, 1, 2, 4);
        let ch = build_delay_chain(&t, 3).unwrap();
        assert_eq!(ch.steady, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_point_chain() {
        // s ∈ {1, 3} with equal odds, T/R = 2, max delay 2.
        let t = task(ExecTimeModel::Empirical { values: vec![1, 3] }, 1, 1, 2);
        let ch = build_delay_chain(&t, 2).unwrap();
        let expect = mat(&[&[0.5, 0.5, 0.0], &[0.5, 0.0, 0.5], &[0.5, 0.5, 0.0]]);
        assert!((&ch.transition - expect).amax() < 1e-15);
        // Balance: π = (1/2, 1/3, 1/6).
        let want = [0.5, 1.0 / 3.0, 1.0 / 6.0];
        for (a, b) in ch.steady.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(ch.residual() < 1e-12);
    }

    #[test]
    fn chain_rejects_misaligned_period() {
        let t = task(ExecTimeModel::Deterministic { c: 2 }, 1, 2, 5);
        assert!(matches!(build_delay_chain(&t, 2), Err(Error::Config { .. })));
    }

    #[test]
    fn power_iteration_fallback_on_periodic_chain() {
        let p = mat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let pi = stationary(&p).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12);
    }

    fn scalar_plant(a: f64) -> ContinuousLti {
        ContinuousLti::state_feedback(mat(&[&[a]]), mat(&[&[1.0]])).unwrap()
    }

    #[test]
    fn cs_degenerate_single_mode() {
        let t = task(ExecTimeModel::Deterministic { c: 2 }, 2, 4, 8);
        let m = cs_modes(&scalar_plant(0.5), &mat(&[&[1.0]]), &t, 3, 0.1).unwrap();
        let p = m.probabilities().unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cs_three_point_enumeration() {
        // c ∈ {1, 3, 5} with Q = 2: s ∈ {1, 2, 3}; max delay 2 cancels s = 3.
        let t = task(ExecTimeModel::Empirical { values: vec![1, 3, 5] }, 2, 4, 8);
        let m = cs_modes(&scalar_plant(0.5), &mat(&[&[1.0]]), &t, 2, 0.1).unwrap();
        let p = m.probabilities().unwrap();
        assert_eq!(m.modes.len(), 3);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cs_with_unit_delay_is_the_dropout_model() {
        let plant = ContinuousLti::state_feedback(mat(&[&[0.3, 1.0], &[0.2, -0.4]]), mat(&[&[0.0], &[1.0]])).unwrap();
        let tick = 0.05;
        let t = task(ExecTimeModel::Uniform { lo: 1, hi: 10 }, 3, 10, 10);
        let d = c2d(&plant, 10.0 * tick).unwrap();
        let k = dlqr(&d.a, &d.b, &CostWeights::identity(2, 1)).unwrap().k;
        let cs = cs_modes(&plant, &k, &t, 1, tick).unwrap();
        let maxb = tt_maxb_modes(&d, &k, &t).unwrap();
        let a = crate::control::stability_matrix(&cs).unwrap();
        let b = crate::control::stability_matrix(&maxb).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn scalar_dropout_example() {
        let d = DiscreteLti::new(mat(&[&[1.2]]), mat(&[&[1.0]]), mat(&[&[1.0]]), mat(&[&[0.0]]), 1.0).unwrap();
        let t = task(ExecTimeModel::Empirical { values: vec![1, 2, 3] }, 1, 1, 2);
        let m = tt_maxb_modes(&d, &mat(&[&[0.7]]), &t).unwrap();
        let p = m.probabilities().unwrap();
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        // ρ(Ã) = max((2/3)·0.25 + (1/3)·1.44, ...) from the 2x2 Kronecker form.
        assert!(second_moment_stable(&m, DEFAULT_MARGIN).unwrap());
    }

    fn setup(a: f64, k: f64, moc: MocKind, exec: ExecTimeModel, q: Tick) -> CoSimSetup {
        CoSimSetup {
            plant: scalar_plant(a),
            gain: mat(&[&[k]]),
            tick: 0.1,
            moc,
            task: task(exec, q, 5, 10),
        }
    }

    #[test]
    fn no_dropout_stable_loop_is_stable() {
        let s = setup(0.5, 2.0, MocKind::TtMaxb, ExecTimeModel::Deterministic { c: 5 }, 5);
        let r = cosimulate(&s, &CoSimConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Stable);
        let modes = tt_maxb_modes(&c2d(&s.plant, 1.0).unwrap(), &s.gain, &s.task).unwrap();
        let rho = stability_radius(&modes).unwrap();
        // Deterministic modes: the decay rate is exactly ln ρ(Ã) per step.
        let rate = (r.log_second_moment[200] - r.log_second_moment[100]) / 100.0;
        assert!((rate - rho.ln()).abs() < 1e-9, "{rate} vs {}", rho.ln());
    }

    #[test]
    fn hard_model_needs_covering_budget() {
        let s = setup(0.5, 2.0, MocKind::TtHard, ExecTimeModel::Deterministic { c: 11 }, 5);
        assert!(matches!(cosimulate(&s, &CoSimConfig::default()), Err(Error::Config { .. })));
    }

    #[test]
    fn resampled_estimate_tracks_the_analytic_rate() {
        let exec = ExecTimeModel::Uniform { lo: 1, hi: 14 };
        let s = setup(0.8, 1.8, MocKind::TtMaxb, exec, 5);
        let d = c2d(&s.plant, 1.0).unwrap();
        let rho = stability_radius(&tt_maxb_modes(&d, &s.gain, &s.task).unwrap()).unwrap();
        let cfg = CoSimConfig {
            horizon: 400,
            n_traj: 512,
            ..CoSimConfig::default()
        };
        let r = cosimulate(&s, &cfg).unwrap();
        let rate = (r.log_second_moment[400] - r.log_second_moment[200]) / 200.0;
        assert!((rate - rho.ln()).abs() < 0.02, "rate {rate} vs {}", rho.ln());
    }

    #[test]
    fn unit_delay_cs_equals_dropout_on_same_seed() {
        let exec = ExecTimeModel::Uniform { lo: 1, hi: 9 };
        let mut a = setup(0.7, 1.0, MocKind::TtMaxb, exec, 3);
        a.task.res_period = 10;
        let mut b = a.clone();
        b.moc = MocKind::Cs { max_delay: 1 };
        let cfg = CoSimConfig {
            horizon: 100,
            ..CoSimConfig::default()
        };
        assert_eq!(cosimulate(&a, &cfg).unwrap(), cosimulate(&b, &cfg).unwrap());
        let ma = mode_sequence(a.moc, &a.task, 1000, 3).unwrap();
        let mb = mode_sequence(b.moc, &b.task, 1000, 3).unwrap();
        assert_eq!(ma.modes, mb.modes);
    }

    #[test]
    fn sort_delays_apply_later() {
        // c = 15 with Q = 5: s = 3 periods against T/R = 2. Delays grow by
        // one per job until cancellation at max delay 2.
        let t = task(ExecTimeModel::Deterministic { c: 15 }, 5, 5, 10);
        let m = mode_sequence(MocKind::TtSort { max_delay: 2 }, &t, 7, 0).unwrap();
        assert_eq!(m.delays, vec![0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(m.modes, vec![1, 2, 3, 1, 2, 3, 1]);
    }

    #[test]
    fn autocorrelation_basics() {
        assert_eq!(lag1_autocorrelation(&[1.0, 1.0, 1.0]), 0.0);
        let alt: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        assert!(lag1_autocorrelation(&alt) < -0.95);
    }
}
