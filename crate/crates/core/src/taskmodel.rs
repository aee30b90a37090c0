//! Recurrent tasks, their jobs, execution-time models and reservation
//! parameters.
//!
//! All times are integer ticks. A task is the classic `(C, D, T)` triple:
//! worst-case execution time, relative deadline and (minimum) interarrival
//! time. Job `j` of a task arrives at `a_j`, has absolute deadline
//! `a_j + D` and demands `c_j` ticks of processor time.

use std::fmt;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, ContinuousCDF};

use crate::error::{Error, Result};

pub type Tick = i64;
pub type TaskId = u32;

/// Exact rational used for utilizations and budgets.
pub type Rational = Ratio<i64>;

/// Stream selectors for [`job_rng`]; each kind of random draw gets its own
/// stream so that, e.g., changing the arrival law never perturbs execution
/// times.
pub const STREAM_EXEC: u64 = 1;
pub const STREAM_ARRIVAL: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ExecTimeModel {
    Deterministic {
        c: Tick,
    },
    /// Integer ticks drawn uniformly from `lo..=hi`.
    Uniform {
        lo: Tick,
        hi: Tick,
    },
    /// `lo + (hi - lo) * X` with `X ~ Beta(alpha, beta)`, rounded to the
    /// nearest tick and floored at one tick.
    Beta {
        alpha: f64,
        beta: f64,
        lo: f64,
        hi: f64,
    },
    /// Uniform choice among the listed values (repeat a value to weight it).
    Empirical {
        values: Vec<Tick>,
    },
    /// `script[j]` for job `j` while in range, then the fallback model.
    Scripted {
        script: Vec<Tick>,
        fallback: Box<ExecTimeModel>,
    },
}

impl ExecTimeModel {
    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            ExecTimeModel::Deterministic { c } => {
                if *c <= 0 {
                    return Err(Error::config(field, "deterministic c must be positive"));
                }
            }
            ExecTimeModel::Uniform { lo, hi } => {
                if *lo <= 0 || lo > hi {
                    return Err(Error::config(field, "uniform requires 0 < lo <= hi"));
                }
            }
            ExecTimeModel::Beta { alpha, beta, lo, hi } => {
                if !(alpha.is_finite() && *alpha > 0.0 && beta.is_finite() && *beta > 0.0) {
                    return Err(Error::config(field, "beta requires alpha > 0 and beta > 0"));
                }
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::config(field, "beta requires lo < hi"));
                }
                if *hi < 0.5 {
                    return Err(Error::config(field, "beta support must reach one tick"));
                }
            }
            ExecTimeModel::Empirical { values } => {
                if values.is_empty() {
                    return Err(Error::config(field, "empirical value list is empty"));
                }
                if values.iter().any(|v| *v <= 0) {
                    return Err(Error::config(field, "empirical values must be positive"));
                }
            }
            ExecTimeModel::Scripted { script, fallback } => {
                if script.iter().any(|v| *v <= 0) {
                    return Err(Error::config(field, "scripted values must be positive"));
                }
                fallback.validate(&format!("{field}.fallback"))?;
            }
        }
        Ok(())
    }

    /// Largest value the model can produce.
    pub fn max_value(&self) -> Tick {
        match self {
            ExecTimeModel::Deterministic { c } => *c,
            ExecTimeModel::Uniform { hi, .. } => *hi,
            ExecTimeModel::Beta { hi, .. } => (hi.round() as Tick).max(1),
            ExecTimeModel::Empirical { values } => values.iter().copied().max().unwrap_or(1),
            ExecTimeModel::Scripted { script, fallback } => script
                .iter()
                .copied()
                .max()
                .unwrap_or(1)
                .max(fallback.max_value()),
        }
    }

    /// Draws one value. Job index only matters for the scripted variant.
    pub fn sample<R: Rng + ?Sized>(&self, job_index: u64, rng: &mut R) -> Result<Tick> {
        let value = match self {
            ExecTimeModel::Deterministic { c } => *c,
            ExecTimeModel::Uniform { lo, hi } => rng.gen_range(*lo..=*hi),
            ExecTimeModel::Beta { alpha, beta, lo, hi } => {
                let dist = rand_distr::Beta::new(*alpha, *beta)
                    .map_err(|e| Error::config("exec_model.beta", e.to_string()))?;
                let x: f64 = dist.sample(rng);
                ((lo + (hi - lo) * x).round() as Tick).max(1)
            }
            ExecTimeModel::Empirical { values } => {
                if values.is_empty() {
                    return Err(Error::config("exec_model.empirical", "empty value list"));
                }
                values[rng.gen_range(0..values.len())]
            }
            ExecTimeModel::Scripted { script, fallback } => match script.get(job_index as usize) {
                Some(v) => *v,
                None => fallback.sample(job_index, rng)?,
            },
        };
        Ok(value)
    }

    /// Probability mass function of the stationary draw, sorted by tick.
    ///
    /// Scripted models report their fallback, i.e. the long-run law. Beta
    /// masses come from the CDF of the rounded variable, so they describe
    /// exactly what [`ExecTimeModel::sample`] produces.
    pub fn pmf(&self) -> Result<Vec<(Tick, f64)>> {
        self.validate("exec_model")?;
        let pmf = match self {
            ExecTimeModel::Deterministic { c } => vec![(*c, 1.0)],
            ExecTimeModel::Uniform { lo, hi } => {
                let n = (hi - lo + 1) as f64;
                (*lo..=*hi).map(|v| (v, 1.0 / n)).collect()
            }
            ExecTimeModel::Beta { alpha, beta, lo, hi } => {
                let dist = BetaDist::new(*alpha, *beta)
                    .map_err(|e| Error::config("exec_model.beta", e.to_string()))?;
                let cdf = |v: f64| {
                    let x = (v - lo) / (hi - lo);
                    if x <= 0.0 {
                        0.0
                    } else if x >= 1.0 {
                        1.0
                    } else {
                        dist.cdf(x)
                    }
                };
                let first = (lo.round() as Tick).max(1);
                let last = (hi.round() as Tick).max(1);
                let mut out = Vec::new();
                for k in first..=last {
                    let lower = if k == 1 { 0.0 } else { cdf(k as f64 - 0.5) };
                    let upper = cdf(k as f64 + 0.5);
                    let p = (upper - lower).max(0.0);
                    if p > 0.0 {
                        out.push((k, p));
                    }
                }
                out
            }
            ExecTimeModel::Empirical { values } => {
                let mut sorted = values.clone();
                sorted.sort_unstable();
                let n = sorted.len() as f64;
                let mut out: Vec<(Tick, f64)> = Vec::new();
                for v in sorted {
                    match out.last_mut() {
                        Some((last, count)) if *last == v => *count += 1.0,
                        _ => out.push((v, 1.0)),
                    }
                }
                out.iter_mut().for_each(|(_, c)| *c /= n);
                out
            }
            ExecTimeModel::Scripted { fallback, .. } => fallback.pmf()?,
        };
        Ok(pmf)
    }

    /// Same as [`ExecTimeModel::pmf`] with every value clipped to `cap`.
    pub fn pmf_clipped(&self, cap: Tick) -> Result<Vec<(Tick, f64)>> {
        let mut out: Vec<(Tick, f64)> = Vec::new();
        for (v, p) in self.pmf()? {
            let v = v.min(cap);
            match out.last_mut() {
                Some((last, mass)) if *last == v => *mass += p,
                _ => out.push((v, p)),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Periodic,
    /// Interarrival gap is `min_gap + U{0..=max_extra}`.
    Sporadic {
        min_gap: Tick,
        #[serde(default)]
        max_extra: Tick,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissPolicy {
    /// Keep executing; the job finishes late.
    #[default]
    Continue,
    /// Discard the remaining demand when the miss is detected.
    Abort,
    /// Finish late, then drop every queued instance released before the
    /// completion instant.
    SkipLate,
}

fn default_periodic() -> Activation {
    Activation::Periodic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: TaskId,
    pub wcet: Tick,
    pub rel_deadline: Tick,
    pub period: Tick,
    #[serde(default = "default_periodic")]
    pub activation: Activation,
    pub exec_model: ExecTimeModel,
    #[serde(default)]
    pub miss_policy: MissPolicy,
    /// Release time of the first job.
    #[serde(default)]
    pub offset: Tick,
    /// Clip every sampled execution time to `wcet`.
    #[serde(default)]
    pub enforce_wcet: bool,
}

impl TaskSpec {
    /// Periodic implicit-deadline task with deterministic demand `c = wcet`.
    pub fn periodic(id: TaskId, wcet: Tick, period: Tick) -> Self {
        TaskSpec {
            id,
            wcet,
            rel_deadline: period,
            period,
            activation: Activation::Periodic,
            exec_model: ExecTimeModel::Deterministic { c: wcet },
            miss_policy: MissPolicy::Continue,
            offset: 0,
            enforce_wcet: false,
        }
    }

    pub fn with_exec_model(mut self, model: ExecTimeModel) -> Self {
        self.exec_model = model;
        self
    }

    pub fn with_deadline(mut self, deadline: Tick) -> Self {
        self.rel_deadline = deadline;
        self
    }

    pub fn with_miss_policy(mut self, policy: MissPolicy) -> Self {
        self.miss_policy = policy;
        self
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.wcet <= 0 {
            return Err(Error::config(format!("{field}.wcet"), "must be positive"));
        }
        if self.rel_deadline <= 0 {
            return Err(Error::config(format!("{field}.rel_deadline"), "must be positive"));
        }
        if self.period <= 0 {
            return Err(Error::config(format!("{field}.period"), "must be positive"));
        }
        if self.offset < 0 {
            return Err(Error::config(format!("{field}.offset"), "must be non-negative"));
        }
        if let Activation::Sporadic { min_gap, max_extra } = self.activation {
            if min_gap < self.period {
                return Err(Error::config(
                    format!("{field}.activation.min_gap"),
                    "must be at least the period",
                ));
            }
            if max_extra < 0 {
                return Err(Error::config(
                    format!("{field}.activation.max_extra"),
                    "must be non-negative",
                ));
            }
        }
        self.exec_model.validate(&format!("{field}.exec_model"))
    }

    /// Execution demand of job `job_index`; reproducible from `seed` alone.
    pub fn exec_time(&self, job_index: u64, seed: u64) -> Result<Tick> {
        let mut rng = job_rng(seed, self.id, job_index, STREAM_EXEC);
        let c = sample_exec_time(&self.exec_model, job_index, &mut rng)?;
        Ok(if self.enforce_wcet { c.min(self.wcet) } else { c })
    }

    /// Activation instants strictly before `horizon`.
    pub fn arrivals(&self, horizon: Tick, seed: u64) -> Vec<Tick> {
        let mut out = Vec::new();
        let mut t = self.offset;
        let mut j = 0u64;
        while t < horizon {
            out.push(t);
            let gap = match self.activation {
                Activation::Periodic => self.period,
                Activation::Sporadic { min_gap, max_extra } => {
                    let extra = if max_extra > 0 {
                        job_rng(seed, self.id, j, STREAM_ARRIVAL).gen_range(0..=max_extra)
                    } else {
                        0
                    };
                    min_gap + extra
                }
            };
            t += gap;
            j += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReservationVariant {
    /// Exhaustion postpones the server deadline by `P` and recharges.
    #[default]
    SoftPostpone,
    /// Exhaustion suspends the server until its current deadline.
    HardSuspend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reclaiming {
    #[default]
    None,
    Grub,
}

/// A constant bandwidth server `(Q, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservationSpec {
    pub budget: Tick,
    pub period: Tick,
    #[serde(default)]
    pub variant: ReservationVariant,
    #[serde(default)]
    pub reclaiming: Reclaiming,
}

impl ReservationSpec {
    pub fn new(budget: Tick, period: Tick) -> Self {
        ReservationSpec {
            budget,
            period,
            variant: ReservationVariant::SoftPostpone,
            reclaiming: Reclaiming::None,
        }
    }

    pub fn hard(budget: Tick, period: Tick) -> Self {
        ReservationSpec {
            variant: ReservationVariant::HardSuspend,
            ..Self::new(budget, period)
        }
    }

    pub fn bandwidth(&self) -> Rational {
        Rational::new(self.budget, self.period)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.period <= 0 {
            return Err(Error::config(format!("{field}.period"), "must be positive"));
        }
        if self.budget <= 0 || self.budget > self.period {
            return Err(Error::config(
                format!("{field}.budget"),
                "must satisfy 0 < budget <= period",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobOutcome {
    Met,
    Late,
    Aborted,
    Skipped,
    /// Still pending when the simulation horizon was reached.
    Unfinished,
}

impl JobOutcome {
    /// Whether the instance counts as a deadline miss.
    pub fn is_miss(self) -> bool {
        matches!(self, JobOutcome::Late | JobOutcome::Aborted | JobOutcome::Skipped)
    }
}

impl fmt::Display for JobOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            JobOutcome::Met => "met",
            JobOutcome::Late => "late",
            JobOutcome::Aborted => "aborted",
            JobOutcome::Skipped => "skipped",
            JobOutcome::Unfinished => "unfinished",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub task_id: TaskId,
    pub index: u64,
    pub arrival: Tick,
    pub abs_deadline: Tick,
    pub exec_demand: Tick,
    pub completion: Option<Tick>,
    pub outcome: JobOutcome,
}

impl JobRecord {
    pub fn response_time(&self) -> Option<Tick> {
        self.completion.map(|c| c - self.arrival)
    }
}

/// Deterministic generator for one `(seed, task, job, stream)` cell.
///
/// Every job gets an independent generator, so a job's draw does not depend
/// on how many draws other tasks or other jobs consumed.
pub fn job_rng(seed: u64, task: TaskId, job_index: u64, stream: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ u64::from(task));
    h = splitmix64(h ^ job_index);
    h = splitmix64(h ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    ChaCha8Rng::seed_from_u64(h)
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_exec_time<R: Rng + ?Sized>(
    model: &ExecTimeModel,
    job_index: u64,
    rng: &mut R,
) -> Result<Tick> {
    model.sample(job_index, rng)
}

/// Total utilization `sum C_i / T_i`, exact.
pub fn utilization(tasks: &[TaskSpec]) -> Result<Rational> {
    if tasks.is_empty() {
        return Err(Error::config("tasks", "task list is empty"));
    }
    let mut u = Rational::from_integer(0);
    for (i, t) in tasks.iter().enumerate() {
        if t.period <= 0 {
            return Err(Error::config(format!("tasks[{i}].period"), "must be positive"));
        }
        u += Rational::new(t.wcet, t.period);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(c: Tick, t: Tick) -> TaskSpec {
        TaskSpec::periodic(0, c, t)
    }

    #[test]
    fn deterministic_is_constant() {
        let m = ExecTimeModel::Deterministic { c: 2 };
        let mut rng = job_rng(1, 0, 0, STREAM_EXEC);
        for j in 0..10 {
            assert_eq!(sample_exec_time(&m, j, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn scripted_falls_back_after_script() {
        let m = ExecTimeModel::Scripted {
            script: vec![2, 2, 2],
            fallback: Box::new(ExecTimeModel::Deterministic { c: 1 }),
        };
        let mut rng = job_rng(0, 0, 0, STREAM_EXEC);
        let got: Vec<_> = (0..5).map(|j| m.sample(j, &mut rng).unwrap()).collect();
        assert_eq!(got, vec![2, 2, 2, 1, 1]);
    }

    #[test]
    fn beta_sample_mean_matches_analytic_mean() {
        // lo + (hi - lo) * a / (a + b) = 5.0 for Beta(2, 2) on [0, 10]
        let m = ExecTimeModel::Beta {
            alpha: 2.0,
            beta: 2.0,
            lo: 0.0,
            hi: 10.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let sum: i64 = (0..n).map(|j| m.sample(j, &mut rng).unwrap()).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 5.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn empirical_empty_is_config_error() {
        let m = ExecTimeModel::Empirical { values: vec![] };
        let mut rng = job_rng(0, 0, 0, STREAM_EXEC);
        assert!(matches!(m.sample(0, &mut rng), Err(Error::Config { .. })));
        assert!(m.validate("x").is_err());
    }

    #[test]
    fn beta_pmf_sums_to_one_and_matches_sampler() {
        let m = ExecTimeModel::Beta {
            alpha: 2.0,
            beta: 5.0,
            lo: 0.0,
            hi: 20.0,
        };
        let pmf = m.pmf().unwrap();
        let total: f64 = pmf.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut hits = 0;
        for j in 0..n {
            if m.sample(j, &mut rng).unwrap() == 4 {
                hits += 1;
            }
        }
        let p4 = pmf.iter().find(|(v, _)| *v == 4).unwrap().1;
        let freq = hits as f64 / n as f64;
        let se = (p4 * (1.0 - p4) / n as f64).sqrt();
        assert!((freq - p4).abs() < 4.0 * se, "freq {freq} vs {p4}");
    }

    #[test]
    fn utilization_examples() {
        let set = [task(1, 4), task(2, 5), task(2, 6)];
        assert_eq!(utilization(&set).unwrap(), Rational::new(59, 60));
        assert!(utilization(&[]).is_err());
        assert_eq!(utilization(&[task(1, 1)]).unwrap(), Rational::from_integer(1));
        let overload = [task(2, 4), task(2, 5), task(2, 6)];
        // 2/4 + 2/5 + 2/6 = 74/60
        assert_eq!(utilization(&overload).unwrap(), Rational::new(37, 30));
    }

    #[test]
    fn wcet_enforcement_clips() {
        let mut t = task(3, 10).with_exec_model(ExecTimeModel::Uniform { lo: 1, hi: 9 });
        t.enforce_wcet = true;
        for j in 0..200 {
            assert!(t.exec_time(j, 3).unwrap() <= 3);
        }
    }

    #[test]
    fn sporadic_gaps_respect_minimum() {
        let mut t = task(1, 5);
        t.activation = Activation::Sporadic {
            min_gap: 5,
            max_extra: 4,
        };
        let a = t.arrivals(500, 9);
        assert!(a.windows(2).all(|w| w[1] - w[0] >= 5 && w[1] - w[0] <= 9));
        assert_eq!(a, t.arrivals(500, 9));
    }

    #[test]
    fn reservation_validation() {
        assert!(ReservationSpec::new(0, 4).validate("r").is_err());
        assert!(ReservationSpec::new(5, 4).validate("r").is_err());
        assert!(ReservationSpec::new(4, 4).validate("r").is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sampling_is_reproducible(seed in any::<u64>(), job in 0u64..1000) {
                let t = task(5, 10).with_exec_model(ExecTimeModel::Beta {
                    alpha: 2.0, beta: 5.0, lo: 0.0, hi: 10.0,
                });
                prop_assert_eq!(t.exec_time(job, seed).unwrap(), t.exec_time(job, seed).unwrap());
                prop_assert!(t.exec_time(job, seed).unwrap() >= 1);
            }

            #[test]
            fn utilization_is_additive(
                a in prop::collection::vec((1i64..10, 1i64..20), 1..6),
                b in prop::collection::vec((1i64..10, 1i64..20), 1..6),
            ) {
                let ta: Vec<_> = a.iter().map(|&(c, t)| task(c, t)).collect();
                let tb: Vec<_> = b.iter().map(|&(c, t)| task(c, t)).collect();
                let mut both = ta.clone();
                both.extend(tb.iter().cloned());
                prop_assert_eq!(
                    utilization(&both).unwrap(),
                    utilization(&ta).unwrap() + utilization(&tb).unwrap()
                );
            }

            #[test]
            fn enforced_samples_never_exceed_wcet(seed in any::<u64>(), wcet in 1i64..8) {
                let mut t = task(wcet, 10).with_exec_model(ExecTimeModel::Uniform { lo: 1, hi: 12 });
                t.enforce_wcet = true;
                for j in 0..20 {
                    prop_assert!(t.exec_time(j, seed).unwrap() <= wcet);
                }
            }
        }
    }
}
