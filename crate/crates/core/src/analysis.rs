//! Offline metrics over traces: tardiness, `(m, n)` miss constraints and the
//! job dropout probability of a hard reservation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::trace::Trace;
use crate::taskmodel::{ExecTimeModel, JobOutcome, JobRecord, TaskId, Tick};

/// At most `m` misses in any `n` consecutive instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnPair {
    pub m: u32,
    pub n: u32,
}

impl MnPair {
    pub fn new(m: u32, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("constraint.n", "window length must be at least 1"));
        }
        if m > n {
            return Err(Error::config("constraint.m", "m must not exceed n"));
        }
        Ok(MnPair { m, n })
    }
}

/// Conjunction of `(m, n)` pairs, e.g. `(2, 10) ∧ (1, 2)`: at most two misses
/// in ten instances and never two in a row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MissConstraint {
    pub conjunction: Vec<MnPair>,
}

impl MissConstraint {
    pub fn single(m: u32, n: u32) -> Result<Self> {
        Ok(MissConstraint {
            conjunction: vec![MnPair::new(m, n)?],
        })
    }

    pub fn and(mut self, m: u32, n: u32) -> Result<Self> {
        self.conjunction.push(MnPair::new(m, n)?);
        Ok(self)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.conjunction.is_empty() {
            return Err(Error::config(field, "empty constraint"));
        }
        for (i, p) in self.conjunction.iter().enumerate() {
            MnPair::new(p.m, p.n).map_err(|e| match e {
                Error::Config { reason, .. } => Error::config(format!("{field}[{i}]"), reason),
                other => other,
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnViolation {
    pub pair: MnPair,
    /// First and last instance index of the offending window, inclusive.
    pub window: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnVerdict {
    pub holds: bool,
    pub first_violation: Option<MnViolation>,
    /// Some pair has a window longer than the instance sequence, so the
    /// verdict covers fewer instances than the constraint talks about.
    pub indeterminate: bool,
}

/// Evaluates a constraint on an explicit miss pattern (`true` = miss).
///
/// Windows slide over consecutive instances. A pair whose window is longer
/// than the pattern is checked on the whole pattern and flags the result as
/// indeterminate.
pub fn check_mn_pattern(misses: &[bool], constraint: &MissConstraint) -> MnVerdict {
    let mut first: Option<MnViolation> = None;
    let mut indeterminate = false;
    for &pair in &constraint.conjunction {
        let n = pair.n as usize;
        let width = if misses.len() < n {
            indeterminate = true;
            misses.len()
        } else {
            n
        };
        if width == 0 {
            continue;
        }
        let mut count = misses[..width].iter().filter(|m| **m).count();
        let mut hit = None;
        if count > pair.m as usize {
            hit = Some(0);
        } else {
            for start in 1..=misses.len() - width {
                count += usize::from(misses[start + width - 1]);
                count -= usize::from(misses[start - 1]);
                if count > pair.m as usize {
                    hit = Some(start);
                    break;
                }
            }
        }
        if let Some(start) = hit {
            let v = MnViolation {
                pair,
                window: (start, start + width - 1),
            };
            let earlier = first.is_none_or(|f| v.window.0 < f.window.0);
            if earlier {
                first = Some(v);
            }
        }
    }
    MnVerdict {
        holds: first.is_none(),
        first_violation: first,
        indeterminate,
    }
}

fn task_jobs(trace: &Trace, task: TaskId) -> Result<Vec<&JobRecord>> {
    if !trace.tasks.contains(&task) && trace.jobs_of(task).next().is_none() {
        return Err(Error::UnknownTask(task));
    }
    let mut jobs: Vec<&JobRecord> = trace.jobs_of(task).collect();
    jobs.sort_by_key(|j| j.index);
    Ok(jobs)
}

/// Miss pattern of a task in instance order. Instances still unfinished at
/// the horizon with their deadline beyond it are left out.
pub fn miss_pattern(trace: &Trace, task: TaskId) -> Result<Vec<bool>> {
    Ok(task_jobs(trace, task)?
        .into_iter()
        .filter(|j| j.outcome != JobOutcome::Unfinished)
        .map(|j| j.outcome.is_miss())
        .collect())
}

pub fn check_mn(trace: &Trace, task: TaskId, constraint: &MissConstraint) -> Result<MnVerdict> {
    Ok(check_mn_pattern(&miss_pattern(trace, task)?, constraint))
}

/// Largest `max(0, R_j - D)` over completed jobs. Aborted and skipped jobs
/// contribute nothing.
pub fn tardiness(trace: &Trace, task: TaskId) -> Result<Tick> {
    Ok(task_jobs(trace, task)?
        .into_iter()
        .filter_map(|j| {
            let c = j.completion?;
            Some((c - j.abs_deadline).max(0))
        })
        .max()
        .unwrap_or(0))
}

/// Probability that a job needs more than `T / R` reservation periods of a
/// hard reservation `(Q, R)`, i.e. `Prob{ceil(c / Q) * R > T}`.
///
/// Evaluated through the equivalent threshold `c > Q * (T / R)` on the
/// model's probability mass function.
pub fn dropout_probability(model: &ExecTimeModel, budget: Tick, res_period: Tick, period: Tick) -> Result<f64> {
    let pmf = model.pmf()?;
    dropout_probability_pmf(&pmf, budget, res_period, period)
}

pub fn dropout_probability_pmf(
    pmf: &[(Tick, f64)],
    budget: Tick,
    res_period: Tick,
    period: Tick,
) -> Result<f64> {
    check_reservation_grid(budget, res_period, period)?;
    let threshold = budget * (period / res_period);
    Ok(pmf
        .iter()
        .filter(|(c, _)| *c > threshold)
        .map(|(_, p)| p)
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

pub(crate) fn check_reservation_grid(budget: Tick, res_period: Tick, period: Tick) -> Result<()> {
    if res_period <= 0 {
        return Err(Error::config("reservation.period", "must be positive"));
    }
    if budget <= 0 || budget > res_period {
        return Err(Error::config(
            "reservation.budget",
            "must satisfy 0 < budget <= reservation period",
        ));
    }
    if period <= 0 || period % res_period != 0 {
        return Err(Error::config(
            "task.period",
            "task period must be a positive multiple of the reservation period",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: TaskId,
    pub jobs: usize,
    pub completed: usize,
    pub met: usize,
    pub late: usize,
    pub aborted: usize,
    pub skipped: usize,
    pub misses: usize,
    pub tardiness: Tick,
    pub max_response: Option<Tick>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint: Option<MnVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub horizon: Tick,
    pub tasks: Vec<TaskMetrics>,
}

/// Per-task metrics; `constraint`, when given, is checked on every task.
pub fn metrics(trace: &Trace, constraint: Option<&MissConstraint>) -> Result<MetricsReport> {
    let mut tasks = Vec::new();
    for &task in &trace.tasks {
        let jobs = task_jobs(trace, task)?;
        let count = |o: JobOutcome| jobs.iter().filter(|j| j.outcome == o).count();
        tasks.push(TaskMetrics {
            task,
            jobs: jobs.len(),
            completed: jobs.iter().filter(|j| j.completion.is_some()).count(),
            met: count(JobOutcome::Met),
            late: count(JobOutcome::Late),
            aborted: count(JobOutcome::Aborted),
            skipped: count(JobOutcome::Skipped),
            misses: jobs.iter().filter(|j| j.outcome.is_miss()).count(),
            tardiness: tardiness(trace, task)?,
            max_response: jobs.iter().filter_map(|j| j.response_time()).max(),
            constraint: constraint.map(|c| check_mn(trace, task, c)).transpose()?,
        });
    }
    Ok(MetricsReport {
        horizon: trace.horizon,
        tasks,
    })
}
