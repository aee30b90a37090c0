//! Event log of a simulation run and its CSV / JSON-lines encodings.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taskmodel::{JobOutcome, JobRecord, Rational, TaskId, Tick};

/// Event kinds in their tie-break order: events at the same tick are sorted
/// by this rank, then by task id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Completion,
    BudgetExhausted,
    DeadlinePostponed,
    ServerRecharge,
    DeadlineMiss,
    JobAborted,
    JobSkipped,
    Arrival,
    Preemption,
    JobStart,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::Completion,
        EventKind::BudgetExhausted,
        EventKind::DeadlinePostponed,
        EventKind::ServerRecharge,
        EventKind::DeadlineMiss,
        EventKind::JobAborted,
        EventKind::JobSkipped,
        EventKind::Arrival,
        EventKind::Preemption,
        EventKind::JobStart,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Completion => "completion",
            EventKind::BudgetExhausted => "budget_exhausted",
            EventKind::DeadlinePostponed => "deadline_postponed",
            EventKind::ServerRecharge => "server_recharge",
            EventKind::DeadlineMiss => "deadline_miss",
            EventKind::JobAborted => "job_aborted",
            EventKind::JobSkipped => "job_skipped",
            EventKind::Arrival => "arrival",
            EventKind::Preemption => "preemption",
            EventKind::JobStart => "job_start",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("trace.kind", format!("unknown event kind `{s}`")))
    }
}

/// Event payload, written as `job=3;deadline=8;demand=2;budget=1/2` with
/// absent fields omitted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Payload {
    pub job: u64,
    pub deadline: Option<Tick>,
    pub demand: Option<Tick>,
    pub budget: Option<Rational>,
}

impl Payload {
    pub fn job(job: u64) -> Self {
        Payload {
            job,
            ..Default::default()
        }
    }

    pub fn with_deadline(mut self, d: Tick) -> Self {
        self.deadline = Some(d);
        self
    }

    pub fn with_demand(mut self, c: Tick) -> Self {
        self.demand = Some(c);
        self
    }

    pub fn with_budget(mut self, q: Rational) -> Self {
        self.budget = Some(q);
        self
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "job={}", self.job)?;
        if let Some(d) = self.deadline {
            write!(f, ";deadline={d}")?;
        }
        if let Some(c) = self.demand {
            write!(f, ";demand={c}")?;
        }
        if let Some(q) = self.budget {
            write!(f, ";budget={q}")?;
        }
        Ok(())
    }
}

impl FromStr for Payload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: String| Error::config("trace.payload", why);
        let mut p = Payload::default();
        let mut saw_job = false;
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed entry `{part}`")))?;
            let int = |v: &str| v.parse::<i64>().map_err(|e| bad(format!("{key}: {e}")));
            match key {
                "job" => {
                    p.job = value.parse().map_err(|e| bad(format!("job: {e}")))?;
                    saw_job = true;
                }
                "deadline" => p.deadline = Some(int(value)?),
                "demand" => p.demand = Some(int(value)?),
                "budget" => {
                    p.budget = Some(
                        value
                            .parse::<Rational>()
                            .map_err(|e| bad(format!("budget: {e}")))?,
                    )
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        if !saw_job {
            return Err(bad("missing job".into()));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub tick: Tick,
    pub kind: EventKind,
    pub task: TaskId,
    pub payload: Payload,
}

impl Event {
    fn order_key(&self) -> (Tick, EventKind, TaskId) {
        (self.tick, self.kind, self.task)
    }
}

#[derive(Serialize, Deserialize)]
struct JsonEvent {
    tick: Tick,
    kind: EventKind,
    task: TaskId,
    payload: String,
}

/// Which job occupied the processor during one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub task: TaskId,
    pub job: u64,
    /// The tick lies at or after the job's absolute deadline.
    pub late: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub horizon: Tick,
    /// Task ids in configuration order.
    pub tasks: Vec<TaskId>,
    pub events: Vec<Event>,
    /// One entry per tick in `0..horizon`; `None` means idle.
    pub slots: Vec<Option<Slot>>,
    pub jobs: Vec<JobRecord>,
}

impl Trace {
    /// Sorts events into the documented total order. The sort is stable, so
    /// same-key events keep their emission order.
    pub fn sort_events(&mut self) {
        self.events.sort_by_key(Event::order_key);
    }

    pub fn events_of(&self, task: TaskId) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.task == task)
    }

    pub fn count(&self, task: TaskId, kind: EventKind) -> usize {
        self.events_of(task).filter(|e| e.kind == kind).count()
    }

    pub fn jobs_of(&self, task: TaskId) -> impl Iterator<Item = &JobRecord> + '_ {
        self.jobs.iter().filter(move |j| j.task_id == task)
    }

    pub fn job(&self, task: TaskId, index: u64) -> Option<&JobRecord> {
        self.jobs_of(task).find(|j| j.index == index)
    }

    /// Ticks executed by each job, keyed as `(task, job)`.
    pub fn executed(&self, task: TaskId, job: u64) -> Tick {
        self.slots
            .iter()
            .flatten()
            .filter(|s| s.task == task && s.job == job)
            .count() as Tick
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tick,kind,task,payload")?;
        for e in &self.events {
            writeln!(w, "{},{},{},{}", e.tick, e.kind, e.task, e.payload)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace CSV is ASCII")
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            let je = JsonEvent {
                tick: e.tick,
                kind: e.kind,
                task: e.task,
                payload: e.payload.to_string(),
            };
            serde_json::to_writer(&mut w, &je)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads events written by [`Trace::write_csv`] or
    /// [`Trace::write_jsonl`]; the format is detected from the first line.
    ///
    /// Job records are rebuilt from the events. Jobs without a completion
    /// whose deadline is at or before `horizon` (default: last event tick)
    /// are reported late. Slots are not recoverable from events and stay
    /// empty.
    pub fn read_events<R: BufRead>(r: R, horizon: Option<Tick>) -> Result<Trace> {
        let mut events = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with("tick,") {
                continue;
            }
            let field = format!("trace line {}", lineno + 1);
            let ev = if line.starts_with('{') {
                let je: JsonEvent = serde_json::from_str(line)
                    .map_err(|e| Error::config(&field, e.to_string()))?;
                Event {
                    tick: je.tick,
                    kind: je.kind,
                    task: je.task,
                    payload: je.payload.parse()?,
                }
            } else {
                let cols: Vec<&str> = line.splitn(4, ',').collect();
                if cols.len() != 4 {
                    return Err(Error::config(field, "expected 4 columns"));
                }
                Event {
                    tick: cols[0]
                        .parse()
                        .map_err(|e| Error::config(&field, format!("tick: {e}")))?,
                    kind: cols[1].parse()?,
                    task: cols[2]
                        .parse()
                        .map_err(|e| Error::config(&field, format!("task: {e}")))?,
                    payload: cols[3].parse()?,
                }
            };
            events.push(ev);
        }
        let horizon = horizon.unwrap_or_else(|| events.iter().map(|e| e.tick).max().unwrap_or(0));
        let mut tasks: Vec<TaskId> = Vec::new();
        for e in &events {
            if !tasks.contains(&e.task) {
                tasks.push(e.task);
            }
        }
        let mut trace = Trace {
            horizon,
            tasks,
            events,
            slots: Vec::new(),
            jobs: Vec::new(),
        };
        trace.jobs = trace.rebuild_jobs();
        Ok(trace)
    }

    /// Reconstructs job records from the event log alone.
    pub fn rebuild_jobs(&self) -> Vec<JobRecord> {
        let mut jobs: Vec<JobRecord> = Vec::new();
        let find = |jobs: &mut Vec<JobRecord>, task: TaskId, job: u64| {
            jobs.iter().position(|j| j.task_id == task && j.index == job)
        };
        for e in &self.events {
            match e.kind {
                EventKind::Arrival => jobs.push(JobRecord {
                    task_id: e.task,
                    index: e.payload.job,
                    arrival: e.tick,
                    abs_deadline: e.payload.deadline.unwrap_or(e.tick),
                    exec_demand: e.payload.demand.unwrap_or(0),
                    completion: None,
                    outcome: JobOutcome::Unfinished,
                }),
                EventKind::Completion => {
                    if let Some(i) = find(&mut jobs, e.task, e.payload.job) {
                        let j = &mut jobs[i];
                        j.completion = Some(e.tick);
                        j.outcome = if e.tick <= j.abs_deadline {
                            JobOutcome::Met
                        } else {
                            JobOutcome::Late
                        };
                    }
                }
                EventKind::JobAborted => {
                    if let Some(i) = find(&mut jobs, e.task, e.payload.job) {
                        jobs[i].outcome = JobOutcome::Aborted;
                    }
                }
                EventKind::JobSkipped => {
                    if let Some(i) = find(&mut jobs, e.task, e.payload.job) {
                        jobs[i].outcome = JobOutcome::Skipped;
                    }
                }
                _ => {}
            }
        }
        for j in &mut jobs {
            if j.outcome == JobOutcome::Unfinished && j.abs_deadline <= self.horizon {
                j.outcome = JobOutcome::Late;
            }
        }
        jobs.sort_by_key(|j| (self.task_pos(j.task_id), j.index));
        jobs
    }

    fn task_pos(&self, task: TaskId) -> usize {
        self.tasks
            .iter()
            .position(|t| *t == task)
            .unwrap_or(usize::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_text_roundtrip() {
        let p = Payload::job(3)
            .with_deadline(8)
            .with_budget(Rational::new(1, 2));
        assert_eq!(p.to_string(), "job=3;deadline=8;budget=1/2");
        assert_eq!(p.to_string().parse::<Payload>().unwrap(), p);
        assert!("deadline=3".parse::<Payload>().is_err());
        assert!("job=1;bogus=2".parse::<Payload>().is_err());
    }

    #[test]
    fn kind_rank_orders_completion_before_arrival() {
        assert!(EventKind::Completion < EventKind::Arrival);
        assert!(EventKind::Arrival < EventKind::JobStart);
        for k in EventKind::ALL {
            assert_eq!(k.as_str().parse::<EventKind>().unwrap(), k);
        }
    }
}
