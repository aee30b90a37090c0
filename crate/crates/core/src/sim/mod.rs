//! Tick-driven single-processor scheduling simulator.
//!
//! Supported policies are plain EDF, preemptive fixed priority and EDF over
//! Constant Bandwidth Servers (soft or hard, optionally with GRUB
//! reclaiming). Scheduling decisions happen at integer ticks. At every tick
//! boundary the engine processes, in order:
//!
//! 1. accounting for the tick that just ran (completion, budget exhaustion),
//! 2. hard-reservation recharges,
//! 3. deadline checks (when misses are detected at the deadline tick),
//! 4. job arrivals,
//! 5. selection of the job that runs during the next tick.
//!
//! Ready jobs are ordered by deadline (or priority), then by the tick at
//! which that deadline was assigned, then by how it was assigned (arrival
//! before recharge before postponement), then by ascending task id. Within
//! a task, jobs are served in FIFO order.

pub mod cbs;
pub mod policy;
pub mod trace;

use std::collections::{BTreeMap, VecDeque};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taskmodel::{
    JobOutcome, JobRecord, MissPolicy, Rational, ReservationSpec, ReservationVariant, TaskId,
    TaskSpec, Tick,
};
use cbs::{ServerState, ServerStatus};
use policy::{MissAction, MissDetection};
use trace::{Event, EventKind, Payload, Slot, Trace};

pub use cbs::{active_bandwidth, cbs_on_arrival, cbs_on_exhaustion, cbs_recharge, grub_tick};
pub use policy::{apply_miss_policy, skip_late_releases};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Edf,
    /// Larger value means higher priority.
    FixedPriority {
        priorities: BTreeMap<TaskId, i64>,
    },
    CbsEdf {
        reservations: BTreeMap<TaskId, ReservationSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub horizon: Tick,
    #[serde(default)]
    pub miss_detection: MissDetection,
}

impl SchedulerConfig {
    pub fn edf(horizon: Tick) -> Self {
        SchedulerConfig {
            kind: SchedulerKind::Edf,
            horizon,
            miss_detection: MissDetection::DeadlineTick,
        }
    }

    pub fn fixed_priority(priorities: impl IntoIterator<Item = (TaskId, i64)>, horizon: Tick) -> Self {
        SchedulerConfig {
            kind: SchedulerKind::FixedPriority {
                priorities: priorities.into_iter().collect(),
            },
            horizon,
            miss_detection: MissDetection::DeadlineTick,
        }
    }

    pub fn cbs(
        reservations: impl IntoIterator<Item = (TaskId, ReservationSpec)>,
        horizon: Tick,
    ) -> Self {
        SchedulerConfig {
            kind: SchedulerKind::CbsEdf {
                reservations: reservations.into_iter().collect(),
            },
            horizon,
            miss_detection: MissDetection::DeadlineTick,
        }
    }

    pub fn with_detection(mut self, detection: MissDetection) -> Self {
        self.miss_detection = detection;
        self
    }

    pub fn validate(&self, tasks: &[TaskSpec]) -> Result<()> {
        if self.horizon <= 0 {
            return Err(Error::config("scheduler.horizon", "must be positive"));
        }
        match &self.kind {
            SchedulerKind::Edf => {}
            SchedulerKind::FixedPriority { priorities } => {
                for t in tasks {
                    if !priorities.contains_key(&t.id) {
                        return Err(Error::config(
                            format!("scheduler.priorities.{}", t.id),
                            "missing priority for task",
                        ));
                    }
                }
            }
            SchedulerKind::CbsEdf { reservations } => {
                for t in tasks {
                    match reservations.get(&t.id) {
                        Some(r) => r.validate(&format!("scheduler.reservations.{}", t.id))?,
                        None => {
                            return Err(Error::config(
                                format!("scheduler.reservations.{}", t.id),
                                "missing reservation for task",
                            ))
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

// How a server deadline was last assigned; breaks ties between equal
// deadlines assigned at the same tick.
const ASSIGN_ARRIVAL: u8 = 0;
const ASSIGN_RECHARGE: u8 = 1;
const ASSIGN_POSTPONE: u8 = 2;

#[derive(Debug, Clone)]
struct LiveJob {
    index: u64,
    arrival: Tick,
    deadline: Tick,
    remaining: Tick,
    started: bool,
}

struct TaskRt<'a> {
    spec: &'a TaskSpec,
    arrivals: Vec<Tick>,
    next_arrival: usize,
    queue: VecDeque<LiveJob>,
    server: Option<(ReservationSpec, ServerState)>,
    stamp: (Tick, u8),
    priority: i64,
    records: Vec<JobRecord>,
}

struct Engine<'a> {
    tasks: Vec<TaskRt<'a>>,
    seed: u64,
    horizon: Tick,
    detection: MissDetection,
    kind: &'a SchedulerKind,
    events: Vec<Event>,
    slots: Vec<Option<Slot>>,
}

/// Runs `tasks` under `scheduler` and returns the full trace.
///
/// Overload is not an error: it shows up as deadline misses in the trace.
/// The result depends only on the inputs and `seed`.
pub fn simulate(tasks: &[TaskSpec], scheduler: &SchedulerConfig, seed: u64) -> Result<Trace> {
    if tasks.is_empty() {
        return Err(Error::config("tasks", "task list is empty"));
    }
    for (i, t) in tasks.iter().enumerate() {
        t.validate(&format!("tasks[{i}]"))?;
        if tasks[..i].iter().any(|o| o.id == t.id) {
            return Err(Error::config(format!("tasks[{i}].id"), "duplicate task id"));
        }
    }
    scheduler.validate(tasks)?;
    let mut engine = Engine::new(tasks, scheduler, seed);
    engine.run()?;
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn new(tasks: &'a [TaskSpec], scheduler: &'a SchedulerConfig, seed: u64) -> Self {
        let horizon = scheduler.horizon;
        let rts = tasks
            .iter()
            .map(|spec| {
                let server = match &scheduler.kind {
                    SchedulerKind::CbsEdf { reservations } => {
                        Some((reservations[&spec.id], ServerState::new(spec.id)))
                    }
                    _ => None,
                };
                let priority = match &scheduler.kind {
                    SchedulerKind::FixedPriority { priorities } => priorities[&spec.id],
                    _ => 0,
                };
                TaskRt {
                    spec,
                    arrivals: spec.arrivals(horizon + 1, seed),
                    next_arrival: 0,
                    queue: VecDeque::new(),
                    server,
                    stamp: (0, ASSIGN_ARRIVAL),
                    priority,
                    records: Vec::new(),
                }
            })
            .collect();
        Engine {
            tasks: rts,
            seed,
            horizon,
            detection: scheduler.miss_detection,
            kind: &scheduler.kind,
            events: Vec::new(),
            slots: Vec::with_capacity(horizon as usize),
        }
    }

    fn emit(&mut self, tick: Tick, kind: EventKind, pos: usize, payload: Payload) {
        let task = self.tasks[pos].spec.id;
        self.events.push(Event {
            tick,
            kind,
            task,
            payload,
        });
    }

    fn run(&mut self) -> Result<()> {
        let mut running: Option<(usize, u64, Rational)> = None;
        for t in 0..=self.horizon {
            if let Some((pos, _, drain)) = running {
                self.account(pos, t, drain);
            }
            self.recharges(t);
            if self.detection == MissDetection::DeadlineTick {
                self.deadline_checks(t);
            }
            self.arrivals(t)?;
            if t == self.horizon {
                break;
            }

            let pick = self.select();
            if let Some((prev, prev_job, _)) = running {
                let still_pending = self.tasks[prev]
                    .queue
                    .front()
                    .is_some_and(|j| j.index == prev_job);
                let suspended = self.tasks[prev]
                    .server
                    .as_ref()
                    .is_some_and(|(_, s)| s.is_suspended());
                let same = pick == Some(prev);
                if still_pending && !suspended && !same {
                    self.emit(t, EventKind::Preemption, prev, Payload::job(prev_job));
                }
            }

            running = match pick {
                Some(pos) => {
                    let (index, deadline, first) = {
                        let job = self.tasks[pos].queue.front_mut().expect("picked task has work");
                        let first = !job.started;
                        job.started = true;
                        (job.index, job.deadline, first)
                    };
                    if first {
                        self.emit(t, EventKind::JobStart, pos, Payload::job(index));
                    }
                    self.slots.push(Some(Slot {
                        task: self.tasks[pos].spec.id,
                        job: index,
                        late: t >= deadline,
                    }));
                    Some((pos, index, self.drain_rate(pos)))
                }
                None => {
                    self.slots.push(None);
                    None
                }
            };
        }
        Ok(())
    }

    fn drain_rate(&self, pos: usize) -> Rational {
        match &self.tasks[pos].server {
            Some((spec, _)) => {
                let active = self
                    .tasks
                    .iter()
                    .filter(|rt| !rt.queue.is_empty())
                    .filter_map(|rt| rt.server.as_ref().map(|(s, _)| s));
                grub_tick(active_bandwidth(active), spec)
            }
            None => Rational::from_integer(1),
        }
    }

    fn select(&self) -> Option<usize> {
        let mut best: Option<((i64, i64, u8, TaskId), usize)> = None;
        for (pos, rt) in self.tasks.iter().enumerate() {
            let Some(head) = rt.queue.front() else {
                continue;
            };
            let key = match self.kind {
                SchedulerKind::Edf => (head.deadline, head.arrival, ASSIGN_ARRIVAL, rt.spec.id),
                SchedulerKind::FixedPriority { .. } => (-rt.priority, 0, 0, rt.spec.id),
                SchedulerKind::CbsEdf { .. } => {
                    let (_, s) = rt.server.as_ref().expect("cbs task has a server");
                    if s.is_suspended() {
                        continue;
                    }
                    (s.current_deadline, rt.stamp.0, rt.stamp.1, rt.spec.id)
                }
            };
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, pos));
            }
        }
        best.map(|(_, pos)| pos)
    }

    /// Books the tick `[t - 1, t)` executed by the head job of `pos`.
    fn account(&mut self, pos: usize, t: Tick, drain: Rational) {
        let rt = &mut self.tasks[pos];
        let job = rt.queue.front_mut().expect("running task has a job");
        job.remaining -= 1;
        if let Some((_, s)) = rt.server.as_mut() {
            s.remaining_budget -= drain;
            if s.remaining_budget.is_negative() {
                s.remaining_budget = Rational::zero();
            }
        }

        if job.remaining == 0 {
            let job = rt.queue.pop_front().expect("head exists");
            let late = t > job.deadline;
            let rec = &mut rt.records[job.index as usize];
            rec.completion = Some(t);
            rec.outcome = if late { JobOutcome::Late } else { JobOutcome::Met };
            self.emit(t, EventKind::Completion, pos, Payload::job(job.index));
            if late && self.detection == MissDetection::JobEnd {
                self.emit(
                    t,
                    EventKind::DeadlineMiss,
                    pos,
                    Payload::job(job.index).with_deadline(job.deadline),
                );
            }
            if late && self.tasks[pos].spec.miss_policy == MissPolicy::SkipLate {
                self.skip_queued_before(pos, t);
            }
        }

        let rt = &mut self.tasks[pos];
        let pending = !rt.queue.is_empty();
        let mut exhausted = false;
        if let Some((_, s)) = rt.server.as_mut() {
            if s.remaining_budget.is_zero() && pending {
                exhausted = true;
            } else if !pending {
                s.status = ServerStatus::Idle;
            }
        }
        if exhausted {
            self.exhaust(pos, t);
        }
    }

    fn skip_queued_before(&mut self, pos: usize, t: Tick) {
        let rt = &mut self.tasks[pos];
        let mut skipped = Vec::new();
        rt.queue.retain(|j| {
            if j.arrival < t {
                skipped.push(j.index);
                false
            } else {
                true
            }
        });
        for idx in skipped {
            self.tasks[pos].records[idx as usize].outcome = JobOutcome::Skipped;
            self.emit(t, EventKind::JobSkipped, pos, Payload::job(idx));
        }
    }

    fn exhaust(&mut self, pos: usize, t: Tick) {
        let rt = &mut self.tasks[pos];
        let head = rt.queue.front().map_or(0, |j| j.index);
        let (spec, state) = rt.server.expect("exhaustion needs a server");
        let next = cbs_on_exhaustion(state, t, &spec);
        rt.server = Some((spec, next));
        let was_deadline = state.current_deadline;
        self.emit(
            t,
            EventKind::BudgetExhausted,
            pos,
            Payload::job(head).with_deadline(was_deadline),
        );
        if next.is_suspended() {
            return;
        }
        let (assign, kind) = match spec.variant {
            ReservationVariant::SoftPostpone => (ASSIGN_POSTPONE, EventKind::DeadlinePostponed),
            ReservationVariant::HardSuspend => (ASSIGN_RECHARGE, EventKind::ServerRecharge),
        };
        self.tasks[pos].stamp = (t, assign);
        self.emit(
            t,
            kind,
            pos,
            Payload::job(head)
                .with_deadline(next.current_deadline)
                .with_budget(next.remaining_budget),
        );
    }

    fn recharges(&mut self, t: Tick) {
        for pos in 0..self.tasks.len() {
            let rt = &mut self.tasks[pos];
            let Some((spec, state)) = rt.server else {
                continue;
            };
            let ServerStatus::SuspendedUntil(until) = state.status else {
                continue;
            };
            if until > t {
                continue;
            }
            let pending = !rt.queue.is_empty();
            let head = rt.queue.front().map_or(0, |j| j.index);
            let next = cbs::cbs_recharge(state, &spec, pending);
            rt.server = Some((spec, next));
            rt.stamp = (t, ASSIGN_RECHARGE);
            self.emit(
                t,
                EventKind::ServerRecharge,
                pos,
                Payload::job(head)
                    .with_deadline(next.current_deadline)
                    .with_budget(next.remaining_budget),
            );
        }
    }

    fn deadline_checks(&mut self, t: Tick) {
        for pos in 0..self.tasks.len() {
            let due: Vec<u64> = self.tasks[pos]
                .queue
                .iter()
                .filter(|j| j.deadline == t)
                .map(|j| j.index)
                .collect();
            for idx in due {
                self.emit(
                    t,
                    EventKind::DeadlineMiss,
                    pos,
                    Payload::job(idx).with_deadline(t),
                );
                let rt = &mut self.tasks[pos];
                let action = apply_miss_policy(&rt.records[idx as usize], rt.spec.miss_policy, t);
                rt.records[idx as usize].outcome = action.outcome();
                if action == MissAction::Abort {
                    rt.queue.retain(|j| j.index != idx);
                    if rt.queue.is_empty() {
                        if let Some((_, s)) = rt.server.as_mut() {
                            if s.status == ServerStatus::Active {
                                s.status = ServerStatus::Idle;
                            }
                        }
                    }
                    self.emit(t, EventKind::JobAborted, pos, Payload::job(idx));
                }
            }
        }
    }

    fn arrivals(&mut self, t: Tick) -> Result<()> {
        for pos in 0..self.tasks.len() {
            loop {
                let rt = &self.tasks[pos];
                match rt.arrivals.get(rt.next_arrival) {
                    Some(&a) if a == t => {}
                    _ => break,
                }
                let index = rt.next_arrival as u64;
                let demand = rt.spec.exec_time(index, self.seed)?;
                let deadline = t + rt.spec.rel_deadline;
                let rt = &mut self.tasks[pos];
                rt.next_arrival += 1;
                let was_idle = rt.queue.is_empty()
                    && rt
                        .server
                        .as_ref()
                        .is_some_and(|(_, s)| s.status == ServerStatus::Idle);
                rt.queue.push_back(LiveJob {
                    index,
                    arrival: t,
                    deadline,
                    remaining: demand,
                    started: false,
                });
                rt.records.push(JobRecord {
                    task_id: rt.spec.id,
                    index,
                    arrival: t,
                    abs_deadline: deadline,
                    exec_demand: demand,
                    completion: None,
                    outcome: JobOutcome::Unfinished,
                });
                self.emit(
                    t,
                    EventKind::Arrival,
                    pos,
                    Payload::job(index).with_deadline(deadline).with_demand(demand),
                );

                let rt = &mut self.tasks[pos];
                let Some((spec, state)) = rt.server else {
                    continue;
                };
                if !was_idle {
                    continue;
                }
                let next = cbs_on_arrival(state, t, &spec);
                rt.server = Some((spec, next));
                if next.current_deadline != state.current_deadline
                    || next.remaining_budget != state.remaining_budget
                {
                    rt.stamp = (t, ASSIGN_ARRIVAL);
                    self.emit(
                        t,
                        EventKind::ServerRecharge,
                        pos,
                        Payload::job(index)
                            .with_deadline(next.current_deadline)
                            .with_budget(next.remaining_budget),
                    );
                }
                if next.remaining_budget.is_zero() {
                    self.exhaust(pos, t);
                }
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Trace {
        let horizon = self.horizon;
        let mut jobs = Vec::new();
        for rt in &mut self.tasks {
            for rec in &mut rt.records {
                if rec.outcome == JobOutcome::Unfinished && rec.abs_deadline <= horizon {
                    rec.outcome = JobOutcome::Late;
                }
            }
            jobs.append(&mut rt.records);
        }
        let mut trace = Trace {
            horizon,
            tasks: self.tasks.iter().map(|rt| rt.spec.id).collect(),
            events: self.events,
            slots: self.slots,
            jobs,
        };
        trace.sort_events();
        trace
    }
}
