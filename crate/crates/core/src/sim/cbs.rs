//! Constant Bandwidth Server rules and GRUB budget accounting.
//!
//! The rules are pure functions over [`ServerState`] so they can be tested
//! in isolation from the engine. Budgets are exact rationals because GRUB
//! drains them at a fractional rate.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::taskmodel::{Rational, ReservationSpec, ReservationVariant, TaskId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerStatus {
    /// No pending work.
    Idle,
    Active,
    /// Hard reservation out of budget; recharged at the given tick.
    SuspendedUntil(Tick),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerState {
    pub task_id: TaskId,
    pub remaining_budget: Rational,
    /// Scheduling deadline used by EDF.
    pub current_deadline: Tick,
    pub status: ServerStatus,
}

impl ServerState {
    /// A server that has never run: zero budget and a deadline at time zero,
    /// so the first arrival always resets it.
    pub fn new(task_id: TaskId) -> Self {
        ServerState {
            task_id,
            remaining_budget: Rational::zero(),
            current_deadline: 0,
            status: ServerStatus::Idle,
        }
    }

    pub fn is_suspended(&self) -> bool {
        matches!(self.status, ServerStatus::SuspendedUntil(_))
    }
}

/// Arrival of a job at an idle server.
///
/// The current `(q, d)` pair is reused only if serving it would not exceed
/// the reserved bandwidth, i.e. `q / (d - now) < Q / P`. Otherwise the
/// server gets a fresh budget and the deadline `now + P`. A stale deadline
/// (`d <= now`) always triggers the reset.
pub fn cbs_on_arrival(server: ServerState, now: Tick, spec: &ReservationSpec) -> ServerState {
    let q = server.remaining_budget;
    let slack = Rational::from_integer(server.current_deadline - now);
    let reset = q * spec.period >= slack * spec.budget;
    if reset {
        ServerState {
            remaining_budget: Rational::from_integer(spec.budget),
            current_deadline: now + spec.period,
            status: ServerStatus::Active,
            ..server
        }
    } else {
        ServerState {
            status: ServerStatus::Active,
            ..server
        }
    }
}

/// Budget exhausted while work is pending.
///
/// Soft servers postpone the deadline by `P` and recharge at once. Hard
/// servers are suspended until the current deadline, where
/// [`cbs_recharge`] restores the budget. A hard server whose deadline is
/// already in the past restarts from `now + P`.
pub fn cbs_on_exhaustion(server: ServerState, now: Tick, spec: &ReservationSpec) -> ServerState {
    debug_assert!(!server.remaining_budget.is_positive());
    match spec.variant {
        ReservationVariant::SoftPostpone => ServerState {
            remaining_budget: Rational::from_integer(spec.budget),
            current_deadline: server.current_deadline + spec.period,
            status: ServerStatus::Active,
            ..server
        },
        ReservationVariant::HardSuspend => {
            if server.current_deadline > now {
                ServerState {
                    remaining_budget: Rational::zero(),
                    status: ServerStatus::SuspendedUntil(server.current_deadline),
                    ..server
                }
            } else {
                ServerState {
                    remaining_budget: Rational::from_integer(spec.budget),
                    current_deadline: now + spec.period,
                    status: ServerStatus::Active,
                    ..server
                }
            }
        }
    }
}

/// End of a hard suspension: full budget, deadline moved one period on.
pub fn cbs_recharge(server: ServerState, spec: &ReservationSpec, pending: bool) -> ServerState {
    ServerState {
        remaining_budget: Rational::from_integer(spec.budget),
        current_deadline: server.current_deadline + spec.period,
        status: if pending {
            ServerStatus::Active
        } else {
            ServerStatus::Idle
        },
        ..server
    }
}

/// Active bandwidth `U_act`: sum of `Q/P` over servers with pending work.
pub fn active_bandwidth<'a, I>(active: I) -> Rational
where
    I: IntoIterator<Item = &'a ReservationSpec>,
{
    active
        .into_iter()
        .fold(Rational::zero(), |acc, s| acc + s.bandwidth())
}

/// Budget consumed by the executing server over one tick.
///
/// Without reclaiming the drain is one unit per executed tick. With GRUB it
/// is `U_act`, so the spare bandwidth `1 - U_act` is implicitly donated to
/// the running server.
pub fn grub_tick(active_bandwidth: Rational, executing: &ReservationSpec) -> Rational {
    match executing.reclaiming {
        crate::taskmodel::Reclaiming::Grub => active_bandwidth.min(Rational::from_integer(1)),
        crate::taskmodel::Reclaiming::None => Rational::from_integer(1),
    }
}
