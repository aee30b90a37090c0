//! What happens to a job once its deadline has passed.

use serde::{Deserialize, Serialize};

use crate::taskmodel::{JobOutcome, JobRecord, MissPolicy, Tick};

/// Where deadline misses are detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissDetection {
    /// At the deadline tick, while the job may still be executing.
    #[default]
    DeadlineTick,
    /// When the job completes. Nothing can be aborted at that point, so the
    /// abort policy degrades to `continue`.
    JobEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissAction {
    /// Keep executing; the job will be reported late.
    Continue,
    /// Drop the remaining demand now.
    Abort,
    /// Keep executing, then skip every queued instance released before the
    /// completion instant.
    FinishThenSkip,
}

impl MissAction {
    pub fn outcome(self) -> JobOutcome {
        match self {
            MissAction::Abort => JobOutcome::Aborted,
            MissAction::Continue | MissAction::FinishThenSkip => JobOutcome::Late,
        }
    }
}

/// Decides the action for `job`, which has passed its deadline at `now`.
pub fn apply_miss_policy(job: &JobRecord, policy: MissPolicy, now: Tick) -> MissAction {
    debug_assert!(now >= job.abs_deadline, "policy applied before the deadline");
    match policy {
        MissPolicy::Continue => MissAction::Continue,
        MissPolicy::Abort => MissAction::Abort,
        MissPolicy::SkipLate => MissAction::FinishThenSkip,
    }
}

/// Replays the skip loop of a periodic thread: starting from the pending
/// release `next`, every release strictly before `completion` is skipped.
/// Returns the skipped releases and the release the next job is served at.
pub fn skip_late_releases(completion: Tick, mut next: Tick, period: Tick) -> (Vec<Tick>, Tick) {
    let mut skipped = Vec::new();
    while completion > next {
        skipped.push(next);
        next += period;
    }
    (skipped, next)
}
