#![allow(dead_code)]

use softrt::{ExecTimeModel, ReservationSpec, SchedulerConfig, TaskSpec};

/// The three-task set with the first three jobs of task 1 overrunning.
pub fn overload_set() -> Vec<TaskSpec> {
    let t1 = TaskSpec::periodic(1, 1, 4).with_exec_model(ExecTimeModel::Scripted {
        script: vec![2, 2, 2],
        fallback: Box::new(ExecTimeModel::Deterministic { c: 1 }),
    });
    vec![t1, TaskSpec::periodic(2, 2, 5), TaskSpec::periodic(3, 2, 6)]
}

pub fn overload_cbs(horizon: i64) -> SchedulerConfig {
    SchedulerConfig::cbs(
        [
            (1, ReservationSpec::new(1, 4)),
            (2, ReservationSpec::new(2, 5)),
            (3, ReservationSpec::new(2, 6)),
        ],
        horizon,
    )
}
