//! The overloaded task set from `edf_overload`, now with one constant
//! bandwidth server per task. Only the misbehaving task misses deadlines.
//! A second run inflates task 3 and shows that task 2 does not notice.
//!
//! cargo run --example cbs_isolation

use softrt::render::render_ascii;
use softrt::{simulate, EventKind, ExecTimeModel, ReservationSpec, SchedulerConfig, TaskSpec};

fn run(tasks: &[TaskSpec]) -> softrt::Result<softrt::Trace> {
    let sched = SchedulerConfig::cbs(
        [
            (1, ReservationSpec::new(1, 4)),
            (2, ReservationSpec::new(2, 5)),
            (3, ReservationSpec::new(2, 6)),
        ],
        60,
    );
    simulate(tasks, &sched, 0)
}

fn main() -> softrt::Result<()> {
    let t1 = TaskSpec::periodic(1, 1, 4).with_exec_model(ExecTimeModel::Scripted {
        script: vec![2, 2, 2],
        fallback: Box::new(ExecTimeModel::Deterministic { c: 1 }),
    });
    let mut tasks = vec![t1, TaskSpec::periodic(2, 2, 5), TaskSpec::periodic(3, 2, 6)];
    let base = run(&tasks)?;
    print!("{}", render_ascii(&base));
    for t in &tasks {
        println!("task {} misses: {}", t.id, base.count(t.id, EventKind::DeadlineMiss));
    }

    tasks[2] = tasks[2].clone().with_exec_model(ExecTimeModel::Deterministic { c: 5 });
    let inflated = run(&tasks)?;
    let same = base.events_of(2).eq(inflated.events_of(2));
    println!("task 3 inflated to 5 ticks: task 2 events unchanged = {same}");
    println!("task 3 misses now: {}", inflated.count(3, EventKind::DeadlineMiss));
    Ok(())
}
