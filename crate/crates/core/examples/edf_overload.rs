//! Three tasks with utilization 59/60 under plain EDF. The first three jobs
//! of task 1 take twice their declared WCET and the overload spreads to
//! every task.
//!
//! cargo run --example edf_overload

use softrt::analysis::metrics;
use softrt::render::render_ascii;
use softrt::{simulate, utilization, EventKind, ExecTimeModel, SchedulerConfig, TaskSpec};

fn main() -> softrt::Result<()> {
    let t1 = TaskSpec::periodic(1, 1, 4).with_exec_model(ExecTimeModel::Scripted {
        script: vec![2, 2, 2],
        fallback: Box::new(ExecTimeModel::Deterministic { c: 1 }),
    });
    let tasks = vec![t1, TaskSpec::periodic(2, 2, 5), TaskSpec::periodic(3, 2, 6)];
    println!("declared utilization: {}", utilization(&tasks)?);

    let trace = simulate(&tasks, &SchedulerConfig::edf(20), 0)?;
    print!("{}", render_ascii(&trace));
    for t in &tasks {
        println!("task {} misses: {}", t.id, trace.count(t.id, EventKind::DeadlineMiss));
    }
    let report = metrics(&trace, None)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
