//! Write the CBS schedule of the overloaded task set as an SVG file and print
//! its ASCII form.
//!
//! cargo run --example render_schedule [out.svg]

use softrt::render::{render_ascii, render_svg};
use softrt::{simulate, ExecTimeModel, ReservationSpec, SchedulerConfig, TaskSpec};

fn main() -> softrt::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "schedule.svg".into());
    let t1 = TaskSpec::periodic(1, 1, 4).with_exec_model(ExecTimeModel::Scripted {
        script: vec![2, 2, 2],
        fallback: Box::new(ExecTimeModel::Deterministic { c: 1 }),
    });
    let tasks = [t1, TaskSpec::periodic(2, 2, 5), TaskSpec::periodic(3, 2, 6)];
    let sched = SchedulerConfig::cbs(
        [
            (1, ReservationSpec::new(1, 4)),
            (2, ReservationSpec::new(2, 5)),
            (3, ReservationSpec::new(2, 6)),
        ],
        20,
    );
    let trace = simulate(&tasks, &sched, 0)?;
    print!("{}", render_ascii(&trace));
    std::fs::write(&out, render_svg(&trace))?;
    println!("wrote {out}");
    Ok(())
}
