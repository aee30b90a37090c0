//! Offline metrics over a trace: deadline misses, tardiness, an (m,n)
//! constraint, and the analytic dropout probability of a reserved task.
//!
//! cargo run --example miss_metrics

use softrt::analysis::{check_mn, dropout_probability, tardiness, MissConstraint};
use softrt::{simulate, ExecTimeModel, ReservationSpec, SchedulerConfig, TaskSpec};

fn main() -> softrt::Result<()> {
    // A control-like task: period 40, reserved 10 ticks every 10, demand
    // uniform in 1..=45 so some jobs cannot fit.
    let exec = ExecTimeModel::Uniform { lo: 1, hi: 45 };
    let task = TaskSpec::periodic(1, 45, 40)
        .with_exec_model(exec.clone())
        .with_miss_policy(softrt::MissPolicy::Abort);
    let sched = SchedulerConfig::cbs([(1, ReservationSpec::hard(10, 10))], 40_000);
    let trace = simulate(&[task], &sched, 3)?;

    let jobs = trace.jobs_of(1).count();
    let misses = trace.jobs_of(1).filter(|j| j.outcome.is_miss()).count();
    println!("jobs {jobs}, misses {misses}, tardiness {}", tardiness(&trace, 1)?);
    println!(
        "simulated miss rate {:.4}, analytic {:.4}",
        misses as f64 / jobs as f64,
        dropout_probability(&exec, 10, 10, 40)?
    );

    // At most one miss in any 5 consecutive jobs, and never 2 in a row.
    let constraint = MissConstraint::single(1, 5)?.and(1, 2)?;
    let verdict = check_mn(&trace, 1, &constraint)?;
    println!("(1,5) and (1,2): holds = {}, first violation = {:?}", verdict.holds, verdict.first_violation);
    Ok(())
}
