//! Backlog chain of a buffered (tt_sort) control task and the mode sequences
//! of the four models of computation under the same reservation.
//!
//! cargo run --example delay_chain

use softrt::moc::{build_delay_chain, lag1_autocorrelation, mode_sequence, MocKind, ServedTask};
use softrt::ExecTimeModel;

fn main() -> softrt::Result<()> {
    let task = ServedTask {
        exec: ExecTimeModel::Uniform { lo: 1, hi: 30 },
        budget: 4,
        res_period: 10,
        period: 50,
    };
    let chain = build_delay_chain(&task, 6)?;
    println!("steady state over backlog 0..={}:", chain.max_delay);
    for (d, p) in chain.steady.iter().enumerate() {
        println!("  d={d}: {p:.5}");
    }
    println!("residual {:.2e}", chain.residual());

    for moc in [MocKind::TtMaxb, MocKind::Cs { max_delay: 8 }, MocKind::TtSort { max_delay: 6 }] {
        let tr = mode_sequence(moc, &task, 100_000, 1)?;
        let xs: Vec<f64> = tr.modes.iter().map(|&m| m as f64).collect();
        println!("{moc:>10}: lag-1 autocorrelation of the mode index {:+.4}", lag1_autocorrelation(&xs));
    }
    Ok(())
}
