//! Monte Carlo co-simulation of a plant and its control task under each model
//! of computation, compared with the analytic verdict where one exists.
//!
//! cargo run --release --example cosimulation

use softrt::control::{c2d, dlqr, second_moment_stable, ContinuousLti, CostWeights, DEFAULT_MARGIN};
use softrt::linalg::mat;
use softrt::moc::{cosimulate, cs_modes, tt_maxb_modes, CoSimConfig, CoSimSetup, MocKind, ServedTask};
use softrt::ExecTimeModel;

fn main() -> softrt::Result<()> {
    let plant = ContinuousLti::state_feedback(mat(&[&[0.0, 1.0], &[2.0, -1.0]]), mat(&[&[0.0], &[1.0]]))?;
    let tick = 0.01;
    let task = ServedTask {
        exec: ExecTimeModel::Beta { alpha: 2.0, beta: 5.0, lo: 0.0, hi: 100.0 },
        budget: 4,
        res_period: 10,
        period: 100,
    };
    let d = c2d(&plant, task.period as f64 * tick)?;
    let k = dlqr(&d.a, &d.b, &CostWeights::identity(2, 1))?.k;
    let config = CoSimConfig { horizon: 400, ..CoSimConfig::default() };

    for moc in [MocKind::TtMaxb, MocKind::Cs { max_delay: 20 }, MocKind::TtSort { max_delay: 10 }] {
        let analytic = match moc {
            MocKind::TtMaxb => Some(second_moment_stable(&tt_maxb_modes(&d, &k, &task)?, DEFAULT_MARGIN)?),
            MocKind::Cs { max_delay } => {
                Some(second_moment_stable(&cs_modes(&plant, &k, &task, max_delay, tick)?, DEFAULT_MARGIN)?)
            }
            _ => None,
        };
        let setup = CoSimSetup { plant: plant.clone(), gain: k.clone(), tick, moc, task: task.clone() };
        let res = cosimulate(&setup, &config)?;
        let m = res.second_moment();
        println!(
            "{moc:>10}: E|x|^2 at k=100 {:.3e}, k=400 {:.3e}, verdict {}, analytic {}",
            m[100],
            m[400],
            res.verdict,
            analytic.map_or("n/a".into(), |s| if s { "stable".to_string() } else { "unstable".to_string() })
        );
    }
    Ok(())
}
