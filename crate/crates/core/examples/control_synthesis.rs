//! Discretize an unstable plant, compute its LQR gain and tabulate the
//! second-moment spectral radius as the job dropout probability grows.
//!
//! cargo run --example control_synthesis

use softrt::control::{
    build_modes, c2d, dlqr, radius_vs_dropout, ContinuousLti, CostWeights, Feedback, HoldStrategy,
};
use softrt::linalg::mat;

fn main() -> softrt::Result<()> {
    let plant = ContinuousLti::state_feedback(mat(&[&[0.0, 1.0], &[2.0, -1.0]]), mat(&[&[0.0], &[1.0]]))?;
    let d = c2d(&plant, 0.1)?;
    let lqr = dlqr(&d.a, &d.b, &CostWeights::identity(2, 1))?;
    println!("Ad = {:.4}Bd = {:.4}K = {:.4}", d.a, d.b, lqr.k);
    println!("Riccati iterations: {}", lqr.iterations);

    let modes = build_modes(&d, &Feedback::State(lqr.k), HoldStrategy::Immediate)?;
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    println!("mu,rho");
    for (mu, rho) in radius_vs_dropout(&modes, &grid)? {
        println!("{mu:.1},{rho:.6}{}", if rho < 1.0 { "" } else { "  unstable" });
    }
    Ok(())
}
