//! How many random plants each model of computation stabilizes as the
//! reserved bandwidth grows. Prints the sweep table as CSV.
//!
//! cargo run --release --example bandwidth_sweep [n_systems]

use softrt::experiment::{bandwidth_sweep, SweepConfig};

fn main() -> softrt::Result<()> {
    let n_systems = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let cfg = SweepConfig { n_systems, ..SweepConfig::default() };
    let table = bandwidth_sweep(&cfg)?;
    print!("{}", table.to_csv());
    if !table.synthesis_failures.is_empty() {
        eprintln!("no stabilizing gain for systems {:?}", table.synthesis_failures);
    }
    Ok(())
}
