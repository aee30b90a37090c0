//! Random plants and the bandwidth sweep: how many systems each model of
//! computation stabilizes as the reservation bandwidth grows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{c2d, dlqr, second_moment_stable, ContinuousLti, CostWeights, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::moc::{cosimulate, cs_modes, tt_maxb_modes, CoSimConfig, CoSimSetup, MocKind, ServedTask, Verdict};
use crate::taskmodel::{splitmix64, ExecTimeModel, Tick};

pub const CONTROLLABILITY_TOL: f64 = 1e-6;
const MAX_RETRIES: usize = 1000;

fn seed_of(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |h, p| splitmix64(h ^ p))
}

/// Smallest singular value of `[B, AB, …, A^{n−1}B]`.
pub fn controllability_margin(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.nrows();
    let p = b.ncols();
    let mut ctrb = Matrix::zeros(n, n * p);
    let mut blk = b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * p), (n, p)).copy_from(&blk);
        blk = a * blk;
    }
    let sv = ctrb.singular_values();
    if sv.len() < n {
        return 0.0;
    }
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Random single-input plant with `A` uniform in `[−scale, scale]` and `B`
/// uniform in `[−1, 1]`, redrawn until controllable.
pub fn random_system(state_dim: usize, scale: f64, seed: u64) -> Result<ContinuousLti> {
    if state_dim == 0 {
        return Err(Error::config("sweep.state_dim", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RETRIES {
        let a = Matrix::from_fn(state_dim, state_dim, |_, _| rng.gen_range(-scale..=scale));
        let b = Matrix::from_fn(state_dim, 1, |_, _| rng.gen_range(-1.0..=1.0));
        if controllability_margin(&a, &b) > CONTROLLABILITY_TOL {
            return ContinuousLti::state_feedback(a, b);
        }
    }
    Err(Error::Numerical(format!(
        "no controllable system after {MAX_RETRIES} draws"
    )))
}

fn default_bandwidths() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

fn default_mocs() -> Vec<MocKind> {
    vec![
        MocKind::TtHard,
        MocKind::TtMaxb,
        MocKind::TtSort { max_delay: 10 },
        MocKind::Cs { max_delay: 20 },
    ]
}

/// Execution times follow `Beta(alpha, beta)` scaled onto `[0, T]`, so the
/// worst case uses the whole nominal period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaFamily {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaFamily {
    fn default() -> Self {
        BetaFamily { alpha: 2.0, beta: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_systems: usize,
    pub state_dim: usize,
    pub seed: u64,
    /// Budget as a fraction of the reservation period, ascending.
    pub bandwidths: Vec<f64>,
    pub res_period: Tick,
    pub period: Tick,
    /// Length of one tick in plant time units.
    pub tick: f64,
    /// Half-width of the uniform law of the entries of `A`.
    pub a_scale: f64,
    pub exec: BetaFamily,
    pub mocs: Vec<MocKind>,
    /// Co-simulation horizon in sampling instants.
    pub horizon: usize,
    pub n_traj: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_systems: 60,
            state_dim: 2,
            seed: 1,
            bandwidths: default_bandwidths(),
            res_period: 10,
            period: 100,
            tick: 0.01,
            a_scale: 1.0,
            exec: BetaFamily::default(),
            mocs: default_mocs(),
            horizon: 600,
            n_traj: 128,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_systems == 0 {
            return Err(Error::config("sweep.n_systems", "must be at least 1"));
        }
        if self.state_dim == 0 {
            return Err(Error::config("sweep.state_dim", "must be at least 1"));
        }
        if self.bandwidths.is_empty() {
            return Err(Error::config("sweep.bandwidths", "empty grid"));
        }
        for (i, b) in self.bandwidths.iter().enumerate() {
            if !(*b > 0.0 && *b <= 1.0) {
                return Err(Error::config(format!("sweep.bandwidths[{i}]"), "must lie in (0, 1]"));
            }
            let q = b * self.res_period as f64;
            if (q - q.round()).abs() > 1e-9 {
                return Err(Error::config(
                    format!("sweep.bandwidths[{i}]"),
                    format!("{b} * res_period = {q} is not a whole number of ticks"),
                ));
            }
        }
        if self.bandwidths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("sweep.bandwidths", "must be strictly ascending"));
        }
        if self.res_period <= 0 || self.period <= 0 || self.period % self.res_period != 0 {
            return Err(Error::config(
                "sweep.period",
                "must be a positive multiple of sweep.res_period",
            ));
        }
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return Err(Error::config("sweep.tick", "must be positive"));
        }
        if !(self.a_scale > 0.0 && self.a_scale.is_finite()) {
            return Err(Error::config("sweep.a_scale", "must be positive"));
        }
        if !(self.exec.alpha > 0.0 && self.exec.beta > 0.0) {
            return Err(Error::config("sweep.exec", "beta parameters must be positive"));
        }
        if self.mocs.is_empty() {
            return Err(Error::config("sweep.mocs", "empty list"));
        }
        for (i, m) in self.mocs.iter().enumerate() {
            m.validate(&format!("sweep.mocs[{i}]"))?;
        }
        if self.n_traj == 0 || self.horizon < 4 {
            return Err(Error::config("sweep.n_traj", "co-simulation needs n_traj >= 1 and horizon >= 4"));
        }
        Ok(())
    }

    pub fn exec_model(&self) -> ExecTimeModel {
        ExecTimeModel::Beta {
            alpha: self.exec.alpha,
            beta: self.exec.beta,
            lo: 0.0,
            hi: self.period as f64,
        }
    }

    pub fn served(&self, bandwidth: f64) -> ServedTask {
        ServedTask {
            exec: self.exec_model(),
            budget: (bandwidth * self.res_period as f64).round() as Tick,
            res_period: self.res_period,
            period: self.period,
        }
    }
}

/// A plant with its state-feedback gain designed at the nominal period.
#[derive(Debug, Clone)]
pub struct Design {
    pub plant: ContinuousLti,
    pub gain: Matrix,
}

pub fn design(cfg: &SweepConfig, system: usize) -> Result<Design> {
    let plant = random_system(cfg.state_dim, cfg.a_scale, seed_of(&[cfg.seed, system as u64]))?;
    let d = c2d(&plant, cfg.period as f64 * cfg.tick)?;
    let n = plant.state_dim();
    let gain = dlqr(&d.a, &d.b, &CostWeights::identity(n, 1))?.k;
    Ok(Design { plant, gain })
}

/// Stability of one design under one model of computation and bandwidth.
pub fn decide(cfg: &SweepConfig, design: &Design, bandwidth: f64, moc: MocKind, seed: u64) -> Result<bool> {
    let task = cfg.served(bandwidth);
    match moc {
        MocKind::TtHard => Ok(task.budget * task.slots() >= task.exec.max_value()),
        MocKind::TtMaxb => {
            let d = c2d(&design.plant, cfg.period as f64 * cfg.tick)?;
            second_moment_stable(&tt_maxb_modes(&d, &design.gain, &task)?, DEFAULT_MARGIN)
        }
        MocKind::Cs { max_delay } => second_moment_stable(
            &cs_modes(&design.plant, &design.gain, &task, max_delay, cfg.tick)?,
            DEFAULT_MARGIN,
        ),
        MocKind::TtSort { .. } => {
            let setup = CoSimSetup {
                plant: design.plant.clone(),
                gain: design.gain.clone(),
                tick: cfg.tick,
                moc,
                task,
            };
            let sim = CoSimConfig {
                horizon: cfg.horizon,
                n_traj: cfg.n_traj,
                seed,
                ..CoSimConfig::default()
            };
            Ok(cosimulate(&setup, &sim)?.verdict == Verdict::Stable)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bandwidth: f64,
    pub moc: String,
    pub stabilized: usize,
    pub systems: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Systems for which no stabilizing gain was found; they count as
    /// failures in every cell.
    pub synthesis_failures: Vec<usize>,
}

impl SweepTable {
    pub fn fraction(&self, bandwidth: f64, moc: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| (r.bandwidth - bandwidth).abs() < 1e-12 && r.moc == moc)
            .map(|r| r.fraction)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bandwidth,moc,stabilized,systems,fraction\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.2},{},{},{},{:.6}\n",
                r.bandwidth, r.moc, r.stabilized, r.systems, r.fraction
            ));
        }
        s
    }
}

/// Runs every `(system, bandwidth, moc)` cell. Cells run in parallel; each
/// one gets its own seed, so the table does not depend on scheduling.
pub fn bandwidth_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let results: Vec<Result<Design>> = (0..cfg.n_systems).into_par_iter().map(|i| design(cfg, i)).collect();
    let mut synthesis_failures = Vec::new();
    let mut designs = Vec::with_capacity(results.len());
    for (i, d) in results.into_iter().enumerate() {
        match d {
            Ok(d) => designs.push(Some(d)),
            Err(Error::Numerical(_)) => {
                synthesis_failures.push(i);
                designs.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let cells: Vec<(usize, usize, usize)> = (0..cfg.bandwidths.len())
        .flat_map(|b| (0..cfg.mocs.len()).flat_map(move |m| (0..cfg.n_systems).map(move |s| (b, m, s))))
        .collect();
    let verdicts: Vec<bool> = cells
        .par_iter()
        .map(|&(b, m, s)| match &designs[s] {
            Some(d) => {
                let seed = seed_of(&[cfg.seed, s as u64, b as u64, m as u64]);
                decide(cfg, d, cfg.bandwidths[b], cfg.mocs[m], seed)
            }
            None => Ok(false),
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (bi, &bw) in cfg.bandwidths.iter().enumerate() {
        for (mi, moc) in cfg.mocs.iter().enumerate() {
            let base = (bi * cfg.mocs.len() + mi) * cfg.n_systems;
            let stabilized = verdicts[base..base + cfg.n_systems].iter().filter(|v| **v).count();
            rows.push(SweepRow {
                bandwidth: bw,
                moc: moc.name().to_string(),
                stabilized,
                systems: cfg.n_systems,
                fraction: stabilized as f64 / cfg.n_systems as f64,
            });
        }
    }
    Ok(SweepTable {
        rows,
        synthesis_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_systems_are_controllable_iff_b_nonzero() {
        let a = Matrix::from_element(1, 1, 0.3);
        assert!(controllability_margin(&a, &Matrix::from_element(1, 1, 0.5)) > CONTROLLABILITY_TOL);
        assert_eq!(controllability_margin(&a, &Matrix::zeros(1, 1)), 0.0);
        let s = random_system(1, 1.0, 9).unwrap();
        assert!(s.b[(0, 0)] != 0.0);
    }

    #[test]
    fn generated_systems_are_controllable() {
        for seed in 0..10_000 {
            let s = random_system(2, 1.0, seed).unwrap();
            assert!(controllability_margin(&s.a, &s.b) > CONTROLLABILITY_TOL);
        }
    }

    #[test]
    fn same_seed_same_system() {
        assert_eq!(random_system(3, 1.0, 5).unwrap(), random_system(3, 1.0, 5).unwrap());
        assert_ne!(random_system(3, 1.0, 5).unwrap(), random_system(3, 1.0, 6).unwrap());
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut c = SweepConfig {
            bandwidths: vec![0.1, 0.25],
            ..SweepConfig::default()
        };
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sweep.bandwidths[1]"),
            other => panic!("{other:?}"),
        }
        c.bandwidths = vec![0.2, 0.1];
        assert!(c.validate().is_err());
        c.bandwidths = vec![0.1];
        c.period = 105;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sweep.period"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_sweep_shape_and_determinism() {
        let cfg = SweepConfig {
            n_systems: 4,
            bandwidths: vec![0.5, 1.0],
            horizon: 40,
            n_traj: 16,
            ..SweepConfig::default()
        };
        let t = bandwidth_sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2 * cfg.mocs.len());
        assert_eq!(t.fraction(1.0, "tt_hard"), Some(1.0));
        assert_eq!(t.fraction(0.5, "tt_hard"), Some(0.0));
        assert_eq!(t.to_csv(), bandwidth_sweep(&cfg).unwrap().to_csv());
    }
}
