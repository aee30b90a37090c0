//! Plant models, LQR/LQG synthesis and the switched closed-loop modes whose
//! second moment decides stability under job dropouts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, check_finite, check_square, is_symmetric, kron, matexp, norm_inf, solve, Matrix};

fn dims(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Result<()> {
    check_square(a, "A")?;
    let n = a.nrows();
    let bad = |what: &str, m: &Matrix, r: usize, cols: usize| {
        Error::Dimension(format!(
            "{what} is {}x{}, expected {r}x{cols}",
            m.nrows(),
            m.ncols()
        ))
    };
    if b.nrows() != n || b.ncols() == 0 {
        return Err(bad("B", b, n, b.ncols().max(1)));
    }
    let p = b.ncols();
    if c.ncols() != n || c.nrows() == 0 {
        return Err(bad("C", c, c.nrows().max(1), n));
    }
    let m = c.nrows();
    if d.nrows() != m || d.ncols() != p {
        return Err(bad("D", d, m, p));
    }
    for x in [a, b, c, d] {
        check_finite(x)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
struct RawLti {
    #[serde(rename = "A", with = "linalg::rows")]
    a: Matrix,
    #[serde(rename = "B", with = "linalg::rows")]
    b: Matrix,
    #[serde(rename = "C", default, deserialize_with = "opt_rows")]
    c: Option<Matrix>,
    #[serde(rename = "D", default, deserialize_with = "opt_rows")]
    d: Option<Matrix>,
}

fn opt_rows<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Matrix>, D::Error> {
    linalg::rows::deserialize(d).map(Some)
}

/// `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLti")]
pub struct ContinuousLti {
    #[serde(rename = "A", with = "linalg::rows")]
    pub a: Matrix,
    #[serde(rename = "B", with = "linalg::rows")]
    pub b: Matrix,
    #[serde(rename = "C", with = "linalg::rows")]
    pub c: Matrix,
    #[serde(rename = "D", with = "linalg::rows")]
    pub d: Matrix,
}

impl TryFrom<RawLti> for ContinuousLti {
    type Error = Error;

    fn try_from(r: RawLti) -> Result<Self> {
        let n = r.a.nrows();
        let c = r.c.unwrap_or_else(|| Matrix::identity(n, n));
        let d = r.d.unwrap_or_else(|| Matrix::zeros(c.nrows(), r.b.ncols()));
        ContinuousLti::new(r.a, r.b, c, d)
    }
}

impl ContinuousLti {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        dims(&a, &b, &c, &d)?;
        Ok(ContinuousLti { a, b, c, d })
    }

    /// Full state measurement: `C = I`, `D = 0`.
    pub fn state_feedback(a: Matrix, b: Matrix) -> Result<Self> {
        let n = a.nrows();
        let p = b.ncols();
        Self::new(a, b, Matrix::identity(n, n), Matrix::zeros(n, p))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLti {
    #[serde(rename = "A", with = "linalg::rows")]
    pub a: Matrix,
    #[serde(rename = "B", with = "linalg::rows")]
    pub b: Matrix,
    #[serde(rename = "C", with = "linalg::rows")]
    pub c: Matrix,
    #[serde(rename = "D", with = "linalg::rows")]
    pub d: Matrix,
    pub sample_period: f64,
}

impl DiscreteLti {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix, sample_period: f64) -> Result<Self> {
        dims(&a, &b, &c, &d)?;
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(Error::config("sample_period", "must be positive"));
        }
        Ok(DiscreteLti {
            a,
            b,
            c,
            d,
            sample_period,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Discrete controller `z' = E z + F y`, `u = G z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerLti {
    #[serde(rename = "E", with = "linalg::rows")]
    pub e: Matrix,
    #[serde(rename = "F", with = "linalg::rows")]
    pub f: Matrix,
    #[serde(rename = "G", with = "linalg::rows")]
    pub g: Matrix,
}

/// LQ weights. `qx` penalizes the state and `ru` the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    #[serde(with = "linalg::rows")]
    pub qx: Matrix,
    #[serde(with = "linalg::rows")]
    pub ru: Matrix,
}

impl CostWeights {
    pub fn identity(n: usize, p: usize) -> Self {
        CostWeights {
            qx: Matrix::identity(n, n),
            ru: Matrix::identity(p, p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_square(&self.qx, "Qx")?;
        check_square(&self.ru, "Ru")?;
        if !is_symmetric(&self.qx, 1e-12) {
            return Err(Error::config("weights.qx", "must be symmetric"));
        }
        if !is_symmetric(&self.ru, 1e-12) {
            return Err(Error::config("weights.ru", "must be symmetric"));
        }
        let min_eig = self.qx.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-12 * self.qx.amax().max(1.0) {
            return Err(Error::config("weights.qx", "must be positive semidefinite"));
        }
        if self.ru.clone().cholesky().is_none() {
            return Err(Error::config("weights.ru", "must be positive definite"));
        }
        Ok(())
    }
}

/// Zero-order-hold discretization over period `t`, through the exponential
/// of the augmented matrix `[[A, B], [0, 0]] t`.
pub fn c2d(plant: &ContinuousLti, t: f64) -> Result<DiscreteLti> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::config("sample_period", "must be positive"));
    }
    let n = plant.state_dim();
    let p = plant.input_dim();
    let mut aug = Matrix::zeros(n + p, n + p);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&plant.a * t));
    aug.view_mut((0, n), (n, p)).copy_from(&(&plant.b * t));
    let e = matexp(&aug)?;
    DiscreteLti::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, p)).into_owned(),
        plant.c.clone(),
        plant.d.clone(),
        t,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    /// `u = -K x`.
    pub k: Matrix,
    /// Stabilizing Riccati solution.
    pub p: Matrix,
    pub iterations: usize,
}

pub const RICCATI_TOL: f64 = 1e-10;
pub const RICCATI_MAX_ITER: usize = 100_000;

fn riccati_step(a: &Matrix, b: &Matrix, w: &CostWeights, p: &Matrix) -> Result<(Matrix, Matrix)> {
    let at = a.transpose();
    let bt_p = b.transpose() * p;
    let s = &w.ru + &bt_p * b;
    let k = solve(&s, &(&bt_p * a))?;
    let mut next = &w.qx + &at * p * a - &at * p * b * &k;
    next = (&next + next.transpose()) * 0.5;
    Ok((next, k))
}

/// `‖P − Riccati(P)‖∞`.
pub fn riccati_residual(a: &Matrix, b: &Matrix, w: &CostWeights, p: &Matrix) -> Result<f64> {
    let (next, _) = riccati_step(a, b, w, p)?;
    Ok(norm_inf(&(p - next)))
}

/// Infinite-horizon discrete LQR by fixed-point iteration of the Riccati
/// difference equation from `P = Qx`.
///
/// The step tolerance is taken relative to `max(1, ‖P‖∞)` so strongly
/// unstable plants, whose cost matrices are large, still converge in floating
/// point.
pub fn dlqr(a: &Matrix, b: &Matrix, w: &CostWeights) -> Result<LqrSolution> {
    check_square(a, "A")?;
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!("B has {} rows, A has {}", b.nrows(), a.nrows())));
    }
    w.validate()?;
    if w.qx.nrows() != a.nrows() || w.ru.nrows() != b.ncols() {
        return Err(Error::Dimension("cost weights do not match the plant".into()));
    }
    let mut p = w.qx.clone();
    for it in 1..=RICCATI_MAX_ITER {
        let (next, _) = riccati_step(a, b, w, &p)?;
        check_finite(&next).map_err(|_| Error::Numerical("Riccati iteration diverged".into()))?;
        let delta = norm_inf(&(&next - &p));
        p = next;
        if delta < RICCATI_TOL * norm_inf(&p).max(1.0) {
            let (_, k) = riccati_step(a, b, w, &p)?;
            let rho = linalg::spectral_radius(&(a - b * &k))?;
            if rho >= 1.0 {
                return Err(Error::Numerical(format!(
                    "plant is not stabilizable with these weights (closed-loop radius {rho})"
                )));
            }
            return Ok(LqrSolution { k, p, iterations: it });
        }
    }
    Err(Error::Numerical(format!(
        "Riccati iteration did not converge in {RICCATI_MAX_ITER} steps"
    )))
}

/// Steady-state estimator gain by duality with [`dlqr`], so that `A − L C`
/// is Schur stable.
pub fn kalman_gain(a: &Matrix, c: &Matrix, w_proc: &Matrix, w_meas: &Matrix) -> Result<Matrix> {
    let dual = CostWeights {
        qx: w_proc.clone(),
        ru: w_meas.clone(),
    };
    Ok(dlqr(&a.transpose(), &c.transpose(), &dual)?.k.transpose())
}

/// Observer-based controller `E = A − BK − LC + LDK`, `F = L`, `G = −K`.
pub fn lqg_assemble(plant: &DiscreteLti, k: &Matrix, l: &Matrix) -> Result<ControllerLti> {
    let n = plant.state_dim();
    if k.nrows() != plant.input_dim() || k.ncols() != n {
        return Err(Error::Dimension(format!(
            "K is {}x{}, expected {}x{n}",
            k.nrows(),
            k.ncols(),
            plant.input_dim()
        )));
    }
    if l.nrows() != n || l.ncols() != plant.c.nrows() {
        return Err(Error::Dimension(format!(
            "L is {}x{}, expected {n}x{}",
            l.nrows(),
            l.ncols(),
            plant.c.nrows()
        )));
    }
    let e = &plant.a - &plant.b * k - l * &plant.c + l * &plant.d * k;
    Ok(ControllerLti {
        e,
        f: l.clone(),
        g: -k,
    })
}

/// Plant in feedback with a dynamic controller, state `(x, z)`.
pub fn closed_loop(plant: &DiscreteLti, ctrl: &ControllerLti) -> Matrix {
    let n = plant.state_dim();
    let q = ctrl.e.nrows();
    let mut m = Matrix::zeros(n + q, n + q);
    m.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    m.view_mut((0, n), (n, q)).copy_from(&(&plant.b * &ctrl.g));
    m.view_mut((n, 0), (q, n)).copy_from(&(&ctrl.f * &plant.c));
    m.view_mut((n, n), (q, q))
        .copy_from(&(&ctrl.e + &ctrl.f * &plant.d * &ctrl.g));
    m
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// `u = −K x`.
    State(Matrix),
    Dynamic(ControllerLti),
}

/// When a completed job's command reaches the actuator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldStrategy {
    /// Applied over the same period it was computed in.
    #[default]
    Immediate,
    /// Latched and applied from the next period on.
    NextPeriod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub label: String,
    #[serde(with = "linalg::rows")]
    pub matrix: Matrix,
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopModes {
    pub dim: usize,
    pub modes: Vec<Mode>,
}

pub const PROBABILITY_TOL: f64 = 1e-12;

impl ClosedLoopModes {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        let dim = modes
            .first()
            .map(|m| m.matrix.nrows())
            .ok_or_else(|| Error::Dimension("no modes".into()))?;
        for m in &modes {
            check_square(&m.matrix, &m.label)?;
            if m.matrix.nrows() != dim {
                return Err(Error::Dimension(format!(
                    "mode {} has dimension {}, expected {dim}",
                    m.label,
                    m.matrix.nrows()
                )));
            }
        }
        Ok(ClosedLoopModes { dim, modes })
    }

    pub fn with_probabilities(mut self, probs: &[f64]) -> Result<Self> {
        if probs.len() != self.modes.len() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} modes",
                probs.len(),
                self.modes.len()
            )));
        }
        for (m, p) in self.modes.iter_mut().zip(probs) {
            m.probability = Some(*p);
        }
        self.check_probabilities()?;
        Ok(self)
    }

    pub fn probabilities(&self) -> Option<Vec<f64>> {
        self.modes.iter().map(|m| m.probability).collect()
    }

    pub fn check_probabilities(&self) -> Result<Vec<f64>> {
        let p = self
            .probabilities()
            .ok_or_else(|| Error::Numerical("mode probabilities not filled".into()))?;
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Numerical("mode probability outside [0, 1]".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::Numerical(format!("mode probabilities sum to {sum}")));
        }
        Ok(p)
    }

    pub fn matrix(&self, label: &str) -> Option<&Matrix> {
        self.modes.iter().find(|m| m.label == label).map(|m| &m.matrix)
    }
}

fn blocks(parts: &[&[Option<&Matrix>]], sizes: &[usize]) -> Matrix {
    let n: usize = sizes.iter().sum();
    let mut m = Matrix::zeros(n, n);
    let mut r0 = 0;
    for (i, row) in parts.iter().enumerate() {
        let mut c0 = 0;
        for (j, blk) in row.iter().enumerate() {
            if let Some(b) = blk {
                m.view_mut((r0, c0), (sizes[i], sizes[j])).copy_from(b);
            }
            c0 += sizes[j];
        }
        r0 += sizes[i];
    }
    m
}

/// Closed and open modes over the augmented state `(x, u_held)`, or
/// `(x, z, u_held)` for a dynamic controller.
///
/// In the closed mode the job finished in time: a fresh command is computed
/// and latched. In the open mode it was dropped: the controller state and
/// the held command carry over unchanged.
pub fn build_modes(plant: &DiscreteLti, feedback: &Feedback, hold: HoldStrategy) -> Result<ClosedLoopModes> {
    let n = plant.state_dim();
    let p = plant.input_dim();
    let (a, b) = (&plant.a, &plant.b);
    let ip = Matrix::identity(p, p);
    let (closed, open) = match feedback {
        Feedback::State(k) => {
            if k.nrows() != p || k.ncols() != n {
                return Err(Error::Dimension(format!("K must be {p}x{n}")));
            }
            let neg_k = -k;
            let open = blocks(&[&[Some(a), Some(b)], &[None, Some(&ip)]], &[n, p]);
            let closed = match hold {
                HoldStrategy::Immediate => {
                    let acl = a - b * k;
                    blocks(&[&[Some(&acl), None], &[Some(&neg_k), None]], &[n, p])
                }
                HoldStrategy::NextPeriod => blocks(&[&[Some(a), Some(b)], &[Some(&neg_k), None]], &[n, p]),
            };
            (closed, open)
        }
        Feedback::Dynamic(ctrl) => {
            let q = ctrl.e.nrows();
            if ctrl.g.nrows() != p || ctrl.g.ncols() != q || ctrl.f.nrows() != q || ctrl.f.ncols() != plant.c.nrows() {
                return Err(Error::Dimension("controller does not match the plant".into()));
            }
            let iq = Matrix::identity(q, q);
            let sizes = [n, q, p];
            let open = blocks(
                &[&[Some(a), None, Some(b)], &[None, Some(&iq), None], &[None, None, Some(&ip)]],
                &sizes,
            );
            let fc = &ctrl.f * &plant.c;
            let closed = match hold {
                HoldStrategy::Immediate => {
                    let bg = b * &ctrl.g;
                    let zz = &ctrl.e + &ctrl.f * &plant.d * &ctrl.g;
                    blocks(
                        &[&[Some(a), Some(&bg), None], &[Some(&fc), Some(&zz), None], &[None, Some(&ctrl.g), None]],
                        &sizes,
                    )
                }
                HoldStrategy::NextPeriod => {
                    let fd = &ctrl.f * &plant.d;
                    blocks(
                        &[&[Some(a), None, Some(b)], &[Some(&fc), Some(&ctrl.e), Some(&fd)], &[None, Some(&ctrl.g), None]],
                        &sizes,
                    )
                }
            };
            (closed, open)
        }
    };
    ClosedLoopModes::new(vec![
        Mode {
            label: "closed".into(),
            matrix: closed,
            probability: None,
        },
        Mode {
            label: "open".into(),
            matrix: open,
            probability: None,
        },
    ])
}

/// `Ã = Σ μ_i A_i ⊗ A_i`; `E[x̂ x̂ᵀ]` evolves linearly through it.
pub fn stability_matrix(modes: &ClosedLoopModes) -> Result<Matrix> {
    let probs = modes.check_probabilities()?;
    let d = modes.dim * modes.dim;
    let mut acc = Matrix::zeros(d, d);
    for (m, p) in modes.modes.iter().zip(probs) {
        if p > 0.0 {
            acc += kron(&m.matrix, &m.matrix) * p;
        }
    }
    Ok(acc)
}

pub fn stability_radius(modes: &ClosedLoopModes) -> Result<f64> {
    linalg::spectral_radius(&stability_matrix(modes)?)
}

pub const DEFAULT_MARGIN: f64 = 1e-9;

/// Mean-square stability of the i.i.d. switched system: `ρ(Ã) < 1 − margin`.
pub fn second_moment_stable(modes: &ClosedLoopModes, margin: f64) -> Result<bool> {
    Ok(stability_radius(modes)? < 1.0 - margin)
}

/// `ρ(Ã)` for the two-mode system at each dropout probability in `grid`.
pub fn radius_vs_dropout(modes: &ClosedLoopModes, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if modes.modes.len() != 2 {
        return Err(Error::Dimension("expected exactly two modes".into()));
    }
    let kc = kron(&modes.modes[0].matrix, &modes.modes[0].matrix);
    let ko = kron(&modes.modes[1].matrix, &modes.modes[1].matrix);
    grid.iter()
        .map(|&mu| {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::config("mu", "must lie in [0, 1]"));
            }
            Ok((mu, linalg::spectral_radius(&(&kc * (1.0 - mu) + &ko * mu))?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat, spectral_radius};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> Matrix {
        mat(&[&[x]])
    }

    // Classical fourth-order Runge-Kutta with held input, as a trajectory
    // oracle for the discretization.
    fn rk4(a: &Matrix, b: &Matrix, x0: &Matrix, u: &Matrix, t: f64, steps: usize) -> Matrix {
        let h = t / steps as f64;
        let f = |x: &Matrix| a * x + b * u;
        let mut x = x0.clone();
        for _ in 0..steps {
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (h / 2.0)));
            let k3 = f(&(&x + &k2 * (h / 2.0)));
            let k4 = f(&(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        x
    }

    #[test]
    fn c2d_scalar_cases() {
        let integ = ContinuousLti::state_feedback(scalar(0.0), scalar(1.0)).unwrap();
        let d = c2d(&integ, 1.0).unwrap();
        assert!((d.a[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((d.b[(0, 0)] - 1.0).abs() < 1e-15);
        let decay = ContinuousLti::state_feedback(scalar(-1.0), scalar(0.0)).unwrap();
        let d = c2d(&decay, 1.0).unwrap();
        assert!((d.a[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(d.b[(0, 0)], 0.0);
        assert!(c2d(&decay, 0.0).is_err());
    }

    #[test]
    fn c2d_matches_rk4() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let double = ContinuousLti::state_feedback(mat(&[&[0.0, 1.0], &[0.0, 0.0]]), mat(&[&[0.0], &[1.0]])).unwrap();
        let random = ContinuousLti::state_feedback(
            Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)),
            Matrix::from_fn(3, 1, |_, _| rng.gen_range(-1.0..1.0)),
        )
        .unwrap();
        for plant in [double, random] {
            let n = plant.state_dim();
            let t = 0.3;
            let d = c2d(&plant, t).unwrap();
            let mut x = Matrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
            let mut y = x.clone();
            for _ in 0..5 {
                let u = Matrix::from_fn(1, 1, |_, _| rng.gen_range(-1.0..1.0));
                x = &d.a * &x + &d.b * &u;
                y = rk4(&plant.a, &plant.b, &y, &u, t, 1000);
                assert!((&x - &y).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn scalar_riccati_is_golden_ratio() {
        let w = CostWeights::identity(1, 1);
        let s = dlqr(&scalar(1.0), &scalar(1.0), &w).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((s.p[(0, 0)] - phi).abs() < 1e-9);
        assert!((s.k[(0, 0)] - phi / (1.0 + phi)).abs() < 1e-9);
    }

    #[test]
    fn zero_state_cost_on_stable_plant_gives_zero_gain() {
        let w = CostWeights {
            qx: Matrix::zeros(2, 2),
            ru: Matrix::identity(1, 1),
        };
        let a = mat(&[&[0.5, 0.1], &[0.0, -0.3]]);
        let s = dlqr(&a, &mat(&[&[1.0], &[1.0]]), &w).unwrap();
        assert_eq!(s.k.amax(), 0.0);
    }

    #[test]
    fn random_dlqr_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.5..1.5));
            let b = Matrix::from_fn(3, 1, |_, _| rng.gen_range(-1.0..1.0));
            let w = CostWeights::identity(3, 1);
            let s = dlqr(&a, &b, &w).unwrap();
            assert!(spectral_radius(&(&a - &b * &s.k)).unwrap() < 1.0);
            let r = riccati_residual(&a, &b, &w, &s.p).unwrap();
            assert!(r < 1e-8 * norm_inf(&s.p).max(1.0), "residual {r}");
        }
    }

    #[test]
    fn unstabilizable_plant_is_reported() {
        // Unstable mode the input cannot reach.
        let a = mat(&[&[2.0, 0.0], &[0.0, 0.5]]);
        let b = mat(&[&[0.0], &[1.0]]);
        let r = dlqr(&a, &b, &CostWeights::identity(2, 1));
        assert!(matches!(r, Err(Error::Numerical(_))), "{r:?}");
    }

    #[test]
    fn weight_validation() {
        let w = CostWeights {
            qx: mat(&[&[1.0, 0.5], &[0.0, 1.0]]),
            ru: Matrix::identity(1, 1),
        };
        assert!(w.validate().is_err());
        let w = CostWeights {
            qx: Matrix::identity(2, 2),
            ru: scalar(0.0),
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn kalman_examples() {
        let l = kalman_gain(&scalar(1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((l[(0, 0)] - 0.6180339887).abs() < 1e-9);
        let a = mat(&[&[0.5, 0.2], &[0.0, 0.1]]);
        let l = kalman_gain(&a, &Matrix::identity(2, 2), &Matrix::zeros(2, 2), &Matrix::identity(2, 2)).unwrap();
        assert_eq!(l.amax(), 0.0);
    }

    #[test]
    fn cheaper_measurements_push_observer_towards_deadbeat() {
        let a = mat(&[&[1.1, 0.4], &[-0.2, 0.9]]);
        let c = Matrix::identity(2, 2);
        let mut last = f64::INFINITY;
        for w in [1.0, 1e-1, 1e-2, 1e-3, 1e-4] {
            let l = kalman_gain(&a, &c, &Matrix::identity(2, 2), &(Matrix::identity(2, 2) * w)).unwrap();
            let rho = spectral_radius(&(&a - &l * &c)).unwrap();
            assert!(rho < last, "rho {rho} did not decrease");
            last = rho;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn deadbeat_lqg_composition() {
        let plant = DiscreteLti::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(0.0), 1.0).unwrap();
        let ctrl = lqg_assemble(&plant, &scalar(1.0), &scalar(1.0)).unwrap();
        assert_eq!(ctrl.g, scalar(-1.0));
        assert!(spectral_radius(&closed_loop(&plant, &ctrl)).unwrap() < 1e-7);
    }

    #[test]
    fn separation_principle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-1.2..1.2));
            let b = Matrix::from_fn(3, 1, |_, _| rng.gen_range(-1.0..1.0));
            let c = Matrix::from_fn(1, 3, |_, _| rng.gen_range(-1.0..1.0));
            let d = Matrix::from_fn(1, 1, |_, _| rng.gen_range(-0.5..0.5));
            let plant = DiscreteLti::new(a.clone(), b.clone(), c.clone(), d, 1.0).unwrap();
            let k = dlqr(&a, &b, &CostWeights::identity(3, 1)).unwrap().k;
            let l = kalman_gain(&a, &c, &Matrix::identity(3, 3), &Matrix::identity(1, 1)).unwrap();
            let ctrl = lqg_assemble(&plant, &k, &l).unwrap();
            assert_eq!(ctrl.g, -&k);
            let rho = spectral_radius(&closed_loop(&plant, &ctrl)).unwrap();
            let expect = spectral_radius(&(&a - &b * &k))
                .unwrap()
                .max(spectral_radius(&(&a - &l * &c)).unwrap());
            assert!((rho - expect).abs() < 1e-8, "{rho} vs {expect}");
        }
    }

    fn scalar_plant(a: f64, b: f64) -> DiscreteLti {
        DiscreteLti::new(scalar(a), scalar(b), scalar(1.0), scalar(0.0), 1.0).unwrap()
    }

    #[test]
    fn mode_block_forms() {
        let m = build_modes(&scalar_plant(1.2, 1.0), &Feedback::State(scalar(0.7)), HoldStrategy::Immediate).unwrap();
        let closed = m.matrix("closed").unwrap();
        assert!((closed - mat(&[&[0.5, 0.0], &[-0.7, 0.0]])).amax() < 1e-15);
        assert_eq!(m.matrix("open").unwrap(), &mat(&[&[1.2, 1.0], &[0.0, 1.0]]));
        assert!((spectral_radius(closed).unwrap() - 0.5).abs() < 1e-15);

        let m = build_modes(&scalar_plant(0.8, 0.0), &Feedback::State(scalar(0.0)), HoldStrategy::Immediate).unwrap();
        assert_eq!(m.matrix("closed").unwrap(), &mat(&[&[0.8, 0.0], &[0.0, 0.0]]));
        assert_eq!(m.matrix("open").unwrap()[(0, 0)], 0.8);
    }

    #[test]
    fn dynamic_modes_contain_the_lqg_loop() {
        let plant = DiscreteLti::new(
            mat(&[&[1.1, 0.3], &[0.0, 0.7]]),
            mat(&[&[0.0], &[1.0]]),
            mat(&[&[1.0, 0.0]]),
            scalar(0.0),
            1.0,
        )
        .unwrap();
        let k = dlqr(&plant.a, &plant.b, &CostWeights::identity(2, 1)).unwrap().k;
        let l = kalman_gain(&plant.a, &plant.c, &Matrix::identity(2, 2), &scalar(1.0)).unwrap();
        let ctrl = lqg_assemble(&plant, &k, &l).unwrap();
        let m = build_modes(&plant, &Feedback::Dynamic(ctrl.clone()), HoldStrategy::Immediate).unwrap();
        assert_eq!(m.dim, 5);
        let rho = spectral_radius(m.matrix("closed").unwrap()).unwrap();
        let expect = spectral_radius(&closed_loop(&plant, &ctrl)).unwrap();
        assert!((rho - expect).abs() < 1e-9);
    }

    fn scalar_modes(ac: f64, ao: f64, mu: f64) -> ClosedLoopModes {
        ClosedLoopModes::new(vec![
            Mode {
                label: "closed".into(),
                matrix: scalar(ac),
                probability: None,
            },
            Mode {
                label: "open".into(),
                matrix: scalar(ao),
                probability: None,
            },
        ])
        .unwrap()
        .with_probabilities(&[1.0 - mu, mu])
        .unwrap()
    }

    #[test]
    fn scalar_stability_matrix() {
        let m = scalar_modes(0.5, 1.2, 0.3);
        let at = stability_matrix(&m).unwrap();
        assert!((at[(0, 0)] - 0.607).abs() < 1e-12);
        assert!(second_moment_stable(&m, DEFAULT_MARGIN).unwrap());
        assert!(second_moment_stable(&scalar_modes(0.5, 1.2, 0.0), DEFAULT_MARGIN).unwrap());
        assert!(!second_moment_stable(&scalar_modes(0.5, 1.2, 1.0), DEFAULT_MARGIN).unwrap());
    }

    #[test]
    fn degenerate_probabilities() {
        let modes = build_modes(&scalar_plant(1.3, 1.0), &Feedback::State(scalar(0.9)), HoldStrategy::Immediate).unwrap();
        let ac = modes.modes[0].matrix.clone();
        let ao = modes.modes[1].matrix.clone();
        let m0 = modes.clone().with_probabilities(&[1.0, 0.0]).unwrap();
        let r0 = stability_radius(&m0).unwrap();
        assert!((r0 - spectral_radius(&ac).unwrap().powi(2)).abs() < 1e-12);
        let m1 = modes.clone().with_probabilities(&[0.0, 1.0]).unwrap();
        assert_eq!(stability_matrix(&m1).unwrap(), kron(&ao, &ao));
        assert!(modes.clone().with_probabilities(&[0.5, 0.6]).is_err());
        assert!(modes.with_probabilities(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn radius_grows_with_dropout_when_open_loop_is_unstable() {
        let m = scalar_modes(0.5, 1.2, 0.0);
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let table = radius_vs_dropout(&m, &grid).unwrap();
        for w in table.windows(2) {
            assert!(w[1].1 > w[0].1);
            assert!(w[1].1 - w[0].1 < 0.02);
        }
    }

    #[test]
    fn lti_json() {
        let p: ContinuousLti = serde_json::from_str(r#"{"A": [[0, 1], [-2, -3]], "B": [[0], [1]]}"#).unwrap();
        assert_eq!(p.c, Matrix::identity(2, 2));
        assert_eq!(p.d, Matrix::zeros(2, 1));
        let err = serde_json::from_str::<ContinuousLti>(r#"{"A": [[0, 1], [-2, -3]], "B": [[0]]}"#);
        assert!(err.is_err());
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ContinuousLti>(&s).unwrap(), p);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn kron_squares_the_radius(seed in any::<u64>(), n in 1usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let r = spectral_radius(&a).unwrap();
                let rk = spectral_radius(&kron(&a, &a)).unwrap();
                prop_assert!((rk - r * r).abs() <= 1e-9 * (1.0 + r * r));
            }

            #[test]
            fn scalar_radius_monotone_in_dropout(ac in -0.99f64..0.99, ao in 1.01f64..3.0, mu in 0.0f64..0.99) {
                let lo = stability_radius(&scalar_modes(ac, ao, mu)).unwrap();
                let hi = stability_radius(&scalar_modes(ac, ao, mu + 0.01)).unwrap();
                prop_assert!(hi >= lo);
            }
        }
    }
}
