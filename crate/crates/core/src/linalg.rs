//! Dense matrix helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, Schur};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Squarings in the Gelfand estimate; the power is `2^GELFAND_SQUARINGS`.
///
/// `‖M^k‖^(1/k)` overshoots ρ by a factor `κ^(1/k)` where κ is an
/// eigenvector condition number, so 2^20 leaves errors of a few 1e-6 on
/// ordinary random matrices. 2^30 keeps it well under 1e-8.
pub const GELFAND_SQUARINGS: u32 = 30;

/// Row-major construction, panicking on ragged input. For literals.
pub fn mat(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    assert!(rows.iter().all(|row| row.len() == c), "ragged matrix literal");
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 {
        return Err(Error::Dimension("matrix must have at least one row and column".into()));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Dimension(format!(
            "row {i} has {} entries, expected {c}",
            rows[i].len()
        )));
    }
    let m = Matrix::from_fn(r, c, |i, j| rows[i][j]);
    check_finite(&m)?;
    Ok(m)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}

/// Serde adapter: matrices as JSON arrays of rows.
pub mod rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("matrix has non-finite entries".into()))
    }
}

pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.nrows() == m.ncols() && (m - m.transpose()).amax() <= tol
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("singular linear system".into()))
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

const PADE6: [f64; 7] = [
    1.0,
    1.0 / 2.0,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// `e^M` by scaling and squaring around a diagonal (6,6) Padé approximant.
///
/// The argument is scaled to 1-norm at most 1/2, where the approximant's
/// relative truncation error is below 4e-16.
pub fn matexp(m: &Matrix) -> Result<Matrix> {
    check_square(m, "matexp argument")?;
    check_finite(m)?;
    let n = m.nrows();
    let norm = norm_1(m);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);
    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let even = &id * PADE6[0] + &a2 * PADE6[2] + &a4 * PADE6[4] + &a6 * PADE6[6];
    let odd = &a * (&id * PADE6[1] + &a2 * PADE6[3] + &a4 * PADE6[5]);
    let mut e = solve(&(&even - &odd), &(&even + &odd))?;
    for _ in 0..s {
        e = &e * &e;
    }
    check_finite(&e)?;
    Ok(e)
}

/// All eigenvalues through the real Schur form (Hessenberg reduction and
/// shifted QR sweeps). `None` when the iteration does not converge.
pub fn eigenvalues(m: &Matrix) -> Result<Option<Vec<Complex<f64>>>> {
    check_square(m, "eigenvalue argument")?;
    check_finite(m)?;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000);
    Ok(schur.map(|s| s.complex_eigenvalues().iter().copied().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusEstimate {
    pub value: f64,
    /// Eigenvalue iteration failed and the Gelfand estimate was used.
    pub approximate: bool,
}

pub fn spectral_radius_estimate(m: &Matrix) -> Result<RadiusEstimate> {
    match eigenvalues(m)? {
        Some(ev) => Ok(RadiusEstimate {
            value: ev.iter().map(|z| z.norm()).fold(0.0, f64::max),
            approximate: false,
        }),
        None => Ok(RadiusEstimate {
            value: gelfand_radius(m, GELFAND_SQUARINGS)?,
            approximate: true,
        }),
    }
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    spectral_radius_estimate(m).map(|r| r.value)
}

/// `‖M^k‖^(1/k)` for `k = 2^squarings`, by repeated squaring with the
/// scale carried in log space so nothing overflows.
pub fn gelfand_radius(m: &Matrix, squarings: u32) -> Result<f64> {
    check_square(m, "gelfand argument")?;
    check_finite(m)?;
    let mut p = m.clone();
    let mut log_scale = 0.0f64;
    let mut pow = 1.0f64;
    let normalize = |p: &mut Matrix| -> Option<f64> {
        let n = p.norm();
        if n == 0.0 {
            return None;
        }
        *p /= n;
        Some(n.ln())
    };
    match normalize(&mut p) {
        Some(l) => log_scale += l,
        None => return Ok(0.0),
    }
    for _ in 0..squarings {
        p = &p * &p;
        log_scale *= 2.0;
        pow *= 2.0;
        match normalize(&mut p) {
            Some(l) => log_scale += l,
            None => return Ok(0.0),
        }
    }
    Ok((log_scale / pow).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    // Independent oracle: plain Taylor series on a scaled argument.
    fn taylor_exp(m: &Matrix) -> Matrix {
        let n = m.nrows();
        let s = 8;
        let a = m / 2f64.powi(s);
        let mut term = Matrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matexp(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(e, Matrix::identity(3, 3));
    }

    #[test]
    fn exp_of_diagonal() {
        let e = matexp(&Matrix::from_diagonal(&nalgebra::dvector![1.0, -2.0, 3.5])).unwrap();
        for (i, l) in [1.0f64, -2.0, 3.5].iter().enumerate() {
            assert!((e[(i, i)] - l.exp()).abs() <= 1e-12 * l.exp());
        }
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_matches_taylor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let m = random(4, &mut rng) * 2.0;
            let e = matexp(&m).unwrap();
            let t = taylor_exp(&m);
            assert!((&e - &t).amax() <= 1e-8 * t.amax(), "{e} vs {t}");
        }
    }

    #[test]
    fn exp_rejects_rectangular() {
        assert!(matches!(matexp(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn kron_identities() {
        let i2 = Matrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), Matrix::identity(4, 4));
        let m = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let k = kron(&mat(&[&[2.0, 0.0], &[0.0, -1.0]]), &m);
        assert_eq!(k.view((0, 0), (2, 2)), &m * 2.0);
        assert_eq!(k.view((2, 2), (2, 2)), -&m);
        assert_eq!(k.view((0, 2), (2, 2)), Matrix::zeros(2, 2));
    }

    #[test]
    fn kron_eigenvalues_are_pairwise_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(3, &mut rng);
        let ev = eigenvalues(&a).unwrap().unwrap();
        let mut kev = eigenvalues(&kron(&a, &a)).unwrap().unwrap();
        for x in &ev {
            for y in &ev {
                let p = x * y;
                let (idx, d) = kev
                    .iter()
                    .enumerate()
                    .map(|(i, z)| (i, (z - p).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(d < 1e-9, "missing product {p}");
                kev.swap_remove(idx);
            }
        }
    }

    #[test]
    fn radius_examples() {
        let d = Matrix::from_diagonal(&nalgebra::dvector![0.5, -0.9]);
        assert!((spectral_radius(&d).unwrap() - 0.9).abs() < 1e-14);
        let th = 0.7f64;
        let rot = mat(&[&[th.cos(), -th.sin()], &[th.sin(), th.cos()]]);
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(gelfand_radius(&Matrix::zeros(3, 3), 20).unwrap(), 0.0);
        // Nilpotent: the power vanishes after one squaring.
        let nil = mat(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(gelfand_radius(&nil, 20).unwrap(), 0.0);
    }

    #[test]
    fn radius_agrees_with_gelfand() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for n in [2, 5, 9, 16] {
            let m = random(n, &mut rng);
            let qr = spectral_radius(&m).unwrap();
            let g = gelfand_radius(&m, GELFAND_SQUARINGS).unwrap();
            assert!((qr - g).abs() <= 1e-6 * g, "n={n}: {qr} vs {g}");
        }
    }

    #[test]
    fn rows_round_trip() {
        #[derive(Serialize, Deserialize)]
        struct W {
            #[serde(with = "rows")]
            m: Matrix,
        }
        let w = W {
            m: mat(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]),
        };
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"m":[[1.0,2.0,3.0],[4.0,5.0,6.0]]}"#);
        let back: W = serde_json::from_str(&s).unwrap();
        assert_eq!(back.m, w.m);
        assert!(serde_json::from_str::<W>(r#"{"m":[[1.0],[2.0,3.0]]}"#).is_err());
    }
}
