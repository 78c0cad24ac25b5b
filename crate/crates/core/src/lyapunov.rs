//! Continuous Lyapunov equation `A X + X A' + Q = 0` for Hurwitz `A`.
//!
//! Small systems are solved through the vectorized Kronecker form; larger ones
//! by Bartels-Stewart on the real Schur form of `A`.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest dimension solved through the `n^2 x n^2` Kronecker system.
pub const KRONECKER_MAX_DIM: usize = 32;

/// Maximum real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::param(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    if a.nrows() == 0 {
        return Err(Error::param("empty matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("matrix has non-finite entries"));
    }
    if is_symmetric(a) {
        let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numeric("symmetric eigen-solver did not converge"))?;
        return Ok(eig.eigenvalues.max());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numeric("Schur decomposition did not converge"))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| a[(i, j)] == a[(j, i)]))
}

/// Solves `A X + X A' + Q = 0`. Refuses unstable `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(a, q)?;
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= 0.0 {
        return Err(Error::Unstable { abscissa });
    }
    if a.nrows() <= KRONECKER_MAX_DIM {
        solve_lyapunov_kronecker(a, q)
    } else {
        solve_lyapunov_schur(a, q)
    }
}

fn check_shapes(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || a.shape() != q.shape() {
        return Err(Error::param(format!(
            "Lyapunov operands must be square and equal-sized, got {:?} and {:?}",
            a.shape(),
            q.shape()
        )));
    }
    Ok(())
}

/// Dense solve of `(I (x) A + A (x) I) vec(X) = -vec(Q)`.
pub fn solve_lyapunov_kronecker(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(a, q)?;
    let n = a.nrows();
    let dim = n * n;
    // Column-major vec: entry (i, j) sits at i + j n.
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for p in 0..n {
                k[(row, p + j * n)] += a[(i, p)];
                k[(row, i + p * n)] += a[(j, p)];
            }
        }
    }
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numeric("Kronecker Lyapunov system is singular"))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(x))
}

/// Bartels-Stewart: with `A = U T U'` (real Schur), solve the quasi-triangular
/// equation `T Y + Y T' = -U' Q U` block by block, then `X = U Y U'`.
pub fn solve_lyapunov_schur(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(a, q)?;
    let (u, t) = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numeric("Schur decomposition did not converge"))?
        .unpack();
    let f = -(u.transpose() * q * &u);
    let y = solve_quasi_triangular(&t, &f)?;
    Ok(symmetrize(&u * y * u.transpose()))
}

/// Diagonal blocks (start, size) of a quasi-upper-triangular matrix.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let tol = f64::EPSILON * t.norm();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > tol {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves `T Y + Y T' = F` for quasi-upper-triangular `T`.
fn solve_quasi_triangular(t: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let blocks = schur_blocks(t);
    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(ks, kp) in blocks.iter().rev() {
        for &(ls, lq) in blocks.iter().rev() {
            let mut r = f.view((ks, ls), (kp, lq)).clone_owned();
            let after_k = ks + kp;
            if after_k < n {
                r -= t.view((ks, after_k), (kp, n - after_k)) * y.view((after_k, ls), (n - after_k, lq));
            }
            let after_l = ls + lq;
            if after_l < n {
                r -= y.view((ks, after_l), (kp, n - after_l))
                    * t.view((ls, after_l), (lq, n - after_l)).transpose();
            }
            let tkk = t.view((ks, ks), (kp, kp));
            let tll = t.view((ls, ls), (lq, lq));
            let dim = kp * lq;
            let mut small = DMatrix::<f64>::zeros(dim, dim);
            for j in 0..lq {
                for i in 0..kp {
                    let row = i + j * kp;
                    for p in 0..kp {
                        small[(row, p + j * kp)] += tkk[(i, p)];
                    }
                    for p in 0..lq {
                        small[(row, i + p * kp)] += tll[(j, p)];
                    }
                }
            }
            let rhs = nalgebra::DVector::from_column_slice(r.as_slice());
            let sol = small
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::numeric("singular block in Bartels-Stewart sweep"))?;
            y.view_mut((ks, ls), (kp, lq))
                .copy_from(&DMatrix::from_column_slice(kp, lq, sol.as_slice()));
        }
    }
    Ok(y)
}

fn symmetrize(x: DMatrix<f64>) -> DMatrix<f64> {
    (&x + x.transpose()) * 0.5
}

/// `||A X + X A' + Q||_F`.
pub fn lyapunov_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a * x + x * a.transpose() + q).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable(n: usize, rng: &mut ChaCha8Rng, symmetric: bool) -> DMatrix<f64> {
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        if symmetric {
            a = &a + a.transpose();
        }
        let shift = spectral_abscissa(&a).unwrap() + rng.random_range(0.2..1.0);
        a - DMatrix::identity(n, n) * shift
    }

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose()
    }

    #[test]
    fn scalar_and_diagonal_cases() {
        let s = solve_lyapunov(&DMatrix::from_element(1, 1, -1.0), &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-15);

        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-0.5, -3.0]));
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 7.0]));
        for s in [solve_lyapunov_kronecker(&a, &q).unwrap(), solve_lyapunov_schur(&a, &q).unwrap()] {
            assert!((s[(0, 0)] - 2.0).abs() < 1e-14);
            assert!((s[(1, 1)] - 7.0 / 6.0).abs() < 1e-14);
            assert!(s[(0, 1)].abs() < 1e-15);
        }
    }

    #[test]
    fn unstable_matrix_is_refused() {
        let a = DMatrix::from_element(1, 1, 0.395);
        let q = DMatrix::from_element(1, 1, 1.0);
        match solve_lyapunov(&a, &q) {
            Err(Error::Unstable { abscissa }) => assert!((abscissa - 0.395).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!(solve_lyapunov(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2)).is_err());
        assert!(solve_lyapunov(&DMatrix::zeros(2, 2), &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn abscissa_of_rotation_generator() {
        // Eigenvalues -0.1 +- 2i.
        let a = DMatrix::from_row_slice(2, 2, &[-0.1, 2.0, -2.0, -0.1]);
        assert!((spectral_abscissa(&a).unwrap() + 0.1).abs() < 1e-12);
    }

    #[test]
    fn kronecker_and_schur_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [1, 2, 3, 5, 8, 13, 20, 32] {
            for symmetric in [false, true] {
                let a = random_stable(n, &mut rng, symmetric);
                let q = random_psd(n, &mut rng);
                let k = solve_lyapunov_kronecker(&a, &q).unwrap();
                let s = solve_lyapunov_schur(&a, &q).unwrap();
                let scale = k.norm().max(1.0);
                assert!((&k - &s).norm() <= 1e-9 * scale, "n = {n}: {}", (&k - &s).norm());
                for x in [&k, &s] {
                    assert!(lyapunov_residual(&a, x, &q) <= 1e-9 * q.norm());
                }
            }
        }
    }

    #[test]
    fn large_systems_use_schur_with_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 90;
        let a = random_stable(n, &mut rng, false);
        let q = random_psd(n, &mut rng);
        let x = solve_lyapunov(&a, &q).unwrap();
        assert!(lyapunov_residual(&a, &x, &q) <= 1e-9 * q.norm());
        let min_eig = SymmetricEigen::new(x.clone()).eigenvalues.min();
        assert!(min_eig >= -1e-9 * x.norm());
    }
}
