//! Test-only oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `int_0^inf e^{A v} Q e^{A' v} dv` by composite Gauss-Legendre on panels of
/// width `panel`, stopping once the propagator has decayed below `1e-20`
/// relative to the accumulated integral.
pub fn lyapunov_by_quadrature(a: &DMatrix<f64>, q: &DMatrix<f64>, panel: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let (nodes, weights) = gauss_legendre(20);
    let half = 0.5 * panel;
    let inner: Vec<DMatrix<f64>> = nodes.iter().map(|x| (a * (half * (x + 1.0))).exp()).collect();
    let step = (a * panel).exp();
    let mut start = DMatrix::<f64>::identity(n, n);
    let mut total = DMatrix::<f64>::zeros(n, n);
    for _ in 0..200_000 {
        for (e, w) in inner.iter().zip(&weights) {
            let p = &start * e;
            total += &p * q * p.transpose() * (w * half);
        }
        start = &start * &step;
        let tail = start.norm().powi(2) * q.norm();
        if tail < 1e-20 * total.norm().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    total
}

/// Random matrix with spectral abscissa in `[-hi, -lo]`.
pub fn random_hurwitz<R: Rng>(n: usize, rng: &mut R, lo: f64, hi: f64) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale);
    let abscissa = a
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let target = rng.random_range(lo..hi);
    a - DMatrix::identity(n, n) * (abscissa + target)
}

/// Random symmetric positive semidefinite matrix.
pub fn random_psd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose()
}

pub fn relative_gap(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (x - reference).norm() / reference.norm()
}
