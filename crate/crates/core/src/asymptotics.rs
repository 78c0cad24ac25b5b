//! Asymptotic covariance of the scaled estimation error.
//!
//! With `delta = 1`, `sqrt(t+1) (x^t - 1 (x) theta*)` is asymptotically normal
//! with covariance `S = a^2 int_0^inf e^{Sigma v} S0 e^{Sigma' v} dv`, the
//! solution of `Sigma S + S Sigma' + a^2 S0 = 0`, where
//!
//! ```text
//! Sigma = I/2 - b phi_c'(0) (L (x) I_M) - a phi_o'(0) H'H
//! S0    = (b/a)^2 sigma_c^2 Diag(d_i I_M) - (b/a)(K H + H' K') + sigma_o^2 H'H
//! ```
//!
//! For regular graphs with scalar parameter, sign nonlinearities and a common
//! `h`, `Tr(S)/N` has a closed form in the Laplacian spectrum; the topology
//! sweep evaluates it along the k-hop ring family.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{Graph, KhopSpectra};
use crate::lyapunov::{lyapunov_residual, solve_lyapunov, spectral_abscissa};
use crate::noise::NoiseModel;
use crate::nonlinearity::Nonlinearity;
use crate::quad;

/// Block-diagonal `N x NM` observation matrix with `h_i'` in block `i`.
pub fn build_h(obs_vectors: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = obs_vectors.len();
    let m = obs_vectors.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::param("observation vectors must be non-empty"));
    }
    let mut h = DMatrix::zeros(n, n * m);
    for (i, hi) in obs_vectors.iter().enumerate() {
        if hi.len() != m {
            return Err(Error::param(format!(
                "h for agent {} has dimension {}, expected {m}",
                i + 1,
                hi.len()
            )));
        }
        if hi.iter().all(|&v| v == 0.0) {
            return Err(Error::param(format!("h for agent {} is the zero vector", i + 1)));
        }
        for (l, &v) in hi.iter().enumerate() {
            h[(i, i * m + l)] = v;
        }
    }
    Ok(h)
}

pub fn build_sigma(
    a: f64,
    b: f64,
    phi_c_prime0: f64,
    phi_o_prime0: f64,
    laplacian: &DMatrix<f64>,
    h: &DMatrix<f64>,
    m: usize,
) -> DMatrix<f64> {
    let nm = laplacian.nrows() * m;
    let l_kron = laplacian.kronecker(&DMatrix::<f64>::identity(m, m));
    DMatrix::<f64>::identity(nm, nm) * 0.5
        - l_kron * (b * phi_c_prime0)
        - h.transpose() * h * (a * phi_o_prime0)
}

/// Spectral abscissa of `Sigma`; negative means stable.
pub fn check_stability(sigma: &DMatrix<f64>) -> Result<f64> {
    spectral_abscissa(sigma)
}

/// `S0`, with the cross-covariance term only when `kco` (shape `NM x N`) is given.
pub fn build_s0(
    a: f64,
    b: f64,
    sigma_c_sq: f64,
    sigma_o_sq: f64,
    degrees: &[usize],
    h: &DMatrix<f64>,
    kco: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let n = degrees.len();
    if h.nrows() != n || !h.ncols().is_multiple_of(n) {
        return Err(Error::param(format!(
            "H is {}x{} but the graph has {n} agents",
            h.nrows(),
            h.ncols()
        )));
    }
    let m = h.ncols() / n;
    let ratio = b / a;
    let mut s0 = h.transpose() * h * sigma_o_sq;
    for (i, &d) in degrees.iter().enumerate() {
        for l in 0..m {
            s0[(i * m + l, i * m + l)] += ratio * ratio * sigma_c_sq * d as f64;
        }
    }
    if let Some(k) = kco {
        if k.shape() != (n * m, n) {
            return Err(Error::param(format!(
                "cross-covariance must be {}x{n}, got {:?}",
                n * m,
                k.shape()
            )));
        }
        let kh = k * h;
        s0 -= (&kh + kh.transpose()) * ratio;
    }
    Ok(s0)
}

/// Everything needed to evaluate the asymptotic covariance of one setup.
#[derive(Debug, Clone)]
pub struct AsymptoticInputs<'a> {
    pub a: f64,
    pub b: f64,
    pub psi_c: &'a Nonlinearity,
    pub psi_o: &'a Nonlinearity,
    pub noise_c: &'a NoiseModel,
    pub noise_o: &'a NoiseModel,
    pub graph: &'a Graph,
    pub obs_vectors: &'a [Vec<f64>],
    /// Effective cross-covariance; `None` means independent noises (zero).
    pub kco: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct AsymptoticModel {
    pub sigma: DMatrix<f64>,
    pub s0: DMatrix<f64>,
    pub kco: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub sigma_o_sq: f64,
    pub sigma_c_sq: f64,
    pub phi_c_prime0: f64,
    pub phi_o_prime0: f64,
    pub spectral_abscissa: f64,
    /// `Tr(S) / N`, the per-agent asymptotic variance.
    pub trace_s_over_n: f64,
    /// `||Sigma S + S Sigma' + a^2 S0||_F / ||a^2 S0||_F`.
    pub relative_residual: f64,
    pub warnings: Vec<String>,
}

pub fn asymptotic_covariance(inputs: &AsymptoticInputs<'_>) -> Result<AsymptoticModel> {
    let AsymptoticInputs { a, b, .. } = *inputs;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::param(format!("gains must be positive, got a = {a}, b = {b}")));
    }
    let n = inputs.graph.agent_count();
    if inputs.obs_vectors.len() != n {
        return Err(Error::param(format!(
            "{} observation vectors for {n} agents",
            inputs.obs_vectors.len()
        )));
    }
    let h = build_h(inputs.obs_vectors)?;
    let m = h.ncols() / n;

    let sigma_o_sq = inputs.psi_o.effective_variance(inputs.noise_o)?;
    let sigma_c_sq = inputs.psi_c.effective_variance(inputs.noise_c)?;
    let phi_o_prime0 = inputs.psi_o.phi_prime_zero(inputs.noise_o)?;
    let phi_c_prime0 = inputs.psi_c.phi_prime_zero(inputs.noise_c)?;

    let sigma = build_sigma(a, b, phi_c_prime0, phi_o_prime0, &inputs.graph.laplacian(), &h, m);
    let abscissa = check_stability(&sigma)?;
    if abscissa >= 0.0 {
        return Err(Error::Unstable { abscissa });
    }

    let mut warnings = Vec::new();
    let kco = inputs.kco.clone().unwrap_or_else(|| DMatrix::zeros(n * m, n));
    let s0 = build_s0(
        a,
        b,
        sigma_c_sq,
        sigma_o_sq,
        &inputs.graph.degrees(),
        &h,
        inputs.kco.as_ref(),
    )?;
    if inputs.kco.is_some() {
        let min_eig = SymmetricEigen::new(s0.clone()).eigenvalues.min();
        if min_eig < -1e-12 * s0.norm().max(1.0) {
            warnings.push(format!(
                "S0 is not positive semidefinite (minimum eigenvalue {min_eig:.3e}); \
                 the supplied cross-covariance may be inconsistent"
            ));
        }
    }

    let q = &s0 * (a * a);
    let s = solve_lyapunov(&sigma, &q)?;
    let q_norm = q.norm();
    let relative_residual = if q_norm > 0.0 {
        lyapunov_residual(&sigma, &s, &q) / q_norm
    } else {
        0.0
    };
    let trace_s_over_n = s.trace() / n as f64;

    Ok(AsymptoticModel {
        sigma,
        s0,
        kco,
        s,
        sigma_o_sq,
        sigma_c_sq,
        phi_c_prime0,
        phi_o_prime0,
        spectral_abscissa: abscissa,
        trace_s_over_n,
        relative_residual,
        warnings,
    })
}

/// Scalars of the closed-form per-node variance on a regular graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularVarianceParams {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    /// Observation noise density at zero.
    pub f_o0: f64,
    /// Communication noise density at zero.
    pub f_c0: f64,
    pub sigma_o_sq: f64,
    pub sigma_c_sq: f64,
}

impl RegularVarianceParams {
    /// Sign nonlinearities on both channels with heavy-tail noise of exponent `beta`.
    pub fn sign_heavy_tail(beta: f64, a: f64, b: f64, h: f64) -> Self {
        let f0 = (beta - 1.0) / 2.0;
        Self {
            a,
            b,
            h,
            f_o0: f0,
            f_c0: f0,
            sigma_o_sq: 1.0,
            sigma_c_sq: 1.0,
        }
    }

    /// Spectral abscissa of the matching `Sigma`, attained at the zero
    /// Laplacian eigenvalue.
    pub fn abscissa(&self) -> f64 {
        0.5 - 2.0 * self.a * self.h * self.h * self.f_o0
    }
}

/// `sigma_d^2 = Tr(S)/N` for a degree-`d` regular graph with Laplacian
/// spectrum `eigenvalues` (ascending, first one zero):
///
/// ```text
/// c = (a^2 h^2 sigma_o^2 + b^2 d sigma_c^2) / N
/// sigma_d^2 = c / g + c * sum_{i>=2} 1 / (4 b lambda_i f_c(0) + g),   g = 4 a h^2 f_o(0) - 1
/// ```
pub fn per_node_variance_regular(
    d: usize,
    eigenvalues: &[f64],
    p: &RegularVarianceParams,
) -> Result<f64> {
    let n = eigenvalues.len();
    if n == 0 {
        return Err(Error::param("empty spectrum"));
    }
    let g = 4.0 * p.a * p.h * p.h * p.f_o0 - 1.0;
    if g <= 0.0 {
        return Err(Error::Unstable { abscissa: p.abscissa() });
    }
    let c = (p.a * p.a * p.h * p.h * p.sigma_o_sq + p.b * p.b * d as f64 * p.sigma_c_sq) / n as f64;
    let mut total = c / g;
    for &lambda in &eigenvalues[1..] {
        let denom = 4.0 * p.b * lambda * p.f_c0 + g;
        if denom <= 0.0 {
            return Err(Error::Unstable { abscissa: 0.5 - denom / 2.0 });
        }
        total += c / denom;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub d: usize,
    /// NaN when the row is unstable.
    pub sigma_d_sq: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub n: usize,
    /// Ascending in `d`.
    pub rows: Vec<SweepRow>,
    /// Degree minimizing `sigma_d^2` over stable rows.
    pub argmin_degree: Option<usize>,
}

impl Sweep {
    pub fn stable_values(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.stable).map(|r| r.sigma_d_sq).collect()
    }
}

/// Sweeps the k-hop ring family on `n` agents (odd) with sign nonlinearities
/// and heavy-tail noise of exponent `beta` on both channels.
pub fn topology_sweep(n: usize, beta: f64, a: f64, b: f64, h: f64) -> Result<Sweep> {
    NoiseModel::heavy_tail(beta)?;
    topology_sweep_with(n, &RegularVarianceParams::sign_heavy_tail(beta, a, b, h))
}

pub fn topology_sweep_with(n: usize, params: &RegularVarianceParams) -> Result<Sweep> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::param(format!(
            "topology sweep needs an odd agent count >= 3 so the family ends at the complete graph, got {n}"
        )));
    }
    let rows: Vec<SweepRow> = KhopSpectra::new(n)
        .map(|(k, spectrum)| {
            let d = 2 * k;
            match per_node_variance_regular(d, &spectrum, params) {
                Ok(v) => SweepRow { d, sigma_d_sq: v, stable: true },
                Err(_) => SweepRow { d, sigma_d_sq: f64::NAN, stable: false },
            }
        })
        .collect();
    let argmin_degree = rows
        .iter()
        .filter(|r| r.stable)
        .min_by(|x, y| x.sigma_d_sq.total_cmp(&y.sigma_d_sq))
        .map(|r| r.d);
    Ok(Sweep { n, rows, argmin_degree })
}

/// Strictly decreasing then strictly increasing (either part may be empty).
pub fn is_unimodal(values: &[f64]) -> bool {
    let mut i = 1;
    while i < values.len() && values[i] < values[i - 1] {
        i += 1;
    }
    while i < values.len() && values[i] > values[i - 1] {
        i += 1;
    }
    i >= values.len()
}

/// Joint law of an observation noise and one entry of a communication noise.
pub trait JointNoiseDensity: Sync {
    /// Density of (`[xi_ij]_l`, `n_k`) at (`w_comm`, `w_obs`), where `arc =
    /// (i, j)` carries agent `j`'s estimate to agent `i`.
    fn density(&self, k: usize, arc: (usize, usize), l: usize, w_comm: f64, w_obs: f64) -> f64;

    /// Pairs declared independent contribute zero without integration.
    fn independent(&self, k: usize, arc: (usize, usize), l: usize) -> bool;

    /// Half-width of the square outside which the density is negligible.
    fn support(&self) -> f64;
}

/// Effective cross-covariance `K` (`NM x N`): row `s = M i + l`, column `k`
/// holds `sum_{j in N(i)} E[psi_c([xi_ij]_l) psi_o(n_k)]`, by nested
/// quadrature over the declared support.
pub fn cross_covariance(
    psi_c: &Nonlinearity,
    psi_o: &Nonlinearity,
    graph: &Graph,
    m: usize,
    joint: &dyn JointNoiseDensity,
) -> Result<DMatrix<f64>> {
    if psi_c.bound().is_none() || psi_o.bound().is_none() {
        return Err(Error::param("cross-covariance requires bounded nonlinearities"));
    }
    let n = graph.agent_count();
    let half = joint.support();
    let mirrored = |nl: &Nonlinearity| -> Vec<f64> {
        nl.breakpoints().into_iter().flat_map(|b| [b, -b]).collect()
    };
    let cuts_c = mirrored(psi_c);
    let cuts_o = mirrored(psi_o);
    let mut k_mat = DMatrix::zeros(n * m, n);
    for i in 0..n {
        for l in 0..m {
            for k in 0..n {
                let mut entry = 0.0;
                for &j in graph.neighbors(i) {
                    if joint.independent(k, (i, j), l) {
                        continue;
                    }
                    entry += quad::integrate_split(
                        |wc| {
                            let inner = quad::integrate_split(
                                |wo| psi_o.apply(wo) * joint.density(k, (i, j), l, wc, wo),
                                -half,
                                half,
                                &cuts_o,
                            );
                            psi_c.apply(wc) * inner
                        },
                        -half,
                        half,
                        &cuts_c,
                    );
                }
                k_mat[(i * m + l, k)] = entry;
            }
        }
    }
    Ok(k_mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::circulant_ring_spectrum;

    fn eq3() -> NoiseModel {
        NoiseModel::heavy_tail(2.05).unwrap()
    }

    #[test]
    fn observation_matrix_shapes() {
        let h = build_h(&vec![vec![2.0]; 3]).unwrap();
        assert_eq!(h.transpose() * &h, DMatrix::identity(3, 3) * 4.0);
        let h = build_h(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(h.transpose() * &h, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let obs = vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]];
        let h = build_h(&obs).unwrap();
        let hth = h.transpose() * &h;
        let norms: f64 = obs.iter().flatten().map(|v| v * v).sum();
        assert!((hth.trace() - norms).abs() < 1e-14);
        // Off-diagonal blocks vanish.
        assert_eq!(hth[(0, 2)], 0.0);
        assert_eq!(hth[(1, 0)], 2.0);
        assert!(build_h(&[vec![0.0, 0.0]]).is_err());
        assert!(build_h(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn sigma_scalar_and_decoupled() {
        let l = DMatrix::zeros(1, 1);
        let h = build_h(&[vec![1.0]]).unwrap();
        let s = build_sigma(1.0, 1.0, 1.05, 1.05, &l, &h, 1);
        assert!((s[(0, 0)] + 0.55).abs() < 1e-15);
        assert!((check_stability(&s).unwrap() + 0.55).abs() < 1e-15);

        let g = Graph::ring(4).unwrap();
        let h = build_h(&vec![vec![1.0, 0.5]; 4]).unwrap();
        let s = build_sigma(1.0, 0.0, 1.0, 1.0, &g.laplacian(), &h, 2);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(s.view((2 * i, 2 * j), (2, 2)).iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn sigma_eigenvalues_follow_laplacian_spectrum() {
        let (n, a, b, h, f) = (9, 1.3, 0.7, 1.1, 0.525);
        let g = Graph::ring_khop(n, 2).unwrap();
        let hm = build_h(&vec![vec![h]; n]).unwrap();
        let sigma = build_sigma(a, b, 2.0 * f, 2.0 * f, &g.laplacian(), &hm, 1);
        let mut numeric: Vec<f64> = SymmetricEigen::new(sigma).eigenvalues.iter().copied().collect();
        numeric.sort_by(|x, y| y.total_cmp(x));
        let formula: Vec<f64> = circulant_ring_spectrum(n, 2)
            .iter()
            .map(|lam| 0.5 - 2.0 * b * f * lam - 2.0 * a * f * h * h)
            .collect();
        for (x, y) in numeric.iter().zip(&formula) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn stability_examples_from_the_sweep_setup() {
        let p = RegularVarianceParams::sign_heavy_tail(2.05, 1.0, 1.0, 1.0);
        assert!((p.abscissa() + 0.55).abs() < 1e-15);
        let weak = RegularVarianceParams { a: 0.1, ..p };
        assert!((weak.abscissa() - 0.395).abs() < 1e-15);
        let g = Graph::ring(5).unwrap();
        let spec = g.laplacian_spectrum().unwrap();
        assert!(matches!(
            per_node_variance_regular(2, &spec, &weak),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn s0_closed_forms() {
        let n = 5;
        let g = Graph::ring_khop(n, 2).unwrap();
        let h = build_h(&vec![vec![1.5]; n]).unwrap();
        let (a, b, sc, so) = (2.0, 0.5, 0.8, 0.6);
        let s0 = build_s0(a, b, sc, so, &g.degrees(), &h, None).unwrap();
        let expect = (b * b / (a * a)) * sc * 4.0 + so * 2.25;
        assert!((&s0 - DMatrix::identity(n, n) * expect).norm() < 1e-14);
        let s0 = build_s0(a, 0.0, sc, so, &g.degrees(), &h, None).unwrap();
        assert!((&s0 - h.transpose() * &h * so).norm() < 1e-14);
        assert_eq!(build_s0(a, b, 0.0, 0.0, &g.degrees(), &h, None).unwrap(), DMatrix::zeros(n, n));
    }

    fn sign_inputs<'a>(
        graph: &'a Graph,
        obs: &'a [Vec<f64>],
        noise: &'a NoiseModel,
        sign: &'a Nonlinearity,
    ) -> AsymptoticInputs<'a> {
        AsymptoticInputs {
            a: 1.0,
            b: 1.0,
            psi_c: sign,
            psi_o: sign,
            noise_c: noise,
            noise_o: noise,
            graph,
            obs_vectors: obs,
            kco: None,
        }
    }

    #[test]
    fn single_agent_covariance() {
        let g = Graph::new(1, []).unwrap();
        let obs = vec![vec![1.0]];
        let noise = eq3();
        let model = asymptotic_covariance(&sign_inputs(&g, &obs, &noise, &Nonlinearity::Sign)).unwrap();
        assert!((model.sigma[(0, 0)] + 0.55).abs() < 1e-15);
        assert!((model.s0[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((model.trace_s_over_n - 1.0 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn ring3_closed_form_hand_value() {
        let p = RegularVarianceParams::sign_heavy_tail(2.05, 1.0, 1.0, 1.0);
        let v = per_node_variance_regular(2, &[0.0, 3.0, 3.0], &p).unwrap();
        let first = 3.0 / (3.0 * 1.1);
        let second = 2.0 / 7.4;
        assert!((v - (first + second)).abs() < 1e-14);
        assert!((v - 1.17936).abs() < 1e-5);

        let g = Graph::ring(3).unwrap();
        let obs = vec![vec![1.0]; 3];
        let noise = eq3();
        let model = asymptotic_covariance(&sign_inputs(&g, &obs, &noise, &Nonlinearity::Sign)).unwrap();
        assert!((model.trace_s_over_n - v).abs() <= 1e-10 * v);
    }

    #[test]
    fn uncoupled_agents_match_scalar_recursion() {
        // b -> 0 decouples; every agent is the scalar problem with S = a^2 h^2 so / (4 a h^2 f - 1).
        let n = 7;
        let p = RegularVarianceParams { b: 0.0, ..RegularVarianceParams::sign_heavy_tail(2.05, 1.0, 1.0, 1.0) };
        let v = per_node_variance_regular(2, &circulant_ring_spectrum(n, 1), &p).unwrap();
        let scalar = 1.0 / (4.0 * 0.525 - 1.0);
        assert!((v - scalar).abs() < 1e-14);
    }

    #[test]
    fn complete_graph_has_identical_summands() {
        let n = 9;
        let p = RegularVarianceParams::sign_heavy_tail(2.05, 1.0, 1.0, 1.0);
        let spec = circulant_ring_spectrum(n, 4);
        assert!(spec[1..].iter().all(|&l| (l - n as f64).abs() < 1e-12));
        let v = per_node_variance_regular(n - 1, &spec, &p).unwrap();
        let c = (1.0 + (n - 1) as f64) / n as f64;
        let expect = c / 1.1 + (n - 1) as f64 * c / (4.0 * n as f64 * 0.525 + 1.1);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn doubling_noise_doubles_variance() {
        let spec = circulant_ring_spectrum(11, 3);
        let p = RegularVarianceParams { sigma_o_sq: 0.7, sigma_c_sq: 0.4, ..RegularVarianceParams::sign_heavy_tail(2.5, 1.2, 0.9, 0.8) };
        let doubled = RegularVarianceParams { sigma_o_sq: 1.4, sigma_c_sq: 0.8, ..p };
        let v = per_node_variance_regular(6, &spec, &p).unwrap();
        assert_eq!(per_node_variance_regular(6, &spec, &doubled).unwrap(), 2.0 * v);
    }

    #[test]
    fn stability_equivalence_on_a_grid_of_gains() {
        let n = 7;
        let g = Graph::ring(n).unwrap();
        let spec = g.laplacian_spectrum().unwrap();
        let hm = build_h(&vec![vec![1.0]; n]).unwrap();
        for i in 1..=40 {
            let a = i as f64 * 0.05;
            let p = RegularVarianceParams::sign_heavy_tail(2.05, a, 1.0, 1.0);
            let sigma = build_sigma(a, 1.0, 1.05, 1.05, &g.laplacian(), &hm, 1);
            let stable = check_stability(&sigma).unwrap() < 0.0;
            assert_eq!(per_node_variance_regular(2, &spec, &p).is_ok(), stable, "a = {a}");
        }
    }

    #[test]
    fn instability_is_reported_with_abscissa() {
        let g = Graph::ring(5).unwrap();
        let obs = vec![vec![1.0]; 5];
        let noise = eq3();
        let sign = Nonlinearity::Sign;
        let mut inputs = sign_inputs(&g, &obs, &noise, &sign);
        inputs.a = 0.1;
        match asymptotic_covariance(&inputs) {
            Err(Error::Unstable { abscissa }) => assert!((abscissa - 0.395).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identity_under_heavy_tails_has_no_covariance() {
        let g = Graph::ring(5).unwrap();
        let obs = vec![vec![1.0]; 5];
        let noise = eq3();
        let id = Nonlinearity::Identity;
        assert!(matches!(
            asymptotic_covariance(&sign_inputs(&g, &obs, &noise, &id)),
            Err(Error::DivergentVariance(_))
        ));
    }

    #[test]
    fn covariance_is_psd_with_small_residual_for_vector_parameter() {
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 3)]).unwrap();
        let obs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, -0.3], vec![2.0, 0.1]];
        let noise_o = NoiseModel::gaussian(0.8).unwrap();
        let noise_c = eq3();
        let clip = Nonlinearity::clip(0.7).unwrap();
        let inputs = AsymptoticInputs {
            a: 8.0,
            b: 6.0,
            psi_c: &clip,
            psi_o: &Nonlinearity::Sign,
            noise_c: &noise_c,
            noise_o: &noise_o,
            graph: &g,
            obs_vectors: &obs,
            kco: None,
        };
        let model = asymptotic_covariance(&inputs).unwrap();
        assert!(model.relative_residual <= 1e-9);
        assert_eq!(model.s, model.s.transpose());
        let min_eig = SymmetricEigen::new(model.s.clone()).eigenvalues.min();
        assert!(min_eig >= -1e-9 * model.s.norm());
        assert!(model.spectral_abscissa < 0.0);
    }

    #[test]
    fn unimodality_checker() {
        assert!(is_unimodal(&[3.0, 2.0, 1.0, 2.0, 5.0]));
        assert!(is_unimodal(&[1.0, 2.0]));
        assert!(is_unimodal(&[2.0, 1.0]));
        assert!(!is_unimodal(&[1.0, 2.0, 1.0]));
        assert!(!is_unimodal(&[3.0, 2.0, 2.0, 4.0]));
    }

    #[test]
    fn small_sweep() {
        let sweep = topology_sweep(11, 2.05, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(sweep.rows.iter().map(|r| r.d).collect::<Vec<_>>(), vec![2, 4, 6, 8, 10]);
        assert!(sweep.rows.iter().all(|r| r.stable && r.sigma_d_sq > 0.0));
        assert!(topology_sweep(10, 2.05, 1.0, 1.0, 1.0).is_err());
        assert!(topology_sweep(11, 1.5, 1.0, 1.0, 1.0).is_err());
        let unstable = topology_sweep(11, 2.05, 0.1, 1.0, 1.0).unwrap();
        assert!(unstable.rows.iter().all(|r| !r.stable));
        assert_eq!(unstable.argmin_degree, None);
    }

    struct CorrelatedPair {
        rho: f64,
        target: (usize, (usize, usize), usize),
    }

    impl JointNoiseDensity for CorrelatedPair {
        fn density(&self, _k: usize, _arc: (usize, usize), _l: usize, x: f64, y: f64) -> f64 {
            let r = self.rho;
            let det = 1.0 - r * r;
            (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * det)).exp()
                / (2.0 * std::f64::consts::PI * det.sqrt())
        }

        fn independent(&self, k: usize, arc: (usize, usize), l: usize) -> bool {
            (k, arc, l) != self.target
        }

        fn support(&self) -> f64 {
            10.0
        }
    }

    #[test]
    fn cross_covariance_of_correlated_gaussians() {
        // E[sign X sign Y] = (2 / pi) asin(rho) for a standard bivariate normal.
        let g = Graph::ring(3).unwrap();
        let rho = 0.6;
        let joint = CorrelatedPair { rho, target: (2, (0, 1), 0) };
        let k = cross_covariance(&Nonlinearity::Sign, &Nonlinearity::Sign, &g, 1, &joint).unwrap();
        let expect = 2.0 / std::f64::consts::PI * rho.asin();
        assert!((k[(0, 2)] - expect).abs() < 1e-8, "{} vs {expect}", k[(0, 2)]);
        let mut others = k.clone();
        others[(0, 2)] = 0.0;
        assert_eq!(others, DMatrix::zeros(3, 3));

        // Independent product density factorizes to zero.
        let indep = CorrelatedPair { rho: 0.0, target: (0, (1, 2), 0) };
        let k0 = cross_covariance(&Nonlinearity::Sign, &Nonlinearity::clip(0.5).unwrap(), &g, 1, &indep).unwrap();
        assert!(k0.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cross_covariance_feeds_s0_with_warning_check() {
        let g = Graph::ring(3).unwrap();
        let obs = vec![vec![1.0]; 3];
        let noise = NoiseModel::gaussian(1.0).unwrap();
        let sign = Nonlinearity::Sign;
        let joint = CorrelatedPair { rho: 0.9, target: (0, (0, 1), 0) };
        let kco = cross_covariance(&sign, &sign, &g, 1, &joint).unwrap();
        let mut inputs = sign_inputs(&g, &obs, &noise, &sign);
        inputs.a = 2.0;
        let base = asymptotic_covariance(&inputs).unwrap();
        inputs.kco = Some(kco.clone());
        let model = asymptotic_covariance(&inputs).unwrap();
        let h = build_h(&obs).unwrap();
        let kh = &kco * &h;
        let expect = &base.s0 - (&kh + kh.transpose()) * (1.0 / 2.0);
        assert!((&model.s0 - expect).norm() < 1e-14);
        assert!(model.relative_residual < 1e-9);
    }
}
