//! C ABI over the `ciest` toolkit.
//!
//! Objects are exposed as opaque handles created by `ciest_*_new*` functions
//! and released with the matching `ciest_*_free`. Every fallible call returns a
//! [`CiestStatus`]; on failure a description is kept per thread and can be
//! copied out with [`ciest_last_error`]. Matrices cross the boundary as dense
//! row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ciest::asymptotics::{asymptotic_covariance, topology_sweep, AsymptoticInputs, Sweep};
use ciest::{lyapunov, Error, Graph, NoiseModel, Nonlinearity};
use nalgebra::DMatrix;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiestStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument is outside its admissible range or violates a model assumption.
    InvalidParameter = 2,
    /// The linearized dynamics are not Hurwitz.
    Unstable = 3,
    /// A numerical routine failed.
    Numeric = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Undirected communication graph.
pub struct CiestGraph(Graph);

/// Scalar noise density.
pub struct CiestNoise(NoiseModel);

/// Odd, bounded, nondecreasing map applied to innovations and consensus terms.
pub struct CiestNonlinearity(Nonlinearity);

/// Per-node asymptotic variance across the k-hop ring family.
pub struct CiestSweep(Sweep);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

fn status_of(err: &Error) -> CiestStatus {
    match err {
        Error::Unstable { .. } => CiestStatus::Unstable,
        Error::Numeric(_) => CiestStatus::Numeric,
        _ => CiestStatus::InvalidParameter,
    }
}

/// Runs `body`, records any error or panic, and converts it to a status.
fn guard(body: impl FnOnce() -> Result<(), CiestStatus>) -> CiestStatus {
    set_last_error(String::new());
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CiestStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {text}"));
            CiestStatus::Panic
        }
    }
}

fn fail(err: Error) -> CiestStatus {
    let status = status_of(&err);
    set_last_error(err.to_string());
    status
}

fn null(name: &str) -> CiestStatus {
    set_last_error(format!("{name} is NULL"));
    CiestStatus::NullPointer
}

fn invalid(message: String) -> CiestStatus {
    set_last_error(message);
    CiestStatus::InvalidParameter
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, CiestStatus> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], CiestStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], CiestStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), CiestStatus> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), CiestStatus> {
    write(out, Box::into_raw(Box::new(value)), "out")
}

fn copy_row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    for (r, row) in out.chunks_mut(m.ncols()).enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
}

/// Version string of the library, static and NUL-terminated.
#[no_mangle]
pub extern "C" fn ciest_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` and returns the
/// buffer size needed for the full message including its terminating NUL.
/// The copy is truncated to `cap` bytes and always NUL-terminated when
/// `cap > 0`. An empty message means the last call succeeded.
///
/// # Safety
/// `buf` must be NULL or point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ciest_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let bytes = slot.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap) - 1;
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            buf.add(n).write(0);
        }
        bytes.len()
    })
}

/// Ring on `n` agents where each agent links to the `k` nearest agents on each side.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_graph_new_ring_khop(n: usize, k: usize, out: *mut *mut CiestGraph) -> CiestStatus {
    guard(|| emit(out, CiestGraph(Graph::ring_khop(n, k).map_err(fail)?)))
}

/// Complete graph on `n` agents.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_graph_new_complete(n: usize, out: *mut *mut CiestGraph) -> CiestStatus {
    guard(|| emit(out, CiestGraph(Graph::complete(n).map_err(fail)?)))
}

/// Graph on `n` agents from `edge_count` zero-based pairs stored flat in `edges`.
///
/// # Safety
/// `edges` must point to `2 * edge_count` readable values (or be NULL when
/// `edge_count` is zero) and `out` must be valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_graph_new_from_edges(
    n: usize,
    edges: *const usize,
    edge_count: usize,
    out: *mut *mut CiestGraph,
) -> CiestStatus {
    guard(|| {
        let flat = slice(edges, 2 * edge_count, "edges")?;
        let pairs = flat.chunks_exact(2).map(|p| (p[0], p[1]));
        emit(out, CiestGraph(Graph::new(n, pairs).map_err(fail)?))
    })
}

/// # Safety
/// `graph` must be NULL or a handle from a `ciest_graph_new_*` call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ciest_graph_free(graph: *mut CiestGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of agents, or 0 for a NULL handle.
///
/// # Safety
/// `graph` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_graph_agent_count(graph: *const CiestGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.agent_count())
}

/// Writes the number of connected components to `components`.
///
/// # Safety
/// `graph` must be a live graph handle and `components` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ciest_graph_components(graph: *const CiestGraph, components: *mut usize) -> CiestStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        write(components, g.0.validate_connected().components, "components")
    })
}

/// Writes the `n x n` Laplacian into `out` in row-major order.
///
/// # Safety
/// `graph` must be a live graph handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ciest_graph_laplacian(graph: *const CiestGraph, out: *mut f64, len: usize) -> CiestStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        let n = g.0.agent_count();
        if len != n * n {
            return Err(invalid(format!("laplacian buffer holds {len} values, need {}", n * n)));
        }
        copy_row_major(&g.0.laplacian(), slice_mut(out, len, "out")?);
        Ok(())
    })
}

/// Heavy-tailed density `(beta - 1) / (2 (1 + |w|)^beta)`, `beta > 2`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_noise_new_heavy_tail(beta: f64, out: *mut *mut CiestNoise) -> CiestStatus {
    guard(|| emit(out, CiestNoise(NoiseModel::heavy_tail(beta).map_err(fail)?)))
}

/// Zero-mean Gaussian with standard deviation `sigma`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_noise_new_gaussian(sigma: f64, out: *mut *mut CiestNoise) -> CiestStatus {
    guard(|| emit(out, CiestNoise(NoiseModel::gaussian(sigma).map_err(fail)?)))
}

/// # Safety
/// `noise` must be NULL or a handle from a `ciest_noise_new_*` call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ciest_noise_free(noise: *mut CiestNoise) {
    if !noise.is_null() {
        drop(Box::from_raw(noise));
    }
}

/// Density at `w`, or NaN for a NULL handle.
///
/// # Safety
/// `noise` must be NULL or a live noise handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_noise_pdf(noise: *const CiestNoise, w: f64) -> f64 {
    noise.as_ref().map_or(f64::NAN, |m| m.0.pdf(w))
}

/// Distribution function at `w`, or NaN for a NULL handle.
///
/// # Safety
/// `noise` must be NULL or a live noise handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_noise_cdf(noise: *const CiestNoise, w: f64) -> f64 {
    noise.as_ref().map_or(f64::NAN, |m| m.0.cdf(w))
}

/// `sign(w)` with `sign(0) = 0`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_nonlinearity_new_sign(out: *mut *mut CiestNonlinearity) -> CiestStatus {
    guard(|| emit(out, CiestNonlinearity(Nonlinearity::Sign)))
}

/// `clamp(w, -tau, tau)`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_nonlinearity_new_clip(tau: f64, out: *mut *mut CiestNonlinearity) -> CiestStatus {
    guard(|| emit(out, CiestNonlinearity(Nonlinearity::clip(tau).map_err(fail)?)))
}

/// Symmetric quantizer with strictly increasing positive `thresholds`.
///
/// # Safety
/// `thresholds` must point to `len` readable doubles and `out` must be valid
/// for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_nonlinearity_new_quantizer(
    thresholds: *const f64,
    len: usize,
    out: *mut *mut CiestNonlinearity,
) -> CiestStatus {
    guard(|| {
        let t = slice(thresholds, len, "thresholds")?.to_vec();
        emit(out, CiestNonlinearity(Nonlinearity::quantizer(t).map_err(fail)?))
    })
}

/// # Safety
/// `nl` must be NULL or a handle from a `ciest_nonlinearity_new_*` call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ciest_nonlinearity_free(nl: *mut CiestNonlinearity) {
    if !nl.is_null() {
        drop(Box::from_raw(nl));
    }
}

/// Value of the map at `w`, or NaN for a NULL handle.
///
/// # Safety
/// `nl` must be NULL or a live nonlinearity handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_nonlinearity_apply(nl: *const CiestNonlinearity, w: f64) -> f64 {
    nl.as_ref().map_or(f64::NAN, |m| m.0.apply(w))
}

/// Slope at zero of the noise-smoothed map and the effective variance
/// `E[psi(W)^2]` under `noise`.
///
/// # Safety
/// `nl` and `noise` must be live handles; `slope` and `variance` must each be
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ciest_nonlinearity_moments(
    nl: *const CiestNonlinearity,
    noise: *const CiestNoise,
    slope: *mut f64,
    variance: *mut f64,
) -> CiestStatus {
    guard(|| {
        let psi = &deref(nl, "nl")?.0;
        let w = &deref(noise, "noise")?.0;
        write(slope, psi.phi_prime_zero(w).map_err(fail)?, "slope")?;
        write(variance, psi.effective_variance(w).map_err(fail)?, "variance")
    })
}

/// Solves `A X + X A' + Q = 0` for an `n x n` Hurwitz `A`. All buffers are
/// row-major with `n * n` entries.
///
/// # Safety
/// `a` and `q` must each point to `n * n` readable doubles and `x` to `n * n`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ciest_lyapunov_solve(n: usize, a: *const f64, q: *const f64, x: *mut f64) -> CiestStatus {
    guard(|| {
        if n == 0 {
            return Err(invalid("matrix dimension must be positive".into()));
        }
        let a = DMatrix::from_row_slice(n, n, slice(a, n * n, "a")?);
        let q = DMatrix::from_row_slice(n, n, slice(q, n * n, "q")?);
        let solution = lyapunov::solve_lyapunov(&a, &q).map_err(fail)?;
        copy_row_major(&solution, slice_mut(x, n * n, "x")?);
        Ok(())
    })
}

/// Asymptotic covariance `S` of the scaled estimation error with independent
/// observation and communication noise.
///
/// `h` holds one observation row of length `m` per agent, row-major
/// (`agent_count * m` entries). `trace_over_n` receives `Tr(S) / N`. When `s`
/// is not NULL it receives the full `(N m) x (N m)` matrix row-major and
/// `s_len` must equal its entry count.
///
/// # Safety
/// All handles must be live. `h` must point to `agent_count * m` readable
/// doubles, `trace_over_n` must be valid for one write and `s` must be NULL or
/// point to `s_len` writable doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ciest_asymptotic_covariance(
    graph: *const CiestGraph,
    psi_c: *const CiestNonlinearity,
    psi_o: *const CiestNonlinearity,
    noise_c: *const CiestNoise,
    noise_o: *const CiestNoise,
    a: f64,
    b: f64,
    h: *const f64,
    m: usize,
    trace_over_n: *mut f64,
    s: *mut f64,
    s_len: usize,
) -> CiestStatus {
    guard(|| {
        let graph = &deref(graph, "graph")?.0;
        let n = graph.agent_count();
        if m == 0 {
            return Err(invalid("parameter dimension m must be positive".into()));
        }
        let obs_vectors: Vec<Vec<f64>> = slice(h, n * m, "h")?.chunks(m).map(<[f64]>::to_vec).collect();
        let inputs = AsymptoticInputs {
            a,
            b,
            psi_c: &deref(psi_c, "psi_c")?.0,
            psi_o: &deref(psi_o, "psi_o")?.0,
            noise_c: &deref(noise_c, "noise_c")?.0,
            noise_o: &deref(noise_o, "noise_o")?.0,
            graph,
            obs_vectors: &obs_vectors,
            kco: None,
        };
        let model = asymptotic_covariance(&inputs).map_err(fail)?;
        write(trace_over_n, model.trace_s_over_n, "trace_over_n")?;
        if !s.is_null() {
            let need = model.s.len();
            if s_len != need {
                return Err(invalid(format!("covariance buffer holds {s_len} values, need {need}")));
            }
            copy_row_major(&model.s, slice_mut(s, s_len, "s")?);
        }
        Ok(())
    })
}

/// Closed-form per-node variance over the k-hop rings on `n` agents (odd),
/// with sign maps and heavy-tailed noise of exponent `beta` on both channels
/// and common scalar observation gain `h`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_sweep_new(
    n: usize,
    beta: f64,
    a: f64,
    b: f64,
    h: f64,
    out: *mut *mut CiestSweep,
) -> CiestStatus {
    guard(|| emit(out, CiestSweep(topology_sweep(n, beta, a, b, h).map_err(fail)?)))
}

/// # Safety
/// `sweep` must be NULL or a handle from [`ciest_sweep_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ciest_sweep_free(sweep: *mut CiestSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Number of rows (degrees `2, 4, ..., n - 1`), or 0 for a NULL handle.
///
/// # Safety
/// `sweep` must be NULL or a live sweep handle.
#[no_mangle]
pub unsafe extern "C" fn ciest_sweep_len(sweep: *const CiestSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.0.rows.len())
}

/// Row `index`: degree, per-node variance (NaN when unstable) and stability flag.
///
/// # Safety
/// `sweep` must be a live sweep handle and each output pointer valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ciest_sweep_row(
    sweep: *const CiestSweep,
    index: usize,
    degree: *mut usize,
    variance: *mut f64,
    stable: *mut bool,
) -> CiestStatus {
    guard(|| {
        let rows = &deref(sweep, "sweep")?.0.rows;
        let row = rows
            .get(index)
            .ok_or_else(|| invalid(format!("row {index} out of range for {} rows", rows.len())))?;
        write(degree, row.d, "degree")?;
        write(variance, row.sigma_d_sq, "variance")?;
        write(stable, row.stable, "stable")
    })
}

/// Degree minimizing the per-node variance over stable rows. Returns
/// `Unstable` when no row is stable.
///
/// # Safety
/// `sweep` must be a live sweep handle and `degree` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ciest_sweep_argmin(sweep: *const CiestSweep, degree: *mut usize) -> CiestStatus {
    guard(|| {
        let s = &deref(sweep, "sweep")?.0;
        match s.argmin_degree {
            Some(d) => write(degree, d, "degree"),
            None => {
                set_last_error(format!("no stable degree among {} rows", s.rows.len()));
                Err(CiestStatus::Unstable)
            }
        }
    })
}
