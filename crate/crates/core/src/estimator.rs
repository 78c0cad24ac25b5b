//! The nonlinear consensus+innovations recursion.
//!
//! Every agent `i` holds `x_i in R^M` and, at step `t`, applies
//!
//! ```text
//! x_i <- x_i - alpha_t * ( (b/a) * sum_{j in N(i)} psi_c(x_i - x_j + xi_ij)
//!                          - h_i * psi_o(z_i - h_i' x_i) )
//! ```
//!
//! with `alpha_t = a / (t + 1)^delta` and `z_i = h_i' theta + n_i`. All agents
//! read the time-`t` state. Each step draws `N` observation noises and then
//! `M` communication noises per arc in [`Graph::arcs`] order from the
//! replicate's own stream, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::noise::NoiseModel;
use crate::nonlinearity::Nonlinearity;

/// Network mean squared error above which a run is declared divergent.
pub const DIVERGENCE_MSE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    /// Every agent starts from the same vector.
    Common(Vec<f64>),
    PerAgent(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub horizon: u64,
    pub replicates: usize,
    pub seed: u64,
    pub theta_star: Vec<f64>,
    /// One observation vector `h_i` per agent.
    pub obs_vectors: Vec<Vec<f64>>,
    pub init: Init,
}

impl EstimatorConfig {
    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    #[inline]
    pub fn step_size(&self, t: u64) -> f64 {
        self.a / ((t + 1) as f64).powf(self.delta)
    }

    /// All problems with this configuration for a network of `agents`.
    pub fn problems(&self, agents: usize) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.a.is_finite() && self.a > 0.0) {
            out.push(format!("gain a = {} must be positive", self.a));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            out.push(format!("gain b = {} must be positive", self.b));
        }
        if !(self.delta > 0.5 && self.delta <= 1.0) {
            out.push(format!(
                "step exponent delta = {} outside (0.5, 1] required for almost-sure convergence",
                self.delta
            ));
        }
        if self.horizon == 0 {
            out.push("horizon must be at least 1".into());
        }
        if self.replicates == 0 {
            out.push("replicates must be at least 1".into());
        }
        let m = self.dim();
        if m == 0 {
            out.push("theta_star must have at least one component".into());
        }
        if self.theta_star.iter().any(|v| !v.is_finite()) {
            out.push("theta_star entries must be finite".into());
        }
        if self.obs_vectors.len() != agents {
            out.push(format!(
                "{} observation vectors given for {agents} agents",
                self.obs_vectors.len()
            ));
        }
        for (i, h) in self.obs_vectors.iter().enumerate() {
            if h.len() != m {
                out.push(format!("h for agent {} has dimension {}, expected {m}", i + 1, h.len()));
            } else if h.iter().all(|&v| v == 0.0) {
                out.push(format!("h for agent {} is the zero vector", i + 1));
            } else if h.iter().any(|v| !v.is_finite()) {
                out.push(format!("h for agent {} has non-finite entries", i + 1));
            }
        }
        match &self.init {
            Init::Zero => {}
            Init::Common(v) if v.len() != m => {
                out.push(format!("initial vector has dimension {}, expected {m}", v.len()))
            }
            Init::PerAgent(vs) if vs.len() != agents || vs.iter().any(|v| v.len() != m) => {
                out.push(format!("per-agent initial state must be {agents} vectors of dimension {m}"))
            }
            _ => {}
        }
        out
    }

    pub fn validate(&self, agents: usize) -> Result<()> {
        let problems = self.problems(agents);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn initial_state(&self, agents: usize) -> Vec<f64> {
        let m = self.dim();
        match &self.init {
            Init::Zero => vec![0.0; agents * m],
            Init::Common(v) => v.iter().copied().cycle().take(agents * m).collect(),
            Init::PerAgent(vs) => vs.concat(),
        }
    }
}

/// Estimates of all agents at iteration `t`, row-major `N x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub x: Vec<f64>,
    pub t: u64,
}

impl NetworkState {
    pub fn agent(&self, i: usize, m: usize) -> &[f64] {
        &self.x[i * m..(i + 1) * m]
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }
}

/// Noise realizations for a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    /// One scalar per agent.
    pub observation: Vec<f64>,
    /// `M` entries per arc, arcs in canonical order.
    pub communication: Vec<f64>,
}

/// A network, its noises and nonlinearities, ready to iterate.
#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    cfg: &'a EstimatorConfig,
    graph: &'a Graph,
    psi_c: &'a Nonlinearity,
    psi_o: &'a Nonlinearity,
    noise_o: &'a NoiseModel,
    noise_c: &'a NoiseModel,
    /// For agent `i`, `(j, arc index)` for every neighbor `j`.
    incoming: Vec<Vec<(usize, usize)>>,
    /// `h_i' theta*` per agent.
    clean_obs: Vec<f64>,
    arc_count: usize,
}

impl<'a> Estimator<'a> {
    /// Shape checks only; [`Estimator::run`] enforces the full preconditions.
    pub fn new(
        cfg: &'a EstimatorConfig,
        graph: &'a Graph,
        psi_c: &'a Nonlinearity,
        psi_o: &'a Nonlinearity,
        noise_o: &'a NoiseModel,
        noise_c: &'a NoiseModel,
    ) -> Result<Self> {
        let n = graph.agent_count();
        let m = cfg.dim();
        if m == 0 || cfg.obs_vectors.len() != n || cfg.obs_vectors.iter().any(|h| h.len() != m) {
            return Err(Error::param(format!(
                "configuration dimensions do not match a network of {n} agents with theta in R^{m}"
            )));
        }
        let mut incoming = vec![Vec::new(); n];
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            incoming[i].push((j, 2 * e));
            incoming[j].push((i, 2 * e + 1));
        }
        let clean_obs = cfg
            .obs_vectors
            .iter()
            .map(|h| dot(h, &cfg.theta_star))
            .collect();
        Ok(Self {
            cfg,
            graph,
            psi_c,
            psi_o,
            noise_o,
            noise_c,
            incoming,
            clean_obs,
            arc_count: 2 * graph.edges().len(),
        })
    }

    pub fn agents(&self) -> usize {
        self.graph.agent_count()
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    pub fn initial_state(&self) -> NetworkState {
        NetworkState {
            x: self.cfg.initial_state(self.agents()),
            t: 0,
        }
    }

    /// Random stream for a replicate: ChaCha8 keyed by the master seed, one
    /// stream id per replicate.
    pub fn replicate_rng(&self, replicate: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(replicate as u64);
        rng
    }

    pub fn empty_noise(&self) -> NoiseBlock {
        NoiseBlock {
            observation: vec![0.0; self.agents()],
            communication: vec![0.0; self.arc_count * self.dim()],
        }
    }

    pub fn draw_noise(&self, rng: &mut ChaCha8Rng, block: &mut NoiseBlock) {
        self.noise_o.sample_into(rng, &mut block.observation);
        self.noise_c.sample_into(rng, &mut block.communication);
    }

    /// Advances `state` one iteration with fresh noise.
    pub fn step(&self, state: &NetworkState, rng: &mut ChaCha8Rng) -> NetworkState {
        let mut block = self.empty_noise();
        self.draw_noise(rng, &mut block);
        let mut next = state.clone();
        self.apply_update(state, &block, &mut next.x, 0..self.agents());
        next.t = state.t + 1;
        next
    }

    /// Writes the updated estimates of the agents in `order` into `out`,
    /// reading only the time-`t` values in `state`.
    pub fn apply_update(
        &self,
        state: &NetworkState,
        noise: &NoiseBlock,
        out: &mut [f64],
        order: impl IntoIterator<Item = usize>,
    ) {
        let m = self.dim();
        let x = &state.x;
        let alpha = self.cfg.step_size(state.t);
        let consensus_gain = alpha * self.cfg.b / self.cfg.a;
        for i in order {
            let xi = &x[i * m..(i + 1) * m];
            let h = &self.cfg.obs_vectors[i];
            let z = self.clean_obs[i] + noise.observation[i];
            let innovation = self.psi_o.apply(z - dot(h, xi));
            for l in 0..m {
                let mut consensus = 0.0;
                for &(j, arc) in &self.incoming[i] {
                    let diff = xi[l] - x[j * m + l] + noise.communication[arc * m + l];
                    consensus += self.psi_c.apply(diff);
                }
                out[i * m + l] = xi[l] - consensus_gain * consensus + alpha * h[l] * innovation;
            }
        }
    }

    /// Runs one replicate for the configured horizon, recording snapshots.
    pub fn run(&self, replicate: usize) -> Result<TrajectoryRecord> {
        self.cfg.validate(self.agents())?;
        let connectivity = self.graph.validate_connected();
        if !connectivity.connected {
            return Err(Error::param(format!(
                "network is disconnected ({} components)",
                connectivity.components
            )));
        }
        Ok(self.run_unchecked(replicate))
    }

    fn run_unchecked(&self, replicate: usize) -> TrajectoryRecord {
        let n = self.agents();
        let m = self.dim();
        let times = snapshot_times(self.cfg.horizon);
        let mut rng = self.replicate_rng(replicate);
        let mut state = self.initial_state();
        let mut next = state.x.clone();
        let mut block = self.empty_noise();
        let mut snapshots = Vec::with_capacity(times.len());
        let mut recorded = Vec::with_capacity(times.len());
        let mut divergence = None;
        let mut upcoming = times.iter().copied().peekable();

        while state.t < self.cfg.horizon {
            self.draw_noise(&mut rng, &mut block);
            self.apply_update(&state, &block, &mut next, 0..n);
            std::mem::swap(&mut state.x, &mut next);
            state.t += 1;

            let mse = squared_error(&state.x, &self.cfg.theta_star, m) / n as f64;
            if !mse.is_finite() || mse > DIVERGENCE_MSE {
                divergence = Some(state.t);
                break;
            }
            if upcoming.peek() == Some(&state.t) {
                upcoming.next();
                recorded.push(state.t);
                snapshots.push(state.x.clone());
            }
        }

        TrajectoryRecord {
            replicate,
            agents: n,
            dim: m,
            times: recorded,
            states: snapshots,
            divergence,
            final_state: state,
        }
    }

    /// Runs `R` replicates (in parallel) and aggregates scaled-error statistics.
    pub fn run_ensemble(&self) -> Result<EnsembleRun> {
        if self.cfg.replicates < 2 {
            return Err(Error::param("an ensemble needs at least 2 replicates"));
        }
        self.cfg.validate(self.agents())?;
        if !self.graph.validate_connected().connected {
            return Err(Error::param("network is disconnected"));
        }
        let records: Vec<TrajectoryRecord> = (0..self.cfg.replicates)
            .into_par_iter()
            .map(|r| self.run_unchecked(r))
            .collect();
        let stats = EnsembleStats::from_records(&records, &self.cfg.theta_star);
        Ok(EnsembleRun { stats, records })
    }
}

/// Snapshot iterations: powers of two and of ten up to `horizon`, plus `horizon`.
pub fn snapshot_times(horizon: u64) -> Vec<u64> {
    let mut times = Vec::new();
    for base in [2u64, 10] {
        let mut t = 1u64;
        while t <= horizon {
            times.push(t);
            match t.checked_mul(base) {
                Some(next) => t = next,
                None => break,
            }
        }
    }
    if horizon > 0 {
        times.push(horizon);
    }
    times.sort_unstable();
    times.dedup();
    times
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn squared_error(x: &[f64], theta: &[f64], m: usize) -> f64 {
    x.chunks(m)
        .map(|xi| xi.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub replicate: usize,
    pub agents: usize,
    pub dim: usize,
    /// Snapshot iterations, strictly increasing.
    pub times: Vec<u64>,
    /// Full state at each snapshot, row-major `N x M`.
    pub states: Vec<Vec<f64>>,
    /// Iteration at which the run was stopped as divergent.
    pub divergence: Option<u64>,
    pub final_state: NetworkState,
}

impl TrajectoryRecord {
    pub fn snapshot_index(&self, t: u64) -> Option<usize> {
        self.times.binary_search(&t).ok()
    }

    /// Record restricted to the snapshots in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            times: self.times[range.clone()].to_vec(),
            states: self.states[range].to_vec(),
            ..self.clone()
        }
    }

    /// Appends the snapshots of `other`, which must come strictly later.
    pub fn concat(mut self, other: &Self) -> Self {
        assert!(self.times.last() < other.times.first() || other.times.is_empty());
        self.times.extend_from_slice(&other.times);
        self.states.extend(other.states.iter().cloned());
        self.divergence = other.divergence;
        self.final_state = other.final_state.clone();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: u64,
    /// `||x_i - theta*||^2` per agent.
    pub agent_sq_error: Vec<f64>,
    pub network_mse: f64,
    /// `(t + 1) * network_mse`.
    pub scaled_second_moment: f64,
}

/// Per-snapshot error table of a trajectory.
pub fn error_metrics(record: &TrajectoryRecord, theta_star: &[f64]) -> Vec<MetricsRow> {
    let m = record.dim;
    record
        .times
        .iter()
        .zip(&record.states)
        .map(|(&t, x)| {
            let agent_sq_error: Vec<f64> = x
                .chunks(m)
                .map(|xi| xi.iter().zip(theta_star).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            let network_mse = agent_sq_error.iter().sum::<f64>() / record.agents as f64;
            MetricsRow {
                t,
                agent_sq_error,
                network_mse,
                scaled_second_moment: (t + 1) as f64 * network_mse,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotStats {
    pub t: u64,
    /// Replicates contributing (non-divergent ones).
    pub used: usize,
    /// Mean over replicates of `sqrt(t+1) (x_i - theta*)`, row-major `N x M`.
    pub mean_scaled_error: Vec<f64>,
    /// Sample variance over replicates of the same quantity.
    pub var_scaled_error: Vec<f64>,
    /// `(1/N) sum_i mean_r[(t+1) ||x_i - theta*||^2]`.
    pub scaled_second_moment: f64,
    /// Average of `var_scaled_error` over all entries.
    pub scaled_error_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub replicates: usize,
    /// `(replicate, iteration)` for every divergent replicate.
    pub divergent: Vec<(usize, u64)>,
    pub snapshots: Vec<SnapshotStats>,
}

impl EnsembleStats {
    /// Aggregates in replicate order; divergent replicates are excluded.
    pub fn from_records(records: &[TrajectoryRecord], theta_star: &[f64]) -> Self {
        let divergent: Vec<(usize, u64)> = records
            .iter()
            .filter_map(|r| r.divergence.map(|t| (r.replicate, t)))
            .collect();
        let good: Vec<&TrajectoryRecord> = records.iter().filter(|r| r.divergence.is_none()).collect();
        let mut snapshots = Vec::new();
        if let Some(first) = good.first() {
            let (n, m) = (first.agents, first.dim);
            let count = good.len() as f64;
            for (s, &t) in first.times.iter().enumerate() {
                let scale = ((t + 1) as f64).sqrt();
                let scaled = |r: &TrajectoryRecord, k: usize| scale * (r.states[s][k] - theta_star[k % m]);
                let mean: Vec<f64> = (0..n * m)
                    .map(|k| good.iter().map(|r| scaled(r, k)).sum::<f64>() / count)
                    .collect();
                let var: Vec<f64> = (0..n * m)
                    .map(|k| {
                        if good.len() < 2 {
                            return 0.0;
                        }
                        good.iter().map(|r| (scaled(r, k) - mean[k]).powi(2)).sum::<f64>()
                            / (count - 1.0)
                    })
                    .collect();
                let second: f64 = good
                    .iter()
                    .map(|r| (0..n * m).map(|k| scaled(r, k).powi(2)).sum::<f64>())
                    .sum::<f64>()
                    / (count * n as f64);
                snapshots.push(SnapshotStats {
                    t,
                    used: good.len(),
                    scaled_error_variance: var.iter().sum::<f64>() / (n * m) as f64,
                    mean_scaled_error: mean,
                    var_scaled_error: var,
                    scaled_second_moment: second,
                });
            }
        }
        Self {
            replicates: records.len(),
            divergent,
            snapshots,
        }
    }

    pub fn last(&self) -> Option<&SnapshotStats> {
        self.snapshots.last()
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub records: Vec<TrajectoryRecord>,
}
