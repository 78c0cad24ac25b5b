//! TOML experiment configuration.
//!
//! Parsing is two-stage. [`parse_config_str`] reads structure and types and
//! builds the domain objects; [`ExperimentConfig::problems`] then applies the
//! cross-field rules. Both stages collect every problem instead of stopping
//! at the first one.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Init};
use crate::graph::Graph;
use crate::noise::NoiseModel;
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Simulate,
    Ensemble,
    Asymptotic,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Ensemble => "ensemble",
            Self::Asymptotic => "asymptotic",
            Self::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "simulate" => Some(Self::Simulate),
            "ensemble" => Some(Self::Ensemble),
            "asymptotic" => Some(Self::Asymptotic),
            "sweep" => Some(Self::Sweep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Ring { n: usize },
    RingKhop { n: usize, k: usize },
    Complete { n: usize },
    EdgeList { path: PathBuf, n: Option<usize> },
}

impl GraphSpec {
    pub fn describe(&self) -> String {
        match self {
            Self::Ring { n } => format!("ring(n={n})"),
            Self::RingKhop { n, k } => format!("ring_khop(n={n}, k={k})"),
            Self::Complete { n } => format!("complete(n={n})"),
            Self::EdgeList { path, .. } => format!("edge_list({})", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Write `Sigma`, `S0` and `S` next to the asymptotic report.
    pub dump_matrices: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Marks the identity-map baseline, the only place identity maps are allowed.
    pub linear_baseline: bool,
    pub graph_spec: GraphSpec,
    pub graph: Graph,
    pub observation_noise: NoiseModel,
    pub communication_noise: NoiseModel,
    pub consensus: Nonlinearity,
    pub observation: Nonlinearity,
    pub estimator: EstimatorConfig,
    /// Whether `delta` was set explicitly (it defaults to 1).
    pub delta_given: bool,
    pub output: OutputSpec,
}

impl ExperimentConfig {
    /// Cross-field rules; empty when the configuration can run.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.graph.agent_count();
        for (name, nl) in [
            ("consensus_nonlinearity", &self.consensus),
            ("observation_nonlinearity", &self.observation),
        ] {
            if matches!(nl, Nonlinearity::Identity) {
                let baseline_run = self.linear_baseline
                    && matches!(self.kind, ExperimentKind::Simulate | ExperimentKind::Ensemble);
                if !baseline_run {
                    out.push(format!(
                        "{name}: identity map is unbounded and only allowed in simulate/ensemble runs with linear_baseline = true"
                    ));
                }
            }
        }
        match self.kind {
            ExperimentKind::Simulate | ExperimentKind::Ensemble => {
                out.extend(self.estimator.problems(n).into_iter().map(|p| format!("estimator: {p}")));
                let connectivity = self.graph.validate_connected();
                if !connectivity.connected {
                    out.push(format!(
                        "graph: network is disconnected ({} components)",
                        connectivity.components
                    ));
                }
                if self.kind == ExperimentKind::Ensemble && self.estimator.replicates < 2 {
                    out.push("estimator: an ensemble needs replicates >= 2".into());
                }
            }
            ExperimentKind::Asymptotic => {
                if self.estimator.delta != 1.0 {
                    out.push(format!(
                        "estimator: the asymptotic covariance is defined for delta = 1, got {}",
                        self.estimator.delta
                    ));
                }
                out.extend(
                    self.estimator
                        .problems(n)
                        .into_iter()
                        .filter(|p| !p.starts_with("step exponent"))
                        .map(|p| format!("estimator: {p}")),
                );
                if !self.graph.validate_connected().connected {
                    out.push("graph: network is disconnected".into());
                }
            }
            ExperimentKind::Sweep => {
                match self.graph_spec {
                    GraphSpec::RingKhop { n, .. } | GraphSpec::Ring { n } if n % 2 == 1 => {}
                    GraphSpec::RingKhop { .. } | GraphSpec::Ring { .. } => {
                        out.push("graph: the sweep needs an odd agent count".into())
                    }
                    _ => out.push("graph: the sweep runs over the ring_khop family".into()),
                }
                if !(matches!(self.consensus, Nonlinearity::Sign)
                    && matches!(self.observation, Nonlinearity::Sign))
                {
                    out.push("sweep: the closed form needs sign nonlinearities on both channels".into());
                }
                if self.estimator.dim() != 1 {
                    out.push("sweep: the closed form needs a scalar parameter".into());
                }
                let h0 = self.estimator.obs_vectors.first().cloned().unwrap_or_default();
                if self.estimator.obs_vectors.iter().any(|h| *h != h0) {
                    out.push("sweep: the closed form needs a common observation vector".into());
                }
                if !(self.estimator.a > 0.0 && self.estimator.b > 0.0) {
                    out.push("estimator: gains a and b must be positive".into());
                }
            }
        }
        out
    }

    /// Structural parse plus cross-field rules.
    pub fn validated(self) -> Result<Self> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Reads and fully validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    load_config(path)?.validated()
}

/// Reads a configuration file without the cross-field rules.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

/// Structural parse; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![format!("malformed TOML: {}", e.message())]))?;
    let mut errors = Vec::new();

    check_keys(
        &root,
        "top level",
        &[
            "kind",
            "linear_baseline",
            "graph",
            "observation_noise",
            "communication_noise",
            "consensus_nonlinearity",
            "observation_nonlinearity",
            "estimator",
            "output",
        ],
        &mut errors,
    );
    let kind_str = get_str(&root, "top level", "kind", &mut errors);
    let kind = kind_str.as_deref().and_then(|s| {
        let k = ExperimentKind::parse(s);
        if k.is_none() {
            errors.push(format!(
                "top level: kind = \"{s}\" is not one of simulate, ensemble, asymptotic, sweep"
            ));
        }
        k
    });
    let linear_baseline = opt_bool(&root, "top level", "linear_baseline", &mut errors).unwrap_or(false);

    let graph = section(&root, "graph", &mut errors)
        .and_then(|t| parse_graph(t, kind, base_dir, &mut errors));
    let observation_noise =
        section(&root, "observation_noise", &mut errors).and_then(|t| parse_noise(t, "observation_noise", &mut errors));
    let communication_noise = section(&root, "communication_noise", &mut errors)
        .and_then(|t| parse_noise(t, "communication_noise", &mut errors));
    let consensus = section(&root, "consensus_nonlinearity", &mut errors)
        .and_then(|t| parse_nonlinearity(t, "consensus_nonlinearity", &mut errors));
    let observation = section(&root, "observation_nonlinearity", &mut errors)
        .and_then(|t| parse_nonlinearity(t, "observation_nonlinearity", &mut errors));
    let agents = graph.as_ref().map(|(_, g)| g.agent_count());
    let estimator = section(&root, "estimator", &mut errors)
        .and_then(|t| parse_estimator(t, kind, agents, &mut errors));
    let output = match root.get("output") {
        None => Some(OutputSpec { dir: base_dir.join("out"), dump_matrices: false }),
        Some(Value::Table(t)) => {
            check_keys(t, "output", &["dir", "dump_matrices"], &mut errors);
            let dir = opt_str(t, "output", "dir", &mut errors).unwrap_or_else(|| "out".into());
            let dump_matrices = opt_bool(t, "output", "dump_matrices", &mut errors).unwrap_or(false);
            Some(OutputSpec { dir: base_dir.join(dir), dump_matrices })
        }
        Some(_) => {
            errors.push("output: expected a table".into());
            None
        }
    };

    match (kind, graph, observation_noise, communication_noise, consensus, observation, estimator, output) {
        (
            Some(kind),
            Some((graph_spec, graph)),
            Some(observation_noise),
            Some(communication_noise),
            Some(consensus),
            Some(observation),
            Some((estimator, delta_given)),
            Some(output),
        ) if errors.is_empty() => Ok(ExperimentConfig {
            kind,
            linear_baseline,
            graph_spec,
            graph,
            observation_noise,
            communication_noise,
            consensus,
            observation,
            estimator,
            delta_given,
            output,
        }),
        _ => Err(Error::Config(errors)),
    }
}

fn section<'a>(root: &'a Table, name: &str, errors: &mut Vec<String>) -> Option<&'a Table> {
    match root.get(name) {
        Some(Value::Table(t)) => Some(t),
        Some(_) => {
            errors.push(format!("{name}: expected a table"));
            None
        }
        None => {
            errors.push(format!("missing section [{name}]"));
            None
        }
    }
}

fn check_keys(t: &Table, ctx: &str, allowed: &[&str], errors: &mut Vec<String>) {
    for key in t.keys() {
        if !allowed.contains(&key.as_str()) {
            errors.push(format!("{ctx}: unknown key `{key}`"));
        }
    }
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

fn opt_str(t: &Table, ctx: &str, key: &str, errors: &mut Vec<String>) -> Option<String> {
    match t.get(key)? {
        Value::String(s) => Some(s.clone()),
        other => {
            errors.push(format!("{ctx}.{key}: expected a string, found {}", type_name(other)));
            None
        }
    }
}

fn get_str(t: &Table, ctx: &str, key: &str, errors: &mut Vec<String>) -> Option<String> {
    if !t.contains_key(key) {
        errors.push(format!("{ctx}: missing key `{key}`"));
        return None;
    }
    opt_str(t, ctx, key, errors)
}

fn opt_bool(t: &Table, ctx: &str, key: &str, errors: &mut Vec<String>) -> Option<bool> {
    match t.get(key)? {
        Value::Boolean(b) => Some(*b),
        other => {
            errors.push(format!("{ctx}.{key}: expected a boolean, found {}", type_name(other)));
            None
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn opt_f64(t: &Table, ctx: &str, key: &str, errors: &mut Vec<String>) -> Option<f64> {
    let v = t.get(key)?;
    let x = as_f64(v);
    if x.is_none() {
        errors.push(format!("{ctx}.{key}: expected a number, found {}", type_name(v)));
    }
    x
}

fn get_f64(t: &Table, ctx: &str, key: &str, errors: &mut Vec<String>) -> Option<f64> {
    if !t.contains_key(key) {
        errors.push(format!("{ctx}: missing key `{key}`"));
        return None;
    }
    opt_f64(t, ctx, key, errors)
}

fn opt_u64(t: &Table, ctx: &str, key: &str, errors: &mut Vec<String>) -> Option<u64> {
    match t.get(key)? {
        Value::Integer(i) if *i >= 0 => Some(*i as u64),
        other => {
            errors.push(format!(
                "{ctx}.{key}: expected a nonnegative integer, found {}",
                describe_value(other)
            ));
            None
        }
    }
}

fn get_u64(t: &Table, ctx: &str, key: &str, errors: &mut Vec<String>) -> Option<u64> {
    if !t.contains_key(key) {
        errors.push(format!("{ctx}: missing key `{key}`"));
        return None;
    }
    opt_u64(t, ctx, key, errors)
}

fn describe_value(v: &Value) -> String {
    match v {
        Value::Integer(i) => format!("{i}"),
        other => type_name(other).to_string(),
    }
}

fn number_array(v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::Array(items) => items.iter().map(as_f64).collect(),
        _ => None,
    }
}

fn matrix_array(v: &Value) -> Option<Vec<Vec<f64>>> {
    match v {
        Value::Array(rows) if rows.iter().all(|r| matches!(r, Value::Array(_))) => {
            rows.iter().map(number_array).collect()
        }
        _ => None,
    }
}

fn parse_graph(
    t: &Table,
    kind: Option<ExperimentKind>,
    base_dir: &Path,
    errors: &mut Vec<String>,
) -> Option<(GraphSpec, Graph)> {
    const CTX: &str = "graph";
    check_keys(t, CTX, &["family", "n", "k", "path"], errors);
    let family = get_str(t, CTX, "family", errors)?;
    let n = opt_u64(t, CTX, "n", errors).map(|v| v as usize);
    let k = opt_u64(t, CTX, "k", errors).map(|v| v as usize);
    let need_n = |errors: &mut Vec<String>| {
        if n.is_none() && !t.contains_key("n") {
            errors.push(format!("{CTX}: missing key `n` for family {family}"));
        }
        n
    };
    let spec = match family.as_str() {
        "ring" => GraphSpec::Ring { n: need_n(errors)? },
        "ring_khop" => {
            let n = need_n(errors)?;
            let k = if kind == Some(ExperimentKind::Sweep) {
                k.unwrap_or(1)
            } else if let Some(k) = k {
                k
            } else {
                if !t.contains_key("k") {
                    errors.push(format!("{CTX}: missing key `k` for family ring_khop"));
                }
                return None;
            };
            GraphSpec::RingKhop { n, k }
        }
        "complete" => GraphSpec::Complete { n: need_n(errors)? },
        "edge_list" => {
            let path = get_str(t, CTX, "path", errors)?;
            GraphSpec::EdgeList { path: base_dir.join(path), n }
        }
        other => {
            errors.push(format!(
                "{CTX}.family: \"{other}\" is not one of ring, ring_khop, complete, edge_list"
            ));
            return None;
        }
    };
    let built = match &spec {
        GraphSpec::Ring { n } => Graph::ring(*n),
        GraphSpec::RingKhop { n, k } => Graph::ring_khop(*n, *k),
        GraphSpec::Complete { n } => Graph::complete(*n),
        GraphSpec::EdgeList { path, n } => {
            if !path.exists() {
                errors.push(format!("{CTX}.path: file {} does not exist", path.display()));
                return None;
            }
            Graph::from_edge_list_file(path, *n)
        }
    };
    match built {
        Ok(g) => Some((spec, g)),
        Err(e) => {
            errors.push(format!("{CTX}: {e}"));
            None
        }
    }
}

fn parse_noise(t: &Table, ctx: &str, errors: &mut Vec<String>) -> Option<NoiseModel> {
    check_keys(t, ctx, &["family", "beta", "sigma"], errors);
    let family = get_str(t, ctx, "family", errors)?;
    let built = match family.as_str() {
        "eq3" | "heavy_tail" => {
            let beta = get_f64(t, ctx, "beta", errors)?;
            NoiseModel::heavy_tail(beta)
        }
        "gaussian" => {
            let sigma = get_f64(t, ctx, "sigma", errors)?;
            NoiseModel::gaussian(sigma)
        }
        "none" => Ok(NoiseModel::Zero),
        other => {
            errors.push(format!("{ctx}.family: \"{other}\" is not one of eq3 (alias heavy_tail), gaussian, none"));
            return None;
        }
    };
    built.map_err(|e| errors.push(format!("{ctx}: {e}"))).ok()
}

fn parse_nonlinearity(t: &Table, ctx: &str, errors: &mut Vec<String>) -> Option<Nonlinearity> {
    check_keys(t, ctx, &["kind", "tau", "levels"], errors);
    let kind = get_str(t, ctx, "kind", errors)?;
    let built = match kind.as_str() {
        "sign" => Ok(Nonlinearity::Sign),
        "identity" => Ok(Nonlinearity::Identity),
        "clip" => {
            let tau = get_f64(t, ctx, "tau", errors)?;
            Nonlinearity::clip(tau)
        }
        "quantizer" => {
            let Some(v) = t.get("levels") else {
                errors.push(format!("{ctx}: missing key `levels`"));
                return None;
            };
            let Some(levels) = number_array(v) else {
                errors.push(format!("{ctx}.levels: expected an array of numbers"));
                return None;
            };
            Nonlinearity::quantizer(levels)
        }
        other => {
            errors.push(format!("{ctx}.kind: \"{other}\" is not one of sign, clip, quantizer, identity"));
            return None;
        }
    };
    built.map_err(|e| errors.push(format!("{ctx}: {e}"))).ok()
}

fn parse_estimator(
    t: &Table,
    kind: Option<ExperimentKind>,
    agents: Option<usize>,
    errors: &mut Vec<String>,
) -> Option<(EstimatorConfig, bool)> {
    const CTX: &str = "estimator";
    check_keys(
        t,
        CTX,
        &["a", "b", "delta", "horizon", "replicates", "seed", "theta_star", "h", "init"],
        errors,
    );
    let run_kind = matches!(kind, Some(ExperimentKind::Simulate | ExperimentKind::Ensemble));
    let start = errors.len();

    let a = get_f64(t, CTX, "a", errors);
    let b = get_f64(t, CTX, "b", errors);
    let delta_given = t.contains_key("delta");
    let delta = if run_kind {
        get_f64(t, CTX, "delta", errors)
    } else {
        opt_f64(t, CTX, "delta", errors).or(Some(1.0))
    };
    let horizon = if run_kind { get_u64(t, CTX, "horizon", errors) } else { opt_u64(t, CTX, "horizon", errors).or(Some(1)) };
    let seed = if run_kind { get_u64(t, CTX, "seed", errors) } else { opt_u64(t, CTX, "seed", errors).or(Some(0)) };
    let replicates = if kind == Some(ExperimentKind::Ensemble) {
        get_u64(t, CTX, "replicates", errors)
    } else {
        opt_u64(t, CTX, "replicates", errors).or(Some(1))
    };

    let h_value = t.get("h");
    let obs_vectors: Option<Vec<Vec<f64>>> = match (h_value, agents) {
        (None, _) => {
            errors.push(format!("{CTX}: missing key `h`"));
            None
        }
        (Some(v), agents) => {
            if let Some(per_agent) = matrix_array(v) {
                if let Some(n) = agents {
                    if per_agent.len() != n {
                        errors.push(format!("{CTX}.h: {} rows for {n} agents", per_agent.len()));
                    }
                }
                Some(per_agent)
            } else if let Some(x) = as_f64(v) {
                agents.map(|n| vec![vec![x]; n])
            } else if let Some(common) = number_array(v) {
                agents.map(|n| vec![common; n])
            } else {
                errors.push(format!(
                    "{CTX}.h: expected a number, an array of numbers, or an array of per-agent arrays"
                ));
                None
            }
        }
    };
    let dim = obs_vectors.as_ref().and_then(|o| o.first()).map(Vec::len);

    let theta_star = match t.get("theta_star") {
        Some(v) => match as_f64(v).map(|x| vec![x]).or_else(|| number_array(v)) {
            Some(th) => Some(th),
            None => {
                errors.push(format!("{CTX}.theta_star: expected a number or an array of numbers"));
                None
            }
        },
        None if run_kind => {
            errors.push(format!("{CTX}: missing key `theta_star`"));
            None
        }
        None => dim.map(|m| vec![0.0; m]),
    };

    let init = match t.get("init") {
        None => Some(Init::Zero),
        Some(Value::String(s)) if s == "zero" => Some(Init::Zero),
        Some(v) => {
            if let Some(rows) = matrix_array(v) {
                Some(Init::PerAgent(rows))
            } else if let Some(x) = as_f64(v) {
                Some(Init::Common(vec![x]))
            } else if let Some(common) = number_array(v) {
                Some(Init::Common(common))
            } else {
                errors.push(format!(
                    "{CTX}.init: expected \"zero\", a vector, or an array of per-agent vectors"
                ));
                None
            }
        }
    };

    if errors.len() > start {
        return None;
    }
    Some((
        EstimatorConfig {
            a: a?,
            b: b?,
            delta: delta?,
            horizon: horizon?,
            replicates: replicates? as usize,
            seed: seed?,
            theta_star: theta_star?,
            obs_vectors: obs_vectors?,
            init: init?,
        },
        delta_given,
    ))
}
