//! Command-line front end: `validate`, `simulate`, `ensemble`, `asymptotic`
//! and `sweep`, each driven by a TOML configuration.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::asymptotics::{
    asymptotic_covariance, build_h, build_sigma, check_stability, per_node_variance_regular,
    topology_sweep_with, AsymptoticInputs, AsymptoticModel, RegularVarianceParams,
};
use crate::config::{load_config, ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::estimator::{error_metrics, Estimator};
use crate::nonlinearity::{symmetric_grid, Nonlinearity, ZeroBehavior};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "ciest",
    version,
    about = "Nonlinear consensus + innovations estimation under heavy-tailed noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check connectivity, nonlinearity and noise requirements and print a pass/fail matrix.
    Validate(CommonArgs),
    /// Run one replicate and write its trajectory.
    Simulate(CommonArgs),
    /// Run all replicates and compare the scaled second moment with the asymptotic covariance.
    Ensemble(CommonArgs),
    /// Solve for the asymptotic covariance and write a key=value report.
    Asymptotic(CommonArgs),
    /// Evaluate the per-agent asymptotic variance along the k-hop ring family.
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding `[output] dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding `[estimator] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress the summary on standard output.
    #[arg(long)]
    pub quiet: bool,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Self::Validate(a) | Self::Simulate(a) | Self::Ensemble(a) | Self::Asymptotic(a) | Self::Sweep(a) => a,
        }
    }

    fn kind(&self) -> Option<ExperimentKind> {
        match self {
            Self::Validate(_) => None,
            Self::Simulate(_) => Some(ExperimentKind::Simulate),
            Self::Ensemble(_) => Some(ExperimentKind::Ensemble),
            Self::Asymptotic(_) => Some(ExperimentKind::Asymptotic),
            Self::Sweep(_) => Some(ExperimentKind::Sweep),
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Unstable { .. } => EXIT_UNSTABLE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut sink: Box<dyn Write> = if cli.command.args().quiet {
        Box::new(std::io::sink())
    } else {
        Box::new(stdout.lock())
    };
    match execute(&cli.command, &mut sink) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command, writing artifacts to the output directory and the
/// summary to `out`.
pub fn execute(command: &Command, out: &mut dyn Write) -> Result<()> {
    let args = command.args();
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.estimator.seed = seed;
    }
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    let Some(kind) = command.kind() else {
        return cmd_validate(&cfg, out);
    };
    cfg.kind = kind;
    let cfg = cfg.validated()?;
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::io(&cfg.output.dir, e))?;
    match kind {
        ExperimentKind::Simulate => cmd_simulate(&cfg, out),
        ExperimentKind::Ensemble => cmd_ensemble(&cfg, out),
        ExperimentKind::Asymptotic => cmd_asymptotic(&cfg, out),
        ExperimentKind::Sweep => cmd_sweep(&cfg, out),
    }
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// 17 significant digits, enough to round-trip every double.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

struct Check {
    name: String,
    pass: Option<bool>,
    detail: String,
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), pass: Some(pass), detail: detail.into() }
}

fn compliance_checks(cfg: &ExperimentConfig) -> Vec<Check> {
    let mut checks = Vec::new();
    let conn = cfg.graph.validate_connected();
    checks.push(check(
        "graph.connected",
        conn.connected,
        if conn.connected {
            format!("{} agents, {} edges", cfg.graph.agent_count(), cfg.graph.edges().len())
        } else {
            let shown: Vec<String> = conn.unreachable.iter().take(8).map(|i| (i + 1).to_string()).collect();
            format!("{} components; unreachable from agent 1: {}", conn.components, shown.join(" "))
        },
    ));

    let grid = symmetric_grid(10.0, 400);
    for (name, nl) in [
        ("consensus_nonlinearity", &cfg.consensus),
        ("observation_nonlinearity", &cfg.observation),
    ] {
        let r = nl.validate(&grid);
        checks.push(check(format!("{name}.odd"), r.odd, nl.kind_name()));
        checks.push(check(format!("{name}.positive"), r.positive_on_positives, ""));
        checks.push(check(format!("{name}.nondecreasing"), r.monotone, ""));
        checks.push(check(
            format!("{name}.bounded"),
            r.bounded,
            match r.c1 {
                Some(c) => format!("|psi| <= {c}"),
                None => "unbounded".into(),
            },
        ));
        let (ok, detail) = match r.zero_behavior {
            ZeroBehavior::Discontinuous { jump } => (true, format!("jump {jump} at 0")),
            ZeroBehavior::StrictlyIncreasing { c2 } => (true, format!("strictly increasing on [-{c2}, {c2}]")),
            ZeroBehavior::Neither => (false, "neither discontinuous nor strictly increasing at 0".into()),
        };
        checks.push(check(format!("{name}.zero_behavior"), ok, detail));
    }

    let noise_grid = symmetric_grid(50.0, 500);
    for (name, noise) in [
        ("observation_noise", &cfg.observation_noise),
        ("communication_noise", &cfg.communication_noise),
    ] {
        let r = noise.check_assumptions(&noise_grid);
        checks.push(check(format!("{name}.symmetric"), r.symmetric, noise.family_name()));
        checks.push(check(format!("{name}.positive_at_zero"), r.positive_near_zero, format!("p(0) = {}", noise.pdf(0.0))));
        checks.push(check(
            format!("{name}.finite_first_moment"),
            r.finite_first_moment,
            format!("E|W| = {}", noise.first_abs_moment()),
        ));
        checks.push(Check {
            name: format!("{name}.finite_variance"),
            pass: None,
            detail: match noise.variance() {
                Some(v) => format!("variance {v}"),
                None => "infinite variance".into(),
            },
        });
    }

    let problems = cfg.problems();
    checks.push(check(
        format!("config.{}", cfg.kind.name()),
        problems.is_empty(),
        problems.join("; "),
    ));

    checks.push(match stability_abscissa(cfg) {
        Ok(abscissa) => check("asymptotic.stable", abscissa < 0.0, format!("spectral abscissa {abscissa:.6e}")),
        Err(e) => Check { name: "asymptotic.stable".into(), pass: None, detail: format!("not computable: {e}") },
    });
    checks
}

fn stability_abscissa(cfg: &ExperimentConfig) -> Result<f64> {
    let h = build_h(&cfg.estimator.obs_vectors)?;
    let n = cfg.graph.agent_count();
    let phi_c = cfg.consensus.phi_prime_zero(&cfg.communication_noise)?;
    let phi_o = cfg.observation.phi_prime_zero(&cfg.observation_noise)?;
    let sigma = build_sigma(cfg.estimator.a, cfg.estimator.b, phi_c, phi_o, &cfg.graph.laplacian(), &h, h.ncols() / n);
    check_stability(&sigma)
}

fn cmd_validate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let checks = compliance_checks(cfg);
    say(out, format!("{:<44} {:<6} detail", "check", "result"))?;
    for c in &checks {
        let verdict = match c.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INFO",
        };
        say(out, format!("{:<44} {:<6} {}", c.name, verdict, c.detail).trim_end())?;
    }
    let failed = checks.iter().filter(|c| c.pass == Some(false)).count();
    say(out, format!("{failed} of {} checks failed", checks.iter().filter(|c| c.pass.is_some()).count()))
}

fn estimator_for(cfg: &ExperimentConfig) -> Result<Estimator<'_>> {
    Estimator::new(
        &cfg.estimator,
        &cfg.graph,
        &cfg.consensus,
        &cfg.observation,
        &cfg.observation_noise,
        &cfg.communication_noise,
    )
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let est = estimator_for(cfg)?;
    let record = est.run(0)?;
    let metrics = error_metrics(&record, &cfg.estimator.theta_star);

    let mut csv = String::from("replicate,t,agent,mse,scaled_second_moment\n");
    for row in &metrics {
        let scale = (row.t + 1) as f64;
        let network = (-1i64, row.network_mse);
        let agents = row.agent_sq_error.iter().enumerate().map(|(i, e)| (i as i64 + 1, *e));
        for (agent, mse) in std::iter::once(network).chain(agents) {
            writeln!(csv, "{},{},{agent},{},{}", record.replicate, row.t, fmt_f64(mse), fmt_f64(scale * mse)).unwrap();
        }
    }
    write_file(&cfg.output.dir.join("trajectory.csv"), &csv)?;

    if let Some(last) = metrics.last() {
        say(out, format!("final t = {}, network MSE = {}", last.t, fmt_f64(last.network_mse)))?;
    }
    match record.divergence {
        Some(t) if cfg.linear_baseline => say(out, format!("diverged at t = {t} (linear baseline)")),
        Some(t) => Err(Error::numeric(format!("replicate 0 diverged at t = {t}"))),
        None => Ok(()),
    }
}

/// Analytic `Tr(S)/N` for the configuration and, for the linear baseline,
/// for the same setup with sign maps on both channels.
fn reference_trace(cfg: &ExperimentConfig) -> Option<(f64, &'static str)> {
    if cfg.estimator.delta != 1.0 {
        return None;
    }
    let sign = Nonlinearity::Sign;
    let (psi_c, psi_o, label) = if cfg.linear_baseline {
        (&sign, &sign, "sign_counterpart")
    } else {
        (&cfg.consensus, &cfg.observation, "configured")
    };
    let inputs = AsymptoticInputs {
        a: cfg.estimator.a,
        b: cfg.estimator.b,
        psi_c,
        psi_o,
        noise_c: &cfg.communication_noise,
        noise_o: &cfg.observation_noise,
        graph: &cfg.graph,
        obs_vectors: &cfg.estimator.obs_vectors,
        kco: None,
    };
    asymptotic_covariance(&inputs).ok().map(|m| (m.trace_s_over_n, label))
}

fn cmd_ensemble(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let est = estimator_for(cfg)?;
    let run = est.run_ensemble()?;
    let stats = &run.stats;
    let reference = reference_trace(cfg);
    let dir = &cfg.output.dir;

    let mut table = String::from("t,replicates_used,scaled_second_moment,scaled_error_variance");
    if reference.is_some() {
        table.push_str(",analytic_trace_s_over_n");
    }
    table.push('\n');
    for s in &stats.snapshots {
        write!(table, "{},{},{},{}", s.t, s.used, fmt_f64(s.scaled_second_moment), fmt_f64(s.scaled_error_variance)).unwrap();
        if let Some((r, _)) = reference {
            write!(table, ",{}", fmt_f64(r)).unwrap();
        }
        table.push('\n');
    }
    write_file(&dir.join("ensemble.csv"), &table)?;

    let m = cfg.estimator.dim();
    let mut per_agent = String::from("t,agent,component,mean_scaled_error,var_scaled_error\n");
    for s in &stats.snapshots {
        for (k, (mean, var)) in s.mean_scaled_error.iter().zip(&s.var_scaled_error).enumerate() {
            writeln!(per_agent, "{},{},{},{},{}", s.t, k / m + 1, k % m + 1, fmt_f64(*mean), fmt_f64(*var)).unwrap();
        }
    }
    write_file(&dir.join("ensemble_agents.csv"), &per_agent)?;

    let mut divergent = String::from("replicate,t\n");
    for (r, t) in &stats.divergent {
        writeln!(divergent, "{r},{t}").unwrap();
    }
    write_file(&dir.join("divergent.csv"), &divergent)?;

    let mut summary = String::new();
    writeln!(summary, "replicates={}", stats.replicates).unwrap();
    writeln!(summary, "divergent={}", stats.divergent.len()).unwrap();
    if let Some(last) = stats.last() {
        writeln!(summary, "final_t={}", last.t).unwrap();
        writeln!(summary, "scaled_second_moment={}", fmt_f64(last.scaled_second_moment)).unwrap();
        writeln!(summary, "scaled_error_variance={}", fmt_f64(last.scaled_error_variance)).unwrap();
        if let Some((r, label)) = reference {
            writeln!(summary, "reference={label}").unwrap();
            writeln!(summary, "analytic_trace_s_over_n={}", fmt_f64(r)).unwrap();
            writeln!(summary, "ratio_to_analytic={}", fmt_f64(last.scaled_second_moment / r)).unwrap();
        }
    }
    write_file(&dir.join("ensemble_summary.txt"), &summary)?;

    if !stats.divergent.is_empty() {
        say(out, format!("{} of {} replicates diverged", stats.divergent.len(), stats.replicates))?;
    }
    let Some(last) = stats.last() else {
        return if cfg.linear_baseline {
            say(out, "every replicate diverged (linear baseline)")
        } else {
            Err(Error::numeric("every replicate diverged"))
        };
    };
    say(
        out,
        format!(
            "t = {}: scaled second moment {} over {} replicates",
            last.t,
            fmt_f64(last.scaled_second_moment),
            last.used
        ),
    )?;
    if let Some((r, label)) = reference {
        let what = if label == "configured" { "analytic Tr(S)/N" } else { "sign-map Tr(S)/N" };
        say(
            out,
            format!(
                "{what} = {}, ratio {:.4}",
                fmt_f64(r),
                last.scaled_second_moment / r
            ),
        )?;
    }
    Ok(())
}

fn asymptotic_model(cfg: &ExperimentConfig) -> Result<AsymptoticModel> {
    asymptotic_covariance(&AsymptoticInputs {
        a: cfg.estimator.a,
        b: cfg.estimator.b,
        psi_c: &cfg.consensus,
        psi_o: &cfg.observation,
        noise_c: &cfg.communication_noise,
        noise_o: &cfg.observation_noise,
        graph: &cfg.graph,
        obs_vectors: &cfg.estimator.obs_vectors,
        kco: None,
    })
}

/// Closed-form `Tr(S)/N` when the setup is regular, scalar, common-`h`, sign/sign.
fn closed_form_trace(cfg: &ExperimentConfig) -> Option<f64> {
    let d = cfg.graph.regular_degree()?;
    let sign_pair = matches!(cfg.consensus, Nonlinearity::Sign) && matches!(cfg.observation, Nonlinearity::Sign);
    let h = cfg.estimator.obs_vectors.first()?;
    if !sign_pair || h.len() != 1 || cfg.estimator.obs_vectors.iter().any(|v| v != h) {
        return None;
    }
    let spectrum = cfg.graph.laplacian_spectrum().ok()?;
    let params = RegularVarianceParams {
        a: cfg.estimator.a,
        b: cfg.estimator.b,
        h: h[0],
        f_o0: cfg.observation_noise.pdf(0.0),
        f_c0: cfg.communication_noise.pdf(0.0),
        sigma_o_sq: 1.0,
        sigma_c_sq: 1.0,
    };
    per_node_variance_regular(d, &spectrum, &params).ok()
}

fn cmd_asymptotic(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let model = asymptotic_model(cfg)?;
    let n = cfg.graph.agent_count();
    let mut report = String::new();
    writeln!(report, "graph={}", cfg.graph_spec.describe()).unwrap();
    writeln!(report, "agents={n}").unwrap();
    writeln!(report, "dim={}", cfg.estimator.dim()).unwrap();
    writeln!(report, "a={}", fmt_f64(cfg.estimator.a)).unwrap();
    writeln!(report, "b={}", fmt_f64(cfg.estimator.b)).unwrap();
    writeln!(report, "sigma_o_sq={}", fmt_f64(model.sigma_o_sq)).unwrap();
    writeln!(report, "sigma_c_sq={}", fmt_f64(model.sigma_c_sq)).unwrap();
    writeln!(report, "phi_o_prime0={}", fmt_f64(model.phi_o_prime0)).unwrap();
    writeln!(report, "phi_c_prime0={}", fmt_f64(model.phi_c_prime0)).unwrap();
    writeln!(report, "spectral_abscissa={}", fmt_f64(model.spectral_abscissa)).unwrap();
    writeln!(report, "trace_S_over_N={}", fmt_f64(model.trace_s_over_n)).unwrap();
    writeln!(report, "relative_residual={}", fmt_f64(model.relative_residual)).unwrap();
    if let Some(closed) = closed_form_trace(cfg) {
        writeln!(report, "closed_form_trace_S_over_N={}", fmt_f64(closed)).unwrap();
    }
    for w in &model.warnings {
        writeln!(report, "warning={w}").unwrap();
    }
    let dir = &cfg.output.dir;
    write_file(&dir.join("asymptotic.txt"), &report)?;
    if cfg.output.dump_matrices {
        write_file(&dir.join("sigma.csv"), &matrix_csv(&model.sigma))?;
        write_file(&dir.join("s0.csv"), &matrix_csv(&model.s0))?;
        write_file(&dir.join("s.csv"), &matrix_csv(&model.s))?;
    }
    say(out, format!("Tr(S)/N = {}", fmt_f64(model.trace_s_over_n)))?;
    say(out, format!("spectral abscissa = {}", fmt_f64(model.spectral_abscissa)))
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let n = cfg.graph.agent_count();
    let params = RegularVarianceParams {
        a: cfg.estimator.a,
        b: cfg.estimator.b,
        h: cfg.estimator.obs_vectors[0][0],
        f_o0: cfg.observation_noise.pdf(0.0),
        f_c0: cfg.communication_noise.pdf(0.0),
        sigma_o_sq: 1.0,
        sigma_c_sq: 1.0,
    };
    let sweep = topology_sweep_with(n, &params)?;
    let mut table = String::from("d,sigma_d_sq,stable\n");
    for row in &sweep.rows {
        writeln!(table, "{},{},{}", row.d, fmt_f64(row.sigma_d_sq), u8::from(row.stable)).unwrap();
    }
    write_file(&cfg.output.dir.join("sweep.csv"), &table)?;
    let unstable = sweep.rows.iter().filter(|r| !r.stable).count();
    if unstable > 0 {
        say(out, format!("{unstable} of {} degrees unstable", sweep.rows.len()))?;
    }
    match sweep.argmin_degree {
        Some(d) => {
            let best = sweep.rows.iter().find(|r| r.d == d).map_or(f64::NAN, |r| r.sigma_d_sq);
            say(out, format!("argmin d = {d}"))?;
            say(out, format!("sigma_d_sq = {}", fmt_f64(best)))
        }
        None => Err(Error::Unstable { abscissa: params.abscissa() }),
    }
}
