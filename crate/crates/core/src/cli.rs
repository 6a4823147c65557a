//! Command-line front end.
//!
//! Every run writes plain files into the output directory: trajectories as
//! CSV (`t,pg,one_minus_pg`), protocols and summaries as JSON. Settings come
//! from an optional TOML file; command-line flags take precedence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, Trajectory};
use crate::error::Error;
use crate::limits::{pmin_oscillator, pmin_qubit, CoolingLimitReport};
use crate::operators::{excited_population, initial_state, optimal_hamiltonian, SystemKind, SystemSpec};
use crate::optimizer::{compare_to_conjecture, optimize_restarts, ConjectureComparison, GradientMethod, OptimizationConfig};
use crate::protocol::ControlProtocol;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{field}`: {msg}"))
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "auxcool", version, about = "Cool a target system through an auxiliary under bounded interactions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve one protocol and write its trajectory.
    Simulate(CommonArgs),
    /// Search for the best protocol with BFGS.
    Optimize(CommonArgs),
    /// Evaluate the closed-form limits.
    Limits(CommonArgs),
    /// Three undamped-auxiliary reference curves.
    Fig2a(CommonArgs),
    /// The same curves with a damped auxiliary (κ = 1).
    Fig2b(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Optimize,
    Limits,
    Fig2a,
    Fig2b,
}

#[derive(Debug, Clone, Default, Args)]
#[command(allow_negative_numbers = true)]
pub struct CommonArgs {
    /// TOML file with run settings.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `eq1`, `zero`, or a protocol JSON file.
    #[arg(long, value_name = "eq1|zero|PATH")]
    pub protocol: Option<String>,
    #[arg(long, value_name = "T")]
    pub horizon: Option<f64>,
    #[arg(long = "sample-dt", value_name = "DT")]
    pub sample_dt: Option<f64>,
    /// Target levels (2 = two-level system, more = truncated oscillator).
    #[arg(long = "N", value_name = "N")]
    pub n: Option<usize>,
    /// Auxiliary levels.
    #[arg(long = "M", value_name = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub nbar: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Independent optimizer runs.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Piecewise-constant segments for the optimizer.
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long = "max-iterations")]
    pub max_iterations: Option<usize>,
}

/// Layout of the TOML configuration file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub nbar: Option<f64>,
    pub gamma: Option<f64>,
    pub g: Option<f64>,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub protocol: Option<String>,
    pub horizon: Option<f64>,
    pub sample_dt: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub segments: Option<usize>,
    pub objective_time: Option<f64>,
    pub max_iterations: Option<usize>,
    pub gradient_step: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub gradient: Option<String>,
    pub integration_step: Option<f64>,
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "path", rename_all = "snake_case")]
pub enum ProtocolSource {
    Eq1,
    Zero,
    File(PathBuf),
}

impl ProtocolSource {
    fn parse(s: &str) -> Self {
        match s {
            "eq1" => ProtocolSource::Eq1,
            "zero" => ProtocolSource::Zero,
            path => ProtocolSource::File(PathBuf::from(path)),
        }
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub spec: SystemSpec,
    pub protocol_source: ProtocolSource,
    pub horizon: f64,
    pub sample_dt: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub restarts: usize,
    pub optimizer: OptimizationConfig,
}

impl RunConfig {
    /// Merges the config file (if any) with flag overrides and validates.
    pub fn resolve(mode: Mode, args: &CommonArgs) -> CliResult<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| config_err("config", format!("{}: {e}", path.display())))?;
                toml::from_str::<ConfigFile>(&text).map_err(|e| config_err("config", e.message()))?
            }
            None => ConfigFile::default(),
        };
        let sys = &file.system;
        let n = args.n.or(sys.n).unwrap_or(2);
        let m = args.m.or(sys.m).unwrap_or(3);
        let nbar = args.nbar.or(sys.nbar).unwrap_or(0.5);
        let gamma = args.gamma.or(sys.gamma).unwrap_or(0.01);
        let g = args.g.or(sys.g).unwrap_or(1.0);
        let kappa = args.kappa.or(sys.kappa).unwrap_or(0.0);

        let target = SystemKind::from_dim(n).map_err(|e| config_err("N", e))?;
        if m < 2 {
            return Err(config_err("M", format!("auxiliary needs at least 2 levels, got {m}")));
        }
        if !(g.is_finite() && g > 0.0) {
            return Err(config_err("g", format!("must be positive, got {g}")));
        }
        for (name, v) in [("nbar", nbar), ("gamma", gamma), ("kappa", kappa)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_err(name, format!("must be non-negative, got {v}")));
            }
        }
        let spec = SystemSpec::new(target, m, g, gamma, nbar, kappa).map_err(|e| config_err("system", e))?;

        let tau = std::f64::consts::PI / (2.0 * g);
        let default_horizon = if mode == Mode::Fig2b { 1.5 * tau } else { tau };
        let horizon = args.horizon.or(file.run.horizon).unwrap_or(default_horizon);
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(config_err("horizon", format!("must be positive, got {horizon}")));
        }
        let sample_dt = args.sample_dt.or(file.run.sample_dt).unwrap_or(1e-3 / g);
        if !(sample_dt.is_finite() && sample_dt > 0.0) {
            return Err(config_err("sample_dt", format!("must be positive, got {sample_dt}")));
        }
        let protocol_source = ProtocolSource::parse(args.protocol.as_deref().or(file.run.protocol.as_deref()).unwrap_or("eq1"));
        let out_dir = args.out.clone().or(file.run.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        let seed = args.seed.or(file.run.seed).unwrap_or(0);

        let opt = &file.optimizer;
        let mut optimizer = OptimizationConfig::new(&spec);
        optimizer.seed = seed;
        optimizer.objective_time = opt.objective_time.unwrap_or(horizon);
        if let Some(k) = args.segments.or(opt.segments) {
            optimizer.num_segments = k;
        }
        if let Some(v) = args.max_iterations.or(opt.max_iterations) {
            optimizer.max_iterations = v;
        }
        if let Some(v) = opt.gradient_step {
            optimizer.gradient_step = v;
        }
        if let Some(v) = opt.convergence_tol {
            optimizer.convergence_tol = v;
        }
        if let Some(v) = opt.integration_step {
            optimizer.integration_step = v;
        }
        if let Some(v) = &opt.gradient {
            optimizer.gradient = match v.as_str() {
                "adjoint" => GradientMethod::Adjoint,
                "central" => GradientMethod::Central,
                other => return Err(config_err("optimizer.gradient", format!("expected `adjoint` or `central`, got `{other}`"))),
            };
        }
        optimizer.validate().map_err(|e| config_err("optimizer", e))?;
        let restarts = args.restarts.or(opt.restarts).unwrap_or(1);
        if restarts == 0 {
            return Err(config_err("restarts", "must be at least 1"));
        }
        Ok(RunConfig { mode, spec, protocol_source, horizon, sample_dt, out_dir, seed, restarts, optimizer })
    }

    fn load_protocol(&self) -> CliResult<ControlProtocol> {
        let protocol = match &self.protocol_source {
            ProtocolSource::Eq1 => ControlProtocol::constant(optimal_hamiltonian(&self.spec), self.horizon, self.spec.g)?,
            ProtocolSource::Zero => ControlProtocol::constant(
                crate::operators::HermitianOperator::zeros(self.spec.dim()),
                self.horizon,
                self.spec.g,
            )?,
            ProtocolSource::File(path) => {
                let text = fs::read_to_string(path).map_err(|e| config_err("protocol", format!("{}: {e}", path.display())))?;
                let p = ControlProtocol::from_json(&text).map_err(|e| config_err("protocol", e))?;
                if (p.horizon - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
                    return Err(config_err(
                        "horizon",
                        format!("{} differs from the protocol file's horizon {}", self.horizon, p.horizon),
                    ));
                }
                p
            }
        };
        protocol.validate(&self.spec).map_err(|e| config_err("protocol", e))?;
        Ok(protocol)
    }
}

/// The closed-form limit that applies to the target kind.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticLimit {
    /// `qubit` or `oscillator`.
    pub formula: &'static str,
    #[serde(flatten)]
    pub report: CoolingLimitReport,
    /// Whether the auxiliary has the `2N − 1` levels the formulas assume.
    pub auxiliary_complete: bool,
}

pub fn analytic_limit(spec: &SystemSpec) -> crate::Result<AnalyticLimit> {
    let (formula, report) = match spec.target {
        SystemKind::Qubit => ("qubit", pmin_qubit(spec.gamma, spec.g, excited_population(spec.nbar))?),
        SystemKind::Oscillator { .. } => ("oscillator", pmin_oscillator(spec.gamma, spec.g, spec.nbar)?),
    };
    Ok(AnalyticLimit { formula, report, auxiliary_complete: spec.aux_dim + 1 >= 2 * spec.target_dim() })
}

/// Thermal weight `(n̄/(1+n̄))^N` beyond the highest kept oscillator level.
pub fn truncation_estimate(spec: &SystemSpec) -> f64 {
    match spec.target {
        SystemKind::Qubit => 0.0,
        SystemKind::Oscillator { levels } => (spec.nbar / (1.0 + spec.nbar)).powi(levels as i32),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub auxcool: &'static str,
}

const VERSIONS: Versions = Versions { auxcool: env!("CARGO_PKG_VERSION") };

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub min_one_minus_pg: f64,
    pub min_time: f64,
    pub final_one_minus_pg: f64,
    pub horizon: f64,
    pub analytic: AnalyticLimit,
    pub truncation_estimate: f64,
    /// Set when the truncation estimate exceeds 1% of the analytic limit.
    pub truncation_warning: bool,
    pub wall_clock_seconds: f64,
    pub config: RunConfig,
    pub versions: Versions,
}

impl RunSummary {
    fn new(config: &RunConfig, curve: &CurveData, started: Instant) -> crate::Result<Self> {
        let (min_time, min_one_minus_pg) = curve.min();
        let analytic = analytic_limit(&config.spec)?;
        let truncation = truncation_estimate(&config.spec);
        Ok(RunSummary {
            min_one_minus_pg,
            min_time,
            final_one_minus_pg: *curve.one_minus_pg.last().expect("non-empty curve"),
            horizon: *curve.times.last().expect("non-empty curve"),
            truncation_warning: truncation > 0.01 * analytic.report.p_min,
            truncation_estimate: truncation,
            analytic,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            config: config.clone(),
            versions: VERSIONS,
        })
    }
}

/// Sampled `P_g` curve as written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveData {
    pub times: Vec<f64>,
    pub pg: Vec<f64>,
    pub one_minus_pg: Vec<f64>,
}

impl CurveData {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut rows: Vec<(f64, f64)> = traj.times.iter().copied().zip(traj.ground_pop.iter().copied()).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        CurveData {
            times: rows.iter().map(|r| r.0).collect(),
            pg: rows.iter().map(|r| r.1).collect(),
            one_minus_pg: rows.iter().map(|r| 1.0 - r.1).collect(),
        }
    }

    /// `(time, value)` of the smallest `1 − P_g`; earliest on ties.
    pub fn min(&self) -> (f64, f64) {
        let mut best = (self.times[0], self.one_minus_pg[0]);
        for (t, v) in self.times.iter().zip(&self.one_minus_pg) {
            if *v < best.1 {
                best = (*t, *v);
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,pg,one_minus_pg\n");
        for ((t, p), q) in self.times.iter().zip(&self.pg).zip(&self.one_minus_pg) {
            s.push_str(&format!("{t:?},{p:?},{q:?}\n"));
        }
        s
    }
}

/// One labelled curve for [`emit_plot_data`].
#[derive(Debug, Clone)]
pub struct PlotCurve {
    pub label: String,
    pub spec: SystemSpec,
    pub data: CurveData,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub label: String,
    pub file: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub nbar: f64,
    pub gamma: f64,
    pub g: f64,
    pub kappa: f64,
    pub samples: usize,
    pub min_one_minus_pg: f64,
    pub min_time: f64,
    pub analytic_p_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub curves: Vec<ManifestEntry>,
}

/// Writes `<label>.csv` for every curve plus `manifest.json`. Empty labels
/// become `curve_<index>`.
pub fn emit_plot_data(curves: &[PlotCurve], dir: &Path) -> CliResult<Manifest> {
    if curves.is_empty() {
        return Err(CliError::Config("no curves to write".into()));
    }
    ensure_dir(dir)?;
    let mut entries = Vec::with_capacity(curves.len());
    for (i, c) in curves.iter().enumerate() {
        let label = if c.label.is_empty() { format!("curve_{i}") } else { c.label.clone() };
        let file = format!("{label}.csv");
        write_file(&dir.join(&file), &c.data.to_csv())?;
        let (min_time, min_one_minus_pg) = c.data.min();
        entries.push(ManifestEntry {
            label,
            file,
            n: c.spec.target_dim(),
            m: c.spec.aux_dim,
            nbar: c.spec.nbar,
            gamma: c.spec.gamma,
            g: c.spec.g,
            kappa: c.spec.kappa,
            samples: c.data.times.len(),
            min_one_minus_pg,
            min_time,
            analytic_p_min: analytic_limit(&c.spec)?.report.p_min,
        });
    }
    let manifest = Manifest { curves: entries };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| config_err("out", format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| config_err("out", format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    write_file(path, &(text + "\n"))
}

/// Reference scenarios of the two figure modes: `(N, M, n̄)`.
pub const FIGURE_CURVES: [(usize, usize, f64); 3] = [(2, 3, 0.5), (4, 4, 0.5), (4, 4, 0.1)];

pub fn figure_specs(mode: Mode) -> Vec<SystemSpec> {
    let kappa = if mode == Mode::Fig2b { 1.0 } else { 0.0 };
    FIGURE_CURVES
        .iter()
        .map(|&(n, m, nbar)| {
            let target = SystemKind::from_dim(n).expect("valid figure dimension");
            SystemSpec::new(target, m, 1.0, 0.01, nbar, kappa).expect("valid figure spec")
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct LimitsOutput {
    #[serde(flatten)]
    analytic: AnalyticLimit,
    truncation_estimate: f64,
    versions: Versions,
}

#[derive(Debug, Clone, Serialize)]
struct OptimizeSummary {
    #[serde(flatten)]
    run: RunSummary,
    parameter_count: usize,
    best_pg: f64,
    seed: u64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    stop: crate::bfgs::StopReason,
    restart_best_pg: Vec<f64>,
    comparison: ConjectureComparison,
}

/// Executes one resolved run and returns the files written.
pub fn run(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let started = Instant::now();
    let out = &config.out_dir;
    ensure_dir(out)?;
    let spec = &config.spec;
    let mut written = Vec::new();
    match config.mode {
        Mode::Simulate => {
            let protocol = config.load_protocol()?;
            let traj = evolve(&initial_state(spec)?, &protocol, spec, config.sample_dt)?;
            let curve = CurveData::from_trajectory(&traj);
            let csv = out.join("trajectory.csv");
            write_file(&csv, &curve.to_csv())?;
            let summary = out.join("summary.json");
            write_json(&summary, &RunSummary::new(config, &curve, started)?)?;
            written.extend([csv, summary]);
        }
        Mode::Optimize => {
            let results = optimize_restarts(spec, &config.optimizer, config.restarts)?;
            let best = &results[0];
            let traj = evolve(&initial_state(spec)?, &best.best_protocol, spec, config.sample_dt)?;
            let curve = CurveData::from_trajectory(&traj);
            let comparison = compare_to_conjecture(best, spec, config.sample_dt)?;
            let protocol = out.join("protocol.json");
            write_file(&protocol, &(best.best_protocol.to_json() + "\n"))?;
            let mut hist = String::from("iteration,pg,one_minus_pg\n");
            for (i, pg) in best.objective_history.iter().enumerate() {
                hist.push_str(&format!("{i},{pg:?},{:?}\n", 1.0 - pg));
            }
            let history = out.join("history.csv");
            write_file(&history, &hist)?;
            let csv = out.join("trajectory.csv");
            write_file(&csv, &curve.to_csv())?;
            let summary = OptimizeSummary {
                run: RunSummary::new(config, &curve, started)?,
                parameter_count: crate::optimizer::parameter_count(spec, config.optimizer.num_segments),
                best_pg: best.best_pg,
                seed: best.seed,
                iterations: best.iterations,
                evaluations: best.evaluations,
                converged: best.converged,
                stop: best.stop,
                restart_best_pg: results.iter().map(|r| r.best_pg).collect(),
                comparison,
            };
            let summary_path = out.join("summary.json");
            write_json(&summary_path, &summary)?;
            written.extend([protocol, history, csv, summary_path]);
        }
        Mode::Limits => {
            let path = out.join("limits.json");
            let output = LimitsOutput {
                analytic: analytic_limit(spec)?,
                truncation_estimate: truncation_estimate(spec),
                versions: VERSIONS,
            };
            write_json(&path, &output)?;
            written.push(path);
        }
        Mode::Fig2a | Mode::Fig2b => {
            let mut curves = Vec::new();
            for s in figure_specs(config.mode) {
                let eq1 = ControlProtocol::constant(optimal_hamiltonian(&s), config.horizon, s.g)?;
                let traj = evolve(&initial_state(&s)?, &eq1, &s, config.sample_dt)?;
                let label = format!("N{}_M{}_nbar{}", s.target_dim(), s.aux_dim, s.nbar);
                curves.push(PlotCurve { label, spec: s, data: CurveData::from_trajectory(&traj) });
            }
            let manifest = emit_plot_data(&curves, out)?;
            written.extend(manifest.curves.iter().map(|e| out.join(&e.file)));
            written.push(out.join("manifest.json"));
        }
    }
    Ok(written)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (mode, args) = match &cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Optimize(a) => (Mode::Optimize, a),
        Command::Limits(a) => (Mode::Limits, a),
        Command::Fig2a(a) => (Mode::Fig2a, a),
        Command::Fig2b(a) => (Mode::Fig2b, a),
    };
    let result = RunConfig::resolve(mode, args).and_then(|c| run(&c));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("auxcool: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(out: &Path) -> CommonArgs {
        CommonArgs { out: Some(out.to_path_buf()), sample_dt: Some(0.01), ..Default::default() }
    }

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::resolve(Mode::Simulate, &CommonArgs::default()).unwrap();
        assert_eq!(c.spec.target, SystemKind::Qubit);
        assert_eq!(c.spec.aux_dim, 3);
        assert!((c.horizon - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(c.protocol_source, ProtocolSource::Eq1);
        let b = RunConfig::resolve(Mode::Fig2b, &CommonArgs::default()).unwrap();
        assert!((b.horizon - 0.75 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[system]\nN = 4\nM = 7\nnbar = 0.1\n[run]\nhorizon = 2.0\n[optimizer]\nsegments = 4\n").unwrap();
        let a = CommonArgs { config: Some(path), m: Some(5), ..Default::default() };
        let c = RunConfig::resolve(Mode::Optimize, &a).unwrap();
        assert_eq!(c.spec.target, SystemKind::Oscillator { levels: 4 });
        assert_eq!(c.spec.aux_dim, 5);
        assert_eq!(c.spec.nbar, 0.1);
        assert_eq!(c.horizon, 2.0);
        assert_eq!(c.optimizer.objective_time, 2.0);
        assert_eq!(c.optimizer.num_segments, 4);
    }

    #[test]
    fn invalid_fields_are_named() {
        let bad = [
            CommonArgs { nbar: Some(-1.0), ..Default::default() },
            CommonArgs { horizon: Some(0.0), ..Default::default() },
            CommonArgs { m: Some(1), ..Default::default() },
            CommonArgs { n: Some(1), ..Default::default() },
            CommonArgs { sample_dt: Some(-0.1), ..Default::default() },
        ];
        for (a, field) in bad.iter().zip(["nbar", "horizon", "M", "N", "sample_dt"]) {
            let e = RunConfig::resolve(Mode::Simulate, a).unwrap_err();
            assert_eq!(e.exit_code(), EXIT_CONFIG);
            assert!(e.to_string().contains(&format!("`{field}`")), "{e}");
        }
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[system]\nnbarr = 0.1\n").unwrap();
        let e = RunConfig::resolve(Mode::Simulate, &CommonArgs { config: Some(path), ..Default::default() }).unwrap_err();
        assert!(e.to_string().contains("nbarr"), "{e}");
    }

    #[test]
    fn limits_json_values() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::resolve(Mode::Limits, &args(dir.path())).unwrap();
        run(&c).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("limits.json")).unwrap()).unwrap();
        assert!((v["tau"].as_f64().unwrap() - 1.5708).abs() < 1e-4);
        assert!((v["p_min"].as_f64().unwrap() - 3.682e-3).abs() < 1e-6);
        assert_eq!(v["formula"], "qubit");
    }

    #[test]
    fn zero_protocol_is_flat() {
        let dir = tempfile::tempdir().unwrap();
        let a = CommonArgs { protocol: Some("zero".into()), ..args(dir.path()) };
        run(&RunConfig::resolve(Mode::Simulate, &a).unwrap()).unwrap();
        let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        for line in csv.lines().skip(1) {
            let pg: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!((pg - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn plot_data_single_curve_and_default_label() {
        let dir = tempfile::tempdir().unwrap();
        let spec = figure_specs(Mode::Fig2a)[0];
        let data = CurveData { times: vec![0.0, 0.5, 1.0], pg: vec![0.75, 0.8, 0.9], one_minus_pg: vec![0.25, 0.2, 0.1] };
        let m = emit_plot_data(&[PlotCurve { label: String::new(), spec, data }], dir.path()).unwrap();
        assert_eq!(m.curves[0].label, "curve_0");
        let csv = fs::read_to_string(dir.path().join("curve_0.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(dir.path().join("manifest.json").exists());
        assert!(emit_plot_data(&[], dir.path()).is_err());
    }

    #[test]
    fn csv_is_sorted_and_full_precision() {
        let data = CurveData { times: vec![0.0, 0.1], pg: vec![0.1 + 0.2, 1.0 / 3.0], one_minus_pg: vec![0.7, 2.0 / 3.0] };
        let csv = data.to_csv();
        let row: Vec<f64> = csv.lines().nth(2).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, 1.0 / 3.0, 2.0 / 3.0]);
        assert!(csv.lines().nth(1).unwrap().starts_with("0.0,0.30000000000000004,"));
    }

    #[test]
    fn truncation_estimate_is_geometric_tail() {
        let s = SystemSpec::new(SystemKind::Oscillator { levels: 4 }, 7, 1.0, 0.01, 0.1, 0.0).unwrap();
        assert!((truncation_estimate(&s) - (0.1f64 / 1.1).powi(4)).abs() < 1e-18);
        let q = SystemSpec::new(SystemKind::Qubit, 3, 1.0, 0.01, 0.5, 0.0).unwrap();
        assert_eq!(truncation_estimate(&q), 0.0);
    }
}
