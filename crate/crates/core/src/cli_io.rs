//! Experiment configuration (JSON) and CSV emission for the `irsa-sim` CLI.
//!
//! Every CSV starts with two `#` metadata lines: tool version, experiment,
//! seed and a SHA-256 hash of the resolved configuration, followed by the
//! resolved configuration itself with all defaults filled in.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::degree_dist::DegreeDistribution;
use crate::scheduling::Policy;
use crate::sim::{self, LoadVector, NetworkSpec, SimError, SimOptions};

pub const DEFAULT_FRAMES: u64 = 10_000;
pub const DEFAULT_GRID: (f64, f64, f64) = (0.05, 1.0, 0.05);
pub const DEFAULT_THRESHOLD_TOL: f64 = 1e-4;
pub const DEFAULT_RESOLUTION: usize = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config at `{path}`: {message}")]
    Validation { path: String, message: String },
}

impl ConfigError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Validation { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sweep,
    Region,
    Delay,
    DualCheck,
    Threshold,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Region => "region",
            ExperimentKind::Delay => "delay",
            ExperimentKind::DualCheck => "dual_check",
            ExperimentKind::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    population: usize,
    #[serde(default)]
    distribution: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    load: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default)]
    start: Option<f64>,
    #[serde(default)]
    stop: Option<f64>,
    #[serde(default)]
    step: Option<f64>,
    #[serde(default)]
    points: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    experiment: Option<ExperimentKind>,
    #[serde(default)]
    frame_size: Option<usize>,
    #[serde(default)]
    classes: Vec<RawClass>,
    #[serde(default)]
    distribution: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    optimal_distribution: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    policy: Option<Policy>,
    #[serde(default)]
    frames: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    grid: Option<RawGrid>,
    #[serde(default)]
    direction: Option<Vec<f64>>,
    #[serde(default)]
    t_star: Option<f64>,
    #[serde(default)]
    resolution: Option<usize>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    trace_load: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConfig {
    pub population: usize,
    pub distribution: DegreeDistribution,
    pub load: Option<f64>,
}

/// A validated experiment with every default made explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub frame_size: Option<usize>,
    pub classes: Vec<ClassConfig>,
    pub policy: Policy,
    pub frames: u64,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub direction: Vec<f64>,
    /// Fixed T* for `region`; when absent it is measured from the optimal
    /// dual network's throughput curve.
    pub t_star: Option<f64>,
    pub optimal_distribution: DegreeDistribution,
    pub resolution: usize,
    pub tol: f64,
    /// Distribution analysed by `threshold`.
    pub distribution: Option<DegreeDistribution>,
    /// When set, `threshold` emits the density-evolution trace at this load.
    pub trace_load: Option<f64>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

/// Command-line values that override or complete the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

fn parse_distribution(
    raw: &BTreeMap<String, f64>,
    path: &str,
) -> Result<DegreeDistribution, ConfigError> {
    let mut probs = Vec::with_capacity(raw.len());
    for (key, &p) in raw {
        let degree: u32 = key
            .trim()
            .parse()
            .map_err(|_| ConfigError::invalid(path, format!("degree key {key:?} is not an integer")))?;
        probs.push((degree, p));
    }
    DegreeDistribution::new(probs).map_err(|e| ConfigError::invalid(path, e.to_string()))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;

    let experiment = match (raw.experiment, overrides.experiment) {
        (Some(a), Some(b)) if a != b => {
            return Err(ConfigError::invalid(
                "experiment",
                format!("config says {} but {} was requested", a.as_str(), b.as_str()),
            ))
        }
        (a, b) => b.or(a).ok_or_else(|| ConfigError::invalid("experiment", "missing"))?,
    };
    let seed = overrides
        .seed
        .or(raw.seed)
        .ok_or_else(|| ConfigError::invalid("seed", "a seed is required"))?;

    let optimal_distribution = match &raw.optimal_distribution {
        Some(d) => parse_distribution(d, "optimal_distribution")?,
        None => DegreeDistribution::optimal_irsa(),
    };
    let mut classes = Vec::with_capacity(raw.classes.len());
    for (i, c) in raw.classes.iter().enumerate() {
        if c.population == 0 {
            return Err(ConfigError::invalid(format!("classes[{i}].population"), "must be at least 1"));
        }
        let distribution = match &c.distribution {
            Some(d) => parse_distribution(d, &format!("classes[{i}].distribution"))?,
            None => optimal_distribution.clone(),
        };
        if let Some(g) = c.load {
            if !(g.is_finite() && g >= 0.0) {
                return Err(ConfigError::invalid(format!("classes[{i}].load"), "must be a nonnegative number"));
            }
        }
        classes.push(ClassConfig { population: c.population, distribution, load: c.load });
    }

    let frames = raw.frames.unwrap_or(DEFAULT_FRAMES);
    if frames == 0 {
        return Err(ConfigError::invalid("frames", "must be at least 1"));
    }
    if raw.frame_size == Some(0) {
        return Err(ConfigError::invalid("frame_size", "must be at least 1"));
    }

    let grid = match raw.grid {
        Some(RawGrid { points: Some(points), start: None, stop: None, step: None }) => points,
        Some(RawGrid { points: Some(_), .. }) => {
            return Err(ConfigError::invalid("grid", "give either points or start/stop/step"))
        }
        Some(RawGrid { start, stop, step, points: None }) => sim::load_grid(
            start.unwrap_or(DEFAULT_GRID.0),
            stop.unwrap_or(DEFAULT_GRID.1),
            step.unwrap_or(DEFAULT_GRID.2),
        )
        .map_err(|e| ConfigError::invalid("grid", e.to_string()))?,
        None => sim::load_grid(DEFAULT_GRID.0, DEFAULT_GRID.1, DEFAULT_GRID.2)
            .expect("default grid is valid"),
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|g| !(*g >= 0.0)) {
        return Err(ConfigError::invalid("grid", "must be nonempty, nonnegative and nondecreasing"));
    }

    let direction = raw.direction.unwrap_or_else(|| vec![1.0; classes.len()]);
    let needs_network = experiment != ExperimentKind::Threshold;
    if needs_network {
        if raw.frame_size.is_none() {
            return Err(ConfigError::invalid("frame_size", "missing"));
        }
        if classes.is_empty() {
            return Err(ConfigError::invalid("classes", "at least one class is required"));
        }
        if direction.len() != classes.len() {
            return Err(ConfigError::invalid("direction", "needs one entry per class"));
        }
    }
    if matches!(experiment, ExperimentKind::Delay | ExperimentKind::DualCheck) {
        if let Some(i) = classes.iter().position(|c| c.load.is_none()) {
            return Err(ConfigError::invalid(format!("classes[{i}].load"), "missing"));
        }
    }
    if let Some(t) = raw.t_star {
        if !(t > 0.0 && t <= 1.0) {
            return Err(ConfigError::invalid("t_star", "must lie in (0, 1]"));
        }
    }
    let tol = raw.tol.unwrap_or(DEFAULT_THRESHOLD_TOL);
    if !(tol > 0.0) {
        return Err(ConfigError::invalid("tol", "must be positive"));
    }

    let distribution = match (&raw.distribution, experiment) {
        (Some(d), _) => Some(parse_distribution(d, "distribution")?),
        (None, ExperimentKind::Threshold) => Some(
            classes
                .first()
                .map(|c| c.distribution.clone())
                .unwrap_or_else(|| optimal_distribution.clone()),
        ),
        (None, _) => None,
    };

    Ok(ExperimentConfig {
        experiment,
        frame_size: raw.frame_size,
        classes,
        policy: raw.policy.unwrap_or_default(),
        frames,
        seed,
        grid,
        direction,
        t_star: raw.t_star,
        optimal_distribution,
        resolution: raw.resolution.unwrap_or(DEFAULT_RESOLUTION),
        tol,
        distribution,
        trace_load: raw.trace_load,
        output: overrides.output.clone(),
    })
}

impl ExperimentConfig {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical configuration.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn network(&self) -> Result<NetworkSpec, SimError> {
        let frame_size = self
            .frame_size
            .ok_or_else(|| SimError::InvalidSpec("frame_size missing".into()))?;
        NetworkSpec::new(
            frame_size,
            self.classes.iter().map(|c| (c.population, c.distribution.clone())),
        )
    }

    pub fn load(&self) -> Result<LoadVector, SimError> {
        LoadVector::new(self.classes.iter().map(|c| c.load.unwrap_or(0.0)).collect())
    }

    fn sim_options(&self, workers: Option<usize>) -> SimOptions {
        SimOptions {
            workers,
            ..SimOptions::new(self.policy, self.frames, self.seed)
        }
    }
}

/// Formats like C's `%.6g`.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (999999.5 -> 1e6).
    let rounded: f64 = format!("{:.*e}", (DIGITS - 1) as usize, x).parse().unwrap_or(x);
    let exp = if rounded.abs() >= 10f64.powi(exp + 1) { exp + 1 } else { exp };
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-4..DIGITS).contains(&exp) {
        trim(format!("{:.*}", (DIGITS - 1 - exp).max(0) as usize, x))
    } else {
        let s = format!("{:.*e}", (DIGITS - 1) as usize, x);
        let (mantissa, e) = s.split_once('e').expect("scientific format");
        let e: i32 = e.parse().expect("exponent");
        format!("{}e{}{:02}", trim(mantissa.to_string()), if e < 0 { '-' } else { '+' }, e.abs())
    }
}

fn header(cfg: &ExperimentConfig) -> String {
    format!(
        "# irsa-sim {} experiment={} seed={} config_hash={}\n# config={}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.experiment.as_str(),
        cfg.seed,
        cfg.config_hash(),
        cfg.canonical_json()
    )
}

fn row(fields: impl IntoIterator<Item = String>) -> String {
    let mut line = fields.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

/// Runs the configured experiment and returns the complete CSV document.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<String, RunError> {
    let mut out = header(cfg);
    match cfg.experiment {
        ExperimentKind::Sweep => sweep_csv(cfg, workers, &mut out)?,
        ExperimentKind::Region => region_csv(cfg, workers, &mut out)?,
        ExperimentKind::Delay => delay_csv(cfg, workers, &mut out)?,
        ExperimentKind::DualCheck => dual_check_csv(cfg, workers, &mut out)?,
        ExperimentKind::Threshold => threshold_csv(cfg, &mut out)?,
    }
    Ok(out)
}

/// Runs the experiment and writes the CSV to `cfg.output` (or returns it for
/// stdout). Nothing is written unless the whole run succeeds.
pub fn run_and_write(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<Option<String>, RunError> {
    let csv = run_experiment(cfg, workers)?;
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, csv)?;
            Ok(None)
        }
        None => Ok(Some(csv)),
    }
}

fn sweep_csv(cfg: &ExperimentConfig, workers: Option<usize>, out: &mut String) -> Result<(), RunError> {
    let spec = cfg.network()?;
    let curve = sim::sweep_load(&spec, &cfg.direction, &cfg.grid, &cfg.sim_options(workers))?;
    let mut cols = vec!["g_total".to_string(), "t_total".to_string()];
    cols.extend((1..=spec.k()).map(|i| format!("t_{i}")));
    cols.push("ci95".into());
    out.push_str(&row(cols));
    for p in &curve {
        let mut fields = vec![fmt_sig(p.total_load), fmt_sig(p.report.total_throughput)];
        fields.extend(p.report.throughput.iter().map(|&t| fmt_sig(t)));
        fields.push(fmt_sig(p.report.total_ci95));
        out.push_str(&row(fields));
    }
    Ok(())
}

fn region_csv(cfg: &ExperimentConfig, workers: Option<usize>, out: &mut String) -> Result<(), RunError> {
    let spec = cfg.network()?;
    let t_star = match cfg.t_star {
        Some(t) => t,
        None => {
            let optimum = analysis::finite_optimum(
                spec.total_population(),
                spec.frame_size(),
                &cfg.optimal_distribution,
                &cfg.grid,
                &cfg.sim_options(workers),
            )?;
            let _ = writeln!(
                out,
                "# measured t_star={} at g_star={} (+/- {})",
                fmt_sig(optimum.t_star),
                fmt_sig(optimum.g_star),
                fmt_sig(optimum.g_uncertainty)
            );
            optimum.t_star
        }
    };
    let region = analysis::capacity_region(&spec, t_star)?;
    let caps: Vec<String> = region.class_caps.iter().map(|&c| fmt_sig(c)).collect();
    let _ = writeln!(
        out,
        "# t_star={} class_caps={} sum_cap={}",
        fmt_sig(t_star),
        caps.join(";"),
        fmt_sig(region.sum_cap)
    );
    let vertices = region.boundary_2d(cfg.resolution)?;
    out.push_str("t_1,t_2\n");
    for (a, b) in vertices {
        out.push_str(&row([fmt_sig(a), fmt_sig(b)]));
    }
    Ok(())
}

fn delay_csv(cfg: &ExperimentConfig, workers: Option<usize>, out: &mut String) -> Result<(), RunError> {
    let spec = cfg.network()?;
    let report = sim::run_simulation(&spec, &cfg.load()?, &cfg.sim_options(workers))?;
    let d = &report.delays;
    let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
    let opt_int = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
    out.push_str("class,d_a_frames,d_a_slots,d_w_frames,samples\n");
    for i in 0..spec.k() {
        out.push_str(&row([
            (i + 1).to_string(),
            opt(d.average_frames(i)),
            opt(d.average_slots(i)),
            opt_int(d.max_frames(i)),
            d.classes[i].count.to_string(),
        ]));
    }
    out.push_str(&row([
        "network".to_string(),
        opt(d.network_average()),
        opt(d.network_average().map(|a| a * spec.frame_size() as f64)),
        opt_int(d.network_max()),
        d.samples().to_string(),
    ]));
    Ok(())
}

fn dual_check_csv(cfg: &ExperimentConfig, workers: Option<usize>, out: &mut String) -> Result<(), RunError> {
    let spec = cfg.network()?;
    let check = analysis::dual_check(&spec, &cfg.load()?, &cfg.sim_options(workers))?;
    let _ = writeln!(
        out,
        "# tv_distance={} t_total_multi={} ci95_multi={} t_total_dual={} ci95_dual={} dual_distribution={}",
        fmt_sig(check.total_variation),
        fmt_sig(check.multi_report.total_throughput),
        fmt_sig(check.multi_report.total_ci95),
        fmt_sig(check.dual_report.total_throughput),
        fmt_sig(check.dual_report.total_ci95),
        serde_json::to_string(&check.dual.distribution).expect("distribution serializes"),
    );
    out.push_str("m,psi_multi,psi_dual,psi_analytic\n");
    let len = check
        .multi_slots
        .probs
        .len()
        .max(check.dual_slots.probs.len());
    for m in 0..len {
        out.push_str(&row([
            m.to_string(),
            fmt_sig(check.multi_slots.psi(m)),
            fmt_sig(check.dual_slots.psi(m)),
            fmt_sig(check.analytic_slots.psi(m)),
        ]));
    }
    Ok(())
}

fn threshold_csv(cfg: &ExperimentConfig, out: &mut String) -> Result<(), RunError> {
    let dist = cfg
        .distribution
        .clone()
        .unwrap_or_else(|| cfg.optimal_distribution.clone());
    if let Some(load) = cfg.trace_load {
        out.push_str("iteration,x\n");
        let trace = analysis::de_trace(&dist, load, analysis::DE_MAX_ITERS, analysis::DE_STEP_TOL);
        for (i, x) in trace.iter().enumerate() {
            out.push_str(&row([i.to_string(), fmt_sig(*x)]));
        }
        return Ok(());
    }
    let g_star = analysis::de_threshold(&dist, cfg.tol)?;
    out.push_str("g_star,tol\n");
    out.push_str(&row([fmt_sig(g_star), fmt_sig(cfg.tol)]));
    Ok(())
}
