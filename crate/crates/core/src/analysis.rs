//! Dual-network construction, asymptotic density evolution, the capacity
//! region polytope and activation plans that reach points inside it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degree_dist::{mix_distributions, DegreeDistribution, DistError};
use crate::sic::{analytic_slot_dist, SlotCounts, SlotDegreeHistogram};
use crate::sim::{
    peak, run_simulation, sweep_load, LoadVector, NetworkSpec, SimError, SimOptions, SimReport,
    SweepPoint,
};
use crate::round_half_up;

/// Residual edge-erasure probability below which a load counts as fully
/// resolved.
pub const DE_RESOLVED: f64 = 1e-6;
pub const DE_MAX_ITERS: usize = 1_000_000;
pub const DE_STEP_TOL: f64 = 1e-13;

/// Slack for boundary points in membership tests.
pub const REGION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("throughput bound T* = {0} must lie in (0, 1]")]
    InvalidThroughput(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("expected a {expected}-tuple, got {got} entries")]
    LengthMismatch { expected: usize, got: usize },
    #[error("boundary tracing needs exactly 2 classes, network has {0}")]
    NotTwoDimensional(usize),
    #[error("throughput tuple {0:?} lies outside the capacity region")]
    OutsideRegion(Vec<f64>),
    #[error("total throughput {total} exceeds the loss-free load {g_star}")]
    ExceedsThreshold { total: f64, g_star: f64 },
}

/// Single-class network with the same population whose slot-degree
/// statistics match the k-class network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualNetwork {
    pub population: usize,
    pub distribution: DegreeDistribution,
    pub load: Option<f64>,
}

impl DualNetwork {
    pub fn to_spec(&self, frame_size: usize) -> Result<NetworkSpec, SimError> {
        NetworkSpec::single(self.population, frame_size, self.distribution.clone())
    }
}

/// Dual of `spec` at `load`: N = Σ N_i users, G = G_t, and the load-weighted
/// mix of the class distributions.
pub fn make_dual(spec: &NetworkSpec, load: &LoadVector) -> Result<DualNetwork, AnalysisError> {
    if load.len() != spec.k() {
        return Err(AnalysisError::LengthMismatch { expected: spec.k(), got: load.len() });
    }
    let distribution = mix_distributions(load.as_slice(), spec.distributions())?;
    Ok(DualNetwork {
        population: spec.total_population(),
        distribution,
        load: Some(load.total()),
    })
}

fn de_step(lambda: &crate::degree_dist::EdgePerspective, edge_load: f64, x: f64) -> f64 {
    lambda.eval(1.0 - (-edge_load * x).exp())
}

/// Density-evolution recursion x ← λ(1 − exp(−G·Λ'(1)·x)) from x = 1,
/// returning every iterate. Stops once a step moves less than `tol` or after
/// `max_iters` steps.
pub fn de_trace(d: &DegreeDistribution, load: f64, max_iters: usize, tol: f64) -> Vec<f64> {
    let lambda = d.edge_perspective();
    let edge_load = load * d.mean_degree();
    let mut trace = vec![1.0];
    let mut x = 1.0;
    for _ in 0..max_iters {
        let next = de_step(&lambda, edge_load, x);
        trace.push(next);
        let done = (next - x).abs() < tol;
        x = next;
        if done {
            break;
        }
    }
    trace
}

/// Final edge-erasure probability of the density-evolution recursion.
pub fn de_iterate(d: &DegreeDistribution, load: f64, max_iters: usize, tol: f64) -> f64 {
    let lambda = d.edge_perspective();
    let edge_load = load * d.mean_degree();
    let mut x = 1.0;
    for _ in 0..max_iters {
        let next = de_step(&lambda, edge_load, x);
        let done = (next - x).abs() < tol;
        x = next;
        if done {
            break;
        }
    }
    x
}

fn resolves(d: &DegreeDistribution, load: f64) -> bool {
    de_iterate(d, load, DE_MAX_ITERS, DE_STEP_TOL) < DE_RESOLVED
}

/// Largest load in [0, 1] at which density evolution resolves every user,
/// found by bisection to within `tol`. Distributions whose residual can
/// never drop below [`DE_RESOLVED`] (any single-replica mass large enough,
/// in particular Λ(x) = x) have threshold 0.
pub fn de_threshold(d: &DegreeDistribution, tol: f64) -> Result<f64, AnalysisError> {
    if !(tol > 0.0) {
        return Err(AnalysisError::InvalidTolerance(tol));
    }
    let lambda = d.edge_perspective();
    if lambda.is_constant() || lambda.eval(0.0) >= DE_RESOLVED {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if resolves(d, hi) {
        return Ok(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if resolves(d, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Peak of a finite-length throughput curve, standing in for (G*, T*) of
/// the optimal dual network at finite N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteOptimum {
    pub g_star: f64,
    pub t_star: f64,
    /// Grid spacing around the peak.
    pub g_uncertainty: f64,
    pub curve: Vec<SweepPoint>,
}

/// Sweeps a single-class network of `population` users over `grid` and
/// returns the argmax of the throughput curve.
pub fn finite_optimum(
    population: usize,
    frame_size: usize,
    dist: &DegreeDistribution,
    grid: &[f64],
    opts: &SimOptions,
) -> Result<FiniteOptimum, AnalysisError> {
    let spec = NetworkSpec::single(population, frame_size, dist.clone())?;
    let curve = sweep_load(&spec, &[1.0], grid, opts)?;
    let best = peak(&curve).expect("sweep_load rejects empty grids");
    let (g_star, t_star) = (best.total_load, best.report.total_throughput);
    let g_uncertainty = grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    Ok(FiniteOptimum {
        g_star,
        t_star,
        g_uncertainty,
        curve,
    })
}

/// Throughput polytope {T ≥ 0 : T_i ≤ c_i, Σ T_i ≤ s} with
/// c_i = min(T*, N_i/M) and s = min(T*, Σ N_i/M).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRegion {
    pub class_caps: Vec<f64>,
    pub sum_cap: f64,
    pub t_star: f64,
    /// Built with T* = 1: the bound that holds for any network size.
    pub outer_bound: bool,
}

pub fn capacity_region(spec: &NetworkSpec, t_star: f64) -> Result<CapacityRegion, AnalysisError> {
    if !(t_star > 0.0 && t_star <= 1.0) {
        return Err(AnalysisError::InvalidThroughput(t_star));
    }
    let m = spec.frame_size() as f64;
    let class_caps = spec.populations().iter().map(|&n| t_star.min(n as f64 / m)).collect();
    let sum_cap = t_star.min(spec.total_population() as f64 / m);
    Ok(CapacityRegion { class_caps, sum_cap, t_star, outer_bound: t_star == 1.0 })
}

/// Region with T* = 1, an outer bound for any finite network.
pub fn outer_bound(spec: &NetworkSpec) -> CapacityRegion {
    capacity_region(spec, 1.0).expect("T* = 1 is valid")
}

impl CapacityRegion {
    pub fn k(&self) -> usize {
        self.class_caps.len()
    }

    /// Closed-region membership. Negative entries are outside.
    pub fn contains(&self, t: &[f64]) -> Result<bool, AnalysisError> {
        if t.len() != self.k() {
            return Err(AnalysisError::LengthMismatch { expected: self.k(), got: t.len() });
        }
        let per_class = t
            .iter()
            .zip(&self.class_caps)
            .all(|(&ti, &ci)| ti >= 0.0 && ti <= ci + REGION_TOL);
        Ok(per_class && t.iter().sum::<f64>() <= self.sum_cap + REGION_TOL)
    }

    /// Counter-clockwise polygon of a two-class region starting at the
    /// origin. With `resolution > 1` each edge is split into that many
    /// segments for plotting.
    pub fn boundary_2d(&self, resolution: usize) -> Result<Vec<(f64, f64)>, AnalysisError> {
        let [c1, c2] = self.class_caps[..] else {
            return Err(AnalysisError::NotTwoDimensional(self.k()));
        };
        let s = self.sum_cap;
        let mut corners = vec![(0.0, 0.0), (c1, 0.0)];
        if c1 + c2 > s + REGION_TOL {
            corners.push((c1, s - c1));
            corners.push((s - c2, c2));
        } else {
            corners.push((c1, c2));
        }
        corners.push((0.0, c2));
        corners.dedup_by(|a, b| (a.0 - b.0).abs() <= REGION_TOL && (a.1 - b.1).abs() <= REGION_TOL);
        if corners.len() > 1 {
            let (first, last) = (corners[0], corners[corners.len() - 1]);
            if (first.0 - last.0).abs() <= REGION_TOL && (first.1 - last.1).abs() <= REGION_TOL {
                corners.pop();
            }
        }
        if resolution <= 1 || corners.len() < 2 {
            return Ok(corners);
        }
        let n = corners.len();
        let mut points = Vec::with_capacity(n * resolution);
        for i in 0..n {
            let (a, b) = (corners[i], corners[(i + 1) % n]);
            for j in 0..resolution {
                let f = j as f64 / resolution as f64;
                points.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
            }
        }
        Ok(points)
    }
}

/// How to reach a throughput tuple: activate `active[i]` users of class i per
/// frame, all using the common distribution, keeping the dual network below
/// its loss-free load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationPlan {
    pub target: Vec<f64>,
    pub active: Vec<usize>,
    pub distribution: DegreeDistribution,
    pub load: LoadVector,
    /// target_i − active_i/M, the rounding shortfall (|·| ≤ 1/(2M)).
    pub shortfall: Vec<f64>,
}

impl ActivationPlan {
    /// The network with every class switched to the plan's distribution.
    pub fn network(&self, spec: &NetworkSpec) -> NetworkSpec {
        spec.with_common_distribution(&self.distribution)
    }
}

pub fn achievability_plan(
    target: &[f64],
    region: &CapacityRegion,
    spec: &NetworkSpec,
    g_star: f64,
    optimal: &DegreeDistribution,
) -> Result<ActivationPlan, AnalysisError> {
    if target.len() != spec.k() {
        return Err(AnalysisError::LengthMismatch { expected: spec.k(), got: target.len() });
    }
    if !region.contains(target)? {
        return Err(AnalysisError::OutsideRegion(target.to_vec()));
    }
    let m = spec.frame_size();
    let total: f64 = target.iter().sum();
    let active: Vec<usize> = target.iter().map(|&t| round_half_up(t * m as f64)).collect();
    let planned = active.iter().sum::<usize>() as f64 / m as f64;
    if total > g_star + REGION_TOL || planned > g_star + REGION_TOL {
        return Err(AnalysisError::ExceedsThreshold { total: total.max(planned), g_star });
    }
    let loads: Vec<f64> = active.iter().map(|&l| l as f64 / m as f64).collect();
    let shortfall = target.iter().zip(&loads).map(|(t, g)| t - g).collect();
    Ok(ActivationPlan {
        target: target.to_vec(),
        active,
        distribution: optimal.clone(),
        load: LoadVector::new(loads)?,
        shortfall,
    })
}

/// Side-by-side run of a k-class network and its dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCheck {
    pub dual: DualNetwork,
    pub multi_report: SimReport,
    pub dual_report: SimReport,
    pub multi_slots: SlotDegreeHistogram,
    pub dual_slots: SlotDegreeHistogram,
    /// Binomial slot-degree law for the realized active count.
    pub analytic_slots: SlotDegreeHistogram,
    /// Total-variation distance between the two empirical histograms.
    pub total_variation: f64,
}

impl DualCheck {
    /// Whether the two 95% intervals of total throughput overlap.
    pub fn throughput_intervals_overlap(&self) -> bool {
        let (a, b) = (&self.multi_report, &self.dual_report);
        (a.total_throughput - b.total_throughput).abs() <= a.total_ci95 + b.total_ci95
    }
}

/// Simulates `spec` at `load` and its dual at the same total load, on
/// separate substreams of `opts.seed`, and compares slot statistics.
pub fn dual_check(
    spec: &NetworkSpec,
    load: &LoadVector,
    opts: &SimOptions,
) -> Result<DualCheck, AnalysisError> {
    let dual = make_dual(spec, load)?;
    let active: usize = load.checked_counts(spec)?.iter().sum();
    let m = spec.frame_size();
    let dual_spec = dual.to_spec(m)?;
    let dual_load = LoadVector::new(vec![active as f64 / m as f64])?;

    let multi_opts = SimOptions { stream: 0, ..opts.clone() }.with_slot_histogram();
    let dual_opts = SimOptions { stream: 1, ..opts.clone() }.with_slot_histogram();
    let multi_report = run_simulation(spec, load, &multi_opts)?;
    let dual_report = run_simulation(&dual_spec, &dual_load, &dual_opts)?;
    let hist = |r: &SimReport| r.slot_counts.as_ref().map(SlotCounts::histogram).unwrap_or_default();
    let multi_slots = hist(&multi_report);
    let dual_slots = hist(&dual_report);
    let analytic_slots = analytic_slot_dist(
        active as f64 / m as f64,
        dual.distribution.mean_degree(),
        m,
        active,
    )
    .map_err(SimError::from)?;
    let total_variation = multi_slots.total_variation(&dual_slots);
    Ok(DualCheck {
        dual,
        multi_report,
        dual_report,
        multi_slots,
        dual_slots,
        analytic_slots,
        total_variation,
    })
}
