//! Multi-frame Monte Carlo simulation of a k-class IRSA network.
//!
//! Every frame draws from its own ChaCha stream keyed by `(seed, stream,
//! frame)`, so results do not depend on how frames are spread over worker
//! threads. Throughput sums are kept as integers and are therefore exact and
//! order-independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degree_dist::{DegreeDistribution, DistError};
use crate::scheduling::{ClassState, DelayStats, Policy, ScheduleError};
use crate::sic::{peel, FrameBuilder, FrameError, SlotCounts};
use crate::round_half_up;

const CHUNK_FRAMES: u64 = 1024;
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("class {class}: {active} active users exceed population {population}")]
    LoadExceedsPopulation { class: usize, active: usize, population: usize },
    #[error("expected {expected} per-class values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("invalid load: {0}")]
    InvalidLoad(String),
    #[error("invalid load grid: {0}")]
    InvalidGrid(String),
    #[error("at least one frame must be simulated")]
    NoFrames,
    #[error("worker pool: {0}")]
    WorkerPool(String),
}

/// The k-class network: per-class population and degree distribution over
/// frames of `frame_size` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    frame_size: usize,
    populations: Vec<usize>,
    distributions: Vec<DegreeDistribution>,
}

impl NetworkSpec {
    pub fn new(
        frame_size: usize,
        classes: impl IntoIterator<Item = (usize, DegreeDistribution)>,
    ) -> Result<Self, SimError> {
        let (populations, distributions): (Vec<_>, Vec<_>) = classes.into_iter().unzip();
        if frame_size == 0 {
            return Err(SimError::InvalidSpec("frame size must be at least 1".into()));
        }
        if populations.is_empty() {
            return Err(SimError::InvalidSpec("at least one class is required".into()));
        }
        if let Some(i) = populations.iter().position(|&n| n == 0) {
            return Err(SimError::InvalidSpec(format!("class {i} has no users")));
        }
        Ok(Self { frame_size, populations, distributions })
    }

    /// Single-class network.
    pub fn single(
        population: usize,
        frame_size: usize,
        dist: DegreeDistribution,
    ) -> Result<Self, SimError> {
        Self::new(frame_size, [(population, dist)])
    }

    pub fn k(&self) -> usize {
        self.populations.len()
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn populations(&self) -> &[usize] {
        &self.populations
    }

    pub fn total_population(&self) -> usize {
        self.populations.iter().sum()
    }

    pub fn distributions(&self) -> &[DegreeDistribution] {
        &self.distributions
    }

    /// Copy of this network with every class using `dist`.
    pub fn with_common_distribution(&self, dist: &DegreeDistribution) -> Self {
        Self {
            frame_size: self.frame_size,
            populations: self.populations.clone(),
            distributions: vec![dist.clone(); self.k()],
        }
    }
}

/// Per-class traffic loads G_i (active users per slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoadVector(Vec<f64>);

impl LoadVector {
    pub fn new(loads: Vec<f64>) -> Result<Self, SimError> {
        if let Some(i) = loads.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(SimError::InvalidLoad(format!("G_{} = {}", i + 1, loads[i])));
        }
        Ok(Self(loads))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// L_i = round(M·G_i), halves rounded up.
    pub fn active_counts(&self, frame_size: usize) -> Vec<usize> {
        self.0.iter().map(|&g| round_half_up(g * frame_size as f64)).collect()
    }

    /// Active counts checked against the network's class populations.
    pub fn checked_counts(&self, spec: &NetworkSpec) -> Result<Vec<usize>, SimError> {
        if self.len() != spec.k() {
            return Err(SimError::LengthMismatch { expected: spec.k(), got: self.len() });
        }
        let counts = self.active_counts(spec.frame_size());
        for (class, (&active, &population)) in counts.iter().zip(spec.populations()).enumerate() {
            if active > population {
                return Err(SimError::LoadExceedsPopulation { class, active, population });
            }
        }
        Ok(counts)
    }
}

/// Per-class outcome of one frame.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameResult {
    pub successes: Vec<usize>,
    pub activated: Vec<usize>,
}

/// Random stream for frame `frame` of stream `stream` under master `seed`.
pub fn frame_rng(seed: u64, stream: u64, frame: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(frame);
    rng
}

/// Users selected per class and which of them decoded.
#[derive(Debug, Clone, Default)]
struct FrameOutcome {
    activated: Vec<Vec<usize>>,
    decoded: Vec<Vec<usize>>,
    occupancy_hist: Vec<u64>,
}

/// Samples degrees, places replicas, peels, and splits decoded users back
/// into their classes.
fn transmit(
    spec: &NetworkSpec,
    activated: Vec<Vec<usize>>,
    builder: &mut FrameBuilder,
    rng: &mut ChaCha8Rng,
    want_hist: bool,
) -> Result<FrameOutcome, SimError> {
    let mut degrees = Vec::with_capacity(activated.iter().map(Vec::len).sum());
    for (users, dist) in activated.iter().zip(spec.distributions()) {
        degrees.extend(users.iter().map(|_| dist.sample_degree(rng) as usize));
    }
    let frame = builder.build(&degrees, rng)?;
    let result = peel(&frame);
    let mut decoded = vec![Vec::new(); activated.len()];
    let mut class = 0;
    let mut class_start = 0;
    for global in result.decoded {
        while global >= class_start + activated[class].len() {
            class_start += activated[class].len();
            class += 1;
        }
        decoded[class].push(activated[class][global - class_start]);
    }
    let mut occupancy_hist = Vec::new();
    if want_hist {
        for &occ in frame.occupancy() {
            let m = occ as usize;
            if m >= occupancy_hist.len() {
                occupancy_hist.resize(m + 1, 0);
            }
            occupancy_hist[m] += 1;
        }
    }
    Ok(FrameOutcome { activated, decoded, occupancy_hist })
}

fn book(
    outcome: &FrameOutcome,
    states: &mut [ClassState],
    delays: &mut DelayStats,
    frame: u64,
) -> Result<FrameResult, SimError> {
    let mut result = FrameResult::default();
    for (i, state) in states.iter_mut().enumerate() {
        state.record_outcome(
            &outcome.activated[i],
            &outcome.decoded[i],
            frame,
            &mut delays.classes[i],
        )?;
        result.activated.push(outcome.activated[i].len());
        result.successes.push(outcome.decoded[i].len());
    }
    Ok(result)
}

/// Runs one frame: selects users by the class policies, transmits, decodes,
/// and books delays.
pub fn run_frame(
    spec: &NetworkSpec,
    load: &LoadVector,
    states: &mut [ClassState],
    delays: &mut DelayStats,
    frame: u64,
    rng: &mut ChaCha8Rng,
) -> Result<FrameResult, SimError> {
    let counts = load.checked_counts(spec)?;
    if states.len() != spec.k() {
        return Err(SimError::LengthMismatch { expected: spec.k(), got: states.len() });
    }
    let mut activated = Vec::with_capacity(spec.k());
    for (state, &count) in states.iter_mut().zip(&counts) {
        activated.push(state.select(count, rng)?);
    }
    let mut builder = FrameBuilder::new(spec.frame_size());
    let outcome = transmit(spec, activated, &mut builder, rng, false)?;
    book(&outcome, states, delays, frame)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub policy: Policy,
    pub frames: u64,
    pub seed: u64,
    /// Substream index; sweeps give each grid point its own.
    pub stream: u64,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
    pub collect_slot_histogram: bool,
}

impl SimOptions {
    pub fn new(policy: Policy, frames: u64, seed: u64) -> Self {
        Self { policy, frames, seed, stream: 0, workers: None, collect_slot_histogram: false }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn with_slot_histogram(mut self) -> Self {
        self.collect_slot_histogram = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub frames: u64,
    pub seed: u64,
    pub stream: u64,
    pub policy: Policy,
    pub frame_size: usize,
    /// Active users per class per frame.
    pub active: Vec<usize>,
    /// Realized loads L_i / M.
    pub loads: Vec<f64>,
    /// T_i = mean(S_i) / M.
    pub throughput: Vec<f64>,
    pub total_throughput: f64,
    /// 1 − T_i / G_i (0 for idle classes).
    pub loss_rate: Vec<f64>,
    /// 95% normal-approximation half-widths of T_i.
    pub ci95: Vec<f64>,
    pub total_ci95: f64,
    pub delays: DelayStats,
    pub slot_counts: Option<SlotCounts>,
}

impl SimReport {
    pub fn total_load(&self) -> f64 {
        self.loads.iter().sum()
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    sum: Vec<u64>,
    sum_sq: Vec<u128>,
    total_sum: u64,
    total_sq: u128,
    hist: Vec<u64>,
}

impl Accumulator {
    fn new(k: usize) -> Self {
        Self { sum: vec![0; k], sum_sq: vec![0; k], ..Default::default() }
    }

    fn add(&mut self, result: &FrameResult, occupancy_hist: &[u64]) {
        let mut total = 0u64;
        for (i, &s) in result.successes.iter().enumerate() {
            let s = s as u64;
            self.sum[i] += s;
            self.sum_sq[i] += (s as u128) * (s as u128);
            total += s;
        }
        self.total_sum += total;
        self.total_sq += (total as u128) * (total as u128);
        if self.hist.len() < occupancy_hist.len() {
            self.hist.resize(occupancy_hist.len(), 0);
        }
        for (a, b) in self.hist.iter_mut().zip(occupancy_hist) {
            *a += b;
        }
    }
}

fn mean_and_ci(sum: u64, sum_sq: u128, n: u64, frame_size: usize) -> (f64, f64) {
    let m = frame_size as f64;
    let nf = n as f64;
    let mean = sum as f64 / nf;
    let ci = if n > 1 {
        let var = (sum_sq as f64 - (sum as f64) * mean) / (nf - 1.0);
        Z_95 * (var.max(0.0) / nf).sqrt() / m
    } else {
        0.0
    };
    (mean / m, ci)
}

fn with_pool<T: Send>(
    workers: Option<usize>,
    job: impl FnOnce() -> T + Send,
) -> Result<T, SimError> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SimError::WorkerPool(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Simulates `opts.frames` frames at a fixed load and aggregates throughput,
/// loss and delay. Identical inputs give identical reports.
pub fn run_simulation(
    spec: &NetworkSpec,
    load: &LoadVector,
    opts: &SimOptions,
) -> Result<SimReport, SimError> {
    if opts.frames == 0 {
        return Err(SimError::NoFrames);
    }
    let counts = load.checked_counts(spec)?;
    for (class, dist) in spec.distributions().iter().enumerate() {
        if counts[class] > 0 && dist.max_degree() as usize > spec.frame_size() {
            return Err(FrameError::DegreeExceedsFrame {
                user: 0,
                degree: dist.max_degree() as usize,
                slots: spec.frame_size(),
            }
            .into());
        }
    }
    let k = spec.k();
    let mut states: Vec<ClassState> = spec
        .populations()
        .iter()
        .enumerate()
        .map(|(i, &n)| ClassState::new(i, n, opts.policy))
        .collect();
    let mut delays = DelayStats::new(k, spec.frame_size());
    let mut acc = Accumulator::new(k);
    let want_hist = opts.collect_slot_histogram;

    with_pool(opts.workers, || -> Result<(), SimError> {
        match opts.policy {
            Policy::Random => {
                // Selection is memoryless, so whole frames run in parallel and
                // only the delay bookkeeping is sequential.
                let mut start = 0;
                while start < opts.frames {
                    let end = (start + CHUNK_FRAMES).min(opts.frames);
                    let outcomes: Vec<Result<FrameOutcome, SimError>> = (start..end)
                        .into_par_iter()
                        .map_init(
                            || FrameBuilder::new(spec.frame_size()),
                            |builder, frame| {
                                let mut rng = frame_rng(opts.seed, opts.stream, frame);
                                let mut activated = Vec::with_capacity(k);
                                for (state, &count) in states.iter().zip(&counts) {
                                    activated.push(state.select_random(count, &mut rng)?);
                                }
                                transmit(spec, activated, builder, &mut rng, want_hist)
                            },
                        )
                        .collect();
                    for (frame, outcome) in (start..end).zip(outcomes) {
                        let outcome = outcome?;
                        let result = book(&outcome, &mut states, &mut delays, frame)?;
                        acc.add(&result, &outcome.occupancy_hist);
                    }
                    start = end;
                }
            }
            Policy::RoundRobin => {
                let mut builder = FrameBuilder::new(spec.frame_size());
                for frame in 0..opts.frames {
                    let mut rng = frame_rng(opts.seed, opts.stream, frame);
                    let mut activated = Vec::with_capacity(k);
                    for (state, &count) in states.iter_mut().zip(&counts) {
                        activated.push(state.select_round_robin(count)?);
                    }
                    let outcome = transmit(spec, activated, &mut builder, &mut rng, want_hist)?;
                    let result = book(&outcome, &mut states, &mut delays, frame)?;
                    acc.add(&result, &outcome.occupancy_hist);
                }
            }
        }
        Ok(())
    })??;

    let m = spec.frame_size();
    let loads: Vec<f64> = counts.iter().map(|&l| l as f64 / m as f64).collect();
    let mut throughput = Vec::with_capacity(k);
    let mut ci95 = Vec::with_capacity(k);
    for i in 0..k {
        let (t, ci) = mean_and_ci(acc.sum[i], acc.sum_sq[i], opts.frames, m);
        throughput.push(t);
        ci95.push(ci);
    }
    let (total_throughput, total_ci95) = mean_and_ci(acc.total_sum, acc.total_sq, opts.frames, m);
    let loss_rate = throughput
        .iter()
        .zip(&loads)
        .map(|(&t, &g)| if g > 0.0 { 1.0 - t / g } else { 0.0 })
        .collect();
    let slot_counts = want_hist.then(|| SlotCounts::from_counts(acc.hist));

    Ok(SimReport {
        frames: opts.frames,
        seed: opts.seed,
        stream: opts.stream,
        policy: opts.policy,
        frame_size: m,
        active: counts,
        loads,
        throughput,
        total_throughput,
        loss_rate,
        ci95,
        total_ci95,
        delays,
        slot_counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub total_load: f64,
    pub report: SimReport,
}

/// Evenly spaced grid `start, start + step, ...` up to `stop` inclusive.
pub fn load_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, SimError> {
    if !(step > 0.0) || !(start >= 0.0) || !(stop >= start) {
        return Err(SimError::InvalidGrid(format!("start={start} stop={stop} step={step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // Round to 12 decimals so 0.05·k prints as 0.15, not 0.15000000000000002.
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Throughput-versus-load curve along `direction`: grid value `g` is split
/// over classes in proportion to `direction`. Each point runs on its own
/// substream of `opts.seed`.
pub fn sweep_load(
    spec: &NetworkSpec,
    direction: &[f64],
    grid: &[f64],
    opts: &SimOptions,
) -> Result<Vec<SweepPoint>, SimError> {
    if grid.is_empty() {
        return Err(SimError::InvalidGrid("empty grid".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|g| !(*g >= 0.0)) {
        return Err(SimError::InvalidGrid("grid must be nonnegative and nondecreasing".into()));
    }
    if direction.len() != spec.k() {
        return Err(SimError::LengthMismatch { expected: spec.k(), got: direction.len() });
    }
    let norm: f64 = direction.iter().sum();
    if direction.iter().any(|d| !(*d >= 0.0)) || !(norm > 0.0) {
        return Err(SimError::InvalidLoad("direction must be nonnegative and nonzero".into()));
    }
    grid.iter()
        .enumerate()
        .map(|(i, &g)| {
            let load = LoadVector::new(direction.iter().map(|d| g * d / norm).collect())?;
            let point_opts = SimOptions { stream: i as u64, ..opts.clone() };
            let report = run_simulation(spec, &load, &point_opts)?;
            Ok(SweepPoint { total_load: g, report })
        })
        .collect()
}

/// Grid point with the largest total throughput (first on ties).
pub fn peak(curve: &[SweepPoint]) -> Option<&SweepPoint> {
    curve.iter().fold(None, |best: Option<&SweepPoint>, p| match best {
        Some(b) if b.report.total_throughput >= p.report.total_throughput => Some(b),
        _ => Some(p),
    })
}
