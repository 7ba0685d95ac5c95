//! Random channel generation and Monte Carlo comparison of the two protocols.
//!
//! Geometry: source, relay and a disc in which users are dropped uniformly.
//! Every link (source-relay, source-user, relay-user) is a multipath channel
//! with `num_taps` i.i.d. zero-mean complex Gaussian taps whose total average
//! power follows the path loss `reference_gain · d^(−exponent)`. The
//! per-subcarrier power gain is `|H_k|²` where `H` is the K-point DFT of the
//! taps. Noise power is one, so the power budget is `Ptot/σ²` directly.
//!
//! Randomness is derived per `(seed, realization, link)`, so realization `i`
//! is the same regardless of how many realizations are run, which worker
//! evaluates it, or which K/budget cell asks for it.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dualsolve::{self, SolverSettings, DEFAULT_BRACKET_GROWTH, DEFAULT_MAX_BISECTION_ITERS, DEFAULT_RELATIVE_EPSILON};
use crate::error::{Error, Result};
use crate::model::{ChannelRealization, Protocol};

/// Distances below this are clamped so a user dropped on top of a node keeps a finite gain.
pub const MIN_DISTANCE: f64 = 1.0;

const POSITION_STREAM: u64 = 0;
const SOURCE_RELAY_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub source_position: Point,
    pub relay_position: Point,
    pub user_region_center: Point,
    pub user_region_radius: f64,
    pub path_loss_exponent: f64,
    pub num_taps: usize,
    /// Average link gain at 1 m (already divided by the noise power).
    pub reference_gain: f64,
}

impl Default for GeometryConfig {
    /// Source at the origin, users in a 50 m disc centred 100 m away, relay
    /// half-way. The reference gain makes the source to region-centre link
    /// unit gain on average.
    fn default() -> Self {
        let exponent = 3.0;
        Self {
            source_position: Point::new(0.0, 0.0),
            relay_position: Point::new(50.0, 0.0),
            user_region_center: Point::new(100.0, 0.0),
            user_region_radius: 50.0,
            path_loss_exponent: exponent,
            num_taps: 4,
            reference_gain: 100f64.powf(exponent),
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let coords = [
            self.source_position.x,
            self.source_position.y,
            self.relay_position.x,
            self.relay_position.y,
            self.user_region_center.x,
            self.user_region_center.y,
        ];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("positions must be finite"));
        }
        if !(self.user_region_radius.is_finite() && self.user_region_radius > 0.0) {
            return Err(Error::invalid("user region radius must be > 0"));
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            return Err(Error::invalid("path loss exponent must be > 0"));
        }
        if self.num_taps == 0 {
            return Err(Error::invalid("at least one multipath tap is required"));
        }
        if !(self.reference_gain.is_finite() && self.reference_gain > 0.0) {
            return Err(Error::invalid("reference gain must be > 0"));
        }
        Ok(())
    }

    /// Average gain of a link of length `distance`.
    pub fn mean_gain(&self, distance: f64) -> f64 {
        self.reference_gain * distance.max(MIN_DISTANCE).powf(-self.path_loss_exponent)
    }
}

/// Solver knobs that do not depend on the budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTuning {
    /// Power tolerance as a fraction of the budget.
    pub relative_epsilon: f64,
    pub max_bisection_iters: usize,
    pub bracket_growth: f64,
}

impl Default for SolverTuning {
    fn default() -> Self {
        Self {
            relative_epsilon: DEFAULT_RELATIVE_EPSILON,
            max_bisection_iters: DEFAULT_MAX_BISECTION_ITERS,
            bracket_growth: DEFAULT_BRACKET_GROWTH,
        }
    }
}

impl SolverTuning {
    pub fn settings(&self, p_tot: f64) -> SolverSettings {
        SolverSettings {
            p_tot,
            epsilon: self.relative_epsilon * p_tot,
            max_bisection_iters: self.max_bisection_iters,
            bracket_growth: self.bracket_growth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    /// Subcarrier counts to sweep.
    pub num_subcarriers: Vec<usize>,
    pub num_users: usize,
    /// `Ptot/σ²` values in dB to sweep.
    pub snr_budget_db: Vec<f64>,
    pub num_realizations: usize,
    pub protocols: Vec<Protocol>,
    pub seed: u64,
    pub solver: SolverTuning,
    /// Worker threads; `None` uses the global pool. Results do not depend on it.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            num_subcarriers: vec![32],
            num_users: 5,
            snr_budget_db: (15..=25).map(f64::from).collect(),
            num_realizations: 500,
            protocols: Protocol::ALL.to_vec(),
            seed: 1,
            solver: SolverTuning::default(),
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.num_subcarriers.is_empty() || self.num_subcarriers.contains(&0) {
            return Err(Error::invalid("subcarrier counts must be a non-empty list of positive integers"));
        }
        if self.num_users == 0 {
            return Err(Error::invalid("at least one user is required"));
        }
        if self.snr_budget_db.is_empty() || self.snr_budget_db.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("budget list must be non-empty and finite"));
        }
        if self.num_realizations == 0 {
            return Err(Error::invalid("at least one realization is required"));
        }
        if self.protocols.is_empty() {
            return Err(Error::invalid("protocol set is empty"));
        }
        let mut sorted = self.protocols.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.protocols.len() {
            return Err(Error::invalid("protocol set has duplicates"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers must be positive"));
        }
        let probe = self.solver.settings(1.0);
        probe.validate()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn stream(seed: u64, realization: u64, link: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&realization.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(link);
    rng
}

fn user_stream(user: usize, relay: bool) -> u64 {
    2 + 2 * user as u64 + u64::from(relay)
}

/// Uniform point in a disc.
fn drop_user(rng: &mut ChaCha8Rng, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
}

/// `|H_k|²` for `k = 0..num_subcarriers` of a random multipath link with
/// the given average power.
fn link_gains(rng: &mut ChaCha8Rng, mean_gain: f64, num_taps: usize, num_subcarriers: usize) -> Vec<f64> {
    let tap_std = (mean_gain / (2.0 * num_taps as f64)).sqrt();
    let taps: Vec<Complex64> = (0..num_taps)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * tap_std, im * tap_std)
        })
        .collect();
    (0..num_subcarriers)
        .map(|k| {
            taps.iter()
                .enumerate()
                .map(|(t, h)| {
                    let angle = -2.0 * PI * ((k * t) % num_subcarriers) as f64 / num_subcarriers as f64;
                    h * Complex64::from_polar(1.0, angle)
                })
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect()
}

/// Identifies one channel draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RealizationKey {
    pub seed: u64,
    pub index: u64,
}

/// User positions of a realization.
pub fn user_positions(geometry: &GeometryConfig, num_users: usize, key: RealizationKey) -> Vec<Point> {
    let mut rng = stream(key.seed, key.index, POSITION_STREAM);
    (0..num_users)
        .map(|_| drop_user(&mut rng, geometry.user_region_center, geometry.user_region_radius))
        .collect()
}

pub fn generate_realization(
    geometry: &GeometryConfig,
    num_subcarriers: usize,
    num_users: usize,
    key: RealizationKey,
) -> Result<ChannelRealization> {
    geometry.validate()?;
    if num_subcarriers == 0 || num_users == 0 {
        return Err(Error::invalid("need at least one subcarrier and one user"));
    }
    let users = user_positions(geometry, num_users, key);
    let taps = geometry.num_taps;
    let sr_mean = geometry.mean_gain(geometry.source_position.distance(&geometry.relay_position));
    let g_sr = link_gains(&mut stream(key.seed, key.index, SOURCE_RELAY_STREAM), sr_mean, taps, num_subcarriers);
    let mut g_su = Vec::with_capacity(num_users);
    let mut g_ru = Vec::with_capacity(num_users);
    for (u, pos) in users.iter().enumerate() {
        let su_mean = geometry.mean_gain(geometry.source_position.distance(pos));
        let ru_mean = geometry.mean_gain(geometry.relay_position.distance(pos));
        g_su.push(link_gains(&mut stream(key.seed, key.index, user_stream(u, false)), su_mean, taps, num_subcarriers));
        g_ru.push(link_gains(&mut stream(key.seed, key.index, user_stream(u, true)), ru_mean, taps, num_subcarriers));
    }
    ChannelRealization::new(g_sr, g_su, g_ru)
}

/// Sum rate of each configured protocol on one realization; `None` marks a
/// solver failure.
pub fn evaluate_realization(
    config: &ExperimentConfig,
    num_subcarriers: usize,
    snr_db: f64,
    index: u64,
) -> Result<Vec<(Protocol, Option<f64>)>> {
    let key = RealizationKey { seed: config.seed, index };
    let channel = generate_realization(&config.geometry, num_subcarriers, config.num_users, key)?;
    let settings = config.solver.settings(db_to_linear(snr_db));
    Ok(config
        .protocols
        .iter()
        .map(|&p| (p, dualsolve::solve(&channel, p, &settings).ok().map(|a| a.sum_rate())))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolStats {
    pub protocol: Protocol,
    pub mean_rate: f64,
    pub stderr: f64,
    /// Realizations that entered the mean.
    pub realizations: usize,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioStats {
    /// Mean of per-realization `R_novel / R_benchmark`.
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub num_subcarriers: usize,
    pub snr_db: f64,
    pub protocols: Vec<ProtocolStats>,
    /// Present when both protocols were run.
    pub ratio: Option<RatioStats>,
}

impl CellReport {
    pub fn stats(&self, protocol: Protocol) -> Option<&ProtocolStats> {
        self.protocols.iter().find(|s| s.protocol == protocol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, num_subcarriers: usize, snr_db: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.num_subcarriers == num_subcarriers && c.snr_db == snr_db)
    }
}

/// Mean and standard error of the mean, accumulated in input order.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn summarize(config: &ExperimentConfig, k: usize, snr_db: f64, samples: &[Vec<(Protocol, Option<f64>)>]) -> CellReport {
    let protocols = config
        .protocols
        .iter()
        .map(|&p| {
            let rates: Vec<f64> = samples
                .iter()
                .filter_map(|s| s.iter().find(|(q, _)| *q == p).and_then(|(_, r)| *r))
                .collect();
            let (mean_rate, stderr) = mean_stderr(&rates);
            ProtocolStats {
                protocol: p,
                mean_rate,
                stderr,
                realizations: rates.len(),
                nonconverged: samples.len() - rates.len(),
            }
        })
        .collect();
    let has_both = Protocol::ALL.iter().all(|p| config.protocols.contains(p));
    let ratio = has_both.then(|| {
        let ratios: Vec<f64> = samples
            .iter()
            .filter_map(|s| {
                let get = |p| s.iter().find(|(q, _)| *q == p).and_then(|(_, r)| *r);
                match (get(Protocol::Novel), get(Protocol::Benchmark)) {
                    (Some(n), Some(b)) if b > 0.0 => Some(n / b),
                    _ => None,
                }
            })
            .collect();
        let (mean, stderr) = mean_stderr(&ratios);
        RatioStats { mean, stderr }
    });
    CellReport { num_subcarriers: k, snr_db, protocols, ratio }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(config, |_| Ok(()))
}

/// Runs every `(K, budget)` cell in order, calling `on_cell` as each one
/// completes.
pub fn run_experiment_with<F>(config: &ExperimentConfig, mut on_cell: F) -> Result<ExperimentReport>
where
    F: FnMut(&CellReport) -> Result<()>,
{
    config.validate()?;
    let pool = match config.workers {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?,
        ),
        None => None,
    };
    let mut cells = Vec::new();
    for &k in &config.num_subcarriers {
        for &snr_db in &config.snr_budget_db {
            let work = || -> Result<Vec<_>> {
                (0..config.num_realizations as u64)
                    .into_par_iter()
                    .map(|i| evaluate_realization(config, k, snr_db, i))
                    .collect()
            };
            let samples = match &pool {
                Some(pool) => pool.install(work)?,
                None => work()?,
            };
            let cell = summarize(config, k, snr_db, &samples);
            on_cell(&cell)?;
            cells.push(cell);
        }
    }
    Ok(ExperimentReport { cells })
}
