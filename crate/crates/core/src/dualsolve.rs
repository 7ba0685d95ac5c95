//! Dual-decomposition solver for the sum-rate allocation problem.
//!
//! For a fixed multiplier `mu` on the total power constraint, the Lagrangian
//! decouples: every candidate choice on a pair `(k, l)` gets the water-filling
//! power `Λ(mu, G) = [log2(e)/(2·mu) − 1/G]⁺` for its gain(s), each pair keeps
//! its best metric, and the pairing is an assignment problem on those
//! metrics. The power used by that maximizer is non-increasing in `mu`, so
//! `mu` is found by bracket doubling followed by bisection.

use std::f64::consts::LOG2_E;

use crate::assign::{solve_assignment, ProfitMatrix};
use crate::error::{Error, Result};
use crate::gains::{equiv_gain, EquivalentGain};
use crate::model::{half_log2_1p, Allocation, ChannelRealization, PairDecision, PairMode, Protocol};

pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_BISECTION_ITERS: usize = 200;
pub const DEFAULT_BRACKET_GROWTH: f64 = 2.0;

/// Bracket considered collapsed once `mu_max − mu_min <= PLATEAU_RELATIVE_WIDTH·mu_max`.
const PLATEAU_RELATIVE_WIDTH: f64 = 1e-14;
const MAX_BRACKET_STEPS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Total power budget, noise-normalized (equals `Ptot/σ²`).
    pub p_tot: f64,
    /// Accepted shortfall: a point with `p_tot − epsilon <= ΣP <= p_tot` ends the search.
    pub epsilon: f64,
    pub max_bisection_iters: usize,
    /// Factor applied to `mu_max` while the bracket's upper end is still infeasible.
    pub bracket_growth: f64,
}

impl SolverSettings {
    /// Defaults: `epsilon = 1e-6·p_tot`, 200 bisection steps, doubling bracket.
    pub fn new(p_tot: f64) -> Self {
        Self {
            p_tot,
            epsilon: DEFAULT_RELATIVE_EPSILON * p_tot,
            max_bisection_iters: DEFAULT_MAX_BISECTION_ITERS,
            bracket_growth: DEFAULT_BRACKET_GROWTH,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_tot.is_finite() && self.p_tot > 0.0) {
            return Err(Error::invalid(format!("p_tot must be finite and > 0, got {}", self.p_tot)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.p_tot) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, p_tot), got {} with p_tot {}",
                self.epsilon, self.p_tot
            )));
        }
        if self.max_bisection_iters == 0 {
            return Err(Error::invalid("max_bisection_iters must be positive"));
        }
        if !(self.bracket_growth.is_finite() && self.bracket_growth > 1.0) {
            return Err(Error::invalid(format!("bracket_growth must be > 1, got {}", self.bracket_growth)));
        }
        Ok(())
    }
}

/// Maximizer of the Lagrangian at a fixed multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub mu: f64,
    pub allocation: Allocation,
    pub sum_power: f64,
    /// `d(mu) = mu·p_tot + Σ` of the selected pair metrics.
    pub dual_value: f64,
}

/// How the multiplier search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// A multiplier with `p_tot − epsilon <= ΣP <= p_tot` was found.
    PowerBand,
    /// The bracket collapsed on a jump of `ΣP(mu)`; the bracketing pairings
    /// were re-powered to the full budget and the better one kept.
    Plateau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub allocation: Allocation,
    pub mu: f64,
    /// Dual function value at the final multiplier; an upper bound on the optimum.
    pub dual_value: f64,
    pub iterations: usize,
    pub termination: Termination,
}

/// Water-filling power `[log2(e)/(2·mu) − 1/g]⁺`; zero for `g = 0`.
pub fn waterfill_level(mu: f64, g: f64) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::invalid(format!("mu must be finite and > 0, got {mu}")));
    }
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::invalid(format!("gain must be finite and >= 0, got {g}")));
    }
    Ok(level(mu, g))
}

#[inline]
fn level(mu: f64, g: f64) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    (LOG2_E / (2.0 * mu) - 1.0 / g).max(0.0)
}

/// `C(g·Λ) − mu·Λ` at the water-filling power. Returns `(metric, power)`.
#[inline]
fn slot_metric(mu: f64, g: f64) -> (f64, f64) {
    let p = level(mu, g);
    (half_log2_1p(g * p) - mu * p, p)
}

/// Best decision on a pair at a given multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairChoice {
    RelayAided { user: usize, equivalent: EquivalentGain },
    Direct { first_user: usize, second_user: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMetric {
    /// `C_kl`: the larger of the best relay-aided and best direct metric.
    pub value: f64,
    pub choice: PairChoice,
}

/// `C_kl` and its argmax for pair `(k, l)` at multiplier `mu`.
///
/// Relay-aided wins ties against direct, and lower user indices win ties
/// among users. Users whose relay branch is inactive are not relay candidates.
pub fn pair_metrics(
    mu: f64,
    channel: &ChannelRealization,
    protocol: Protocol,
    k: usize,
    l: usize,
) -> Result<PairMetric> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::invalid(format!("mu must be finite and > 0, got {mu}")));
    }
    let n = channel.num_subcarriers();
    if k >= n || l >= n {
        return Err(Error::invalid(format!("pair ({k}, {l}) out of range for {n} subcarriers")));
    }
    let table = GainTable::new(channel, protocol);
    let direct = table.direct_terms(mu);
    Ok(table.pair_metric(mu, &direct, k, l))
}

/// Equivalent gains for every `(k, l, u)`, computed once per solve.
struct GainTable<'a> {
    channel: &'a ChannelRealization,
    protocol: Protocol,
    /// Indexed `[(k·K + l)·U + u]`.
    relay: Vec<EquivalentGain>,
}

#[derive(Clone, Copy)]
struct DirectTerm {
    metric: f64,
    user: usize,
}

impl<'a> GainTable<'a> {
    fn new(channel: &'a ChannelRealization, protocol: Protocol) -> Self {
        let (kk, uu) = (channel.num_subcarriers(), channel.num_users());
        let mut relay = Vec::with_capacity(kk * kk * uu);
        for k in 0..kk {
            for l in 0..kk {
                for u in 0..uu {
                    relay.push(equiv_gain(&channel.pair_gains(k, l, u), protocol));
                }
            }
        }
        Self { channel, protocol, relay }
    }

    fn relay_gain(&self, k: usize, l: usize, u: usize) -> &EquivalentGain {
        let (kk, uu) = (self.channel.num_subcarriers(), self.channel.num_users());
        &self.relay[(k * kk + l) * uu + u]
    }

    /// Best direct-mode user and metric per subcarrier. The same values serve
    /// both slots since direct transmission only sees the source-user gain.
    fn direct_terms(&self, mu: f64) -> Vec<DirectTerm> {
        (0..self.channel.num_subcarriers())
            .map(|k| {
                let mut best = DirectTerm { metric: f64::NEG_INFINITY, user: 0 };
                for u in 0..self.channel.num_users() {
                    let (m, _) = slot_metric(mu, self.channel.g_su(u, k));
                    if m > best.metric {
                        best = DirectTerm { metric: m, user: u };
                    }
                }
                best
            })
            .collect()
    }

    fn pair_metric(&self, mu: f64, direct: &[DirectTerm], k: usize, l: usize) -> PairMetric {
        let mut best_relay = (f64::NEG_INFINITY, 0usize);
        for u in 0..self.channel.num_users() {
            let eq = self.relay_gain(k, l, u);
            // Without an active relay the pair is a plain transmission on k,
            // which the direct metric already covers at least as well.
            if !eq.relay_active {
                continue;
            }
            let (m, _) = slot_metric(mu, eq.gain);
            if m > best_relay.0 {
                best_relay = (m, u);
            }
        }
        let direct_value = direct[k].metric + direct[l].metric;
        if best_relay.0 >= direct_value {
            let user = best_relay.1;
            PairMetric {
                value: best_relay.0,
                choice: PairChoice::RelayAided { user, equivalent: *self.relay_gain(k, l, user) },
            }
        } else {
            PairMetric {
                value: direct_value,
                choice: PairChoice::Direct { first_user: direct[k].user, second_user: direct[l].user },
            }
        }
    }

    /// Solves the Lagrangian relaxation at `mu`.
    fn lrp(&self, mu: f64, p_tot: f64) -> Result<DualPoint> {
        let kk = self.channel.num_subcarriers();
        let direct = self.direct_terms(mu);
        let metrics: Vec<PairMetric> = (0..kk * kk)
            .map(|i| self.pair_metric(mu, &direct, i / kk, i % kk))
            .collect();
        let profits = ProfitMatrix::from_flat(kk, metrics.iter().map(|m| m.value).collect())?;
        let assignment = solve_assignment(&profits);

        let decisions: Vec<PairDecision> = assignment
            .permutation
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                let choice = metrics[k * kk + l].choice;
                let mode = match choice {
                    PairChoice::RelayAided { user, equivalent } => PairMode::RelayAided {
                        user,
                        split: equivalent.split.scaled(level(mu, equivalent.gain)),
                    },
                    PairChoice::Direct { first_user, second_user } => PairMode::Direct {
                        first_user,
                        first_power: level(mu, self.channel.g_su(first_user, k)),
                        second_user,
                        second_power: level(mu, self.channel.g_su(second_user, l)),
                    },
                };
                PairDecision { first_slot_subcarrier: k, second_slot_subcarrier: l, mode }
            })
            .collect();
        let allocation = Allocation::new(self.channel, self.protocol, decisions)?;
        Ok(DualPoint {
            mu,
            sum_power: allocation.total_power(),
            dual_value: mu * p_tot + assignment.total_profit,
            allocation,
        })
    }
}

/// Maximizer of the Lagrangian `g(RA) + mu·(p_tot − ΣP(RA))` at a fixed `mu`.
pub fn solve_lrp(
    mu: f64,
    channel: &ChannelRealization,
    protocol: Protocol,
    p_tot: f64,
) -> Result<DualPoint> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::invalid(format!("mu must be finite and > 0, got {mu}")));
    }
    GainTable::new(channel, protocol).lrp(mu, p_tot)
}

/// Sum-rate maximizing allocation under a total power budget.
pub fn solve(channel: &ChannelRealization, protocol: Protocol, settings: &SolverSettings) -> Result<Allocation> {
    solve_detailed(channel, protocol, settings).map(|s| s.allocation)
}

pub fn solve_detailed(
    channel: &ChannelRealization,
    protocol: Protocol,
    settings: &SolverSettings,
) -> Result<Solution> {
    settings.validate()?;
    let p_tot = settings.p_tot;
    let in_band = |p: f64| p >= p_tot - settings.epsilon && p <= p_tot;
    let table = GainTable::new(channel, protocol);

    let mut mu_min = 0.0;
    let mut mu_max = 1.0;
    let mut upper = table.lrp(mu_max, p_tot)?;
    let mut lower: Option<DualPoint> = None;
    let mut steps = 0;
    while upper.sum_power >= p_tot {
        if in_band(upper.sum_power) {
            return Ok(finish(upper, 0, Termination::PowerBand));
        }
        steps += 1;
        // A point that overspends is a valid lower end for the bracket.
        mu_min = mu_max;
        mu_max *= settings.bracket_growth;
        if steps > MAX_BRACKET_STEPS || !mu_max.is_finite() {
            return Err(Error::NonConvergence { iterations: steps, p_tot, best: Box::new(upper) });
        }
        let next = table.lrp(mu_max, p_tot)?;
        lower = Some(std::mem::replace(&mut upper, next));
    }

    for iteration in 1..=settings.max_bisection_iters {
        let mu = 0.5 * (mu_min + mu_max);
        let point = table.lrp(mu, p_tot)?;
        if in_band(point.sum_power) {
            return Ok(finish(point, iteration, Termination::PowerBand));
        }
        if point.sum_power > p_tot {
            mu_min = mu;
            lower = Some(point);
        } else {
            mu_max = mu;
            upper = point;
        }
        if mu_max - mu_min <= PLATEAU_RELATIVE_WIDTH * mu_max {
            return Ok(resolve_plateau(&table, upper, lower, settings, iteration));
        }
    }
    Err(Error::NonConvergence { iterations: settings.max_bisection_iters, p_tot, best: Box::new(upper) })
}

fn finish(point: DualPoint, iterations: usize, termination: Termination) -> Solution {
    Solution {
        mu: point.mu,
        dual_value: point.dual_value,
        allocation: point.allocation,
        iterations,
        termination,
    }
}

/// `ΣP(mu)` jumps across `p_tot` when the maximizing pairing switches. Both
/// pairings next to the jump are re-powered to spend the full budget and the
/// one with the higher sum rate is returned.
fn resolve_plateau(
    table: &GainTable<'_>,
    upper: DualPoint,
    lower: Option<DualPoint>,
    settings: &SolverSettings,
    iterations: usize,
) -> Solution {
    let dual_value = upper.dual_value;
    let mu = upper.mu;
    let mut best = refill(table, &upper.allocation, settings).unwrap_or(upper.allocation);
    if let Some(lower) = lower {
        if let Some(candidate) = refill(table, &lower.allocation, settings) {
            if candidate.sum_rate() > best.sum_rate() {
                best = candidate;
            }
        }
    }
    Solution { allocation: best, mu, dual_value, iterations, termination: Termination::Plateau }
}

/// Keeps the pairing, modes and users of `allocation` and re-runs
/// water-filling over them with the whole budget. `None` if the result is
/// not a feasible in-band allocation.
fn refill(table: &GainTable<'_>, allocation: &Allocation, settings: &SolverSettings) -> Option<Allocation> {
    let channel = table.channel;
    let decisions = allocation.decisions();
    let repower = |mu: f64| -> Vec<PairDecision> {
        decisions
            .iter()
            .map(|d| {
                let (k, l) = (d.first_slot_subcarrier, d.second_slot_subcarrier);
                let mode = match d.mode {
                    PairMode::RelayAided { user, .. } => {
                        let eq = table.relay_gain(k, l, user);
                        PairMode::RelayAided { user, split: eq.split.scaled(level(mu, eq.gain)) }
                    }
                    PairMode::Direct { first_user, second_user, .. } => PairMode::Direct {
                        first_user,
                        first_power: level(mu, channel.g_su(first_user, k)),
                        second_user,
                        second_power: level(mu, channel.g_su(second_user, l)),
                    },
                };
                PairDecision { mode, ..*d }
            })
            .collect()
    };
    let power = |ds: &[PairDecision]| ds.iter().map(|d| d.mode.total_power()).sum::<f64>();

    let p_tot = settings.p_tot;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut feasible = repower(hi);
    let mut steps = 0;
    while power(&feasible) > p_tot {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_STEPS {
            return None;
        }
        feasible = repower(hi);
    }
    for _ in 0..settings.max_bisection_iters {
        if power(&feasible) >= p_tot - settings.epsilon || hi - lo <= PLATEAU_RELATIVE_WIDTH * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let trial = repower(mid);
        if power(&trial) > p_tot {
            lo = mid;
        } else {
            hi = mid;
            feasible = trial;
        }
    }
    let p = power(&feasible);
    if p < p_tot - settings.epsilon || p > p_tot {
        return None;
    }
    Allocation::new(channel, table.protocol, feasible).ok()
}
