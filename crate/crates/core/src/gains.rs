//! Per-pair closed forms: combined SNR at the user, relay-aided rates, and
//! the equivalent gain plus optimal power split of a relay-aided pair.
//!
//! For a pair `(k, l)` serving user `u` with total pair power `P`, the best
//! achievable rate is `C(G·P)` where `G` is the equivalent gain returned by
//! [`equiv_gain_novel`] or [`equiv_gain_benchmark`]. The optimal split is
//! proportional to `P`, so splits are returned as fractions of unit power.

use crate::error::{Error, Result};
use crate::model::{half_log2_1p, PowerSplit, Protocol};

/// Gains relevant to a single relay-aided pair `(k, l)` and user `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGains {
    /// Source to relay, subcarrier `k`.
    pub g_sr_k: f64,
    /// Source to user, subcarrier `k`.
    pub g_su_k: f64,
    /// Source to user, subcarrier `l`.
    pub g_su_l: f64,
    /// Relay to user, subcarrier `l`.
    pub g_ru_l: f64,
}

impl PairGains {
    pub fn new(g_sr_k: f64, g_su_k: f64, g_su_l: f64, g_ru_l: f64) -> Result<Self> {
        let gains = Self { g_sr_k, g_su_k, g_su_l, g_ru_l };
        gains.validate()?;
        Ok(gains)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.g_sr_k, self.g_su_k, self.g_su_l, self.g_ru_l];
        if all.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::invalid(format!("pair gains must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    /// `g_sr_k - g_su_k`.
    pub fn delta(&self) -> f64 {
        self.g_sr_k - self.g_su_k
    }

    /// `g_su_l + g_ru_l`.
    pub fn sigma(&self) -> f64 {
        self.g_su_l + self.g_ru_l
    }
}

/// Equivalent gain of a relay-aided pair together with the power split
/// (fractions summing to one) that attains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentGain {
    pub gain: f64,
    pub split: PowerSplit,
    /// Whether the relay carries any power. When false the split is `(1, 0, 0)`.
    pub relay_active: bool,
}

impl EquivalentGain {
    fn source_only(gains: &PairGains) -> Self {
        Self {
            gain: gains.g_sr_k.min(gains.g_su_k),
            split: PowerSplit { p_s1: 1.0, p_s2: 0.0, p_r: 0.0 },
            relay_active: false,
        }
    }
}

/// Post-combining SNR at the user: `g_su_k·p_s1 + (√(g_su_l·p_s2) + √(g_ru_l·p_r))²`.
pub fn mrc_snr(gains: &PairGains, split: &PowerSplit) -> Result<f64> {
    gains.validate()?;
    split.validate()?;
    Ok(mrc_snr_unchecked(gains, split))
}

#[inline]
fn mrc_snr_unchecked(gains: &PairGains, split: &PowerSplit) -> f64 {
    let coherent = (gains.g_su_l * split.p_s2).sqrt() + (gains.g_ru_l * split.p_r).sqrt();
    gains.g_su_k * split.p_s1 + coherent * coherent
}

/// Rate of a relay-aided pair: `C(min{g_sr_k·p_s1, SNR_user})`.
///
/// The benchmark protocol has the source silent on subcarrier `l`, so a
/// split with `p_s2 > 0` is rejected for it.
pub fn relay_rate(gains: &PairGains, split: &PowerSplit, protocol: Protocol) -> Result<f64> {
    gains.validate()?;
    split.validate()?;
    if protocol == Protocol::Benchmark && split.p_s2 > 0.0 {
        return Err(Error::invalid("benchmark protocol does not allow source power on the second slot"));
    }
    let at_relay = gains.g_sr_k * split.p_s1;
    Ok(half_log2_1p(at_relay.min(mrc_snr_unchecked(gains, split))))
}

/// Equivalent gain when only the relay transmits in the second slot.
pub fn equiv_gain_benchmark(gains: &PairGains) -> EquivalentGain {
    relay_branch(gains, gains.g_ru_l, 0.0)
}

/// Equivalent gain when source and relay beamform in the second slot.
pub fn equiv_gain_novel(gains: &PairGains) -> EquivalentGain {
    relay_branch(gains, gains.sigma(), gains.g_su_l)
}

pub fn equiv_gain(gains: &PairGains, protocol: Protocol) -> EquivalentGain {
    match protocol {
        Protocol::Novel => equiv_gain_novel(gains),
        Protocol::Benchmark => equiv_gain_benchmark(gains),
    }
}

/// Shared closed form. `second_slot` is the gain the second slot offers per
/// unit power (`g_ru_l`, or `g_su_l + g_ru_l` with beamforming) and
/// `source_share` the part of it contributed by the source.
fn relay_branch(gains: &PairGains, second_slot: f64, source_share: f64) -> EquivalentGain {
    // Ties go to the source-only branch; both give the same gain there.
    if gains.g_sr_k.min(second_slot) <= gains.g_su_k {
        return EquivalentGain::source_only(gains);
    }
    let delta = gains.delta();
    // g_sr·S/(Δ + S) written as g_sr·p_s1 with p_s1 = 1/(1 + Δ/S): every step
    // is monotone in S under rounding, so a larger S never yields a smaller gain.
    let p_s1 = 1.0 / (1.0 + delta / second_slot);
    let rest = 1.0 - p_s1;
    let p_s2 = source_share / second_slot * rest;
    let p_r = 1.0 - p_s1 - p_s2;
    // The relay branch never does worse than sending on k alone (gain g_su_k).
    let gain = (gains.g_sr_k * p_s1).max(gains.g_su_k).min(gains.g_sr_k);
    EquivalentGain { gain, split: PowerSplit { p_s1, p_s2, p_r }, relay_active: true }
}

/// Effective gain of a direct-mode slot: the source-to-user gain itself.
#[inline]
pub fn direct_gain(g_su: f64) -> f64 {
    g_su
}
