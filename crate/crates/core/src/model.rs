//! Domain types shared by the solver, the oracle and the experiment harness.
//!
//! Gains are stored noise-normalized (`|h|^2 / sigma^2`), so powers and gains
//! multiply directly into SNRs. Subcarrier and user indices are 0-based.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gains::{self, PairGains};

/// `½·log2(1 + snr)` in bits per OFDM symbol, without input checks.
#[inline]
pub(crate) fn half_log2_1p(snr: f64) -> f64 {
    snr.ln_1p() / (2.0 * LN_2)
}

/// Rate in bits per OFDM symbol achieved at `snr` over one slot of a
/// two-slot frame: `½·log2(1 + snr)`.
pub fn rate_of_snr(snr: f64) -> Result<f64> {
    if !snr.is_finite() || snr < 0.0 {
        return Err(Error::invalid(format!("snr must be finite and >= 0, got {snr}")));
    }
    Ok(half_log2_1p(snr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    /// Source and relay beamform on the second-slot subcarrier.
    Novel,
    /// Only the relay transmits on the second-slot subcarrier.
    Benchmark,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Novel, Protocol::Benchmark];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Novel => "novel",
            Protocol::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "novel" => Ok(Protocol::Novel),
            "benchmark" => Ok(Protocol::Benchmark),
            other => Err(Error::invalid(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Noise-normalized power gains of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    num_subcarriers: usize,
    num_users: usize,
    g_sr: Vec<f64>,
    g_su: Vec<Vec<f64>>,
    g_ru: Vec<Vec<f64>>,
}

impl ChannelRealization {
    /// `g_sr` has one entry per subcarrier; `g_su` and `g_ru` have one row
    /// per user, each with one entry per subcarrier.
    pub fn new(g_sr: Vec<f64>, g_su: Vec<Vec<f64>>, g_ru: Vec<Vec<f64>>) -> Result<Self> {
        let k = g_sr.len();
        let u = g_su.len();
        if k == 0 {
            return Err(Error::invalid("at least one subcarrier is required"));
        }
        if u == 0 {
            return Err(Error::invalid("at least one user is required"));
        }
        if g_ru.len() != u {
            return Err(Error::invalid(format!(
                "g_ru has {} user rows but g_su has {u}",
                g_ru.len()
            )));
        }
        for (name, rows) in [("g_su", &g_su), ("g_ru", &g_ru)] {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != k {
                    return Err(Error::invalid(format!(
                        "{name} row {} has {} entries, expected {k}",
                        i + 1,
                        row.len()
                    )));
                }
            }
        }
        let all = g_sr.iter().chain(g_su.iter().flatten()).chain(g_ru.iter().flatten());
        if let Some(bad) = all.copied().find(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::invalid(format!("gains must be finite and >= 0, got {bad}")));
        }
        Ok(Self { num_subcarriers: k, num_users: u, g_sr, g_su, g_ru })
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn g_sr(&self, k: usize) -> f64 {
        self.g_sr[k]
    }

    pub fn g_su(&self, u: usize, k: usize) -> f64 {
        self.g_su[u][k]
    }

    pub fn g_ru(&self, u: usize, k: usize) -> f64 {
        self.g_ru[u][k]
    }

    pub fn g_sr_row(&self) -> &[f64] {
        &self.g_sr
    }

    pub fn g_su_rows(&self) -> &[Vec<f64>] {
        &self.g_su
    }

    pub fn g_ru_rows(&self) -> &[Vec<f64>] {
        &self.g_ru
    }

    /// Gains seen by user `u` when first-slot subcarrier `k` is paired with
    /// second-slot subcarrier `l`.
    pub fn pair_gains(&self, k: usize, l: usize, u: usize) -> PairGains {
        PairGains {
            g_sr_k: self.g_sr[k],
            g_su_k: self.g_su[u][k],
            g_su_l: self.g_su[u][l],
            g_ru_l: self.g_ru[u][l],
        }
    }

    /// Same channel with every gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let scale_rows =
            |rows: &[Vec<f64>]| rows.iter().map(|r| r.iter().map(|g| g * factor).collect()).collect();
        Self::new(
            self.g_sr.iter().map(|g| g * factor).collect(),
            scale_rows(&self.g_su),
            scale_rows(&self.g_ru),
        )
    }
}

/// Powers used inside one relay-aided subcarrier pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerSplit {
    /// Source power on first-slot subcarrier `k`.
    pub p_s1: f64,
    /// Source power on second-slot subcarrier `l` (zero for the benchmark protocol).
    pub p_s2: f64,
    /// Relay power on second-slot subcarrier `l`.
    pub p_r: f64,
}

impl PowerSplit {
    pub fn new(p_s1: f64, p_s2: f64, p_r: f64) -> Result<Self> {
        let split = Self { p_s1, p_s2, p_r };
        split.validate()?;
        Ok(split)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (name, p) in [("p_s1", self.p_s1), ("p_s2", self.p_s2), ("p_r", self.p_r)] {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {p}")));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.p_s1 + self.p_s2 + self.p_r
    }

    pub fn scaled(&self, power: f64) -> Self {
        Self { p_s1: self.p_s1 * power, p_s2: self.p_s2 * power, p_r: self.p_r * power }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairMode {
    RelayAided { user: usize, split: PowerSplit },
    /// Subcarrier `k` serves `first_user` in slot one and subcarrier `l`
    /// serves `second_user` in slot two, both from the source.
    Direct { first_user: usize, first_power: f64, second_user: usize, second_power: f64 },
}

impl PairMode {
    pub fn total_power(&self) -> f64 {
        match self {
            PairMode::RelayAided { split, .. } => split.total(),
            PairMode::Direct { first_power, second_power, .. } => first_power + second_power,
        }
    }

    pub fn is_relay_aided(&self) -> bool {
        matches!(self, PairMode::RelayAided { .. })
    }
}

/// One (possibly virtual) subcarrier pair `(k, l)` with its mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDecision {
    pub first_slot_subcarrier: usize,
    pub second_slot_subcarrier: usize,
    pub mode: PairMode,
}

impl PairDecision {
    /// Achieved rate of this pair in bpos.
    pub fn rate(&self, channel: &ChannelRealization, protocol: Protocol) -> Result<f64> {
        let (k, l) = (self.first_slot_subcarrier, self.second_slot_subcarrier);
        match self.mode {
            PairMode::RelayAided { user, split } => {
                gains::relay_rate(&channel.pair_gains(k, l, user), &split, protocol)
            }
            PairMode::Direct { first_user, first_power, second_user, second_power } => {
                if !(first_power >= 0.0 && second_power >= 0.0)
                    || !first_power.is_finite()
                    || !second_power.is_finite()
                {
                    return Err(Error::invalid("direct-mode powers must be finite and >= 0"));
                }
                Ok(half_log2_1p(gains::direct_gain(channel.g_su(first_user, k)) * first_power)
                    + half_log2_1p(gains::direct_gain(channel.g_su(second_user, l)) * second_power))
            }
        }
    }
}

/// A complete resource allocation: pairing, modes, users and powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    decisions: Vec<PairDecision>,
    sum_rate: f64,
    total_power: f64,
}

impl Allocation {
    /// Checks that the decisions form a perfect pairing over the channel's
    /// subcarriers with valid users, then evaluates rate and power.
    pub fn new(
        channel: &ChannelRealization,
        protocol: Protocol,
        decisions: Vec<PairDecision>,
    ) -> Result<Self> {
        let k = channel.num_subcarriers();
        if decisions.len() != k {
            return Err(Error::invalid(format!("expected {k} pair decisions, got {}", decisions.len())));
        }
        let mut seen_first = vec![false; k];
        let mut seen_second = vec![false; k];
        for d in &decisions {
            let (a, b) = (d.first_slot_subcarrier, d.second_slot_subcarrier);
            if a >= k || b >= k || seen_first[a] || seen_second[b] {
                return Err(Error::invalid("subcarrier indices do not form a permutation"));
            }
            seen_first[a] = true;
            seen_second[b] = true;
            let users_ok = match d.mode {
                PairMode::RelayAided { user, split } => {
                    split.validate()?;
                    user < channel.num_users()
                }
                PairMode::Direct { first_user, second_user, .. } => {
                    first_user < channel.num_users() && second_user < channel.num_users()
                }
            };
            if !users_ok {
                return Err(Error::invalid("user index out of range"));
            }
        }
        let mut sum_rate = 0.0;
        for d in &decisions {
            sum_rate += d.rate(channel, protocol)?;
        }
        let total_power = decisions.iter().map(|d| d.mode.total_power()).sum();
        Ok(Self { decisions, sum_rate, total_power })
    }

    pub fn decisions(&self) -> &[PairDecision] {
        &self.decisions
    }

    pub fn sum_rate(&self) -> f64 {
        self.sum_rate
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    /// Second-slot subcarrier paired with each first-slot subcarrier.
    pub fn pairing(&self) -> Vec<usize> {
        let mut perm = vec![0; self.decisions.len()];
        for d in &self.decisions {
            perm[d.first_slot_subcarrier] = d.second_slot_subcarrier;
        }
        perm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_of_snr_reference_points() {
        assert_eq!(rate_of_snr(0.0).unwrap(), 0.0);
        assert!((rate_of_snr(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((rate_of_snr(3.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rate_of_snr_rejects_bad_input() {
        assert!(rate_of_snr(-1e-12).is_err());
        assert!(rate_of_snr(f64::NAN).is_err());
        assert!(rate_of_snr(f64::INFINITY).is_err());
    }

    #[test]
    fn channel_rejects_shape_and_sign_errors() {
        assert!(ChannelRealization::new(vec![1.0], vec![vec![1.0, 2.0]], vec![vec![1.0]]).is_err());
        assert!(ChannelRealization::new(vec![1.0], vec![vec![1.0]], vec![]).is_err());
        assert!(ChannelRealization::new(vec![-1.0], vec![vec![1.0]], vec![vec![1.0]]).is_err());
        assert!(ChannelRealization::new(vec![f64::NAN], vec![vec![1.0]], vec![vec![1.0]]).is_err());
        assert!(ChannelRealization::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn allocation_rejects_non_permutation() {
        let ch = ChannelRealization::new(
            vec![1.0, 1.0],
            vec![vec![1.0, 1.0]],
            vec![vec![1.0, 1.0]],
        )
        .unwrap();
        let direct = PairMode::Direct { first_user: 0, first_power: 0.5, second_user: 0, second_power: 0.5 };
        let d = |k, l| PairDecision { first_slot_subcarrier: k, second_slot_subcarrier: l, mode: direct };
        assert!(Allocation::new(&ch, Protocol::Novel, vec![d(0, 0), d(1, 0)]).is_err());
        let ok = Allocation::new(&ch, Protocol::Novel, vec![d(0, 1), d(1, 0)]).unwrap();
        assert_eq!(ok.pairing(), vec![1, 0]);
        assert!((ok.total_power() - 2.0).abs() < 1e-15);
        assert!((ok.sum_rate() - 4.0 * half_log2_1p(0.5)).abs() < 1e-15);
    }

    #[test]
    fn benchmark_allocation_rejects_second_slot_source_power() {
        let ch = ChannelRealization::new(vec![2.0], vec![vec![1.0]], vec![vec![3.0]]).unwrap();
        let mode = PairMode::RelayAided { user: 0, split: PowerSplit { p_s1: 0.8, p_s2: 0.05, p_r: 0.15 } };
        let d = PairDecision { first_slot_subcarrier: 0, second_slot_subcarrier: 0, mode };
        assert!(Allocation::new(&ch, Protocol::Benchmark, vec![d]).is_err());
        assert!(Allocation::new(&ch, Protocol::Novel, vec![d]).is_ok());
    }

    #[test]
    fn protocol_parses_case_insensitively() {
        assert_eq!("Novel".parse::<Protocol>().unwrap(), Protocol::Novel);
        assert_eq!(" benchmark ".parse::<Protocol>().unwrap(), Protocol::Benchmark);
        assert!("both".parse::<Protocol>().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rate_is_increasing_and_midpoint_concave(a in 0.0f64..1e4, b in 0.0f64..1e4) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let (rl, rh) = (rate_of_snr(lo).unwrap(), rate_of_snr(hi).unwrap());
                prop_assert!(rl <= rh);
                if hi - lo > 1e-9 * (1.0 + hi) {
                    prop_assert!(rl < rh);
                }
                let mid = rate_of_snr(0.5 * (lo + hi)).unwrap();
                prop_assert!(mid + 1e-12 >= 0.5 * (rl + rh));
            }
        }
    }
}
