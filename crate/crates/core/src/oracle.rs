//! Exhaustive reference solver for small instances.
//!
//! Every pairing permutation and every per-pair mode/user choice is
//! considered. With the choices fixed, each relay-aided pair is a single
//! channel of its equivalent gain and each direct pair is two channels, so
//! the best powers come from plain water-filling over that gain list.
//!
//! Per pair, a choice whose gain list is componentwise no better than another
//! choice's (after sorting) can never win, so such choices are dropped before
//! enumerating. This keeps the search exact while bounding it by
//! `K!·2^K` water-filling solves in practice.

use crate::error::{Error, Result};
use crate::gains::equiv_gain;
use crate::model::{half_log2_1p, Allocation, ChannelRealization, PairDecision, PairMode, Protocol};

pub const MAX_SUBCARRIERS: usize = 6;
pub const MAX_USERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub powers: Vec<f64>,
    pub sum_rate: f64,
    /// Budget left over because no channel has positive gain.
    pub unassigned: f64,
}

/// Classical water-filling `p_i = [ν − 1/g_i]⁺` with `Σp_i = p_tot`.
///
/// The level `ν` is found by bisection until `|Σp − p_tot| <= 1e-12·p_tot`;
/// the returned powers never exceed the budget.
pub fn waterfill_total(gains: &[f64], p_tot: f64) -> Result<WaterFill> {
    if !(p_tot.is_finite() && p_tot >= 0.0) {
        return Err(Error::invalid(format!("p_tot must be finite and >= 0, got {p_tot}")));
    }
    if let Some(g) = gains.iter().find(|g| !g.is_finite() || **g < 0.0) {
        return Err(Error::invalid(format!("gains must be finite and >= 0, got {g}")));
    }
    let powers_at = |nu: f64| -> Vec<f64> {
        gains.iter().map(|&g| if g > 0.0 { (nu - 1.0 / g).max(0.0) } else { 0.0 }).collect()
    };
    let best_gain = gains.iter().copied().fold(0.0f64, f64::max);
    if best_gain == 0.0 || p_tot == 0.0 {
        return Ok(WaterFill { powers: vec![0.0; gains.len()], sum_rate: 0.0, unassigned: p_tot });
    }

    let mut lo = 0.0f64;
    let mut hi = p_tot + 1.0 / best_gain;
    let mut powers = powers_at(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let trial = powers_at(mid);
        let total: f64 = trial.iter().sum();
        if total > p_tot {
            hi = mid;
        } else {
            lo = mid;
            powers = trial;
            if p_tot - total <= 1e-12 * p_tot {
                break;
            }
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let sum_rate = gains.iter().zip(&powers).map(|(g, p)| half_log2_1p(g * p)).sum();
    Ok(WaterFill { powers, sum_rate, unassigned: 0.0 })
}

#[derive(Debug, Clone, Copy)]
enum Candidate {
    Relay { user: usize, gain: f64 },
    Direct { first_user: usize, first_gain: f64, second_user: usize, second_gain: f64 },
}

impl Candidate {
    fn sorted_gains(&self) -> [f64; 2] {
        match *self {
            Candidate::Relay { gain, .. } => [gain, 0.0],
            Candidate::Direct { first_gain, second_gain, .. } => {
                [first_gain.max(second_gain), first_gain.min(second_gain)]
            }
        }
    }
}

fn pair_candidates(channel: &ChannelRealization, protocol: Protocol, k: usize, l: usize) -> Vec<Candidate> {
    let users = channel.num_users();
    let mut all = Vec::with_capacity(users + users * users);
    for user in 0..users {
        let gain = equiv_gain(&channel.pair_gains(k, l, user), protocol).gain;
        all.push(Candidate::Relay { user, gain });
    }
    for a in 0..users {
        for b in 0..users {
            all.push(Candidate::Direct {
                first_user: a,
                first_gain: channel.g_su(a, k),
                second_user: b,
                second_gain: channel.g_su(b, l),
            });
        }
    }
    // Drop candidates dominated by an earlier-or-strictly-better one.
    let keys: Vec<[f64; 2]> = all.iter().map(Candidate::sorted_gains).collect();
    let dominated = |i: usize| {
        (0..all.len()).any(|j| {
            let (a, b) = (keys[i], keys[j]);
            let weakly = b[0] >= a[0] && b[1] >= a[1];
            weakly && (b != a || j < i)
        })
    };
    (0..all.len()).filter(|&i| !dominated(i)).map(|i| all[i]).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                prefix.push(c);
                go(prefix, used, out);
                prefix.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Globally optimal allocation by exhaustive search.
pub fn oracle_solve(channel: &ChannelRealization, protocol: Protocol, p_tot: f64) -> Result<Allocation> {
    let (kk, uu) = (channel.num_subcarriers(), channel.num_users());
    if kk > MAX_SUBCARRIERS || uu > MAX_USERS {
        return Err(Error::InstanceTooLarge { k: kk, u: uu });
    }
    if !(p_tot.is_finite() && p_tot > 0.0) {
        return Err(Error::invalid(format!("p_tot must be finite and > 0, got {p_tot}")));
    }
    let candidates: Vec<Vec<Candidate>> = (0..kk * kk)
        .map(|i| pair_candidates(channel, protocol, i / kk, i % kk))
        .collect();

    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut gains = Vec::with_capacity(2 * kk);
    for perm in permutations(kk) {
        let options: Vec<&[Candidate]> = perm.iter().enumerate().map(|(k, &l)| &candidates[k * kk + l][..]).collect();
        let mut choice = vec![0usize; kk];
        'configs: loop {
            gains.clear();
            for (k, &c) in choice.iter().enumerate() {
                match options[k][c] {
                    Candidate::Relay { gain, .. } => gains.push(gain),
                    Candidate::Direct { first_gain, second_gain, .. } => {
                        gains.push(first_gain);
                        gains.push(second_gain);
                    }
                }
            }
            let rate = waterfill_total(&gains, p_tot)?.sum_rate;
            if best.as_ref().is_none_or(|(r, _, _)| rate > *r) {
                best = Some((rate, perm.clone(), choice.clone()));
            }
            // Odometer over per-pair choices, last pair fastest.
            let mut pos = kk;
            loop {
                if pos == 0 {
                    break 'configs;
                }
                pos -= 1;
                choice[pos] += 1;
                if choice[pos] < options[pos].len() {
                    break;
                }
                choice[pos] = 0;
            }
        }
    }

    let (_, perm, choice) = best.expect("at least one configuration");
    materialize(channel, protocol, p_tot, &candidates, &perm, &choice)
}

fn materialize(
    channel: &ChannelRealization,
    protocol: Protocol,
    p_tot: f64,
    candidates: &[Vec<Candidate>],
    perm: &[usize],
    choice: &[usize],
) -> Result<Allocation> {
    let kk = perm.len();
    let picked: Vec<Candidate> = (0..kk).map(|k| candidates[k * kk + perm[k]][choice[k]]).collect();
    let gains: Vec<f64> = picked
        .iter()
        .flat_map(|c| match *c {
            Candidate::Relay { gain, .. } => vec![gain],
            Candidate::Direct { first_gain, second_gain, .. } => vec![first_gain, second_gain],
        })
        .collect();
    let fill = waterfill_total(&gains, p_tot)?;
    let mut powers = fill.powers.into_iter();
    let decisions = picked
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let l = perm[k];
            let mode = match *c {
                Candidate::Relay { user, .. } => {
                    let eq = equiv_gain(&channel.pair_gains(k, l, user), protocol);
                    PairMode::RelayAided { user, split: eq.split.scaled(powers.next().unwrap_or(0.0)) }
                }
                Candidate::Direct { first_user, second_user, .. } => PairMode::Direct {
                    first_user,
                    first_power: powers.next().unwrap_or(0.0),
                    second_user,
                    second_power: powers.next().unwrap_or(0.0),
                },
            };
            PairDecision { first_slot_subcarrier: k, second_slot_subcarrier: l, mode }
        })
        .collect();
    Allocation::new(channel, protocol, decisions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn waterfill_examples() {
        let w = waterfill_total(&[1.0, 1.0], 2.0).unwrap();
        assert!(close(w.powers[0], 1.0, 1e-11) && close(w.powers[1], 1.0, 1e-11));
        assert!(close(w.sum_rate, 1.0, 1e-11));

        let w = waterfill_total(&[3.0], 5.0).unwrap();
        assert!(close(w.powers[0], 5.0, 1e-11));
        assert!(close(w.sum_rate, half_log2_1p(15.0), 1e-11));

        // ν = 0.5 + 1/4 = 0.75 <= 1/1, so the weak channel stays dry.
        let w = waterfill_total(&[4.0, 1.0], 0.5).unwrap();
        assert!(close(w.powers[0], 0.5, 1e-11));
        assert_eq!(w.powers[1], 0.0);
        assert!(close(w.sum_rate, half_log2_1p(2.0), 1e-11));
    }

    #[test]
    fn waterfill_zero_gains_flag_unassigned() {
        let w = waterfill_total(&[0.0, 0.0], 3.0).unwrap();
        assert_eq!(w.sum_rate, 0.0);
        assert_eq!(w.unassigned, 3.0);
        assert!(waterfill_total(&[1.0], -1.0).is_err());
        assert!(waterfill_total(&[-1.0], 1.0).is_err());
    }

    #[test]
    fn waterfill_never_exceeds_budget() {
        let gains = [0.3, 7.0, 2.2, 0.01, 5.5];
        for p in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let w = waterfill_total(&gains, p).unwrap();
            let total: f64 = w.powers.iter().sum();
            assert!(total <= p && total >= p * (1.0 - 1e-9), "{total} vs {p}");
        }
    }

    #[test]
    fn direct_only_single_pair() {
        let ch = ChannelRealization::new(vec![0.0], vec![vec![2.0]], vec![vec![0.0]]).unwrap();
        let a = oracle_solve(&ch, Protocol::Novel, 1.0).unwrap();
        assert!(!a.decisions()[0].mode.is_relay_aided());
        assert!(close(a.sum_rate(), 2.0 * half_log2_1p(1.0), 1e-10));
    }

    #[test]
    fn reference_pair_picks_better_branch() {
        let ch = ChannelRealization::new(vec![2.0], vec![vec![1.0]], vec![vec![3.0]]).unwrap();
        let relay = half_log2_1p(1.6);
        let direct = 2.0 * half_log2_1p(0.5);
        let a = oracle_solve(&ch, Protocol::Novel, 1.0).unwrap();
        assert!(close(a.sum_rate(), relay.max(direct), 1e-10));
        assert_eq!(a.decisions()[0].mode.is_relay_aided(), relay > direct);
        let low = oracle_solve(&ch, Protocol::Novel, 0.01).unwrap();
        assert!(close(low.sum_rate(), half_log2_1p(0.016).max(2.0 * half_log2_1p(0.005)), 1e-10));
    }

    #[test]
    fn rejects_large_instances() {
        let ch = ChannelRealization::new(vec![1.0; 7], vec![vec![1.0; 7]], vec![vec![1.0; 7]]).unwrap();
        assert!(matches!(oracle_solve(&ch, Protocol::Novel, 1.0), Err(Error::InstanceTooLarge { k: 7, u: 1 })));
    }

    #[test]
    fn pruning_keeps_the_best_of_each_mode() {
        let ch = ChannelRealization::new(
            vec![5.0, 1.0],
            vec![vec![0.1, 0.2], vec![0.3, 0.9]],
            vec![vec![4.0, 3.0], vec![0.5, 0.1]],
        )
        .unwrap();
        let cands = pair_candidates(&ch, Protocol::Novel, 0, 1);
        let best_relay = (0..2).map(|u| equiv_gain(&ch.pair_gains(0, 1, u), Protocol::Novel).gain).fold(0.0, f64::max);
        assert!(cands.iter().any(|c| matches!(c, Candidate::Relay { gain, .. } if *gain == best_relay)));
        assert!(cands.iter().any(|c| matches!(c, Candidate::Direct { first_user: 1, second_user: 1, .. })));
        assert!(cands.len() <= 2);
    }
}
