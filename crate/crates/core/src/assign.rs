//! Maximum-profit perfect matching on a square matrix (Hungarian method).
//!
//! Dense O(n^3) shortest-augmenting-path variant with row/column potentials.
//! Profits are negated into costs and minimized.

use crate::error::{Error, Result};

/// Square matrix of finite profits, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ProfitMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::NotSquare { row, len: r.len(), expected: n });
            }
            entries.extend_from_slice(r);
        }
        Self::from_flat(n, entries)
    }

    pub fn from_flat(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::invalid(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i / n.max(1), col: i % n.max(1) });
        }
        Ok(Self { n, entries })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub permutation: Vec<usize>,
    pub total_profit: f64,
}

/// Finds a permutation maximizing `Σ_k profits[k][perm[k]]`.
///
/// Deterministic for a given input; among several optima any one may be
/// returned.
pub fn solve_assignment(profits: &ProfitMatrix) -> Assignment {
    let n = profits.n;
    if n == 0 {
        return Assignment { permutation: Vec::new(), total_profit: 0.0 };
    }

    // 1-based potentials; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);

        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let cost_row = &profits.entries[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = -cost_row[j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }

        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut permutation = vec![0usize; n];
    for j in 1..=n {
        permutation[owner[j] - 1] = j - 1;
    }
    let total_profit = permutation.iter().enumerate().map(|(r, &c)| profits.get(r, c)).sum();
    Assignment { permutation, total_profit }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(m: &ProfitMatrix) -> f64 {
        fn go(m: &ProfitMatrix, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
            if row == m.size() {
                *best = best.max(acc);
                return;
            }
            for c in 0..m.size() {
                if !used[c] {
                    used[c] = true;
                    go(m, row + 1, used, acc + m.get(row, c), best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        go(m, 0, &mut vec![false; m.size()], 0.0, &mut best);
        best
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ProfitMatrix {
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.random_range(-5.0..10.0)).collect()).collect();
        ProfitMatrix::from_rows(&rows).unwrap()
    }

    fn is_permutation(p: &[usize]) -> bool {
        let mut s = p.to_vec();
        s.sort_unstable();
        s.iter().enumerate().all(|(i, &c)| i == c)
    }

    #[test]
    fn identity_dominant() {
        let m = ProfitMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let a = solve_assignment(&m);
        assert_eq!(a.permutation, vec![0, 1, 2]);
        assert_eq!(a.total_profit, 3.0);
    }

    #[test]
    fn two_by_two_takes_off_diagonal() {
        let m = ProfitMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let a = solve_assignment(&m);
        assert_eq!(a.permutation, vec![1, 0]);
        assert_eq!(a.total_profit, 5.0);
    }

    #[test]
    fn empty_and_single() {
        assert!(solve_assignment(&ProfitMatrix::from_rows(&[]).unwrap()).permutation.is_empty());
        let a = solve_assignment(&ProfitMatrix::from_rows(&[vec![-2.5]]).unwrap());
        assert_eq!(a.permutation, vec![0]);
        assert_eq!(a.total_profit, -2.5);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            ProfitMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]),
            Err(Error::NotSquare { row: 1, .. })
        ));
        assert!(matches!(
            ProfitMatrix::from_rows(&[vec![1.0, f64::NAN], vec![3.0, 0.0]]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn matches_brute_force_on_random_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 6);
            let a = solve_assignment(&m);
            assert!(is_permutation(&a.permutation));
            assert!((a.total_profit - brute_force(&m)).abs() < 1e-9);
        }
    }

    #[test]
    fn handles_ties_and_constant_matrices() {
        let m = ProfitMatrix::from_rows(&vec![vec![0.0; 5]; 5]).unwrap();
        let a = solve_assignment(&m);
        assert!(is_permutation(&a.permutation));
        assert_eq!(a.total_profit, 0.0);
        assert_eq!(solve_assignment(&m), a);
    }

    #[test]
    fn row_offset_shifts_profit_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 5;
            let m = random_matrix(&mut rng, n);
            let row = rng.random_range(0..n);
            let shift = rng.random_range(-3.0..3.0);
            let mut shifted = m.entries.clone();
            shifted[row * n..(row + 1) * n].iter_mut().for_each(|x| *x += shift);
            let shifted = ProfitMatrix::from_flat(n, shifted).unwrap();
            let (a, b) = (solve_assignment(&m), solve_assignment(&shifted));
            assert!((b.total_profit - a.total_profit - shift).abs() < 1e-9);
            let b_on_original: f64 = b.permutation.iter().enumerate().map(|(r, &c)| m.get(r, c)).sum();
            assert!((b_on_original - a.total_profit).abs() < 1e-9);
        }
    }

    #[test]
    fn large_instance_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 256);
        assert!(is_permutation(&solve_assignment(&m).permutation));
    }
}
