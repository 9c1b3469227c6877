//! Minimum-cost bipartite assignment on rectangular matrices with forbidden
//! entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major cost matrix; `+inf` marks a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> CostMatrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} cost matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| v.is_nan() || *v == T::neg_infinity())
        {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let data = (0..rows * cols)
            .map(|i| f(i / cols.max(1), i % cols.max(1)))
            .collect();
        Self::from_vec(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn admissible(&self, r: usize, c: usize) -> bool {
        self.get(r, c).is_finite()
    }

    /// Marks every entry strictly above `gate` as forbidden.
    pub fn gated(mut self, gate: T) -> Self {
        for v in &mut self.data {
            if *v > gate {
                *v = T::infinity();
            }
        }
        self
    }
}

/// Matched `(row, col)` pairs sorted by row, plus the leftovers on each side.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost<T: Scalar>(&self, cost: &CostMatrix<T>) -> T {
        self.pairs.iter().map(|&(r, c)| cost.get(r, c)).sum()
    }

    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }

    pub fn row_of(&self, col: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == col).map(|p| p.0)
    }
}

/// Solves the square problem with potentials (shortest augmenting paths).
/// Returns `col[row]`.
fn solve_square<T: Scalar>(n: usize, cost: impl Fn(usize, usize) -> T) -> Vec<usize> {
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            col[p[j] - 1] = j - 1;
        }
    }
    col
}

/// Minimum-cost assignment that first maximizes the number of admissible
/// pairs, then minimizes their total cost.
///
/// Among equal-cost optima the result is canonical: no two pairs can be
/// swapped, and no pair moved to a free lower-index column, without raising
/// the cost. An all-equal matrix therefore yields the diagonal.
pub fn hungarian<T: Scalar>(cost: &CostMatrix<T>) -> Assignment {
    let (rows, cols) = (cost.rows, cost.cols);
    let n = rows.max(cols);
    let mut assigned: Vec<Option<usize>> = vec![None; rows];
    if rows > 0 && cols > 0 {
        // A forbidden entry outweighs any admissible total, so the optimum
        // uses as few of them as possible.
        let mut span = T::zero();
        let mut min = T::zero();
        for &v in cost.data.iter().filter(|v| v.is_finite()) {
            span += v.abs();
            min = min.min(v);
        }
        let big = (span * T::from_count(n + 1) + T::one()) * T::lit(2.0);
        let shift = -min;
        let padded = |r: usize, c: usize| {
            if r >= rows || c >= cols {
                T::zero()
            } else {
                let v = cost.get(r, c);
                if v.is_finite() {
                    v + shift
                } else {
                    big
                }
            }
        };
        let col = solve_square(n, padded);
        for r in 0..rows {
            let c = col[r];
            if c < cols && cost.admissible(r, c) {
                assigned[r] = Some(c);
            }
        }
        canonicalize(cost, &mut assigned);
    }
    let mut col_used = vec![false; cols];
    let mut out = Assignment::default();
    for (r, a) in assigned.iter().enumerate() {
        match a {
            Some(c) => {
                col_used[*c] = true;
                out.pairs.push((r, *c));
            }
            None => out.unmatched_rows.push(r),
        }
    }
    out.unmatched_cols = (0..cols).filter(|&c| !col_used[c]).collect();
    out
}

/// Applies cost-preserving swaps and moves until none lowers the
/// `(sum of columns, inversions)` order, which guarantees termination.
fn canonicalize<T: Scalar>(cost: &CostMatrix<T>, assigned: &mut [Option<usize>]) {
    loop {
        let mut changed = false;
        let mut used = vec![false; cost.cols];
        for c in assigned.iter().flatten() {
            used[*c] = true;
        }
        for (r, slot) in assigned.iter_mut().enumerate() {
            let Some(a) = *slot else { continue };
            if let Some(c) = (0..a)
                .find(|&c| !used[c] && cost.admissible(r, c) && cost.get(r, c) == cost.get(r, a))
            {
                used[a] = false;
                used[c] = true;
                *slot = Some(c);
                changed = true;
            }
        }
        for i in 0..assigned.len() {
            for k in i + 1..assigned.len() {
                let (Some(a), Some(b)) = (assigned[i], assigned[k]) else {
                    continue;
                };
                if a > b
                    && cost.admissible(i, b)
                    && cost.admissible(k, a)
                    && cost.get(i, b) + cost.get(k, a) == cost.get(i, a) + cost.get(k, b)
                {
                    assigned[i] = Some(b);
                    assigned[k] = Some(a);
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::seeded;
    use rand::Rng;

    fn brute(cost: &CostMatrix<f64>) -> (usize, f64) {
        // best (admissible count, -cost) over all partial injections rows -> cols
        fn rec(
            cost: &CostMatrix<f64>,
            r: usize,
            used: &mut Vec<bool>,
            n: usize,
            acc: f64,
            best: &mut (usize, f64),
        ) {
            if r == cost.rows() {
                if n > best.0 || (n == best.0 && acc < best.1) {
                    *best = (n, acc);
                }
                return;
            }
            rec(cost, r + 1, used, n, acc, best);
            for c in 0..cost.cols() {
                if !used[c] && cost.admissible(r, c) {
                    used[c] = true;
                    rec(cost, r + 1, used, n + 1, acc + cost.get(r, c), best);
                    used[c] = false;
                }
            }
        }
        let mut best = (0, f64::INFINITY);
        rec(cost, 0, &mut vec![false; cost.cols()], 0, 0.0, &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        best
    }

    #[test]
    fn three_by_three_example() {
        let c =
            CostMatrix::from_vec(3, 3, vec![4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0), (2, 2)]);
        assert_eq!(a.total_cost(&c), 5.0);
    }

    #[test]
    fn equal_costs_give_identity() {
        for n in 1..6 {
            let c = CostMatrix::from_vec(n, n, vec![0.0; n * n]).unwrap();
            let a = hungarian(&c);
            assert_eq!(a.pairs, (0..n).map(|i| (i, i)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rectangular_and_empty() {
        let c = CostMatrix::from_vec(2, 3, vec![5.0, 1.0, 9.0, 1.0, 5.0, 9.0]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.unmatched_cols, vec![2]);

        let e = CostMatrix::<f64>::from_vec(0, 4, vec![]).unwrap();
        let a = hungarian(&e);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_cols, vec![0, 1, 2, 3]);
        let e = CostMatrix::<f64>::from_vec(3, 0, vec![]).unwrap();
        assert_eq!(hungarian(&e).unmatched_rows, vec![0, 1, 2]);
    }

    #[test]
    fn forbidden_entries_never_matched() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_vec(2, 2, vec![inf, 0.5, inf, 0.1]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(1, 1)]);
        assert_eq!(a.unmatched_rows, vec![0]);
        assert_eq!(a.unmatched_cols, vec![0]);

        let gated = CostMatrix::from_vec(1, 2, vec![0.9, 0.8])
            .unwrap()
            .gated(0.7);
        assert!(hungarian(&gated).pairs.is_empty());
    }

    #[test]
    fn prefers_more_pairs_over_lower_cost() {
        let inf = f64::INFINITY;
        // matching both rows costs 200, one row alone could cost 0
        let c = CostMatrix::from_vec(2, 2, vec![0.0, 100.0, inf, 100.0]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn rejects_nan_and_bad_shape() {
        assert!(CostMatrix::from_vec(1, 2, vec![f64::NAN, 0.0]).is_err());
        assert!(CostMatrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn matches_brute_force_on_integer_costs() {
        let mut rng = seeded(99);
        for _ in 0..300 {
            let rows = rng.gen_range(1..6);
            let cols = rng.gen_range(1..6);
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        f64::INFINITY
                    } else {
                        rng.gen_range(-5..20) as f64
                    }
                })
                .collect();
            let c = CostMatrix::from_vec(rows, cols, data).unwrap();
            let a = hungarian(&c);
            let (n, best) = brute(&c);
            assert_eq!(a.pairs.len(), n);
            assert_eq!(a.total_cost(&c), best, "{c:?}");
            assert_eq!(a.pairs.len() + a.unmatched_rows.len(), rows);
            assert_eq!(a.pairs.len() + a.unmatched_cols.len(), cols);
        }
    }

    #[test]
    fn f32_instantiation() {
        let c = CostMatrix::<f32>::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(hungarian(&c).pairs, vec![(0, 1), (1, 0)]);
    }
}
