//! Interaction matrix validation and the combinatorial/spectral facts the
//! dynamics depend on: irreducibility, period and the leading left
//! eigenvector of `Wᵀ`.
//!
//! Convention: `weights[l1][l2]` is the influence of agent `l1` on agent
//! `l2`, and every column sums to one (`Wᵀ1 = 1`). The support digraph has an
//! edge `l1 -> l2` iff `weights[l1][l2] > 0`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_COLUMN_TOL: f64 = 1e-12;
pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
const DENSE_FALLBACK_MAX_N: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetgraphError {
    #[error("matrix must have at least one agent")]
    Empty,
    #[error("matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("column {col} sums to {sum}, deviating from 1 by more than {tol}")]
    ColumnSumViolation { col: usize, sum: f64, tol: f64 },
    #[error("matrix is not irreducible")]
    NotIrreducible,
    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// A column-stochastic interaction matrix together with its cached
/// irreducibility flag, period and (when irreducible) leading eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedMatrix {
    n_agents: usize,
    /// Row-major `w[l1][l2]`.
    weights: Vec<f64>,
    irreducible: bool,
    /// Only meaningful when irreducible; 1 otherwise.
    period: usize,
    left_eigenvector: Option<Vec<f64>>,
    max_column_deviation: f64,
}

impl ValidatedMatrix {
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[from * self.n_agents + to]
    }

    /// Row-major weights, `w[l1][l2]` at `l1 * n + l2`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.n_agents).map(<[f64]>::to_vec).collect()
    }

    pub fn irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn aperiodic(&self) -> bool {
        self.period == 1
    }

    /// `v` with `Wv = v`, `v > 0`, `Σv = 1`. `None` for reducible matrices.
    pub fn left_eigenvector(&self) -> Option<&[f64]> {
        self.left_eigenvector.as_deref()
    }

    pub fn v_min(&self) -> Option<f64> {
        self.left_eigenvector
            .as_ref()
            .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Largest observed `|Σ_l1 w[l1][l2] - 1|` over columns.
    pub fn max_column_deviation(&self) -> f64 {
        self.max_column_deviation
    }

    /// `Wᵀ` stored row-major, i.e. entry `(l, l1)` is `w[l1][l]`. Row `l` of
    /// this is what the Bernoulli mean of agent `l` is computed from.
    pub fn transposed(&self) -> Vec<f64> {
        let n = self.n_agents;
        let mut t = vec![0.0; n * n];
        for l1 in 0..n {
            for l2 in 0..n {
                t[l2 * n + l1] = self.weights[l1 * n + l2];
            }
        }
        t
    }
}

/// Mean-field interaction: `w[l1][l2] = 1/(2N) + δ(l1,l2)/2`.
pub fn mean_field(n: usize) -> Vec<Vec<f64>> {
    let base = 1.0 / (2.0 * n as f64);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { base + 0.5 } else { base })
                .collect()
        })
        .collect()
}

/// Validate a raw matrix. Columns must sum to one within `tol`; nothing is
/// rescaled. Reducibility is recorded, not rejected.
pub fn validate_matrix(raw: &[Vec<f64>], tol: f64) -> Result<ValidatedMatrix, NetgraphError> {
    validate_with(raw, tol, false)
}

/// Like [`validate_matrix`] but divides every column by its sum first.
/// Negative entries are still rejected, as are zero columns.
pub fn validate_matrix_renormalized(
    raw: &[Vec<f64>],
    tol: f64,
) -> Result<ValidatedMatrix, NetgraphError> {
    validate_with(raw, tol, true)
}

fn validate_with(
    raw: &[Vec<f64>],
    tol: f64,
    renormalize: bool,
) -> Result<ValidatedMatrix, NetgraphError> {
    let n = raw.len();
    if n == 0 {
        return Err(NetgraphError::Empty);
    }
    let mut weights = Vec::with_capacity(n * n);
    for (row, r) in raw.iter().enumerate() {
        if r.len() != n {
            return Err(NetgraphError::NotSquare { row, len: r.len(), n });
        }
        for (col, &value) in r.iter().enumerate() {
            if !value.is_finite() {
                return Err(NetgraphError::NonFinite { row, col });
            }
            if value < 0.0 {
                return Err(NetgraphError::NegativeEntry { row, col, value });
            }
            weights.push(value);
        }
    }
    if renormalize {
        for col in 0..n {
            let sum: f64 = (0..n).map(|row| weights[row * n + col]).sum();
            if sum > 0.0 {
                for row in 0..n {
                    weights[row * n + col] /= sum;
                }
            }
        }
    }
    let mut max_column_deviation: f64 = 0.0;
    for col in 0..n {
        let sum: f64 = (0..n).map(|row| weights[row * n + col]).sum();
        let dev = (sum - 1.0).abs();
        if dev > tol {
            return Err(NetgraphError::ColumnSumViolation { col, sum, tol });
        }
        max_column_deviation = max_column_deviation.max(dev);
    }

    let adjacency = support_digraph(&weights, n);
    let irreducible = strongly_connected(&adjacency);
    let mut m = ValidatedMatrix {
        n_agents: n,
        weights,
        irreducible,
        period: 1,
        left_eigenvector: None,
        max_column_deviation,
    };
    if irreducible {
        m.period = matrix_period(&m)?;
        m.left_eigenvector = Some(leading_left_eigenvector(&m, DEFAULT_EIGEN_TOL)?);
    }
    Ok(m)
}

fn support_digraph(weights: &[f64], n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|from| (0..n).filter(|&to| weights[from * n + to] > 0.0).collect())
        .collect()
}

fn reach_all(adjacency: &[Vec<usize>]) -> bool {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

fn strongly_connected(adjacency: &[Vec<usize>]) -> bool {
    let n = adjacency.len();
    if !reach_all(adjacency) {
        return false;
    }
    let mut reversed = vec![Vec::new(); n];
    for (u, out) in adjacency.iter().enumerate() {
        for &v in out {
            reversed[v].push(u);
        }
    }
    reach_all(&reversed)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Period of an irreducible matrix: gcd over support edges `u -> v` of
/// `depth(u) + 1 - depth(v)` for BFS depths from vertex 0.
pub fn matrix_period(m: &ValidatedMatrix) -> Result<usize, NetgraphError> {
    if !m.irreducible {
        return Err(NetgraphError::NotIrreducible);
    }
    let n = m.n_agents;
    let adjacency = support_digraph(&m.weights, n);
    let mut depth = vec![usize::MAX; n];
    depth[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut d = 0;
    for (u, out) in adjacency.iter().enumerate() {
        for &v in out {
            // depth[v] <= depth[u] + 1 holds for BFS depths.
            d = gcd(d, depth[u] + 1 - depth[v]);
        }
    }
    Ok(d.max(1))
}

/// Leading left eigenvector of `Wᵀ` (equivalently `Wv = v`) normalized to sum
/// one, by power iteration averaged over one period. Falls back to a dense
/// solve for small matrices when the iteration cap is hit.
pub fn leading_left_eigenvector(m: &ValidatedMatrix, tol: f64) -> Result<Vec<f64>, NetgraphError> {
    leading_left_eigenvector_capped(m, tol, DEFAULT_MAX_ITER)
}

pub fn leading_left_eigenvector_capped(
    m: &ValidatedMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, NetgraphError> {
    if !m.irreducible {
        return Err(NetgraphError::NotIrreducible);
    }
    let n = m.n_agents;
    let period = m.period.max(1);
    match power_iteration(m, period, tol, max_iter) {
        Ok(v) => Ok(v),
        Err(err @ NetgraphError::NoConvergence { .. }) => {
            if n <= DENSE_FALLBACK_MAX_N {
                if let Some(v) = dense_fixed_point(m) {
                    if residual(m, &v) <= tol.max(1e-10) && v.iter().all(|&x| x > 0.0) {
                        return Ok(v);
                    }
                }
            }
            Err(err)
        }
        Err(err) => Err(err),
    }
}

fn apply(m: &ValidatedMatrix, x: &[f64], out: &mut [f64]) {
    let n = m.n_agents;
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m.weights[i * n..(i + 1) * n];
        *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
    }
}

fn residual(m: &ValidatedMatrix, v: &[f64]) -> f64 {
    let mut wv = vec![0.0; v.len()];
    apply(m, v, &mut wv);
    wv.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

fn power_iteration(
    m: &ValidatedMatrix,
    period: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, NetgraphError> {
    let n = m.n_agents;
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut avg = vec![0.0; n];
    let mut last_residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        // Cesàro average of `period` consecutive iterates kills the
        // rotating components of a periodic matrix.
        avg.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..period {
            apply(m, &x, &mut next);
            std::mem::swap(&mut x, &mut next);
            for (a, xi) in avg.iter_mut().zip(&x) {
                *a += xi;
            }
            iterations += 1;
        }
        normalize(&mut avg);
        last_residual = residual(m, &avg);
        if last_residual <= tol {
            return Ok(avg);
        }
        // Restart from the average: it is closer to the fixed point than x.
        x.copy_from_slice(&avg);
    }
    Err(NetgraphError::NoConvergence {
        iterations,
        residual: last_residual,
    })
}

/// Solve `(W - I)v = 0`, `Σv = 1` by Gaussian elimination with partial
/// pivoting, replacing the last equation by the normalization.
fn dense_fixed_point(m: &ValidatedMatrix) -> Option<Vec<f64>> {
    let n = m.n_agents;
    let mut a = vec![0.0; n * (n + 1)];
    let w = n + 1;
    for i in 0..n {
        for j in 0..n {
            a[i * w + j] = m.weights[i * n + j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1) * w + j] = 1.0;
    }
    a[(n - 1) * w + n] = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| {
            a[p * w + col].abs().total_cmp(&a[q * w + col].abs())
        })?;
        if a[pivot * w + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..w {
                a.swap(pivot * w + j, col * w + j);
            }
        }
        for row in 0..n {
            if row != col {
                let f = a[row * w + col] / a[col * w + col];
                if f != 0.0 {
                    for j in col..w {
                        a[row * w + j] -= f * a[col * w + j];
                    }
                }
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| a[i * w + n] / a[i * w + i]).collect();
    normalize(&mut v);
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn permutation(n: usize) -> Vec<Vec<f64>> {
        // l -> l+1 mod n
        (0..n)
            .map(|i| (0..n).map(|j| if j == (i + 1) % n { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn mean_field_three_agents() {
        let m = validate_matrix(&mean_field(3), DEFAULT_COLUMN_TOL).unwrap();
        assert!(m.irreducible());
        assert_eq!(m.period(), 1);
        let v = m.left_eigenvector().unwrap();
        for &x in v {
            assert!((x - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_is_reducible() {
        let m = validate_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1e-12).unwrap();
        assert!(!m.irreducible());
        assert!(m.left_eigenvector().is_none());
        assert_eq!(matrix_period(&m), Err(NetgraphError::NotIrreducible));
        assert_eq!(
            leading_left_eigenvector(&m, 1e-12),
            Err(NetgraphError::NotIrreducible)
        );
    }

    #[test]
    fn two_cycle_has_period_two() {
        let m = validate_matrix(&permutation(2), 1e-12).unwrap();
        assert!(m.irreducible());
        assert_eq!(m.period(), 2);
        assert!(!m.aperiodic());
        let v = m.left_eigenvector().unwrap();
        assert!((v[0] - 0.5).abs() < 1e-14 && (v[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn three_cycle_has_period_three() {
        let m = validate_matrix(&permutation(3), 1e-12).unwrap();
        assert_eq!(matrix_period(&m).unwrap(), 3);
        let v = m.left_eigenvector().unwrap();
        assert!(v.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-14));
    }

    #[test]
    fn positive_diagonal_is_aperiodic() {
        let raw = vec![vec![0.5, 0.0, 1.0], vec![0.5, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let m = validate_matrix(&raw, 1e-12).unwrap();
        assert!(m.irreducible());
        assert_eq!(m.period(), 1);
    }

    #[test]
    fn single_agent() {
        let m = validate_matrix(&[vec![1.0]], 1e-12).unwrap();
        assert!(m.irreducible());
        assert_eq!(m.left_eigenvector().unwrap(), &[1.0]);
    }

    #[test]
    fn two_by_two_fixed_point() {
        // Wv = v with Σv = 1 solved by hand: v1/2 + v2/4 = v1 => v2 = 2 v1.
        let raw = vec![vec![0.5, 0.25], vec![0.5, 0.75]];
        let m = validate_matrix(&raw, 1e-12).unwrap();
        let v = m.left_eigenvector().unwrap();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_and_bad_columns() {
        let neg = vec![vec![1.5, 0.0], vec![-0.5, 1.0]];
        assert!(matches!(
            validate_matrix(&neg, 1e-12),
            Err(NetgraphError::NegativeEntry { row: 1, col: 0, .. })
        ));
        let bad = vec![vec![0.5, 0.5], vec![0.4, 0.5]];
        assert!(matches!(
            validate_matrix(&bad, 1e-12),
            Err(NetgraphError::ColumnSumViolation { col: 0, .. })
        ));
        let fixed = validate_matrix_renormalized(&bad, 1e-12).unwrap();
        assert!((fixed.weight(0, 0) - 0.5 / 0.9).abs() < 1e-15);
        assert!(matches!(validate_matrix(&[], 1e-12), Err(NetgraphError::Empty)));
        assert!(matches!(
            validate_matrix(&[vec![1.0, 0.0]], 1e-12),
            Err(NetgraphError::NotSquare { .. })
        ));
    }

    #[test]
    fn tolerance_is_respected() {
        let raw = vec![vec![0.5 + 1e-13, 0.5], vec![0.5, 0.5]];
        assert!(validate_matrix(&raw, 1e-12).is_ok());
        assert!(validate_matrix(&raw, 1e-14).is_err());
    }

    #[test]
    fn iteration_cap_falls_back_to_dense_solve() {
        let raw = vec![vec![0.5, 0.25], vec![0.5, 0.75]];
        let m = validate_matrix(&raw, 1e-12).unwrap();
        let v = leading_left_eigenvector_capped(&m, 1e-14, 1).unwrap();
        assert!((v[1] - 2.0 / 3.0).abs() < 1e-12);
    }
}
