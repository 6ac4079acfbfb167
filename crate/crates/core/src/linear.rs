//! Direct solver for sparse symmetric positive-definite systems: reverse
//! Cuthill-McKee reordering followed by an envelope (skyline) Cholesky factorization.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Reverse Cuthill-McKee permutation: `perm[k]` is the original index placed at position `k`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adjacency, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Walks to a node of (near) maximal eccentricity within the component of `seed`.
fn pseudo_peripheral(seed: usize, adjacency: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let mut depth = 0;
    for _ in 0..8 {
        let levels = bfs_levels(current, adjacency);
        let max_level = levels.iter().filter_map(|&l| l).max().unwrap_or(0);
        if max_level <= depth && depth > 0 {
            break;
        }
        depth = max_level;
        current = levels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == Some(max_level))
            .min_by_key(|(i, _)| (degree[*i], *i))
            .map(|(i, _)| i)
            .unwrap_or(current);
    }
    current
}

fn bfs_levels(start: usize, adjacency: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut levels = vec![None; adjacency.len()];
    levels[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let l = levels[v].unwrap();
        for &w in &adjacency[v] {
            if levels[w].is_none() {
                levels[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    levels
}

/// Lower-triangular envelope Cholesky factor of a permuted matrix.
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let perm = reverse_cuthill_mckee(a);
        let mut inverse = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            inverse[i] = k;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (i, j, _) in a.triplets() {
            let (pi, pj) = (inverse[i], inverse[j]);
            if pj < pi {
                first[pi] = first[pi].min(pj);
            }
        }
        let mut offset = vec![0; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for (i, j, v) in a.triplets() {
            let (pi, pj) = (inverse[i], inverse[j]);
            if pj <= pi {
                values[offset[pi] + pj - first[pi]] += v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = values[offset[i] + j - fi];
                let ri = &values[offset[i] + k0 - fi..offset[i] + j - fi];
                let rj = &values[offset[j] + k0 - fj..offset[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                values[offset[i] + j - fi] = s / values[offset[j + 1] - 1];
            }
            let row = &values[offset[i]..offset[i + 1] - 1];
            let diag = values[offset[i + 1] - 1] - row.iter().map(|x| x * x).sum::<f64>();
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    row: perm[i],
                    pivot: diag,
                });
            }
            values[offset[i + 1] - 1] = diag.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            offset,
            values,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1] - 1];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, x)| l * x).sum();
            y[i] = (y[i] - s) / self.values[self.offset[i + 1] - 1];
        }
        for i in (0..n).rev() {
            y[i] /= self.values[self.offset[i + 1] - 1];
            let fi = self.first[i];
            let yi = y[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1] - 1];
            for (l, x) in row.iter().zip(&mut y[fi..i]) {
                *x -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }

    /// Stored entries of the factor (envelope size).
    pub fn envelope_len(&self) -> usize {
        self.values.len()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = b` for symmetric positive-definite `A` to `||A x - b|| <= tol ||b||`
/// where floating point allows, refining iteratively. A non-positive pivot is
/// reported as [`Error::NotPositiveDefinite`].
pub fn linear_solve(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    assert_eq!(a.nrows(), b.len(), "dimension mismatch");
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let chol = EnvelopeCholesky::factor(a)?;
    let mut x = chol.solve(b);
    let mut best = f64::INFINITY;
    for _ in 0..4 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rn = norm(&r);
        if rn <= tol * bnorm || rn >= 0.5 * best {
            break;
        }
        best = rn;
        let dx = chol.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(linear_solve(&CsrMatrix::identity(3), &b, 1e-12).unwrap(), b);
        let d = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let x = linear_solve(&d, &[2.0, 4.0], 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            linear_solve(&a, &[1.0, 1.0], 1e-12),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rcm_is_a_permutation_and_shrinks_a_scrambled_band() {
        // path graph with scrambled labels
        let n = 40;
        let label = |i: usize| (i * 17) % n;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((label(i), label(i), 4.0));
            if i + 1 < n {
                t.push((label(i), label(i + 1), -1.0));
                t.push((label(i + 1), label(i), -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let mut p = reverse_cuthill_mckee(&a);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        assert_eq!(chol.envelope_len(), 2 * n - 1);
        p.sort_unstable();
        assert_eq!(p, (0..n).collect::<Vec<_>>());
    }
}
