//! Reference implementations shared by the oracle and acceptance targets.

#![allow(dead_code)]

use thinhom::geometry::{mesh_area, Mesh};

/// Stiffness by the cotangent formula and the load `int grad psi_i . (1, 0)`,
/// with right-column nodes folded onto the left column.
pub struct PeriodicLaplace {
    pub n: usize,
    pub fold: Vec<usize>,
    pub k: Vec<Vec<(usize, f64)>>,
    pub b: Vec<f64>,
}

pub fn cot(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    // cotangent of the angle at `a`
    let u = [b[0] - a[0], b[1] - a[1]];
    let v = [c[0] - a[0], c[1] - a[1]];
    (u[0] * v[0] + u[1] * v[1]) / (u[0] * v[1] - u[1] * v[0]).abs()
}

impl PeriodicLaplace {
    pub fn new(mesh: &Mesh) -> Self {
        let nn = mesh.node_count();
        let mut fold: Vec<usize> = (0..nn).collect();
        for &(l, r) in mesh.periodic_pairs() {
            fold[r] = l;
        }
        let mut dense = std::collections::BTreeMap::new();
        let mut b = vec![0.0; nn];
        for tri in mesh.triangles() {
            let x = tri.map(|i| mesh.nodes()[i]);
            for k in 0..3 {
                let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let w = 0.5 * cot(x[k], x[(k + 1) % 3], x[(k + 2) % 3]);
                let (fi, fj) = (fold[i], fold[j]);
                *dense.entry((fi, fj)).or_insert(0.0) -= w;
                *dense.entry((fj, fi)).or_insert(0.0) -= w;
                *dense.entry((fi, fi)).or_insert(0.0) += w;
                *dense.entry((fj, fj)).or_insert(0.0) += w;
            }
            // int_T d1 psi_k = (y_next - y_prev) / 2
            for k in 0..3 {
                let (next, prev) = (x[(k + 1) % 3], x[(k + 2) % 3]);
                b[fold[tri[k]]] += 0.5 * (next[1] - prev[1]);
            }
        }
        let mut k = vec![Vec::new(); nn];
        for ((i, j), v) in dense {
            k[i].push((j, v));
        }
        PeriodicLaplace { n: nn, fold, k, b }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.k
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Plain conjugate gradients for `K phi = -b` on the folded nodes, projected
    /// onto mean-zero vectors.
    pub fn solve(&self) -> Vec<f64> {
        let active: Vec<bool> = (0..self.n).map(|i| self.fold[i] == i).collect();
        let project = |v: &mut Vec<f64>| {
            let cnt = active.iter().filter(|&&a| a).count() as f64;
            let mean: f64 = v.iter().zip(&active).filter(|(_, &a)| a).map(|(x, _)| x).sum::<f64>() / cnt;
            for (x, &a) in v.iter_mut().zip(&active) {
                *x = if a { *x - mean } else { 0.0 };
            }
        };
        let mut x = vec![0.0; self.n];
        let mut r: Vec<f64> = self.b.iter().map(|v| -v).collect();
        project(&mut r);
        let mut p = r.clone();
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let r0 = rr.sqrt();
        for _ in 0..20 * self.n {
            let ap = self.apply(&p);
            let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..self.n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            project(&mut r);
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            if rr_new.sqrt() < 1e-14 * r0 {
                break;
            }
            for i in 0..self.n {
                p[i] = r[i] + rr_new / rr * p[i];
            }
            rr = rr_new;
        }
        (0..self.n).map(|i| x[self.fold[i]]).collect()
    }
}

pub fn mean_zero(mesh: &Mesh, u: &mut [f64]) {
    let mut w = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &i in tri {
            w[i] += mesh.signed_area(t) / 3.0;
        }
    }
    let m = w.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
    for v in u.iter_mut() {
        *v -= m;
    }
}

pub fn q_of(mesh: &Mesh, phi: &[f64]) -> f64 {
    let mut total = 0.0;
    for tri in mesh.triangles() {
        let x = tri.map(|i| mesh.nodes()[i]);
        let det = (x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]);
        let (d1, d2) = (phi[tri[1]] - phi[tri[0]], phi[tri[2]] - phi[tri[0]]);
        let gx = (d1 * (x[2][1] - x[0][1]) - d2 * (x[1][1] - x[0][1])) / det;
        let gy = (d2 * (x[1][0] - x[0][0]) - d1 * (x[2][0] - x[0][0])) / det;
        total += 0.5 * det * ((1.0 + gx).powi(2) + gy * gy);
    }
    total / mesh_area(mesh)
}

/// `q` of the linear cell problem from the oracle solve.
pub fn linear_cell_q(mesh: &Mesh) -> f64 {
    let mut phi = PeriodicLaplace::new(mesh).solve();
    mean_zero(mesh, &mut phi);
    q_of(mesh, &phi)
}
