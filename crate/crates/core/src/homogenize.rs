//! The periodic cell problem and the homogenized quantities derived from it.
//!
//! With `v = y1 + phi` and `phi` periodic in `y1`, the cell problem asks for
//! `int_{Y*} |grad v|^(p-2) grad v . grad psi = 0` for all periodic `psi`. From its
//! solution come the coefficient
//! `q = (1/|Y*|) int |grad v|^(p-2) d1 v = (1/|Y*|) int |grad v|^p`,
//! the height fraction `theta(x2)` and the limit flux density `b(xi, x2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{a_p_reg, element_gradient, Field, FluxParams, PLaplaceForm, Vec2};
use crate::geometry::{mesh_area, DomainKind, Mesh, ProfileSpec};
use crate::solve::{newton_solve, ConstraintSet, SolveDiagnostics, SolveOptions};

/// Relative disagreement between the two q formulas that flags an unconverged solve.
pub const Q_AGREEMENT_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub mesh: Mesh,
    pub p: f64,
    /// Mean-zero periodic corrector `phi = v - y1`.
    pub phi: Field,
    /// `|Y*|` as the area of the cell mesh.
    pub cell_measure: f64,
    pub q_flux: f64,
    pub q_energy: f64,
    pub diagnostics: SolveDiagnostics,
    grad_phi: Vec<Vec2>,
    fibers: FiberIndex,
}

/// Scalar record written by `cell` and embedded in study output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub p: f64,
    pub period: f64,
    pub cell_measure: f64,
    pub q_flux: f64,
    pub q_energy: f64,
    pub delta: f64,
    pub residual: f64,
    pub newton_iterations: usize,
    pub continuation_deltas: Vec<f64>,
}

/// Buckets of triangles by vertical extent, for horizontal-line queries.
#[derive(Debug, Clone)]
struct FiberIndex {
    height: f64,
    buckets: Vec<Vec<usize>>,
}

impl FiberIndex {
    fn new(mesh: &Mesh) -> Self {
        let height = mesh.nodes().iter().map(|p| p[1]).fold(0.0, f64::max);
        let nb = (mesh.triangle_count() / 16).clamp(1, 4096);
        let mut buckets = vec![Vec::new(); nb];
        for t in 0..mesh.triangle_count() {
            let ys = mesh.vertices(t).map(|v| v[1]);
            let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let b0 = ((lo / height * nb as f64).floor() as usize).min(nb - 1);
            let b1 = ((hi / height * nb as f64).floor() as usize).min(nb - 1);
            for b in &mut buckets[b0..=b1] {
                b.push(t);
            }
        }
        FiberIndex { height, buckets }
    }

    fn candidates(&self, y: f64) -> &[usize] {
        if !(0.0..=self.height).contains(&y) {
            return &[];
        }
        let nb = self.buckets.len();
        let b = ((y / self.height * nb as f64).floor() as usize).min(nb - 1);
        &self.buckets[b]
    }
}

/// Length of the intersection of the line `x2 = y` with triangle `t`.
pub(crate) fn horizontal_chord(mesh: &Mesh, t: usize, y: f64) -> f64 {
    let mut v = mesh.vertices(t);
    v.sort_by(|a, b| a[1].total_cmp(&b[1]));
    let [a, b, c] = v;
    if y <= a[1] || y >= c[1] {
        return 0.0;
    }
    let x_at = |p: [f64; 2], q: [f64; 2]| p[0] + (q[0] - p[0]) * (y - p[1]) / (q[1] - p[1]);
    let long = x_at(a, c);
    let short = if y < b[1] { x_at(a, b) } else { x_at(b, c) };
    (long - short).abs()
}

/// Solves the cell problem on a cell mesh.
pub fn solve_cell(mesh: &Mesh, p: f64, opts: &SolveOptions) -> Result<CellSolution> {
    if mesh.kind() != DomainKind::Cell {
        return Err(Error::InvalidInput("solve_cell needs a cell mesh".into()));
    }
    let form = PLaplaceForm::cell(mesh, p, opts.final_delta())?;
    let constraints = ConstraintSet {
        periodic_pairs: mesh.periodic_pairs().to_vec(),
        pinned_node: Some(0),
        mean_zero_postshift: true,
    };
    let (phi, diagnostics) = newton_solve(&form, &vec![0.0; mesh.node_count()], &constraints, opts)?;
    Ok(CellSolution::from_phi(mesh.clone(), p, Field::new(phi)?, diagnostics))
}

impl CellSolution {
    /// Assembles the derived quantities for a given corrector field.
    pub fn from_phi(mesh: Mesh, p: f64, phi: Field, diagnostics: SolveDiagnostics) -> Self {
        let grad_phi: Vec<Vec2> = (0..mesh.triangle_count())
            .map(|t| element_gradient(&mesh, &phi.values, t))
            .collect();
        let cell_measure = mesh_area(&mesh);
        let (mut flux, mut energy) = (0.0, 0.0);
        for (t, g) in grad_phi.iter().enumerate() {
            let gv = [1.0 + g[0], g[1]];
            let n = (gv[0] * gv[0] + gv[1] * gv[1]).sqrt();
            let area = mesh.signed_area(t);
            flux += area * if n == 0.0 { 0.0 } else { n.powf(p - 2.0) * gv[0] };
            energy += area * n.powf(p);
        }
        let fibers = FiberIndex::new(&mesh);
        CellSolution {
            mesh,
            p,
            phi,
            cell_measure,
            q_flux: flux / cell_measure,
            q_energy: energy / cell_measure,
            diagnostics,
            grad_phi,
            fibers,
        }
    }

    pub fn period(&self) -> f64 {
        self.mesh.width()
    }

    /// Relative disagreement `|q_flux - q_energy| / q_energy`.
    pub fn q_disagreement(&self) -> f64 {
        (self.q_flux - self.q_energy).abs() / self.q_energy
    }

    pub fn grad_phi(&self) -> &[Vec2] {
        &self.grad_phi
    }

    /// `grad phi` at the periodic image of `(y1, y2)`.
    pub fn grad_phi_at(&self, y1: f64, y2: f64) -> Result<Vec2> {
        let wrapped = y1.rem_euclid(self.period());
        self.mesh
            .locate([wrapped, y2], 1e-6)
            .map(|t| self.grad_phi[t])
            .ok_or(Error::CellLookup { y1: wrapped, y2 })
    }

    /// `int_0^L chi_{Y*}(s, x2) a_p((1, 0) + grad phi(s, x2)) ds`.
    pub fn fiber_flux(&self, x2: f64) -> Vec2 {
        let params = FluxParams {
            p: self.p,
            delta: 0.0,
            eps_weight: 1.0,
        };
        let mut acc = [0.0; 2];
        for &t in self.fibers.candidates(x2) {
            let len = horizontal_chord(&self.mesh, t, x2);
            if len > 0.0 {
                let g = self.grad_phi[t];
                let f = a_p_reg([1.0 + g[0], g[1]], &params);
                acc[0] += len * f[0];
                acc[1] += len * f[1];
            }
        }
        acc
    }

    pub fn summary(&self) -> CellSummary {
        CellSummary {
            p: self.p,
            period: self.period(),
            cell_measure: self.cell_measure,
            q_flux: self.q_flux,
            q_energy: self.q_energy,
            delta: self.diagnostics.final_delta(),
            residual: self.diagnostics.final_residual(),
            newton_iterations: self.diagnostics.total_iterations(),
            continuation_deltas: self.diagnostics.stages.iter().map(|s| s.delta).collect(),
        }
    }
}

/// `q` from the flux formula, after checking it against the energy formula.
pub fn compute_q(cell: &CellSolution) -> Result<f64> {
    if !(cell.q_disagreement() <= Q_AGREEMENT_LIMIT) {
        return Err(Error::QMismatch {
            q_flux: cell.q_flux,
            q_energy: cell.q_energy,
        });
    }
    Ok(cell.q_flux)
}

/// Fraction of the period where `g(s) > x2`, from `n` midpoint samples.
pub fn theta(spec: &ProfileSpec, x2: f64, n_samples: usize) -> f64 {
    let l = spec.period();
    let above = (0..n_samples)
        .filter(|&k| spec.eval((k as f64 + 0.5) * l / n_samples as f64) > x2)
        .count();
    above as f64 / n_samples as f64
}

/// `(L int_0^{g1} theta dx2, |Y*|)`, both by `n`-point rules (midpoint in `x2`,
/// periodic trapezoid for `int g`).
pub fn cell_measure_check(spec: &ProfileSpec, n: usize) -> (f64, f64) {
    let l = spec.period();
    let mut heights: Vec<f64> = (0..n).map(|k| spec.eval((k as f64 + 0.5) * l / n as f64)).collect();
    heights.sort_by(f64::total_cmp);
    // theta(x2) = #{g_k > x2} / n, by binary search on the sorted samples
    let theta_sorted = |x2: f64| (n - heights.partition_point(|&h| h <= x2)) as f64 / n as f64;
    let g1 = spec.g1();
    let dx = g1 / n as f64;
    let integral: f64 = (0..n).map(|i| theta_sorted((i as f64 + 0.5) * dx)).sum::<f64>() * dx;
    let area = (0..n).map(|k| spec.eval(k as f64 * l / n as f64)).sum::<f64>() * l / n as f64;
    (l * integral, area)
}

/// `b(xi, x2) = (|xi|^(p-2) xi / L) int_0^L chi_{Y*} a_p((1,0) + grad phi) ds`.
pub fn compute_b(cell: &CellSolution, xi: f64, x2: f64) -> Vec2 {
    let scale = crate::fem::scalar_flux(xi, cell.p, 0.0) / cell.period();
    let f = cell.fiber_flux(x2);
    [scale * f[0], scale * f[1]]
}

/// `int_0^{g1} b(xi, x2) . (1, 0) dx2` by composite two-point Gauss in `x2`.
pub fn integrate_b_first(cell: &CellSolution, xi: f64, intervals: usize) -> f64 {
    let top = cell.fibers.height;
    let h = top / intervals as f64;
    let off = 0.5 / 3f64.sqrt();
    (0..intervals)
        .map(|i| {
            let mid = (i as f64 + 0.5) * h;
            compute_b(cell, xi, mid - off * h)[0] + compute_b(cell, xi, mid + off * h)[0]
        })
        .sum::<f64>()
        * 0.5
        * h
}

/// `f_bar = (L / |Y*|) f_hat`.
pub fn fbar_of(fhat_samples: &[f64], cell_measure: f64, period: f64) -> Vec<f64> {
    assert!(cell_measure > 0.0, "cell measure must be positive");
    fhat_samples.iter().map(|f| period / cell_measure * f).collect()
}
