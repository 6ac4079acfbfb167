//! P1 finite elements for the anisotropic p-Laplacian with an `L^p` mass term.
//!
//! The discrete energy on a mesh is
//!
//! ```text
//! E(u) = sum_T |T| (1/p) (delta^2 + |s + grad_eps u|^2)^(p/2)
//!      + sum_T |T| sum_q w_q [ (1/p) (delta^2 + u_q^2)^(p/2) - f_q u_q ]
//! ```
//!
//! where `grad_eps u = (d1 u, d2 u / eps)` is constant per triangle, `s` is a fixed
//! gradient shift (`(1, 0)` for the cell problem, zero otherwise) and `q` runs over
//! the three interior points of the degree-2 triangle rule. Residual and Jacobian
//! are its exact first and second derivatives, so Newton with an energy line
//! search is well posed. With `delta = 0` the residual is the weak form
//! `int a_p(grad_eps u) . grad_eps v + |u|^(p-2) u v - f v`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Mesh, ProfileSpec};
use crate::sparse::CsrMatrix;

pub type Vec2 = [f64; 2];

/// Barycentric coordinates and weight of the 3-point, degree-2 triangle rule.
pub const TRIANGLE_RULE: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

/// 8-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Nodal coefficients of a P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("field entry {i} is not finite")));
        }
        Ok(Field { values })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Field { values: vec![c; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    /// Nodal interpolant of `f` on `mesh`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Self {
        Field {
            values: mesh.nodes().iter().map(|p| f(p[0], p[1])).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxParams {
    pub p: f64,
    pub delta: f64,
    pub eps_weight: f64,
}

impl FluxParams {
    pub fn new(p: f64, delta: f64, eps_weight: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidInput(format!("p must exceed 1, got {p}")));
        }
        if !(delta >= 0.0) {
            return Err(Error::InvalidInput(format!("delta must be >= 0, got {delta}")));
        }
        if !(eps_weight > 0.0) {
            return Err(Error::InvalidInput(format!(
                "eps_weight must be positive, got {eps_weight}"
            )));
        }
        Ok(FluxParams { p, delta, eps_weight })
    }

    /// Isotropic parameters (`eps_weight = 1`).
    pub fn isotropic(p: f64, delta: f64) -> Result<Self> {
        Self::new(p, delta, 1.0)
    }

    /// Conjugate exponent `p' = p / (p - 1)`.
    pub fn conjugate(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn with_delta(self, delta: f64) -> Self {
        FluxParams { delta, ..self }
    }
}

/// Right-hand side `f`: nodal values (interpolated) or a closed form.
#[derive(Clone, Default)]
pub enum Load {
    #[default]
    Zero,
    Nodal(Vec<f64>),
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl Load {
    pub fn function(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Load::Function(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Load::function(move |_, _| c)
    }

    fn at(&self, nodes: [usize; 3], bary: [f64; 3], point: Vec2) -> f64 {
        match self {
            Load::Zero => 0.0,
            Load::Nodal(v) => (0..3).map(|k| bary[k] * v[nodes[k]]).sum(),
            Load::Function(f) => f(point[0], point[1]),
        }
    }
}

impl fmt::Debug for Load {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Load::Zero => write!(f, "Load::Zero"),
            Load::Nodal(v) => write!(f, "Load::Nodal({} values)", v.len()),
            Load::Function(_) => write!(f, "Load::Function(..)"),
        }
    }
}

/// Gradients of the three barycentric basis functions of triangle `t`, and its area.
pub fn basis_gradients(mesh: &Mesh, t: usize) -> ([Vec2; 3], f64) {
    let [a, b, c] = mesh.vertices(t);
    let twice_area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let grads = [
        [(b[1] - c[1]) / twice_area, (c[0] - b[0]) / twice_area],
        [(c[1] - a[1]) / twice_area, (a[0] - c[0]) / twice_area],
        [(a[1] - b[1]) / twice_area, (b[0] - a[0]) / twice_area],
    ];
    (grads, 0.5 * twice_area)
}

/// Constant gradient of the P1 interpolant of `u` on triangle `t`.
pub fn element_gradient(mesh: &Mesh, u: &[f64], t: usize) -> Vec2 {
    let (grads, _) = basis_gradients(mesh, t);
    let tri = mesh.triangles()[t];
    let mut g = [0.0; 2];
    for k in 1..3 {
        let du = u[tri[k]] - u[tri[0]];
        g[0] += du * grads[k][0];
        g[1] += du * grads[k][1];
    }
    g
}

/// `grad_eps = (g1, g2 / eps)`.
pub fn scaled_gradient(grad: Vec2, params: &FluxParams) -> Vec2 {
    [grad[0], grad[1] / params.eps_weight]
}

fn norm_sq(x: Vec2) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

/// `(delta^2 + |xi|^2)^((p-2)/2) xi`; with `delta = 0` this is `a_p(xi) = |xi|^(p-2) xi`,
/// extended by continuity to `a_p(0) = 0`.
pub fn a_p_reg(xi: Vec2, params: &FluxParams) -> Vec2 {
    let s = params.delta * params.delta + norm_sq(xi);
    if s == 0.0 {
        return [0.0, 0.0];
    }
    let c = s.powf(0.5 * (params.p - 2.0));
    [c * xi[0], c * xi[1]]
}

/// `a_{p'}(xi) = |xi|^(p'-2) xi`, the inverse map of `a_p`.
pub fn a_p_dual(xi: Vec2, p: f64) -> Vec2 {
    let q = p / (p - 1.0);
    let n = norm_sq(xi).sqrt();
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let c = n.powf(q - 2.0);
    [c * xi[0], c * xi[1]]
}

/// Scalar version of the regularized flux used by the mass term and 1-D problems.
pub(crate) fn scalar_flux(u: f64, p: f64, delta: f64) -> f64 {
    let s = delta * delta + u * u;
    if s == 0.0 {
        0.0
    } else {
        s.powf(0.5 * (p - 2.0)) * u
    }
}

/// `d/du` of [`scalar_flux`].
pub(crate) fn scalar_flux_derivative(u: f64, p: f64, delta: f64) -> f64 {
    let s = delta * delta + u * u;
    if s == 0.0 {
        return if p == 2.0 { 1.0 } else { 0.0 };
    }
    s.powf(0.5 * (p - 2.0)) * (1.0 + (p - 2.0) * u * u / s)
}

pub(crate) fn scalar_potential(u: f64, p: f64, delta: f64) -> f64 {
    (delta * delta + u * u).powf(0.5 * p) / p
}

/// The discrete energy functional together with its derivatives.
#[derive(Debug, Clone)]
pub struct PLaplaceForm<'a> {
    pub mesh: &'a Mesh,
    pub params: FluxParams,
    /// Constant added to `grad_eps u` before the flux is applied.
    pub shift: Vec2,
    /// Whether the `(1/p)|u|^p` mass term is present.
    pub mass: bool,
    pub load: Load,
}

struct Element {
    nodes: [usize; 3],
    scaled: [Vec2; 3],
    area: f64,
    xi: Vec2,
    quad_u: [f64; 3],
    quad_f: [f64; 3],
}

impl<'a> PLaplaceForm<'a> {
    /// The thin/standard problem: no shift, mass term on.
    pub fn new(mesh: &'a Mesh, params: FluxParams, load: Load) -> Self {
        PLaplaceForm {
            mesh,
            params,
            shift: [0.0, 0.0],
            mass: true,
            load,
        }
    }

    /// The cell problem for `phi`: energy of `(1, 0) + grad phi`, no mass or load.
    pub fn cell(mesh: &'a Mesh, p: f64, delta: f64) -> Result<Self> {
        Ok(PLaplaceForm {
            mesh,
            params: FluxParams::isotropic(p, delta)?,
            shift: [1.0, 0.0],
            mass: false,
            load: Load::Zero,
        })
    }

    fn element(&self, u: &[f64], t: usize) -> Element {
        let (grads, area) = basis_gradients(self.mesh, t);
        let nodes = self.mesh.triangles()[t];
        let scaled = grads.map(|g| scaled_gradient(g, &self.params));
        let mut xi = self.shift;
        for k in 1..3 {
            let du = u[nodes[k]] - u[nodes[0]];
            xi[0] += du * scaled[k][0];
            xi[1] += du * scaled[k][1];
        }
        let verts = self.mesh.vertices(t);
        let mut quad_u = [0.0; 3];
        let mut quad_f = [0.0; 3];
        for (q, (bary, _)) in TRIANGLE_RULE.iter().enumerate() {
            quad_u[q] = (0..3).map(|k| bary[k] * u[nodes[k]]).sum();
            let point = [
                (0..3).map(|k| bary[k] * verts[k][0]).sum(),
                (0..3).map(|k| bary[k] * verts[k][1]).sum(),
            ];
            quad_f[q] = self.load.at(nodes, *bary, point);
        }
        Element {
            nodes,
            scaled,
            area,
            xi,
            quad_u,
            quad_f,
        }
    }

    fn check_len(&self, u: &[f64]) {
        assert_eq!(
            u.len(),
            self.mesh.node_count(),
            "field length must equal the node count"
        );
    }

    pub fn energy(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u);
        let FluxParams { p, delta, .. } = self.params;
        let mut total = 0.0;
        for t in 0..self.mesh.triangle_count() {
            let e = self.element(u, t);
            let mut local = (delta * delta + norm_sq(e.xi)).powf(0.5 * p) / p;
            for (q, (_, w)) in TRIANGLE_RULE.iter().enumerate() {
                if self.mass {
                    local += w * scalar_potential(e.quad_u[q], p, delta);
                }
                local -= w * e.quad_f[q] * e.quad_u[q];
            }
            let contribution = e.area * local;
            if !contribution.is_finite() {
                return Err(Error::Assembly { triangle: t });
            }
            total += contribution;
        }
        Ok(total)
    }

    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u);
        let FluxParams { p, delta, .. } = self.params;
        let mut r = vec![0.0; u.len()];
        for t in 0..self.mesh.triangle_count() {
            let e = self.element(u, t);
            let sigma = a_p_reg(e.xi, &self.params);
            let mut local = [0.0; 3];
            for k in 0..3 {
                local[k] = e.area * (sigma[0] * e.scaled[k][0] + sigma[1] * e.scaled[k][1]);
            }
            for (q, (bary, w)) in TRIANGLE_RULE.iter().enumerate() {
                let m = if self.mass {
                    scalar_flux(e.quad_u[q], p, delta)
                } else {
                    0.0
                };
                for k in 0..3 {
                    local[k] += e.area * w * (m - e.quad_f[q]) * bary[k];
                }
            }
            if local.iter().any(|v| !v.is_finite()) {
                return Err(Error::Assembly { triangle: t });
            }
            for k in 0..3 {
                r[e.nodes[k]] += local[k];
            }
        }
        Ok(r)
    }

    pub fn jacobian(&self, u: &[f64]) -> Result<CsrMatrix> {
        self.check_len(u);
        let FluxParams { p, delta, .. } = self.params;
        if p < 2.0 && delta == 0.0 {
            return Err(Error::InvalidInput("the Jacobian for p < 2 needs delta > 0".into()));
        }
        let mut triplets = Vec::with_capacity(9 * self.mesh.triangle_count());
        for t in 0..self.mesh.triangle_count() {
            let e = self.element(u, t);
            let s = delta * delta + norm_sq(e.xi);
            let tangent = flux_tangent(e.xi, s, p);
            let mut local = [[0.0; 3]; 3];
            for i in 0..3 {
                let di = [
                    tangent[0][0] * e.scaled[i][0] + tangent[0][1] * e.scaled[i][1],
                    tangent[1][0] * e.scaled[i][0] + tangent[1][1] * e.scaled[i][1],
                ];
                for j in i..3 {
                    local[i][j] = e.area * (di[0] * e.scaled[j][0] + di[1] * e.scaled[j][1]);
                    local[j][i] = local[i][j];
                }
            }
            if self.mass {
                for (q, (bary, w)) in TRIANGLE_RULE.iter().enumerate() {
                    let dm = scalar_flux_derivative(e.quad_u[q], p, delta);
                    for i in 0..3 {
                        for j in i..3 {
                            let m = e.area * w * dm * bary[i] * bary[j];
                            local[i][j] += m;
                            if j != i {
                                local[j][i] += m;
                            }
                        }
                    }
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    if !local[i][j].is_finite() {
                        return Err(Error::Assembly { triangle: t });
                    }
                    triplets.push((e.nodes[i], e.nodes[j], local[i][j]));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(u.len(), triplets))
    }
}

/// Derivative of `a_p_reg` at `xi`: `s^((p-2)/2) (I + (p-2) xi xi^T / s)`.
fn flux_tangent(xi: Vec2, s: f64, p: f64) -> [[f64; 2]; 2] {
    if s == 0.0 {
        let c = if p == 2.0 { 1.0 } else { 0.0 };
        return [[c, 0.0], [0.0, c]];
    }
    let c = s.powf(0.5 * (p - 2.0));
    let k = (p - 2.0) / s;
    [
        [c * (1.0 + k * xi[0] * xi[0]), c * k * xi[0] * xi[1]],
        [c * k * xi[1] * xi[0], c * (1.0 + k * xi[1] * xi[1])],
    ]
}

pub fn assemble_residual(mesh: &Mesh, u: &Field, params: &FluxParams, load: &Load) -> Result<Vec<f64>> {
    PLaplaceForm::new(mesh, *params, load.clone()).residual(&u.values)
}

pub fn assemble_energy(mesh: &Mesh, u: &Field, params: &FluxParams, load: &Load) -> Result<f64> {
    PLaplaceForm::new(mesh, *params, load.clone()).energy(&u.values)
}

pub fn assemble_jacobian(mesh: &Mesh, u: &Field, params: &FluxParams) -> Result<CsrMatrix> {
    PLaplaceForm::new(mesh, *params, Load::Zero).jacobian(&u.values)
}

/// `(int |u|^p)^(1/p)` with the degree-2 triangle rule.
pub fn lp_norm(mesh: &Mesh, u: &[f64], p: f64) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.signed_area(t);
        for (bary, w) in TRIANGLE_RULE {
            let uq: f64 = (0..3).map(|k| bary[k] * u[tri[k]]).sum();
            total += area * w * uq.abs().powf(p);
        }
    }
    total.powf(1.0 / p)
}

/// `(int |grad_eps u|^p)^(1/p)` (exact for P1).
pub fn w1p_eps_seminorm(mesh: &Mesh, u: &[f64], params: &FluxParams) -> f64 {
    let total: f64 = (0..mesh.triangle_count())
        .map(|t| {
            let g = scaled_gradient(element_gradient(mesh, u, t), params);
            mesh.signed_area(t) * norm_sq(g).sqrt().powf(params.p)
        })
        .sum();
    total.powf(1.0 / params.p)
}

/// Nodal weights `w_i = int psi_i`; `sum_i w_i u_i = int u` for P1 fields.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(t) / 3.0;
        for &n in tri {
            w[n] += a;
        }
    }
    w
}

/// Mesh-weighted mean `int u / |domain|`.
pub fn mean_value(mesh: &Mesh, u: &[f64]) -> f64 {
    let w = lumped_mass(mesh);
    let total: f64 = w.iter().sum();
    w.iter().zip(u).map(|(w, u)| w * u).sum::<f64>() / total
}

/// `int_0^h f(x1, x2) dx2` by 8-point Gauss-Legendre.
pub(crate) fn fiber_integral(f: &dyn Fn(f64, f64) -> f64, x1: f64, h: f64) -> f64 {
    GAUSS8.iter().map(|(x, w)| w * f(x1, 0.5 * h * (x + 1.0))).sum::<f64>() * 0.5 * h
}

/// Uniform grid `x_i = i / (n1 - 1)` on `[0, 1]`.
pub fn unit_grid(n1: usize) -> Vec<f64> {
    (0..n1).map(|i| i as f64 / (n1 - 1) as f64).collect()
}

/// Samples of `f_hat^eps(x1) = int_0^{g(x1/eps)} f(x1, x2) dx2` on [`unit_grid`]`(n1)`.
pub fn fhat_of(load: &dyn Fn(f64, f64) -> f64, spec: &ProfileSpec, eps: f64, n1: usize) -> Vec<f64> {
    assert!(n1 >= 2, "need at least two samples");
    unit_grid(n1)
        .into_iter()
        .map(|x| fiber_integral(load, x, spec.eval(x / eps)))
        .collect()
}

/// Weak limit of `f_hat^eps` as `eps -> 0` for a load that does not depend on `eps`:
/// `f_hat(x1) = (1/L) int_0^L int_0^{g(s)} f(x1, x2) dx2 ds`, with the periodic
/// trapezoid rule (`n_periodic` points) in `s`.
pub fn fhat_limit(load: &dyn Fn(f64, f64) -> f64, spec: &ProfileSpec, n1: usize, n_periodic: usize) -> Vec<f64> {
    assert!(n1 >= 2 && n_periodic >= 1);
    let heights: Vec<f64> = (0..n_periodic)
        .map(|k| spec.eval(spec.period() * k as f64 / n_periodic as f64))
        .collect();
    unit_grid(n1)
        .into_iter()
        .map(|x| heights.iter().map(|&h| fiber_integral(load, x, h)).sum::<f64>() / n_periodic as f64)
        .collect()
}
