//! The homogenized one-dimensional Neumann problem
//! `-q (|u'|^(p-2) u')' + |u|^(p-2) u = f_bar` on `(0, 1)`, with P1 elements on a
//! uniform grid and the same regularized Newton solver as the 2-D problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{scalar_flux, scalar_flux_derivative, scalar_potential, unit_grid};
use crate::solve::{newton_solve, ConstraintSet, DiscreteProblem, SolveDiagnostics, SolveOptions};
use crate::sparse::CsrMatrix;

const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limit1DProblem {
    pub q: f64,
    pub p: f64,
    /// Samples of `f_bar` on a uniform grid of `[0, 1]` (any length >= 2).
    pub fbar: Vec<f64>,
    /// Number of elements.
    pub n: usize,
}

/// Nodal solution on [`unit_grid`]`(n + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Limit1DSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl Limit1DProblem {
    pub fn new(q: f64, p: f64, fbar: Vec<f64>, n: usize) -> Result<Self> {
        let prob = Limit1DProblem { q, p, fbar, n };
        prob.validate()?;
        Ok(prob)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidInput(format!("q must be positive, got {}", self.q)));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidInput(format!("p must exceed 1, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 elements, got {}", self.n)));
        }
        if self.fbar.len() < 2 || self.fbar.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("f_bar needs at least two finite samples".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn fbar_at(&self, x: f64) -> f64 {
        interpolate_uniform(&self.fbar, x)
    }
}

/// Piecewise-linear interpolant at `x` of samples on [`unit_grid`]`(values.len())`.
pub fn interpolate_uniform(values: &[f64], x: f64) -> f64 {
    let m = values.len() - 1;
    let s = (x.clamp(0.0, 1.0) * m as f64).min(m as f64);
    let i = (s.floor() as usize).min(m - 1);
    let t = s - i as f64;
    (1.0 - t) * values[i] + t * values[i + 1]
}

struct LimitForm<'a> {
    prob: &'a Limit1DProblem,
    /// `f_bar` at the two Gauss points of every element.
    quad_f: Vec<[f64; 2]>,
}

impl<'a> LimitForm<'a> {
    fn new(prob: &'a Limit1DProblem) -> Self {
        let h = prob.h();
        let quad_f = (0..prob.n)
            .map(|e| GAUSS2.map(|g| prob.fbar_at((e as f64 + g) * h)))
            .collect();
        LimitForm { prob, quad_f }
    }

    fn check(&self, value: f64, element: usize) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Assembly { triangle: element })
        }
    }
}

impl DiscreteProblem for LimitForm<'_> {
    fn size(&self) -> usize {
        self.prob.n + 1
    }

    fn energy(&self, u: &[f64], delta: f64) -> Result<f64> {
        let Limit1DProblem { q, p, .. } = *self.prob;
        let h = self.prob.h();
        let mut total = 0.0;
        for e in 0..self.prob.n {
            let du = (u[e + 1] - u[e]) / h;
            let mut local = q * scalar_potential(du, p, delta);
            for (k, g) in GAUSS2.iter().enumerate() {
                let uq = (1.0 - g) * u[e] + g * u[e + 1];
                local += 0.5 * (scalar_potential(uq, p, delta) - self.quad_f[e][k] * uq);
            }
            total += self.check(h * local, e)?;
        }
        Ok(total)
    }

    fn residual(&self, u: &[f64], delta: f64) -> Result<Vec<f64>> {
        let Limit1DProblem { q, p, .. } = *self.prob;
        let h = self.prob.h();
        let mut r = vec![0.0; u.len()];
        for e in 0..self.prob.n {
            let du = (u[e + 1] - u[e]) / h;
            let flux = self.check(q * scalar_flux(du, p, delta), e)?;
            r[e] -= flux;
            r[e + 1] += flux;
            for (k, g) in GAUSS2.iter().enumerate() {
                let uq = (1.0 - g) * u[e] + g * u[e + 1];
                let m = self.check(scalar_flux(uq, p, delta) - self.quad_f[e][k], e)?;
                r[e] += 0.5 * h * m * (1.0 - g);
                r[e + 1] += 0.5 * h * m * g;
            }
        }
        Ok(r)
    }

    fn jacobian(&self, u: &[f64], delta: f64) -> Result<CsrMatrix> {
        let Limit1DProblem { q, p, .. } = *self.prob;
        if p < 2.0 && delta == 0.0 {
            return Err(Error::InvalidInput("the Jacobian for p < 2 needs delta > 0".into()));
        }
        let h = self.prob.h();
        let mut t = Vec::with_capacity(4 * self.prob.n);
        for e in 0..self.prob.n {
            let du = (u[e + 1] - u[e]) / h;
            let k = self.check(q * scalar_flux_derivative(du, p, delta) / h, e)?;
            let mut local = [[k, -k], [-k, k]];
            for g in GAUSS2 {
                let uq = (1.0 - g) * u[e] + g * u[e + 1];
                let dm = self.check(scalar_flux_derivative(uq, p, delta), e)?;
                let phi = [1.0 - g, g];
                for i in 0..2 {
                    for j in 0..2 {
                        local[i][j] += 0.5 * h * dm * phi[i] * phi[j];
                    }
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    t.push((e + i, e + j, local[i][j]));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(u.len(), t))
    }

    fn mean_weights(&self) -> Vec<f64> {
        let h = self.prob.h();
        let mut w = vec![h; self.prob.n + 1];
        w[0] = 0.5 * h;
        w[self.prob.n] = 0.5 * h;
        w
    }
}

/// Energy, residual and Jacobian of the discrete limit problem at regularization `delta`,
/// for finite-difference checks and external drivers.
pub fn limit_residual(prob: &Limit1DProblem, u: &[f64], delta: f64) -> Result<Vec<f64>> {
    LimitForm::new(prob).residual(u, delta)
}

pub fn limit_energy(prob: &Limit1DProblem, u: &[f64], delta: f64) -> Result<f64> {
    LimitForm::new(prob).energy(u, delta)
}

pub fn limit_jacobian(prob: &Limit1DProblem, u: &[f64], delta: f64) -> Result<CsrMatrix> {
    LimitForm::new(prob).jacobian(u, delta)
}

pub fn solve_homogenized(prob: &Limit1DProblem, opts: &SolveOptions) -> Result<Limit1DSolution> {
    prob.validate()?;
    let form = LimitForm::new(prob);
    let (u, diagnostics) = newton_solve(&form, &vec![0.0; prob.n + 1], &ConstraintSet::none(), opts)?;
    Ok(Limit1DSolution {
        x: unit_grid(prob.n + 1),
        u,
        diagnostics,
    })
}

/// Nodal derivative samples: averaged element slopes inside, one-sided at the ends.
pub fn derivative_samples(u: &[f64]) -> Vec<f64> {
    let n = u.len() - 1;
    let h = 1.0 / n as f64;
    let slope: Vec<f64> = u.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    (0..=n)
        .map(|i| match i {
            0 => slope[0],
            i if i == n => slope[n - 1],
            i => 0.5 * (slope[i - 1] + slope[i]),
        })
        .collect()
}

/// `(int |u_h - u|^p + |u_h' - u'|^p)^(1/p)` against an exact solution, by 4-point
/// Gauss on every element.
pub fn w1p_error(u: &[f64], exact: impl Fn(f64) -> f64, dexact: impl Fn(f64) -> f64, p: f64) -> f64 {
    let n = u.len() - 1;
    let h = 1.0 / n as f64;
    let rule = [
        (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
        (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
        (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
        (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
    ];
    let mut total = 0.0;
    for e in 0..n {
        let du = (u[e + 1] - u[e]) / h;
        for (s, w) in rule {
            let x = (e as f64 + s) * h;
            let uh = (1.0 - s) * u[e] + s * u[e + 1];
            total += h * w * ((uh - exact(x)).abs().powf(p) + (du - dexact(x)).abs().powf(p));
        }
    }
    total.powf(1.0 / p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleInvarianceReport {
    /// `max |u(q) - u(c q)|` for the given data.
    pub q_scaling_difference: f64,
    /// `max |u - 1|` over the solves with `f_bar = 1`, at `q` and `c q`.
    pub unit_data_deviation: f64,
}

/// Solves with `(q, f_bar)` and `(c q, f_bar)`, and with `f_bar = 1` at both `q`.
pub fn scale_invariance_check(prob: &Limit1DProblem, c: f64, opts: &SolveOptions) -> Result<ScaleInvarianceReport> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("scale must be positive, got {c}")));
    }
    let scaled = Limit1DProblem {
        q: c * prob.q,
        ..prob.clone()
    };
    let a = solve_homogenized(prob, opts)?;
    let b = solve_homogenized(&scaled, opts)?;
    let q_scaling_difference = a.u.iter().zip(&b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut unit_data_deviation = 0.0f64;
    for q in [prob.q, c * prob.q] {
        let unit = Limit1DProblem {
            q,
            fbar: vec![1.0; 2],
            ..prob.clone()
        };
        let s = solve_homogenized(&unit, opts)?;
        unit_data_deviation = s.u.iter().fold(unit_data_deviation, |m, v| m.max((v - 1.0).abs()));
    }
    Ok(ScaleInvarianceReport {
        q_scaling_difference,
        unit_data_deviation,
    })
}

/// One line per node: `x,u`.
pub fn write_solution_csv(sol: &Limit1DSolution) -> String {
    let mut out = String::from("x,u0\n");
    for (x, u) in sol.x.iter().zip(&sol.u) {
        out.push_str(&format!("{x:.17e},{u:.17e}\n"));
    }
    out
}

pub fn read_solution_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x,u0") {
        return Err(Error::InvalidInput("expected header `x,u0`".into()));
    }
    let (mut xs, mut us) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::InvalidInput(format!("line {}: expected `x,u0`", k + 2));
        let (x, u) = line.split_once(',').ok_or_else(bad)?;
        xs.push(x.trim().parse().map_err(|_| bad())?);
        us.push(u.trim().parse().map_err(|_| bad())?);
    }
    Ok((xs, us))
}
