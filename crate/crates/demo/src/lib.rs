//! Browser demo: the cell problem, `q` against `p`, and a thin solution next to its limit.

use thinhom::geometry::{build_cell_mesh, build_thin_mesh};
use thinhom::homogenize::{compute_q, solve_cell};
use thinhom::limit1d::{interpolate_uniform, solve_homogenized};
use thinhom::study::{error_u, limit_problem, solve_thin, LoadSpec, Resolution, StudyConfig};
use thinhom::{ProfileSpec, SolveOptions};
use wasm_bindgen::prelude::*;

/// Cell mesh with the corrector `phi`, flattened for drawing.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct CellView {
    q: f64,
    nodes: Vec<f64>,
    triangles: Vec<u32>,
    phi: Vec<f64>,
}

#[wasm_bindgen]
impl CellView {
    #[wasm_bindgen(getter)]
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `x0, y0, x1, y1, ...`
    #[wasm_bindgen(getter)]
    pub fn nodes(&self) -> Vec<f64> {
        self.nodes.clone()
    }

    /// Three node indices per triangle.
    #[wasm_bindgen(getter)]
    pub fn triangles(&self) -> Vec<u32> {
        self.triangles.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn phi(&self) -> Vec<f64> {
        self.phi.clone()
    }
}

/// Thin solution along the bottom and top boundaries, and the limit at the same `x1`.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Comparison {
    q: f64,
    error: f64,
    x1: Vec<f64>,
    bottom: Vec<f64>,
    top: Vec<f64>,
    limit: Vec<f64>,
}

#[wasm_bindgen]
impl Comparison {
    #[wasm_bindgen(getter)]
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `|| u_eps - u0 ||` in `L^p` of the thin domain.
    #[wasm_bindgen(getter)]
    pub fn error(&self) -> f64 {
        self.error
    }

    #[wasm_bindgen(getter)]
    pub fn x1(&self) -> Vec<f64> {
        self.x1.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn bottom(&self) -> Vec<f64> {
        self.bottom.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn top(&self) -> Vec<f64> {
        self.top.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn limit(&self) -> Vec<f64> {
        self.limit.clone()
    }
}

fn profile(amplitude: f64) -> thinhom::Result<ProfileSpec> {
    ProfileSpec::cosine(1.0, 1.0, amplitude)
}

pub fn cell_view_data(p: f64, amplitude: f64, nx: usize, ny: usize) -> thinhom::Result<CellView> {
    let mesh = build_cell_mesh(&profile(amplitude)?, nx, ny)?;
    let cell = solve_cell(&mesh, p, &SolveOptions::default())?;
    Ok(CellView {
        q: compute_q(&cell)?,
        nodes: cell.mesh.nodes().iter().flatten().copied().collect(),
        triangles: cell.mesh.triangles().iter().flatten().map(|&i| i as u32).collect(),
        phi: cell.phi.values.clone(),
    })
}

pub fn q_curve_data(amplitude: f64, ps: &[f64], nx: usize, ny: usize) -> thinhom::Result<Vec<f64>> {
    let mesh = build_cell_mesh(&profile(amplitude)?, nx, ny)?;
    ps.iter()
        .map(|&p| compute_q(&solve_cell(&mesh, p, &SolveOptions::default())?))
        .collect()
}

pub fn comparison_data(p: f64, eps: f64, amplitude: f64) -> thinhom::Result<Comparison> {
    let config = StudyConfig {
        profile: profile(amplitude)?,
        p,
        load: LoadSpec::Cosine {
            amplitude: 1.0,
            wavenumber: 1.0,
            offset: 0.0,
        },
        epsilons: vec![eps],
        nu: vec![2],
        resolution: Resolution {
            cell_nx: 48,
            cell_ny: 12,
            thin_nx_per_period: 16,
            thin_ny: 6,
            limit_n: 256,
            flux_stations: 0,
        },
        solver: SolveOptions::default(),
        output: None,
    };
    config.validate()?;
    let r = &config.resolution;
    let cell = solve_cell(
        &build_cell_mesh(&config.profile, r.cell_nx, r.cell_ny)?,
        p,
        &config.solver,
    )?;
    let q = compute_q(&cell)?;
    let u0 = solve_homogenized(&limit_problem(&config, q)?, &config.solver)?.u;
    let mesh = build_thin_mesh(&config.profile, eps, r.thin_nx_per_period, r.thin_ny)?;
    let (u, _) = solve_thin(&mesh, p, &config.load.to_load(), &config.solver)?;
    let grid = mesh.grid();
    let x1: Vec<f64> = (0..=grid.columns).map(|c| mesh.column_x(c)).collect();
    Ok(Comparison {
        q,
        error: error_u(&mesh, &u, &u0, p),
        bottom: (0..=grid.columns).map(|c| u[grid.node(c, 0)]).collect(),
        top: (0..=grid.columns).map(|c| u[grid.node(c, grid.rows)]).collect(),
        limit: x1.iter().map(|&x| interpolate_uniform(&u0, x)).collect(),
        x1,
    })
}

fn js(e: thinhom::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Cell problem on the profile `1 + amplitude cos(2 pi y)`.
#[wasm_bindgen]
pub fn cell_view(p: f64, amplitude: f64, nx: usize, ny: usize) -> Result<CellView, JsError> {
    cell_view_data(p, amplitude, nx, ny).map_err(js)
}

/// `q` for every exponent in `ps`.
#[wasm_bindgen]
pub fn q_curve(amplitude: f64, ps: Vec<f64>, nx: usize, ny: usize) -> Result<Vec<f64>, JsError> {
    q_curve_data(amplitude, &ps, nx, ny).map_err(js)
}

/// Thin solution at `eps` and the homogenized solution for `f = cos(pi x1)`.
#[wasm_bindgen]
pub fn thin_vs_limit(p: f64, eps: f64, amplitude: f64) -> Result<Comparison, JsError> {
    comparison_data(p, eps, amplitude).map_err(js)
}
