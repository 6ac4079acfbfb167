//! Oscillating profiles and mapped-grid meshes of the cell `Y*` and the thin domain.
//!
//! Both meshes are built the same way: `columns + 1` vertical fibers, each holding
//! `rows + 1` nodes equispaced between the bottom wall and the profile. Nodes are
//! numbered column-major, so node `(c, r)` has index `c * (rows + 1) + r`, and quad
//! `(c, r)` owns triangles `2 * (c * rows + r)` (below its diagonal) and the next one
//! (above it). The diagonal always runs from the lower-left to the upper-right corner.

mod io;

pub use io::{read_mesh_text, write_mesh_text};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const EXTREMUM_SAMPLES: usize = 1 << 14;

/// Serializable form of a profile, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub period: f64,
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

/// A positive `L`-periodic height function given as a truncated Fourier series
/// `g(y) = c0 + sum_k a_k cos(2 pi k y / L) + b_k sin(2 pi k y / L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileConfig", into = "ProfileConfig")]
pub struct ProfileSpec {
    period: f64,
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    g0: f64,
    g1: f64,
}

impl ProfileSpec {
    pub fn new(period: f64, mean: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidProfile(format!("period must be positive, got {period}")));
        }
        if !mean.is_finite() || cos.iter().chain(&sin).any(|c| !c.is_finite()) {
            return Err(Error::InvalidProfile("Fourier coefficients must be finite".into()));
        }
        let mut spec = ProfileSpec {
            period,
            mean,
            cos,
            sin,
            g0: 0.0,
            g1: 0.0,
        };
        let (g0, g1) = spec.sampled_extrema();
        if g0 <= 0.0 {
            return Err(Error::InvalidProfile(format!(
                "profile must stay positive, sampled minimum g0 = {g0:.6}"
            )));
        }
        spec.g0 = g0;
        spec.g1 = g1;
        Ok(spec)
    }

    pub fn flat(period: f64, height: f64) -> Result<Self> {
        Self::new(period, height, Vec::new(), Vec::new())
    }

    /// `g(y) = mean + amplitude * cos(2 pi y / L)`.
    pub fn cosine(period: f64, mean: f64, amplitude: f64) -> Result<Self> {
        Self::new(period, mean, vec![amplitude], Vec::new())
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn cos_coefficients(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coefficients(&self) -> &[f64] {
        &self.sin
    }

    /// Sampled infimum of `g` over one period.
    pub fn g0(&self) -> f64 {
        self.g0
    }

    /// Sampled supremum of `g` over one period.
    pub fn g1(&self) -> f64 {
        self.g1
    }

    pub fn is_flat(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    /// Exact `|Y*| = L * c0`; every harmonic integrates to zero over a period.
    pub fn cell_measure(&self) -> f64 {
        self.period * self.mean
    }

    pub fn eval(&self, y1: f64) -> f64 {
        let phase = 2.0 * PI * y1.rem_euclid(self.period) / self.period;
        let mut g = self.mean;
        for (k, a) in self.cos.iter().enumerate() {
            g += a * ((k + 1) as f64 * phase).cos();
        }
        for (k, b) in self.sin.iter().enumerate() {
            g += b * ((k + 1) as f64 * phase).sin();
        }
        g
    }

    fn sampled_extrema(&self) -> (f64, f64) {
        let h = self.period / EXTREMUM_SAMPLES as f64;
        let (mut imin, mut imax) = (0, 0);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..EXTREMUM_SAMPLES {
            let v = self.eval(i as f64 * h);
            if v < vmin {
                vmin = v;
                imin = i;
            }
            if v > vmax {
                vmax = v;
                imax = i;
            }
        }
        let center_min = imin as f64 * h;
        let center_max = imax as f64 * h;
        let refined_min = golden_section(|y| self.eval(y), center_min - h, center_min + h);
        let refined_max = -golden_section(|y| -self.eval(y), center_max - h, center_max + h);
        (vmin.min(refined_min), vmax.max(refined_max))
    }
}

impl TryFrom<ProfileConfig> for ProfileSpec {
    type Error = Error;

    fn try_from(c: ProfileConfig) -> Result<Self> {
        ProfileSpec::new(c.period, c.mean, c.cos, c.sin)
    }
}

impl From<ProfileSpec> for ProfileConfig {
    fn from(s: ProfileSpec) -> Self {
        ProfileConfig {
            period: s.period,
            mean: s.mean,
            cos: s.cos,
            sin: s.sin,
        }
    }
}

/// Minimum value of a unimodal function on `[a, b]`.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

pub fn eval_profile(spec: &ProfileSpec, y1: f64) -> f64 {
    spec.eval(y1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Lower,
    Upper,
    Left,
    Right,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Lower => "lower",
            BoundaryTag::Upper => "upper",
            BoundaryTag::Left => "left",
            BoundaryTag::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lower" => Some(BoundaryTag::Lower),
            "upper" => Some(BoundaryTag::Upper),
            "left" => Some(BoundaryTag::Left),
            "right" => Some(BoundaryTag::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Cell,
    Thin { eps: f64 },
}

/// Column/row counts of a mapped grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub columns: usize,
    pub rows: usize,
}

impl GridLayout {
    pub fn node(&self, column: usize, row: usize) -> usize {
        column * (self.rows + 1) + row
    }

    pub fn node_count(&self) -> usize {
        (self.columns + 1) * (self.rows + 1)
    }

    pub fn triangle_count(&self) -> usize {
        2 * self.columns * self.rows
    }
}

/// A triangulated mapped grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    periodic_pairs: Vec<(usize, usize)>,
    kind: DomainKind,
    grid: GridLayout,
    width: f64,
}

impl Mesh {
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// `(left, right)` node pairs with equal height. Only cell problems impose
    /// periodicity; on thin meshes the pairing is informational.
    pub fn periodic_pairs(&self) -> &[(usize, usize)] {
        &self.periodic_pairs
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn grid(&self) -> GridLayout {
        self.grid
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area of triangle `t` (positive for counter-clockwise vertices).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// x-coordinate of grid column `c`.
    pub fn column_x(&self, column: usize) -> f64 {
        self.nodes[self.grid.node(column, 0)][0]
    }

    /// Height of the top node of grid column `c`.
    pub fn column_height(&self, column: usize) -> f64 {
        self.nodes[self.grid.node(column, self.grid.rows)][1]
    }

    /// Grid column containing abscissa `x1` and the local coordinate `t in [0, 1]`.
    pub fn column_of(&self, x1: f64) -> (usize, f64) {
        let h = self.width / self.grid.columns as f64;
        let c = ((x1 / h).floor().max(0.0) as usize).min(self.grid.columns - 1);
        let x0 = self.column_x(c);
        let x1c = self.column_x(c + 1);
        (c, ((x1 - x0) / (x1c - x0)).clamp(0.0, 1.0))
    }

    /// Height of the discrete (piecewise-linear) upper boundary at `x1`.
    pub fn top_at(&self, x1: f64) -> f64 {
        let (c, t) = self.column_of(x1);
        (1.0 - t) * self.column_height(c) + t * self.column_height(c + 1)
    }

    /// Triangle containing `(x1, x2)`. Points up to `tol` (relative to the local
    /// height) above the discrete top are snapped onto it.
    pub fn locate(&self, point: Point, tol: f64) -> Option<usize> {
        let [x1, x2] = point;
        if !(-tol..=self.width + tol).contains(&x1) {
            return None;
        }
        let (c, t) = self.column_of(x1);
        let top = self.top_at(x1);
        let rows = self.grid.rows as f64;
        let eta = x2 / top * rows;
        if eta < -tol * rows || eta > rows * (1.0 + tol) {
            return None;
        }
        let eta = eta.clamp(0.0, rows);
        let r = (eta.floor() as usize).min(self.grid.rows - 1);
        let left_lo = self.column_height(c) * r as f64 / rows;
        let right_hi = self.column_height(c + 1) * (r + 1) as f64 / rows;
        let diagonal = (1.0 - t) * left_lo + t * right_hi;
        let quad = c * self.grid.rows + r;
        let y = x2.clamp(0.0, top);
        Some(if y < diagonal { 2 * quad } else { 2 * quad + 1 })
    }
}

/// Builds the mapped grid over `columns` equal strips of `[0, width]` with fiber
/// heights `height(x)`.
fn mapped_grid(
    width: f64,
    columns: usize,
    rows: usize,
    height: impl Fn(usize, f64) -> f64,
    kind: DomainKind,
) -> Result<Mesh> {
    let grid = GridLayout { columns, rows };
    let mut nodes = Vec::with_capacity(grid.node_count());
    for c in 0..=columns {
        let x = if c == columns {
            width
        } else {
            width * c as f64 / columns as f64
        };
        let top = height(c, x);
        if !(top.is_finite() && top > 0.0) {
            return Err(Error::Meshing {
                column: c,
                reason: format!("fiber height {top} is not positive"),
            });
        }
        for r in 0..=rows {
            nodes.push([x, top * (r as f64 / rows as f64)]);
        }
    }

    let mut triangles = Vec::with_capacity(grid.triangle_count());
    for c in 0..columns {
        for r in 0..rows {
            let a = grid.node(c, r);
            let b = grid.node(c + 1, r);
            let cc = grid.node(c + 1, r + 1);
            let d = grid.node(c, r + 1);
            triangles.push([a, b, cc]);
            triangles.push([a, cc, d]);
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (columns + rows));
    for c in 0..columns {
        boundary_edges.push(BoundaryEdge {
            nodes: [grid.node(c, 0), grid.node(c + 1, 0)],
            tag: BoundaryTag::Lower,
        });
    }
    for r in 0..rows {
        boundary_edges.push(BoundaryEdge {
            nodes: [grid.node(columns, r), grid.node(columns, r + 1)],
            tag: BoundaryTag::Right,
        });
    }
    for c in (0..columns).rev() {
        boundary_edges.push(BoundaryEdge {
            nodes: [grid.node(c + 1, rows), grid.node(c, rows)],
            tag: BoundaryTag::Upper,
        });
    }
    for r in (0..rows).rev() {
        boundary_edges.push(BoundaryEdge {
            nodes: [grid.node(0, r + 1), grid.node(0, r)],
            tag: BoundaryTag::Left,
        });
    }

    let periodic_pairs = (0..=rows).map(|r| (grid.node(0, r), grid.node(columns, r))).collect();

    let mesh = Mesh {
        nodes,
        triangles,
        boundary_edges,
        periodic_pairs,
        kind,
        grid,
        width,
    };
    for t in 0..mesh.triangle_count() {
        let area = mesh.signed_area(t);
        let scale = (width / columns as f64) * mesh.column_height(t / (2 * rows)) / rows as f64;
        if !(area > 1e-14 * scale) {
            return Err(Error::Meshing {
                column: t / (2 * rows),
                reason: format!("triangle {t} is degenerate (signed area {area:.3e})"),
            });
        }
    }
    Ok(mesh)
}

/// Mesh of `Y* = {0 < y1 < L, 0 < y2 < g(y1)}`.
pub fn build_cell_mesh(spec: &ProfileSpec, nx: usize, ny: usize) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidInput(format!(
            "cell mesh needs nx >= 2 and ny >= 2, got {nx} x {ny}"
        )));
    }
    mapped_grid(spec.period, nx, ny, |_, x| spec.eval(x), DomainKind::Cell)
}

/// Number of profile periods tiling `(0, 1)` at this `eps`, if it is of the form `1/(mL)`.
pub fn periods_for_eps(spec: &ProfileSpec, eps: f64) -> Result<usize> {
    if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidEpsilon {
            eps,
            reason: "eps must lie in (0, 1]".into(),
        });
    }
    let m = 1.0 / (eps * spec.period);
    let rounded = m.round();
    if rounded < 1.0 || (m - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::InvalidEpsilon {
            eps,
            reason: format!(
                "eps must equal 1/(m L) for a positive integer m so whole periods tile (0, 1); \
                 here 1/(eps L) = {m}"
            ),
        });
    }
    Ok(rounded as usize)
}

/// Mesh of `Omega^eps = {0 < x1 < 1, 0 < x2 < g(x1 / eps)}`, made of `m = 1/(eps L)`
/// copies of the period mesh.
pub fn build_thin_mesh(spec: &ProfileSpec, eps: f64, nx_per_period: usize, ny: usize) -> Result<Mesh> {
    if nx_per_period < 2 || ny < 2 {
        return Err(Error::InvalidInput(format!(
            "thin mesh needs at least 2 columns per period and 2 rows, got {nx_per_period} x {ny}"
        )));
    }
    let periods = periods_for_eps(spec, eps)?;
    let columns = periods * nx_per_period;
    // Sample g on the period grid so every period gets bit-identical heights.
    let heights: Vec<f64> = (0..=nx_per_period)
        .map(|i| spec.eval(spec.period * i as f64 / nx_per_period as f64))
        .collect();
    mapped_grid(
        1.0,
        columns,
        ny,
        |c, _| heights[c % nx_per_period],
        DomainKind::Thin { eps },
    )
}

pub fn mesh_area(mesh: &Mesh) -> f64 {
    (0..mesh.triangle_count()).map(|t| mesh.signed_area(t)).sum()
}
