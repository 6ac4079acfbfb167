//! The convergence and corrector harness: thin-domain solves along a ladder of
//! `eps`, compared against the homogenized solution and against the partition
//! corrector `c(x) = <u0'>_i [(1, 0) + grad phi(x1 / eps, x2)]`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    a_p_reg, element_gradient, fhat_limit, lp_norm, scaled_gradient, FluxParams, Load, PLaplaceForm, Vec2,
};
use crate::geometry::{build_cell_mesh, build_thin_mesh, periods_for_eps, DomainKind, Mesh, ProfileSpec};
use crate::homogenize::{compute_q, fbar_of, solve_cell, CellSolution, CellSummary};
use crate::limit1d::{derivative_samples, interpolate_uniform, solve_homogenized, Limit1DProblem};
use crate::solve::{newton_solve, ConstraintSet, SolveDiagnostics, SolveOptions};

/// Closed-form right-hand sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadSpec {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * cos(wavenumber * pi * x1)`.
    Cosine {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `sum_k c_k x1^k`.
    Polynomial {
        coefficients: Vec<f64>,
    },
    /// `sum_{j,k} c_jk x1^j x2^k`, rows indexed by the power of `x1`.
    Bivariate {
        coefficients: Vec<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl LoadSpec {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let horner = |c: &[f64], x: f64| c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck);
        match self {
            LoadSpec::Constant { value } => *value,
            LoadSpec::Cosine {
                amplitude,
                wavenumber,
                offset,
            } => offset + amplitude * (wavenumber * std::f64::consts::PI * x1).cos(),
            LoadSpec::Polynomial { coefficients } => horner(coefficients, x1),
            LoadSpec::Bivariate { coefficients } => {
                let rows: Vec<f64> = coefficients.iter().map(|row| horner(row, x2)).collect();
                horner(&rows, x1)
            }
        }
    }

    pub fn to_load(&self) -> Load {
        let spec = self.clone();
        Load::function(move |x1, x2| spec.eval(x1, x2))
    }

    fn validate(&self) -> Result<()> {
        let finite = match self {
            LoadSpec::Constant { value } => value.is_finite(),
            LoadSpec::Cosine {
                amplitude,
                wavenumber,
                offset,
            } => amplitude.is_finite() && wavenumber.is_finite() && offset.is_finite(),
            LoadSpec::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
            LoadSpec::Bivariate { coefficients } => coefficients.iter().flatten().all(|c| c.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidInput("load coefficients must be finite".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    pub cell_nx: usize,
    pub cell_ny: usize,
    pub thin_nx_per_period: usize,
    pub thin_ny: usize,
    /// Elements of the limit problem.
    pub limit_n: usize,
    /// Fiber stations for the flux comparison; 0 picks `max(2048, 8 * columns)`.
    pub flux_stations: usize,
}

impl Resolution {
    /// Fiber stations for a thin mesh with `columns` columns.
    pub fn stations_for(&self, columns: usize) -> usize {
        if self.flux_stations == 0 {
            (8 * columns).max(2048)
        } else {
            self.flux_stations
        }
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            cell_nx: 128,
            cell_ny: 32,
            thin_nx_per_period: 32,
            thin_ny: 16,
            limit_n: 1024,
            flux_stations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub profile: ProfileSpec,
    pub p: f64,
    pub load: LoadSpec,
    pub epsilons: Vec<f64>,
    pub nu: Vec<u32>,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default)]
    pub solver: SolveOptions,
    /// Output directory used by the command-line front end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidInput(format!("p must exceed 1, got {}", self.p)));
        }
        if self.epsilons.is_empty() {
            return Err(Error::InvalidInput("epsilon ladder is empty".into()));
        }
        if self.nu.is_empty() {
            return Err(Error::InvalidInput("nu ladder is empty".into()));
        }
        if let Some(w) = self.epsilons.windows(2).find(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput(format!(
                "epsilon ladder must be strictly decreasing, found {} then {}",
                w[0], w[1]
            )));
        }
        for &eps in &self.epsilons {
            periods_for_eps(&self.profile, eps)?;
        }
        if let Some(nu) = self.nu.iter().find(|&&nu| nu > 30) {
            return Err(Error::InvalidInput(format!("nu = {nu} is too large")));
        }
        let r = &self.resolution;
        if r.cell_nx < 2 || r.cell_ny < 2 || r.thin_nx_per_period < 2 || r.thin_ny < 2 || r.limit_n < 2 {
            return Err(Error::InvalidInput("mesh resolutions must be at least 2".into()));
        }
        self.load.validate()?;
        self.solver.validate()
    }
}

/// The cells `A_i` of the partition of `(0, 1)` into intervals of width `L 2^-nu`,
/// the last one holding the remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub nu: u32,
    pub cells: Vec<(f64, f64)>,
}

impl PartitionSpec {
    pub fn new(nu: u32, period: f64) -> Result<Self> {
        let width = period * 0.5f64.powi(nu as i32);
        if !(width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "partition width for nu = {nu} is not positive"
            )));
        }
        let full = (1.0 / width * (1.0 + 1e-12)).floor() as usize;
        let mut cells: Vec<(f64, f64)> = (0..full)
            .map(|i| (i as f64 * width, ((i + 1) as f64 * width).min(1.0)))
            .collect();
        match cells.last_mut() {
            Some(last) if 1.0 - last.1 <= 1e-12 => last.1 = 1.0,
            Some(last) => {
                let start = last.1;
                cells.push((start, 1.0));
            }
            None => cells.push((0.0, 1.0)),
        }
        Ok(PartitionSpec { nu, cells })
    }

    /// Index of the cell containing `x1` (the right end belongs to the last cell).
    pub fn cell_of(&self, x1: f64) -> usize {
        self.cells.partition_point(|c| c.1 <= x1).min(self.cells.len() - 1)
    }
}

/// Means over each partition cell of the piecewise-linear interpolant of `du0`,
/// given on [`crate::fem::unit_grid`]`(du0.len())`.
pub fn partition_average(du0: &[f64], part: &PartitionSpec) -> Vec<f64> {
    let m = du0.len() - 1;
    let h = 1.0 / m as f64;
    // cumulative integral at the grid nodes
    let mut cumulative = vec![0.0; m + 1];
    for i in 0..m {
        cumulative[i + 1] = cumulative[i] + 0.5 * h * (du0[i] + du0[i + 1]);
    }
    let integral_to = |x: f64| {
        let s = (x.clamp(0.0, 1.0) / h).min(m as f64);
        let i = (s.floor() as usize).min(m - 1);
        let t = s - i as f64;
        let mid = du0[i] + 0.5 * t * (du0[i + 1] - du0[i]);
        cumulative[i] + t * h * mid
    };
    part.cells
        .iter()
        .map(|&(a, b)| (integral_to(b) - integral_to(a)) / (b - a))
        .collect()
}

/// The thin problem with `eps_weight = eps`, started from zero.
pub fn solve_thin(mesh: &Mesh, p: f64, load: &Load, opts: &SolveOptions) -> Result<(Vec<f64>, SolveDiagnostics)> {
    let eps = match mesh.kind() {
        DomainKind::Thin { eps } => eps,
        DomainKind::Cell => return Err(Error::InvalidInput("solve_thin needs a thin mesh".into())),
    };
    let params = FluxParams::new(p, opts.final_delta(), eps)?;
    let form = PLaplaceForm::new(mesh, params, load.clone());
    newton_solve(&form, &vec![0.0; mesh.node_count()], &ConstraintSet::none(), opts)
}

/// `c` at every triangle barycenter of `mesh`.
pub fn corrector_field(
    cell: &CellSolution,
    du0: &[f64],
    part: &PartitionSpec,
    eps: f64,
    mesh: &Mesh,
) -> Result<Vec<Vec2>> {
    let averages = partition_average(du0, part);
    (0..mesh.triangle_count())
        .map(|t| {
            let [x1, x2] = mesh.barycenter(t);
            let g = cell.grad_phi_at(x1 / eps, x2)?;
            let a = averages[part.cell_of(x1)];
            Ok([a * (1.0 + g[0]), a * g[1]])
        })
        .collect()
}

/// `(du0(x1), 0)` at every triangle barycenter.
pub fn naive_field(du0: &[f64], mesh: &Mesh) -> Vec<Vec2> {
    (0..mesh.triangle_count())
        .map(|t| [interpolate_uniform(du0, mesh.barycenter(t)[0]), 0.0])
        .collect()
}

/// `|| u_eps - u0 ||_{L^p}` on the thin mesh, with `u0` interpolated in `x1`.
pub fn error_u(mesh: &Mesh, u_eps: &[f64], u0: &[f64], p: f64) -> f64 {
    let diff: Vec<f64> = mesh
        .nodes()
        .iter()
        .zip(u_eps)
        .map(|(x, u)| u - interpolate_uniform(u0, x[0]))
        .collect();
    lp_norm(mesh, &diff, p)
}

/// `|| grad_eps u_eps - c ||_{L^p}` with `c` constant per triangle.
pub fn error_corrector(mesh: &Mesh, u_eps: &[f64], c_field: &[Vec2], p: f64, eps: f64) -> Result<f64> {
    let params = FluxParams::new(p, 0.0, eps)?;
    let total: f64 = (0..mesh.triangle_count())
        .map(|t| {
            let g = scaled_gradient(element_gradient(mesh, u_eps, t), &params);
            let d = [g[0] - c_field[t][0], g[1] - c_field[t][1]];
            mesh.signed_area(t) * (d[0] * d[0] + d[1] * d[1]).sqrt().powf(p)
        })
        .sum();
    Ok(total.powf(1.0 / p))
}

/// Station abscissae `(i + 1/2) / n1`.
pub fn stations(n1: usize) -> Vec<f64> {
    (0..n1).map(|i| (i as f64 + 0.5) / n1 as f64).collect()
}

/// `int_0^{top(x1)} a_p(grad_eps u) . (1, 0) dx2` at every station, along the
/// vertical fiber through the thin mesh.
pub fn flux_profile(mesh: &Mesh, u_eps: &[f64], p: f64, eps: f64, n1: usize) -> Result<Vec<f64>> {
    let params = FluxParams::new(p, 0.0, eps)?;
    let grid = mesh.grid();
    let rows = grid.rows;
    Ok(stations(n1)
        .into_iter()
        .map(|x1| {
            let (c, t) = mesh.column_of(x1 * mesh.width());
            let (hl, hr) = (mesh.column_height(c), mesh.column_height(c + 1));
            let level = |r: usize| ((1.0 - t) * hl + t * hr) * r as f64 / rows as f64;
            let flux = |tri: usize| a_p_reg(scaled_gradient(element_gradient(mesh, u_eps, tri), &params), &params)[0];
            (0..rows)
                .map(|r| {
                    let quad = c * rows + r;
                    let diagonal = (1.0 - t) * hl * r as f64 / rows as f64 + t * hr * (r + 1) as f64 / rows as f64;
                    (diagonal - level(r)) * flux(2 * quad) + (level(r + 1) - diagonal) * flux(2 * quad + 1)
                })
                .sum()
        })
        .collect())
}

/// `q (|Y*| / L) |u0'|^(p-2) u0'` at every station.
pub fn flux_target(cell: &CellSolution, du0: &[f64], n1: usize) -> Vec<f64> {
    let scale = cell.q_flux * cell.cell_measure / cell.period();
    stations(n1)
        .into_iter()
        .map(|x| scale * crate::fem::scalar_flux(interpolate_uniform(du0, x), cell.p, 0.0))
        .collect()
}

/// Centered moving average of station samples over a window of width `w`,
/// truncated at the ends of `(0, 1)`.
pub fn box_smooth(samples: &[f64], w: f64) -> Vec<f64> {
    let n = samples.len();
    let half = ((0.5 * w * n as f64).round() as usize).min(n);
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + samples[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// `|| smooth(a) - smooth(b) ||_{L^r(0,1)}` by the station midpoint rule.
pub fn smoothed_discrepancy(a: &[f64], b: &[f64], w: f64, r: f64) -> f64 {
    let (sa, sb) = (box_smooth(a, w), box_smooth(b, w));
    let n = a.len() as f64;
    (sa.iter().zip(&sb).map(|(x, y)| (x - y).abs().powf(r)).sum::<f64>() / n).powf(1.0 / r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub eps: f64,
    pub nu: u32,
    pub nodes: usize,
    pub error_u: f64,
    pub error_corrector: f64,
    /// `|| grad_eps u_eps - (u0', 0) ||_{L^p}`, the comparison without the corrector.
    pub error_naive: f64,
    pub flux_discrepancy: f64,
    pub newton_iterations: usize,
    /// `"ok"` or the failure that emptied this row.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub q: f64,
    pub n: usize,
    pub newton_iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub cell: CellSummary,
    pub limit: LimitSummary,
    pub rows: Vec<StudyRow>,
    /// Wall time per `eps` in seconds; kept out of the serialized report so that it
    /// stays byte-identical across runs.
    #[serde(skip)]
    pub timings: Vec<(f64, f64)>,
}

pub const CSV_HEADER: &str =
    "eps,nu,nodes,error_u,error_corrector,error_naive,flux_discrepancy,newton_iterations,status";

impl StudyReport {
    pub fn rows_for(&self, eps: f64) -> impl Iterator<Item = &StudyRow> {
        self.rows.iter().filter(move |r| r.eps == eps)
    }

    pub fn row(&self, eps: f64, nu: u32) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.eps == eps && r.nu == nu)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.17e},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{},{}\n",
                r.eps,
                r.nu,
                r.nodes,
                r.error_u,
                r.error_corrector,
                r.error_naive,
                r.flux_discrepancy,
                r.newton_iterations,
                r.status.replace([',', '\n'], ";")
            ));
        }
        out
    }
}

pub fn read_report_csv(text: &str) -> Result<Vec<StudyRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::InvalidInput("unexpected study CSV header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| {
            let bad = |what: &str| Error::InvalidInput(format!("line {}: bad {what}", k + 2));
            let f: Vec<&str> = line.splitn(9, ',').collect();
            if f.len() != 9 {
                return Err(bad("field count"));
            }
            let real = |i: usize, what: &str| f[i].parse::<f64>().map_err(|_| bad(what));
            Ok(StudyRow {
                eps: real(0, "eps")?,
                nu: f[1].parse().map_err(|_| bad("nu"))?,
                nodes: f[2].parse().map_err(|_| bad("nodes"))?,
                error_u: real(3, "error_u")?,
                error_corrector: real(4, "error_corrector")?,
                error_naive: real(5, "error_naive")?,
                flux_discrepancy: real(6, "flux_discrepancy")?,
                newton_iterations: f[7].parse().map_err(|_| bad("newton_iterations"))?,
                status: f[8].to_string(),
            })
        })
        .collect()
}

/// Everything an `eps` row needs from the cell and limit solves.
struct Shared<'a> {
    config: &'a StudyConfig,
    cell: &'a CellSolution,
    u0: Vec<f64>,
    du0: Vec<f64>,
    partitions: Vec<PartitionSpec>,
}

fn failed_row(eps: f64, nu: u32, nodes: usize, err: &Error) -> StudyRow {
    StudyRow {
        eps,
        nu,
        nodes,
        error_u: f64::NAN,
        error_corrector: f64::NAN,
        error_naive: f64::NAN,
        flux_discrepancy: f64::NAN,
        newton_iterations: 0,
        status: err.to_string(),
    }
}

fn failed_rows(config: &StudyConfig, eps: f64, nodes: usize, err: &Error) -> Vec<StudyRow> {
    config.nu.iter().map(|&nu| failed_row(eps, nu, nodes, err)).collect()
}

fn eps_rows(shared: &Shared<'_>, eps: f64) -> Vec<StudyRow> {
    let config = shared.config;
    let r = &config.resolution;
    let mesh = match build_thin_mesh(&config.profile, eps, r.thin_nx_per_period, r.thin_ny) {
        Ok(m) => m,
        Err(e) => return failed_rows(config, eps, 0, &e),
    };
    let nodes = mesh.node_count();
    let (u_eps, diag) = match solve_thin(&mesh, config.p, &config.load.to_load(), &config.solver) {
        Ok(s) => s,
        Err(e) => return failed_rows(config, eps, nodes, &e),
    };
    let p = config.p;
    let eu = error_u(&mesh, &u_eps, &shared.u0, p);
    let n1 = r.stations_for(mesh.grid().columns);
    let flux = flux_profile(&mesh, &u_eps, p, eps, n1).map(|f| {
        smoothed_discrepancy(
            &f,
            &flux_target(shared.cell, &shared.du0, n1),
            eps * config.profile.period(),
            p / (p - 1.0),
        )
    });
    let naive = error_corrector(&mesh, &u_eps, &naive_field(&shared.du0, &mesh), p, eps);
    shared
        .partitions
        .iter()
        .map(|part| {
            let row = || -> Result<StudyRow> {
                let c = corrector_field(shared.cell, &shared.du0, part, eps, &mesh)?;
                Ok(StudyRow {
                    eps,
                    nu: part.nu,
                    nodes,
                    error_u: eu,
                    error_corrector: error_corrector(&mesh, &u_eps, &c, p, eps)?,
                    error_naive: naive.clone()?,
                    flux_discrepancy: flux.clone()?,
                    newton_iterations: diag.total_iterations(),
                    status: "ok".into(),
                })
            };
            row().unwrap_or_else(|e| failed_row(eps, part.nu, nodes, &e))
        })
        .collect()
}

/// Rows of one `eps` and their wall time in seconds.
type TimedRows = (Vec<StudyRow>, f64);

/// The homogenized problem of `config` with coefficient `q`, its load being the weak
/// limit of the fiber-averaged data.
pub fn limit_problem(config: &StudyConfig, q: f64) -> Result<Limit1DProblem> {
    let r = &config.resolution;
    let load = config.load.clone();
    let fhat = fhat_limit(
        &move |x1, x2| load.eval(x1, x2),
        &config.profile,
        r.limit_n + 1,
        4 * r.cell_nx.max(64),
    );
    let fbar = fbar_of(&fhat, config.profile.cell_measure(), config.profile.period());
    Limit1DProblem::new(q, config.p, fbar, r.limit_n)
}

/// Runs the full pipeline; `eps` rows are spread over `threads` workers and merged
/// in ladder order.
pub fn run_study(config: &StudyConfig, threads: usize) -> Result<StudyReport> {
    config.validate()?;
    let r = &config.resolution;
    let cell_mesh = build_cell_mesh(&config.profile, r.cell_nx, r.cell_ny)?;
    let cell = solve_cell(&cell_mesh, config.p, &config.solver)?;
    let q = compute_q(&cell)?;

    let limit = solve_homogenized(&limit_problem(config, q)?, &config.solver)?;
    let du0 = derivative_samples(&limit.u);
    let partitions = config
        .nu
        .iter()
        .map(|&nu| PartitionSpec::new(nu, config.profile.period()))
        .collect::<Result<Vec<_>>>()?;

    let shared = Shared {
        config,
        cell: &cell,
        u0: limit.u.clone(),
        du0,
        partitions,
    };
    let n_eps = config.epsilons.len();
    let results: Mutex<Vec<Option<TimedRows>>> = Mutex::new(vec![None; n_eps]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, n_eps) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= n_eps {
                    break;
                }
                let eps = config.epsilons[k];
                let start = Instant::now();
                let rows = eps_rows(&shared, eps);
                let seconds = start.elapsed().as_secs_f64();
                log::info!(target: "thinhom::study", "eps={eps} done in {seconds:.2}s");
                results.lock().unwrap()[k] = Some((rows, seconds));
            });
        }
    });

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (k, entry) in results.into_inner().unwrap().into_iter().enumerate() {
        let (r, t) = entry.expect("every eps row is processed");
        rows.extend(r);
        timings.push((config.epsilons[k], t));
    }
    Ok(StudyReport {
        config: config.clone(),
        cell: cell.summary(),
        limit: LimitSummary {
            q,
            n: r.limit_n,
            newton_iterations: limit.diagnostics.total_iterations(),
            residual: limit.diagnostics.final_residual(),
        },
        rows,
        timings,
    })
}
