//! Damped Newton with delta-continuation on the constrained (reduced) space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::PLaplaceForm;
use crate::linear::linear_solve;
use crate::sparse::CsrMatrix;

pub use crate::linear::linear_solve as solve_linear;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Relative stopping tolerance of the final continuation stage.
    pub residual_tol: f64,
    /// Relative tolerance of the earlier stages; they only provide warm starts.
    pub stage_tol: f64,
    pub max_newton: usize,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
    pub max_halvings: usize,
    pub continuation_deltas: Vec<f64>,
    pub linear_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            residual_tol: 1e-10,
            stage_tol: 1e-6,
            max_newton: 50,
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
            max_halvings: 30,
            continuation_deltas: vec![1e-2, 1e-4, 1e-6, 1e-8],
            linear_tol: 1e-12,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.residual_tol,
            self.stage_tol,
            self.sufficient_decrease,
            self.linear_tol,
        ];
        if positive.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if self.max_newton < 1 || self.max_halvings < 1 {
            return Err(Error::InvalidInput("iteration limits must be at least 1".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidInput("backtrack factor must lie in (0, 1)".into()));
        }
        if self.continuation_deltas.is_empty() || self.continuation_deltas.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::InvalidInput(
                "continuation needs at least one nonnegative delta".into(),
            ));
        }
        Ok(())
    }

    pub fn final_delta(&self) -> f64 {
        *self.continuation_deltas.last().expect("validated")
    }
}

/// Periodic identification, an optional pinned node, and mean normalization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    /// `(leader, follower)`: the follower's value is eliminated onto the leader's.
    pub periodic_pairs: Vec<(usize, usize)>,
    /// Node held at its initial value during the solve.
    pub pinned_node: Option<usize>,
    /// Shift the solution by a constant so its mesh-weighted mean vanishes.
    pub mean_zero_postshift: bool,
}

/// Node-to-unknown map derived from a [`ConstraintSet`].
#[derive(Debug, Clone)]
pub struct DofMap {
    dof: Vec<Option<usize>>,
    root: Vec<usize>,
    representative: Vec<usize>,
}

impl ConstraintSet {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn dof_map(&self, n: usize) -> Result<DofMap> {
        let mut leader_of: Vec<Option<usize>> = vec![None; n];
        for &(leader, follower) in &self.periodic_pairs {
            if leader >= n || follower >= n || leader == follower {
                return Err(Error::InvalidInput(format!("bad periodic pair ({leader}, {follower})")));
            }
            if leader_of[follower].replace(leader).is_some() {
                return Err(Error::InvalidInput(format!("node {follower} follows two leaders")));
            }
        }
        let root = |mut i: usize| -> Result<usize> {
            for _ in 0..=n {
                match leader_of[i] {
                    Some(l) => i = l,
                    None => return Ok(i),
                }
            }
            Err(Error::InvalidInput("periodic pairs form a cycle".into()))
        };
        if let Some(pin) = self.pinned_node {
            if pin >= n {
                return Err(Error::InvalidInput(format!("pinned node {pin} out of range")));
            }
            if leader_of[pin].is_some() {
                return Err(Error::InvalidInput(format!(
                    "node {pin} is both pinned and a periodic follower"
                )));
            }
        }
        let mut dof = vec![None; n];
        let mut representative = Vec::new();
        for i in 0..n {
            if root(i)? == i && Some(i) != self.pinned_node {
                dof[i] = Some(representative.len());
                representative.push(i);
            }
        }
        let roots = (0..n).map(root).collect::<Result<Vec<_>>>()?;
        for i in 0..n {
            dof[i] = dof[roots[i]];
        }
        Ok(DofMap {
            dof,
            root: roots,
            representative,
        })
    }

    /// Folds follower rows/columns of `a` and entries of `b` onto their leaders and
    /// drops the pinned node.
    pub fn reduce(&self, a: &CsrMatrix, b: &[f64]) -> Result<(CsrMatrix, Vec<f64>)> {
        let map = self.dof_map(b.len())?;
        Ok((map.reduce_matrix(a), map.reduce_vector(b)))
    }

    /// Expands reduced unknowns to a nodal field (pinned value taken from `base`)
    /// and applies the mean shift when requested.
    pub fn expand(&self, reduced: &[f64], base: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        let map = self.dof_map(base.len())?;
        let mut u = map.expand(reduced, base);
        if self.mean_zero_postshift {
            shift_to_mean_zero(&mut u, weights);
        }
        Ok(u)
    }
}

pub fn shift_to_mean_zero(u: &mut [f64], weights: &[f64]) {
    let total: f64 = weights.iter().sum();
    let mean = weights.iter().zip(u.iter()).map(|(w, v)| w * v).sum::<f64>() / total;
    for v in u.iter_mut() {
        *v -= mean;
    }
}

impl DofMap {
    pub fn len(&self) -> usize {
        self.representative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representative.is_empty()
    }

    pub fn reduce_vector(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, d) in self.dof.iter().enumerate() {
            if let Some(d) = d {
                out[*d] += r[i];
            }
        }
        out
    }

    pub fn reduce_matrix(&self, a: &CsrMatrix) -> CsrMatrix {
        let triplets = a
            .triplets()
            .filter_map(|(i, j, v)| Some((self.dof[i]?, self.dof[j]?, v)))
            .collect();
        CsrMatrix::from_triplets(self.len(), triplets)
    }

    /// Values of the representative nodes.
    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        self.representative.iter().map(|&i| u[i]).collect()
    }

    pub fn expand(&self, reduced: &[f64], base: &[f64]) -> Vec<f64> {
        self.dof
            .iter()
            .zip(&self.root)
            .map(|(d, &r)| d.map_or(base[r], |d| reduced[d]))
            .collect()
    }

    /// `u + alpha * P d`.
    fn axpy(&self, u: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
        self.dof
            .iter()
            .zip(u)
            .map(|(k, &v)| k.map_or(v, |k| v + alpha * d[k]))
            .collect()
    }
}

/// A convex discrete energy with derivatives, parameterized by the regularization.
pub trait DiscreteProblem {
    fn size(&self) -> usize;
    fn energy(&self, u: &[f64], delta: f64) -> Result<f64>;
    fn residual(&self, u: &[f64], delta: f64) -> Result<Vec<f64>>;
    fn jacobian(&self, u: &[f64], delta: f64) -> Result<CsrMatrix>;
    /// Weights `int psi_i` used for mean normalization.
    fn mean_weights(&self) -> Vec<f64>;
}

impl DiscreteProblem for PLaplaceForm<'_> {
    fn size(&self) -> usize {
        self.mesh.node_count()
    }

    fn energy(&self, u: &[f64], delta: f64) -> Result<f64> {
        self.at_delta(delta).energy(u)
    }

    fn residual(&self, u: &[f64], delta: f64) -> Result<Vec<f64>> {
        self.at_delta(delta).residual(u)
    }

    fn jacobian(&self, u: &[f64], delta: f64) -> Result<CsrMatrix> {
        self.at_delta(delta).jacobian(u)
    }

    fn mean_weights(&self) -> Vec<f64> {
        crate::fem::lumped_mass(self.mesh)
    }
}

impl PLaplaceForm<'_> {
    fn at_delta(&self, delta: f64) -> Self {
        PLaplaceForm {
            params: self.params.with_delta(delta),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub delta: f64,
    pub iterations: usize,
    /// Energy before the first step and after every accepted step.
    pub energies: Vec<f64>,
    /// Reduced residual norm before the first step and after every accepted step.
    pub residuals: Vec<f64>,
    pub step_lengths: Vec<f64>,
    /// The stage ended on a negligible Newton step with the residual already
    /// below `stage_tol`, i.e. at the floating-point floor rather than at `residual_tol`.
    pub roundoff_stop: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub stages: Vec<StageDiagnostics>,
}

impl SolveDiagnostics {
    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }

    pub fn final_residual(&self) -> f64 {
        self.stages
            .last()
            .and_then(|s| s.residuals.last().copied())
            .unwrap_or(f64::NAN)
    }

    pub fn final_delta(&self) -> f64 {
        self.stages.last().map_or(f64::NAN, |s| s.delta)
    }

    /// True when no accepted step raised the energy beyond `rel_tol (1 + |E|)`.
    pub fn energy_monotone(&self, rel_tol: f64) -> bool {
        self.stages.iter().all(|s| {
            s.energies
                .windows(2)
                .all(|w| w[1] <= w[0] + rel_tol * (1.0 + w[0].abs()))
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Energy increase still regarded as round-off when the residual goes down.
const ROUNDOFF: f64 = 1e-12;

/// Newton steps below this (relative to `max(1, |u|_inf)`) cannot change the iterate meaningfully.
const NEGLIGIBLE_STEP: f64 = 1e-12;

/// Minimizes `problem` over fields satisfying `constraints`, starting from `init`,
/// through the continuation sequence `opts.continuation_deltas`.
pub fn newton_solve<P: DiscreteProblem + ?Sized>(
    problem: &P,
    init: &[f64],
    constraints: &ConstraintSet,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveDiagnostics)> {
    opts.validate()?;
    if init.len() != problem.size() {
        return Err(Error::InvalidInput(format!(
            "initial field has {} entries, problem has {}",
            init.len(),
            problem.size()
        )));
    }
    let map = constraints.dof_map(init.len())?;
    // Start from a field that satisfies the periodic identification.
    let mut u = map.expand(&map.restrict(init), init);
    let mut diagnostics = SolveDiagnostics::default();
    let last_stage = opts.continuation_deltas.len() - 1;
    let mut init_residual = 0.0;

    for (stage, &delta) in opts.continuation_deltas.iter().enumerate() {
        let tol = if stage == last_stage {
            opts.residual_tol
        } else {
            opts.stage_tol.max(opts.residual_tol)
        };
        let mut diag = StageDiagnostics {
            delta,
            ..Default::default()
        };
        let mut energy = problem.energy(&u, delta)?;
        let mut r = map.reduce_vector(&problem.residual(&u, delta)?);
        let mut rnorm = norm(&r);
        if stage == 0 {
            init_residual = rnorm;
        }
        let threshold = tol * (1.0 + init_residual);
        let floor_threshold = opts.stage_tol.max(opts.residual_tol) * (1.0 + init_residual);
        diag.energies.push(energy);
        diag.residuals.push(rnorm);

        let mut iteration = 0;
        while rnorm > threshold {
            if iteration == opts.max_newton {
                return Err(Error::NonConvergence {
                    stage,
                    iterations: iteration,
                    residual: rnorm,
                });
            }
            iteration += 1;
            let jac = map.reduce_matrix(&problem.jacobian(&u, delta)?);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let step = linear_solve(&jac, &rhs, opts.linear_tol)?;
            let step_size = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if rnorm <= floor_threshold && step_size <= NEGLIGIBLE_STEP * scale {
                diag.roundoff_stop = true;
                log::debug!(
                    target: "thinhom::newton",
                    "stage={stage} iter={iteration} stopped at round-off floor, residual={rnorm:.6e}"
                );
                iteration -= 1;
                break;
            }
            let slope: f64 = r.iter().zip(&step).map(|(a, b)| a * b).sum();

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let trial = map.axpy(&u, alpha, &step);
                if let Ok(e) = problem.energy(&trial, delta) {
                    if e <= energy + opts.sufficient_decrease * alpha * slope {
                        accepted = Some((trial, e, None));
                        break;
                    }
                    if e <= energy + ROUNDOFF * (1.0 + energy.abs()) {
                        let rt = map.reduce_vector(&problem.residual(&trial, delta)?);
                        if norm(&rt) < rnorm {
                            accepted = Some((trial, e, Some(rt)));
                            break;
                        }
                    }
                }
                alpha *= opts.backtrack_factor;
            }
            // A step that passes Armijo can still overshoot badly when the flux is
            // singular (p < 2); keep halving while that strictly lowers the energy.
            if let Some((_, e, None)) = &accepted {
                let mut best_e = *e;
                loop {
                    let shorter = alpha * opts.backtrack_factor;
                    let trial = map.axpy(&u, shorter, &step);
                    match problem.energy(&trial, delta) {
                        Ok(e2) if e2 < best_e => {
                            best_e = e2;
                            alpha = shorter;
                            accepted = Some((trial, e2, None));
                        }
                        _ => break,
                    }
                }
            }
            let Some((trial, e, rt)) = accepted else {
                log::warn!(
                    target: "thinhom::newton",
                    "stagnation stage={stage} iter={iteration} delta={delta:e} energy={energy:.12e} residual={rnorm:.6e}"
                );
                return Err(Error::Stagnation {
                    stage,
                    iteration,
                    energy,
                    residual: rnorm,
                });
            };
            u = trial;
            energy = e;
            r = match rt {
                Some(rt) => rt,
                None => map.reduce_vector(&problem.residual(&u, delta)?),
            };
            rnorm = norm(&r);
            diag.energies.push(energy);
            diag.residuals.push(rnorm);
            diag.step_lengths.push(alpha);
            log::debug!(
                target: "thinhom::newton",
                "stage={stage} iter={iteration} delta={delta:e} energy={energy:.12e} residual={rnorm:.6e} step={alpha}"
            );
        }
        diag.iterations = iteration;
        diagnostics.stages.push(diag);
    }

    if constraints.mean_zero_postshift {
        shift_to_mean_zero(&mut u, &problem.mean_weights());
    }
    Ok((u, diagnostics))
}
