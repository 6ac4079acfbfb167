//! Independent reference computations checked against the library.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thinhom::fem::{fhat_of, lp_norm, unit_grid, Load};
use thinhom::geometry::{build_cell_mesh, build_thin_mesh, mesh_area, Mesh};
use thinhom::homogenize::{cell_measure_check, compute_q, fbar_of, solve_cell};
use thinhom::limit1d::{derivative_samples, solve_homogenized, Limit1DProblem};
use thinhom::linear::linear_solve;
use thinhom::sparse::CsrMatrix;
use thinhom::study::{corrector_field, error_corrector, partition_average, solve_thin, PartitionSpec};
use thinhom::{ProfileSpec, SolveOptions};

mod common;

use common::{cot, mean_zero, q_of, PeriodicLaplace};

fn reference_profile() -> ProfileSpec {
    ProfileSpec::cosine(1.0, 1.0, 0.5).unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + inner + f(b)) * h / 3.0
}

#[test]
fn p2_cell_matches_linear_periodic_oracle() {
    let mesh = build_cell_mesh(&reference_profile(), 64, 16).unwrap();
    let mut phi_ref = PeriodicLaplace::new(&mesh).solve();
    mean_zero(&mesh, &mut phi_ref);
    let cell = solve_cell(&mesh, 2.0, &SolveOptions::default()).unwrap();
    let diff: Vec<f64> = cell.phi.values.iter().zip(&phi_ref).map(|(a, b)| a - b).collect();
    assert!(lp_norm(&mesh, &diff, 2.0) < 1e-6);
    let q_ref = q_of(&mesh, &phi_ref);
    assert!((compute_q(&cell).unwrap() - q_ref).abs() < 1e-4);
    assert!(q_ref > 0.0 && q_ref < 1.0);
}

#[test]
fn pinned_solve_matches_lagrange_multiplier_formulation() {
    let mesh = build_cell_mesh(&reference_profile(), 16, 8).unwrap();
    let lap = PeriodicLaplace::new(&mesh);
    let idx: Vec<usize> = (0..lap.n).filter(|&i| lap.fold[i] == i).collect();
    let pos: std::collections::HashMap<usize, usize> = idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let m = idx.len();
    let mut weights = vec![0.0; lap.n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &i in tri {
            weights[lap.fold[i]] += mesh.signed_area(t) / 3.0;
        }
    }
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    for (k, &i) in idx.iter().enumerate() {
        for &(j, v) in &lap.k[i] {
            a[(k, pos[&j])] += v;
        }
        a[(k, m)] = weights[i];
        a[(m, k)] = weights[i];
        rhs[k] = -lap.b[i];
    }
    let sol = a.lu().solve(&rhs).unwrap();
    let phi_lm: Vec<f64> = (0..lap.n).map(|i| sol[pos[&lap.fold[i]]]).collect();
    let cell = solve_cell(&mesh, 2.0, &SolveOptions::default()).unwrap();
    for (a, b) in cell.phi.values.iter().zip(&phi_lm) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn sparse_solver_matches_dense_cholesky() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 100;
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for _ in 0..400 {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let v: f64 = rng.gen_range(-1.0..1.0);
        dense[(i, j)] += v;
        dense[(j, i)] += v;
    }
    for i in 0..n {
        let row: f64 = (0..n).map(|j| dense[(i, j)].abs()).sum();
        dense[(i, i)] = row + rng.gen_range(0.1..1.0);
    }
    let b = DVector::<f64>::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let x_ref = dense.clone().cholesky().unwrap().solve(&b);
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dense[(i, j)]).collect()).collect();
    let x = linear_solve(&CsrMatrix::from_dense(&rows), b.as_slice(), 1e-12).unwrap();
    for i in 0..n {
        assert!((x[i] - x_ref[i]).abs() < 1e-8);
    }
}

#[test]
fn mesh_areas_match_quadrature() {
    let g = reference_profile();
    let oracle = simpson(|y| g.eval(y), 0.0, 1.0, 20_000);
    assert!((mesh_area(&build_cell_mesh(&g, 64, 16).unwrap()) - oracle).abs() < 1e-3);
    let eps = 0.25;
    let oracle = simpson(|x| g.eval(x / eps), 0.0, 1.0, 40_000);
    assert!((mesh_area(&build_thin_mesh(&g, eps, 32, 4).unwrap()) - oracle).abs() < 1e-3);
    let (lhs, rhs) = cell_measure_check(&g, 10_000);
    assert!((lhs - oracle).abs() < 1e-3 && (rhs - oracle).abs() < 1e-3);
}

#[test]
fn fhat_average_tends_to_mean_height() {
    let g = reference_profile();
    let one = |_: f64, _: f64| 1.0;
    let samples = fhat_of(&one, &g, 1.0 / 64.0, 64 * 37 + 1);
    let mean = samples[..samples.len() - 1].iter().sum::<f64>() / (samples.len() - 1) as f64;
    assert!((mean - g.cell_measure() / g.period()).abs() < 1e-3);
}

#[test]
fn fbar_of_linear_load_tends_to_x1() {
    let g = reference_profile();
    let f = |x1: f64, _: f64| x1;
    for eps in [1.0 / 16.0, 1.0 / 64.0] {
        let n1 = 4097;
        let fhat = fhat_of(&f, &g, eps, n1);
        let fbar = fbar_of(&fhat, g.cell_measure(), g.period());
        // average over one period eps L around each interior station
        let half = (0.5 * eps * (n1 - 1) as f64) as usize;
        let mut worst: f64 = 0.0;
        for i in half..n1 - half {
            let window = &fbar[i - half..=i + half];
            let w = window.len() as f64 - 1.0;
            let avg = (window.iter().sum::<f64>() - 0.5 * (window[0] + window[window.len() - 1])) / w;
            worst = worst.max((avg - i as f64 / (n1 - 1) as f64).abs());
        }
        assert!(worst < 1e-2, "eps={eps} worst={worst}");
    }
}

#[test]
fn corrector_average_matches_cell_quadrature() {
    let g = reference_profile();
    let cell = solve_cell(&build_cell_mesh(&g, 64, 16).unwrap(), 3.0, &SolveOptions::default()).unwrap();
    let mut cell_integral = [0.0; 2];
    for (t, gp) in cell.grad_phi().iter().enumerate() {
        let a = cell.mesh.signed_area(t);
        cell_integral[0] += a * (1.0 + gp[0]);
        cell_integral[1] += a * gp[1];
    }
    let d = 1.7;
    let eps = 0.125;
    let mesh = build_thin_mesh(&g, eps, 64, 16).unwrap();
    let part = PartitionSpec::new(0, 1.0).unwrap();
    let c = corrector_field(&cell, &[d; 9], &part, eps, &mesh).unwrap();
    let mut total = [0.0; 2];
    for (t, ct) in c.iter().enumerate() {
        total[0] += mesh.signed_area(t) * ct[0];
        total[1] += mesh.signed_area(t) * ct[1];
    }
    let expected = [d * cell_integral[0] / g.period(), d * cell_integral[1] / g.period()];
    assert!(
        (total[0] - expected[0]).abs() < 1e-2 * expected[0].abs(),
        "{total:?} {expected:?}"
    );
    assert!((total[1] - expected[1]).abs() < 1e-2);
}

/// Linear (`p = 2`) thin problem on a flat strip, assembled in the stretched
/// coordinates `(x1, eps x2)` where `grad_eps` becomes the plain gradient.
fn linear_thin_oracle(mesh: &Mesh, eps: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = mesh.node_count();
    let z: Vec<[f64; 2]> = mesh.nodes().iter().map(|x| [x[0], eps * x[1]]).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let rule = [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ];
    for tri in mesh.triangles() {
        let x = tri.map(|i| z[i]);
        let area = 0.5 * ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]));
        for k in 0..3 {
            let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let w = 0.5 * cot(x[k], x[(k + 1) % 3], x[(k + 2) % 3]);
            a[(i, j)] -= w;
            a[(j, i)] -= w;
            a[(i, i)] += w;
            a[(j, j)] += w;
        }
        for i in 0..3 {
            for j in 0..3 {
                a[(tri[i], tri[j])] += area * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 };
            }
        }
        for bary in rule {
            let x1: f64 = (0..3).map(|k| bary[k] * x[k][0]).sum();
            for k in 0..3 {
                rhs[tri[k]] += area / 3.0 * f(x1) * bary[k];
            }
        }
    }
    a.cholesky().unwrap().solve(&rhs).as_slice().to_vec()
}

#[test]
fn flat_p2_corrector_error_matches_linear_pipeline() {
    let g = ProfileSpec::flat(1.0, 1.0).unwrap();
    let eps = 0.25;
    let mesh = build_thin_mesh(&g, eps, 8, 4).unwrap();
    let f = |x: f64| (std::f64::consts::PI * x).cos();
    let opts = SolveOptions::default();
    let (u_lib, _) = solve_thin(&mesh, 2.0, &Load::function(move |x, _| f(x)), &opts).unwrap();
    let u_ref = linear_thin_oracle(&mesh, eps, f);

    let fbar: Vec<f64> = unit_grid(129).iter().map(|&x| f(x)).collect();
    let limit = solve_homogenized(&Limit1DProblem::new(1.0, 2.0, fbar, 128).unwrap(), &opts).unwrap();
    let du0 = derivative_samples(&limit.u);
    let cell = solve_cell(&build_cell_mesh(&g, 8, 4).unwrap(), 2.0, &opts).unwrap();
    let part = PartitionSpec::new(3, 1.0).unwrap();
    let c = corrector_field(&cell, &du0, &part, eps, &mesh).unwrap();
    let lib = error_corrector(&mesh, &u_lib, &c, 2.0, eps).unwrap();

    // independent: partition means by fine midpoint sums, gradient by explicit formula
    let means: Vec<f64> = part
        .cells
        .iter()
        .map(|&(lo, hi)| {
            let m = 4096;
            (0..m)
                .map(|k| {
                    let x = lo + (k as f64 + 0.5) * (hi - lo) / m as f64;
                    let s = x * 128.0;
                    let i = (s.floor() as usize).min(127);
                    du0[i] + (s - i as f64) * (du0[i + 1] - du0[i])
                })
                .sum::<f64>()
                / m as f64
        })
        .collect();
    assert!(partition_average(&du0, &part)
        .iter()
        .zip(&means)
        .all(|(a, b)| (a - b).abs() < 1e-9));
    let mut total = 0.0;
    for tri in mesh.triangles() {
        let x = tri.map(|i| mesh.nodes()[i]);
        let det = (x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]);
        let (d1, d2) = (u_ref[tri[1]] - u_ref[tri[0]], u_ref[tri[2]] - u_ref[tri[0]]);
        let gx = (d1 * (x[2][1] - x[0][1]) - d2 * (x[1][1] - x[0][1])) / det;
        let gy = (d2 * (x[1][0] - x[0][0]) - d1 * (x[2][0] - x[0][0])) / det / eps;
        let xb = (x[0][0] + x[1][0] + x[2][0]) / 3.0;
        let cell_index = part.cells.iter().position(|c| xb < c.1).unwrap();
        total += 0.5 * det * ((gx - means[cell_index]).powi(2) + gy * gy);
    }
    let oracle = total.sqrt();
    assert!((lib - oracle).abs() < 1e-8, "{lib} vs {oracle}");
}
