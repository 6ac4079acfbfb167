use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thinhom::fem::{
    a_p_dual, a_p_reg, assemble_energy, assemble_jacobian, assemble_residual, w1p_eps_seminorm, PLaplaceForm,
};
use thinhom::geometry::{build_cell_mesh, build_thin_mesh, read_mesh_text, write_mesh_text, BoundaryTag};
use thinhom::homogenize::cell_measure_check;
use thinhom::solve::{newton_solve, shift_to_mean_zero};
use thinhom::{ConstraintSet, Field, FluxParams, Load, Mesh, ProfileSpec, SolveOptions};

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: [f64; 2]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Smallest ratio of the monotonicity pairing to its lower-bound shape over 10^4 pairs.
fn monotonicity_constant(p: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = FluxParams::isotropic(p, 0.0).unwrap();
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let y = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let d = sub(x, y);
        if norm(d) < 1e-9 {
            continue;
        }
        let pairing = dot(sub(a_p_reg(x, &params), a_p_reg(y, &params)), d);
        let shape = if p >= 2.0 {
            norm(d).powf(p)
        } else {
            norm(d).powi(2) * (norm(x) + norm(y)).powf(p - 2.0)
        };
        worst = worst.min(pairing / shape);
    }
    worst
}

#[test]
fn monotonicity_constants_are_positive() {
    for (p, seed) in [(1.5, 1), (2.0, 2), (3.0, 3)] {
        let c = monotonicity_constant(p, seed);
        assert!(c > 0.0, "p={p} c={c}");
    }
    // p = 2: the pairing is exactly |x - y|^2
    assert!((monotonicity_constant(2.0, 9) - 1.0).abs() < 1e-12);
}

#[test]
fn duality_round_trip_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [1.5, 2.0, 3.0] {
        let params = FluxParams::isotropic(p, 0.0).unwrap();
        for _ in 0..10_000 {
            let x = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let back = a_p_dual(a_p_reg(x, &params), p);
            assert!(norm(sub(back, x)) < 1e-8 * (1.0 + norm(x)));
        }
    }
}

fn wavy_thin() -> Mesh {
    build_thin_mesh(&ProfileSpec::cosine(1.0, 1.0, 0.4).unwrap(), 0.5, 4, 3).unwrap()
}

fn random_field(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Field {
    Field::new((0..mesh.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn residual_and_jacobian_match_finite_differences() {
    let mesh = wavy_thin();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let load = Load::function(|x, y| (2.0 * x).sin() + y);
    for (p, delta) in [(1.5, 1e-2), (2.0, 0.0), (3.0, 0.0), (3.0, 1e-3), (4.5, 0.0)] {
        let params = FluxParams::new(p, delta, 0.5).unwrap();
        for _ in 0..3 {
            let u = random_field(&mesh, &mut rng);
            let r = assemble_residual(&mesh, &u, &params, &load).unwrap();
            let jac = assemble_jacobian(&mesh, &u, &params).unwrap();
            let h = 1e-5;
            let r_scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..mesh.node_count() {
                let shifted = |s: f64| {
                    let mut v = u.values.clone();
                    v[i] += s;
                    Field::new(v).unwrap()
                };
                let e = |s: f64| assemble_energy(&mesh, &shifted(s), &params, &load).unwrap();
                let fd = (-e(2.0 * h) + 8.0 * e(h) - 8.0 * e(-h) + e(-2.0 * h)) / (12.0 * h);
                assert!((fd - r[i]).abs() < 1e-5 * r_scale, "p={p} node {i}: {fd} vs {}", r[i]);

                let rp = assemble_residual(&mesh, &shifted(h), &params, &load).unwrap();
                let rm = assemble_residual(&mesh, &shifted(-h), &params, &load).unwrap();
                let rp2 = assemble_residual(&mesh, &shifted(2.0 * h), &params, &load).unwrap();
                let rm2 = assemble_residual(&mesh, &shifted(-2.0 * h), &params, &load).unwrap();
                let col_scale = (0..mesh.node_count()).fold(0.0f64, |m, k| m.max(jac.get(k, i).abs()));
                for k in 0..mesh.node_count() {
                    let fd = (-rp2[k] + 8.0 * rp[k] - 8.0 * rm[k] + rm2[k]) / (12.0 * h);
                    assert!(
                        (fd - jac.get(k, i)).abs() < 1e-5 * col_scale,
                        "p={p} J[{k},{i}]: {fd} vs {}",
                        jac.get(k, i)
                    );
                }
            }
            assert!(jac.max_asymmetry() < 1e-12);
        }
    }
}

#[test]
fn regularized_residual_tends_to_the_exact_one() {
    let mesh = wavy_thin();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let load = Load::constant(0.3);
    for p in [2.0, 2.5, 3.0, 4.0] {
        let u = random_field(&mesh, &mut rng);
        let exact = assemble_residual(&mesh, &u, &FluxParams::new(p, 0.0, 0.5).unwrap(), &load).unwrap();
        let gaps: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8]
            .iter()
            .map(|&d| {
                let r = assemble_residual(&mesh, &u, &FluxParams::new(p, d, 0.5).unwrap(), &load).unwrap();
                r.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0], "p={p}: {gaps:?}");
        }
        assert!(gaps[3] < 1e-8, "p={p}: {gaps:?}");
    }
}

#[test]
fn newton_is_independent_of_the_initial_field() {
    let mesh = wavy_thin();
    let load = Load::function(|x, _| (std::f64::consts::PI * x).cos());
    let opts = SolveOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [1.5, 3.0] {
        let params = FluxParams::new(p, opts.final_delta(), 0.5).unwrap();
        let form = PLaplaceForm::new(&mesh, params, load.clone());
        let (a, da) = newton_solve(&form, &vec![0.0; mesh.node_count()], &ConstraintSet::none(), &opts).unwrap();
        let init = random_field(&mesh, &mut rng).values;
        let (b, db) = newton_solve(&form, &init, &ConstraintSet::none(), &opts).unwrap();
        assert!(da.energy_monotone(1e-12) && db.energy_monotone(1e-12));
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(w1p_eps_seminorm(&mesh, &diff, &params) < 1e-6, "p={p}");
    }
}

#[test]
fn p3_cell_residual_decreases_in_the_final_stage() {
    let mesh = build_cell_mesh(&ProfileSpec::cosine(1.0, 1.0, 0.5).unwrap(), 32, 8).unwrap();
    let cell = thinhom::homogenize::solve_cell(&mesh, 3.0, &SolveOptions::default()).unwrap();
    let last = cell.diagnostics.stages.last().unwrap();
    assert!(last.residuals.windows(2).all(|w| w[1] < w[0]), "{:?}", last.residuals);
    assert!(cell.diagnostics.energy_monotone(1e-12));
}

#[test]
fn constraints_round_trip() {
    let mesh = build_cell_mesh(&ProfileSpec::cosine(1.0, 1.0, 0.5).unwrap(), 6, 3).unwrap();
    let set = ConstraintSet {
        periodic_pairs: mesh.periodic_pairs().to_vec(),
        pinned_node: Some(0),
        mean_zero_postshift: true,
    };
    let map = set.dof_map(mesh.node_count()).unwrap();
    let mut u: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|x| (2.0 * std::f64::consts::PI * x[0]).sin() + x[1])
        .collect();
    u[0] = 0.0;
    for &(l, r) in mesh.periodic_pairs() {
        u[r] = u[l];
    }
    assert_eq!(map.expand(&map.restrict(&u), &u), u);

    let none = ConstraintSet::none().dof_map(4).unwrap();
    let v = vec![1.0, 2.0, 3.0, 4.0];
    assert_eq!(none.restrict(&v), v);

    let mut c = vec![2.5; mesh.node_count()];
    shift_to_mean_zero(&mut c, &thinhom::fem::lumped_mass(&mesh));
    assert!(c.iter().all(|v| v.abs() < 1e-14));
}

fn profile_strategy() -> impl Strategy<Value = ProfileSpec> {
    (
        0.3f64..3.0,
        0.5f64..2.0,
        prop::collection::vec(-0.3f64..0.3, 0..4),
        prop::collection::vec(-0.3f64..0.3, 0..4),
    )
        .prop_filter_map("profile must stay positive", |(l, c0, a, b)| {
            ProfileSpec::new(l, c0, a, b).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn theta_integrates_to_cell_measure(spec in profile_strategy()) {
        let (lhs, rhs) = cell_measure_check(&spec, 10_000);
        prop_assert!((lhs - rhs).abs() < 1e-3 * rhs.max(1.0), "{} vs {}", lhs, rhs);
        prop_assert!((rhs - spec.cell_measure()).abs() < 1e-9);
    }

    #[test]
    fn profile_bounds_and_periodicity(spec in profile_strategy(), y in -5.0f64..5.0) {
        let (g, gl) = (spec.eval(y), spec.eval(y + spec.period()));
        prop_assert!((g - gl).abs() < 1e-12);
        prop_assert!(spec.g0() > 0.0);
        prop_assert!(spec.g0() <= g + 1e-12 && g <= spec.g1() + 1e-12);
    }

    #[test]
    fn cell_meshes_are_valid(spec in profile_strategy(), nx in 2usize..24, ny in 2usize..8) {
        let Ok(mesh) = build_cell_mesh(&spec, nx, ny) else {
            return Ok(());
        };
        for t in 0..mesh.triangle_count() {
            prop_assert!(mesh.signed_area(t) > 0.0);
        }
        let lefts: Vec<usize> = mesh.periodic_pairs().iter().map(|p| p.0).collect();
        let rights: Vec<usize> = mesh.periodic_pairs().iter().map(|p| p.1).collect();
        let mut all = lefts.clone();
        all.extend(&rights);
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), 2 * (ny + 1));
        for &(l, r) in mesh.periodic_pairs() {
            let (a, b) = (mesh.nodes()[l], mesh.nodes()[r]);
            prop_assert!((a[1] - b[1]).abs() < 1e-12);
            prop_assert!((b[0] - a[0] - spec.period()).abs() < 1e-12);
        }
        for e in mesh.boundary_edges().iter().filter(|e| e.tag == BoundaryTag::Upper) {
            for &n in &e.nodes {
                let x = mesh.nodes()[n];
                prop_assert!((x[1] - spec.eval(x[0])).abs() < 1e-12);
            }
        }
        // closed loop: every boundary node has in- and out-degree one
        let edges = mesh.boundary_edges();
        for (k, e) in edges.iter().enumerate() {
            prop_assert_eq!(e.nodes[1], edges[(k + 1) % edges.len()].nodes[0]);
        }
    }

    #[test]
    fn mesh_text_round_trips(spec in profile_strategy(), m in 1usize..4) {
        let eps = 1.0 / (m as f64 * spec.period());
        if eps > 1.0 {
            return Ok(());
        }
        let mesh = build_thin_mesh(&spec, eps, 4, 2).unwrap();
        let values: Vec<f64> = (0..mesh.node_count()).map(|i| (i as f64).sqrt() / 3.0).collect();
        let (back, field) = read_mesh_text(&write_mesh_text(&mesh, Some(&values))).unwrap();
        prop_assert_eq!(back.nodes(), mesh.nodes());
        prop_assert_eq!(back.triangles(), mesh.triangles());
        prop_assert_eq!(field.unwrap(), values);
    }

    #[test]
    fn duality_round_trip(x0 in -50.0f64..50.0, x1 in -50.0f64..50.0, p in 1.2f64..6.0) {
        let x = [x0, x1];
        let back = a_p_dual(a_p_reg(x, &FluxParams::isotropic(p, 0.0).unwrap()), p);
        prop_assert!(norm(sub(back, x)) < 1e-8 * (1.0 + norm(x)));
    }
}
