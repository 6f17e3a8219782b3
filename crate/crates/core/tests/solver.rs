mod common;

use std::sync::Arc;

use common::*;
use nonlocal_homog::env::{sample_environment, translate, EnvironmentSpec};
use nonlocal_homog::kernels::{cached_quadrature, KernelClass};
use nonlocal_homog::nonlocal::*;
use nonlocal_homog::solve::*;
use nonlocal_homog::sym::Sym;
use nonlocal_homog::Error;

fn settings() -> SolverSettings {
    SolverSettings { tol: 1e-9, ..SolverSettings::default() }
}

fn plain<'a>(field: &'a dyn nonlocal_homog::env::CoefficientField, domain: Domain, l: f64, h: f64, eps: f64) -> DirichletProblem<'a> {
    let quad = cached_quadrature(field.dimension(), 1.0, h, 8.0).unwrap();
    DirichletProblem::new(field, OperatorKind::Plain, domain, Rhs::Constant(l), Exterior::Constant(0.0), eps, quad)
}

fn frozen<'a>(field: &'a dyn nonlocal_homog::env::CoefficientField, domain: Domain, l: f64, h: f64, eps: f64) -> DirichletProblem<'a> {
    let phi = TestFunction::quadratic(field.dimension(), &[0.0, 0.0], Sym::scalar(1.0));
    let quad = cached_quadrature(field.dimension(), 1.0, h, 8.0).unwrap();
    DirichletProblem::new(field, OperatorKind::Frozen { phi, x0: [0.0; 2] }, domain, Rhs::Constant(l), Exterior::Constant(0.0), eps, quad)
}

#[test]
fn zero_is_a_fixed_point() {
    let env = constant_env(1, 1.0, 0.0);
    let s = solve_dirichlet(&plain(&env, Domain::unit_ball(1, &[0.0]), 0.0, 1.0 / 64.0, 1.0), &settings()).unwrap();
    assert!(s.u.values.iter().all(|&v| v == 0.0));
    assert_eq!(s.residual, 0.0);
}

#[test]
fn one_dimensional_half_laplacian_benchmark() {
    // ∫ δu |y|^{-2} dy = −2π (−Δ)^{1/2} u, and (−Δ)^{1/2} (1 − x²)₊^{1/2} = 1 on (−1, 1).
    let env = constant_env(1, 1.0, 0.0);
    let h = 1.0 / 256.0;
    let s = solve_dirichlet(&plain(&env, Domain::unit_ball(1, &[0.0]), -1.0, h, 1.0), &settings()).unwrap();
    let mut worst: f64 = 0.0;
    let mut interior: f64 = 0.0;
    for i in 0..s.u.lattice.len() {
        let x = s.u.lattice.point(i)[0];
        if x.abs() >= 1.0 {
            continue;
        }
        let exact = (1.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI);
        let e = (s.u.values[i] - exact).abs();
        worst = worst.max(e);
        if x.abs() <= 0.5 {
            interior = interior.max(e);
        }
    }
    let peak = 1.0 / (2.0 * std::f64::consts::PI);
    assert!(worst <= 2e-2 * peak, "sup error {worst}");
    assert!(interior <= 5e-3 * peak, "interior error {interior}");
}

#[test]
fn self_convergence_under_fourfold_refinement() {
    let env = constant_env(1, 1.0, 0.0);
    let dom = Domain::unit_ball(1, &[0.0]);
    let coarse = solve_dirichlet(&plain(&env, dom, -1.0, 1.0 / 64.0, 1.0), &settings()).unwrap();
    let fine = solve_dirichlet(&plain(&env, dom, -1.0, 1.0 / 256.0, 1.0), &settings()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..coarse.u.lattice.len() {
        let m = coarse.u.lattice.global(i);
        let v = fine.u.node_value([4 * m[0], 0]);
        worst = worst.max((coarse.u.values[i] - v).abs());
    }
    assert!(worst <= 2e-2, "{worst}");
}

#[test]
fn comparison_in_the_right_hand_side() {
    let env = sample_environment(&EnvironmentSpec::checkerboard(1), 4).unwrap();
    let dom = Domain::unit_ball(1, &[0.0]);
    let a = solve_dirichlet(&plain(&env, dom, -1.0, 1.0 / 64.0, 0.25), &settings()).unwrap();
    let b = solve_dirichlet(&plain(&env, dom, -0.5, 1.0 / 64.0, 0.25), &settings()).unwrap();
    for (x, y) in a.u.values.iter().zip(&b.u.values) {
        assert!(*x >= *y - 1e-8);
    }
}

#[test]
fn residual_field_diagnostics() {
    let env = sample_environment(&EnvironmentSpec::checkerboard(1), 4).unwrap();
    let p = plain(&env, Domain::unit_ball(1, &[0.0]), -1.0, 1.0 / 64.0, 0.25);
    let s = solve_dirichlet(&p, &settings()).unwrap();
    let r = residual_field(&p, &s.u).unwrap();
    assert!(r.sup_norm() <= 1e-9);
    // Raising u at one node lowers F there and raises it at the other nodes.
    let mut bumped = s.u.clone();
    let k = bumped.lattice.local([10, 0]).unwrap();
    bumped.values[k] += 1e-3;
    let rb = residual_field(&p, &bumped).unwrap();
    for i in 0..rb.values.len() {
        let x = rb.lattice.point(i)[0];
        if x.abs() >= 1.0 {
            continue;
        }
        if i == k {
            assert!(rb.values[i] < -1e-6);
        } else {
            assert!(rb.values[i] >= r.values[i] - 1e-15);
        }
    }
    // Quadratic under a constant linear operator against its closed form.
    let c = constant_env(1, 1.5, 0.0);
    let pc = plain(&c, Domain::unit_ball(1, &[0.0]), 0.0, 1.0 / 64.0, 1.0);
    let quad = pc.quad.clone();
    let phi = TestFunction::quadratic(1, &[0.0], Sym::scalar(2.0));
    let g = GridFunction::from_fn(Lattice::covering(&pc.domain, 1, pc.h()), None, Exterior::Constant(0.0), |x| phi.value(x));
    let mut pq = pc.clone();
    pq.exterior = Exterior::Function { f: Arc::new(move |x: &[f64]| phi.value(x)), far: 0.0 };
    let rq = residual_field(&pq, &g).unwrap();
    let expect = 1.5 * moment(&phi, &[0.0], &quad).unwrap().a[0];
    let at0 = rq.node_value([0, 0]);
    assert!((at0 - expect).abs() <= 1e-10 * expect.abs());
    // The moment of the capped quadratic matches ∫ δφ K dy by adaptive quadrature.
    let oracle = 2.0 * simpson(&|y: f64| if y == 0.0 { 2.0 } else { (phi.value(&[y]) + phi.value(&[-y])) / (y * y) }, 0.0, 8.0, 1e-11);
    assert!((moment(&phi, &[0.0], &quad).unwrap().a[0] - oracle).abs() <= 2e-2 * oracle, "{oracle}");
}

#[test]
fn configuration_errors() {
    let env = constant_env(1, 1.0, 0.0);
    let p = plain(&env, Domain::unit_ball(1, &[0.0]), -1.0, 1.0 / 16.0, 0.125);
    assert!(matches!(solve_dirichlet(&p, &settings()), Err(Error::Config(_))));
    let ok = plain(&env, Domain::unit_ball(1, &[0.0]), -1.0, 1.0 / 64.0, 1.0);
    assert!(matches!(solve_dirichlet(&ok, &SolverSettings { damping: 0.0, ..settings() }), Err(Error::Config(_))));
    let far = ok.with_domain(Domain::HalfOpenBox { lo: [-10.0, 0.0], hi: [10.0, 0.0] });
    assert!(matches!(solve_dirichlet(&far, &settings()), Err(Error::Config(_))));
    match solve_dirichlet(&ok, &SolverSettings { max_iter: 3, ..settings() }) {
        Err(Error::NonConvergence { iterations, history, .. }) => {
            assert_eq!(iterations, 3);
            assert_eq!(history.len(), 3);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn obstacle_trivial_regimes() {
    let env = constant_env(1, 1.0, 0.0);
    let dom = Domain::unit_cube(1, &[0.0]);
    let p = plain(&env, dom, 0.5, 1.0 / 64.0, 1.0);
    let s = solve_obstacle(&p, &settings()).unwrap();
    assert!(s.u.values.iter().all(|&v| v == 0.0));
    assert_eq!(s.contact_fraction, 1.0);

    let renv = sample_environment(&EnvironmentSpec::checkerboard(1), 8).unwrap();
    let p = frozen(&renv, dom, 0.0, 1.0 / 128.0, 1.0 / 16.0);
    let l0 = barrier_threshold(&p).unwrap();
    let low = p.with_rhs(Rhs::Constant(l0 - 1.0));
    let s = solve_obstacle(&low, &settings()).unwrap();
    assert_eq!(s.contact_fraction, 0.0);
    let bar = Barrier::plus(&dom, 1);
    for i in 0..s.u.lattice.len() {
        let x = s.u.lattice.point(i);
        assert!(s.u.values[i] >= bar.value(&x[..1]) - 1e-8);
    }
}

#[test]
fn obstacle_dominates_dirichlet_and_solves_the_inequality() {
    let env = sample_environment(&EnvironmentSpec::checkerboard(1), 15).unwrap();
    let dom = Domain::unit_cube(1, &[0.0]);
    let h = 1.0 / 128.0;
    for l in [8.0, 9.5, 11.0] {
        let p = frozen(&env, dom, l, h, 1.0 / 16.0);
        let st = settings();
        let ob = solve_obstacle(&p, &st).unwrap();
        let w = solve_dirichlet(&p, &st).unwrap();
        for (a, b) in ob.u.values.iter().zip(&w.u.values) {
            assert!(*a >= *b - 1e-8);
        }
        let vals = operator_values(&p, &ob.u).unwrap();
        let zero = operator_values(&p, &GridFunction::constant(ob.u.lattice, 0.0)).unwrap();
        for (k, ((m, f), (_, f0))) in vals.iter().zip(&zero).enumerate() {
            let u = ob.u.node_value(*m);
            let vi = (f - l).max(-u);
            assert!(vi.abs() <= st.tol * 1.0001, "VI residual {vi} at {m:?}");
            if ob.contact[k] {
                assert_eq!(u, 0.0);
                assert!(*f >= *f0 - 1e-12);
            }
        }
    }
}

#[test]
fn barrier_check_thresholds() {
    let env = sample_environment(&EnvironmentSpec::checkerboard(1), 2).unwrap();
    let p = frozen(&env, Domain::unit_cube(1, &[0.0]), 0.0, 1.0 / 64.0, 0.25);
    assert!(barrier_check(&p, -1e6).unwrap());
    assert!(dual_barrier_check(&p, 1e6).unwrap());
    let l0 = barrier_threshold(&p).unwrap();
    assert!(barrier_check(&p, l0).unwrap());
    assert!(!barrier_check(&p, l0 + 0.1).unwrap());
    // Direct evaluation of F(P⁺) at the nodes.
    let bar = Barrier::plus(&p.domain, 1);
    let direct = free_nodes(&p)
        .unwrap()
        .iter()
        .map(|m| operator_on_profile(&p, &bar, &[m[0] as f64 * p.h()]).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(direct, l0);
}

#[test]
fn obstacle_monotonicity_in_rhs_and_domain() {
    let env = sample_environment(&EnvironmentSpec::checkerboard(1), 23).unwrap();
    let h = 1.0 / 128.0;
    let big = Domain::HalfOpenBox { lo: [-1.0, 0.0], hi: [1.0, 0.0] };
    let small = Domain::HalfOpenBox { lo: [-0.5, 0.0], hi: [0.75, 0.0] };
    let eps = 1.0 / 16.0;
    let st = settings();
    let a = solve_obstacle(&frozen(&env, big, 9.0, h, eps), &st).unwrap();
    let b = solve_obstacle(&frozen(&env, big, 10.0, h, eps), &st).unwrap();
    for (x, y) in a.u.values.iter().zip(&b.u.values) {
        assert!(*x >= *y - 1e-8);
    }
    assert!(a.contact_count <= b.contact_count);
    let s = solve_obstacle(&frozen(&env, small, 9.0, h, eps), &st).unwrap();
    for i in 0..s.u.lattice.len() {
        let m = s.u.lattice.global(i);
        assert!(s.u.values[i] <= a.u.node_value(m) + 1e-8);
    }
}

#[test]
fn contact_counts_are_subadditive_over_partitions() {
    let h = 1.0 / 128.0;
    let eps = 1.0 / 16.0;
    let st = settings();
    for seed in [1, 2, 3] {
        let env = sample_environment(&EnvironmentSpec::checkerboard(1), seed).unwrap();
        for l in [9.0, 9.6, 10.4] {
            let whole = Domain::HalfOpenBox { lo: [-1.0, 0.0], hi: [1.0, 0.0] };
            let total = solve_obstacle(&frozen(&env, whole, l, h, eps), &st).unwrap();
            let mut parts = 0;
            let mut nodes = 0;
            for (lo, hi) in [(-1.0, -0.5), (-0.5, 0.25), (0.25, 1.0)] {
                let d = Domain::HalfOpenBox { lo: [lo, 0.0], hi: [hi, 0.0] };
                let s = solve_obstacle(&frozen(&env, d, l, h, eps), &st).unwrap();
                parts += s.contact_count;
                nodes += s.contact.len();
            }
            assert_eq!(nodes, total.contact.len());
            assert!(total.contact_count <= parts, "{} > {parts}", total.contact_count);
        }
    }
}

#[test]
fn obstacle_translation_covariance() {
    let env = sample_environment(&EnvironmentSpec::checkerboard(1), 5).unwrap();
    let h = 1.0 / 128.0;
    let eps = 1.0 / 16.0;
    let z = 0.375;
    let dom = Domain::HalfOpenBox { lo: [-1.0, 0.0], hi: [1.0, 0.0] };
    let moved = translate(&env, &[z]);
    let st = settings();
    let a = solve_obstacle(&frozen(&moved, dom, 9.8, h, eps), &st).unwrap();
    let shifted = dom.translated(&[eps * z], 1);
    let b = solve_obstacle(&frozen(&env, shifted, 9.8, h, eps), &st).unwrap();
    let step = (eps * z / h).round() as i64;
    assert_eq!(a.contact_count, b.contact_count);
    for i in 0..a.u.lattice.len() {
        let m = a.u.lattice.global(i);
        assert!((a.u.values[i] - b.u.node_value([m[0] + step, 0])).abs() <= 1e-7);
    }
}

#[test]
fn extremal_cs_dominates_a_in_one_dimension() {
    let field = constant_env(1, 1.0, 0.0);
    let quad = cached_quadrature(1, 1.0, 1.0 / 64.0, 16.0).unwrap();
    let g: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(|x: &[f64]| if x[0].abs() < 0.3 { -1.0 } else { 0.5 });
    let mut out = Vec::new();
    for class in [KernelClass::A, KernelClass::Cs] {
        let p = DirichletProblem::new(
            &field,
            OperatorKind::Extremal { sign: Sign::Plus, class, lambda: 1.0, lam_big: 2.0 },
            Domain::unit_ball(1, &[0.0]),
            Rhs::Function(g.clone()),
            Exterior::Constant(0.0),
            1.0,
            quad.clone(),
        );
        out.push(solve_dirichlet(&p, &settings()).unwrap());
    }
    // The pointwise class contains the A class, so its maximal solution is larger.
    let d = out[0].u.values.iter().zip(&out[1].u.values).map(|(a, c)| c - a).fold(f64::NEG_INFINITY, f64::max);
    let e = out[0].u.values.iter().zip(&out[1].u.values).map(|(a, c)| c - a).fold(f64::INFINITY, f64::min);
    assert!(e >= -1e-8, "{e}");
    assert!(d > 1e-4, "{d}");
}

#[test]
fn two_dimensional_solve_is_symmetric() {
    let env = constant_env(2, 1.0, 0.0);
    let quad = cached_quadrature(2, 1.0, 1.0 / 16.0, 2.0).unwrap();
    let p = DirichletProblem::new(&env, OperatorKind::Plain, Domain::unit_ball(2, &[0.0, 0.0]), Rhs::Constant(-1.0), Exterior::Constant(0.0), 1.0, quad);
    let s = solve_dirichlet(&p, &settings()).unwrap();
    let c = s.u.node_value([0, 0]);
    assert!(c > 0.0);
    for m in [[3, 5], [6, -2], [-4, -4]] {
        let v = s.u.node_value(m);
        for w in [[m[1], m[0]], [-m[0], m[1]], [m[0], -m[1]]] {
            assert!((s.u.node_value(w) - v).abs() <= 1e-8);
        }
        assert!(v < c);
    }
}
