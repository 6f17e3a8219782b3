mod common;

use common::*;
use nonlocal_homog::env::*;
use nonlocal_homog::homog::*;
use nonlocal_homog::kernels::{cached_quadrature, KernelClass};
use nonlocal_homog::nonlocal::*;
use nonlocal_homog::solve::*;
use nonlocal_homog::sym::Sym;
use nonlocal_homog::Error;

const H: f64 = 1.0 / 64.0;

fn num() -> Numerics {
    Numerics::new(1.0, H)
}

fn quad_phi(p: f64) -> TestFunction {
    TestFunction::quadratic(1, &[0.0], Sym::scalar(p))
}

/// Trace of the moment of `φ` at `x` on the grid used for `Q₁(x)`.
fn moment_trace(phi: &TestFunction, x: f64) -> f64 {
    let d = Domain::unit_cube(1, &[x]);
    let q = num().quadrature(&d, 1, 0.25).unwrap();
    moment(phi, &[x], &q).unwrap().trace()
}

fn effective_cfg(seeds: Vec<u64>) -> EffectiveConfig {
    EffectiveConfig { numerics: num(), eps: vec![0.25, 0.125], seeds, theta: None, bisect_tol: 5e-3, max_steps: 80 }
}

fn constant_spec(a: f64, f: f64) -> EnvironmentSpec {
    EnvironmentSpec::constant(1, KernelClass::A, 1.0, 2.0, a, f)
}

#[test]
fn contact_statistic_of_constant_medium_switches_at_the_frozen_value() {
    let (a, f) = (1.5, 0.25);
    let env = constant_env(1, a, f);
    let phi = quad_phi(1.0);
    let star = f + a * moment_trace(&phi, 0.0);
    let below = contact_statistic(&phi, &[0.0], star - 0.05, 0.25, &env, &num()).unwrap();
    let above = contact_statistic(&phi, &[0.0], star + 0.05, 0.25, &env, &num()).unwrap();
    assert_eq!(below.count, 0);
    assert_eq!(above.fraction, 1.0);
    assert_eq!(above.count, above.cells);
    assert_eq!(above.record.level, star + 0.05);
}

#[test]
fn contact_statistic_is_monotone_in_the_level() {
    let env = sample_environment(&EnvironmentSpec::checkerboard(1), 3).unwrap();
    let phi = quad_phi(1.0);
    let mut last = -1.0;
    for l in [6.0, 8.0, 9.0, 9.5, 10.0, 11.0, 13.0] {
        let c = contact_statistic(&phi, &[0.0], l, 0.125, &env, &num()).unwrap();
        assert!((0.0..=1.0).contains(&c.fraction));
        assert!(c.fraction >= last, "m({l}) = {} < {last}", c.fraction);
        last = c.fraction;
    }
    assert_eq!(last, 1.0);
}

#[test]
fn mbar_spread_vanishes_for_deterministic_media() {
    let spec = constant_spec(1.0, 0.0);
    assert!(spec.is_deterministic());
    let envs = sample_all(&spec, &[1, 2, 3]).unwrap();
    let phi = quad_phi(1.0);
    let l = moment_trace(&phi, 0.0) + 0.01;
    let m = estimate_mbar(&phi, &[0.0], l, &[0.25, 0.125], &envs, &num()).unwrap();
    assert!(m.spreads.iter().all(|&s| s == 0.0));
    assert_eq!(m.std_error, 0.0);
    assert_eq!(m.estimate, 1.0);
    assert_eq!(m.records.len(), 6);
}

#[test]
fn mbar_is_nondecreasing_in_the_level() {
    let spec = EnvironmentSpec::checkerboard(1);
    let envs = sample_all(&spec, &[1, 2, 3, 4]).unwrap();
    let phi = quad_phi(1.0);
    let mut last = -1.0;
    for l in [8.0, 9.0, 9.5, 10.0, 10.5] {
        let m = estimate_mbar(&phi, &[0.0], l, &[0.25, 0.125], &envs, &num()).unwrap();
        assert!(m.estimate >= last);
        last = m.estimate;
    }
}

#[test]
fn mbar_rejects_bad_inputs() {
    let envs = sample_all(&EnvironmentSpec::checkerboard(1), &[1, 2]).unwrap();
    let phi = quad_phi(1.0);
    for eps in [vec![0.25], vec![0.125, 0.25], vec![0.25, -0.125]] {
        assert!(matches!(estimate_mbar(&phi, &[0.0], 0.0, &eps, &envs, &num()), Err(Error::Config(_))));
    }
    assert!(matches!(estimate_mbar(&phi, &[0.0], 0.0, &[0.25, 0.125], &envs[..1], &num()), Err(Error::Config(_))));
}

#[test]
fn effective_value_of_constant_medium() {
    for (a, f, p) in [(1.0, 0.0, 1.0), (1.5, -0.5, 2.0), (2.0, 0.75, -1.0)] {
        let phi = quad_phi(p);
        let s = effective_value(&phi, &[0.0], &effective_cfg(vec![1, 2]), &constant_spec(a, f)).unwrap();
        let expect = f + a * moment_trace(&phi, 0.0);
        assert!((s.estimate - expect).abs() <= 2.0 * s.bisect_tol, "{} vs {expect}", s.estimate);
        assert!(s.bracket[1] - s.bracket[0] <= s.bisect_tol);
        assert!(s.initial_bracket[0] <= s.bracket[0] && s.bracket[1] <= s.initial_bracket[1]);
        assert!(s.steps.iter().all(|st| st.spreads.iter().all(|&v| v == 0.0)));
    }
}

#[test]
fn effective_value_follows_a_forcing_shift() {
    let spec = EnvironmentSpec::checkerboard(1);
    let phi = quad_phi(1.0);
    let cfg = effective_cfg(vec![5, 6]);
    let base = effective_value(&phi, &[0.0], &cfg, &spec).unwrap();
    let moved = effective_value(&phi, &[0.0], &cfg, &spec.with_forcing_shift(0.75)).unwrap();
    assert!((moved.estimate - base.estimate - 0.75).abs() <= 2.0 * cfg.bisect_tol);
}

#[test]
fn effective_value_reduction_to_the_origin() {
    let spec = EnvironmentSpec::checkerboard(1);
    let cfg = effective_cfg(vec![5, 6]);
    let phi = TestFunction::quadratic(1, &[0.25], Sym::scalar(1.0));
    let at = effective_value(&phi, &[0.5], &cfg, &spec).unwrap();
    let reduced = effective_value(&phi.shifted(&[0.5]), &[0.0], &cfg, &spec).unwrap();
    assert_eq!(at.estimate, reduced.estimate);
    assert_eq!(at.x0, [0.5, 0.0]);
}

#[test]
fn effective_value_sandwich_and_ellipticity() {
    let spec = EnvironmentSpec::checkerboard(1);
    let cfg = effective_cfg(vec![1, 2, 3]);
    let cf = spec.forcing_bound();
    let mut prev: Option<f64> = None;
    for p in [-1.0, 0.5, 2.0] {
        let phi = quad_phi(p);
        let s = effective_value(&phi, &[0.0], &cfg, &spec).unwrap();
        let c = moment_trace(&phi, 0.0);
        let lo = pucci_scalar(c, Sign::Minus, spec.lambda, spec.lam_big) - cf;
        let hi = pucci_scalar(c, Sign::Plus, spec.lambda, spec.lam_big) + cf;
        assert!(lo - 2.0 * cfg.bisect_tol <= s.estimate && s.estimate <= hi + 2.0 * cfg.bisect_tol, "{lo} {} {hi}", s.estimate);
        if let Some(q) = prev {
            assert!(s.estimate >= q - 2.0 * cfg.bisect_tol);
        }
        prev = Some(s.estimate);
    }
}

#[test]
fn effective_value_rejects_bad_configs() {
    let spec = EnvironmentSpec::checkerboard(1);
    let phi = quad_phi(1.0);
    let mut cfg = effective_cfg(vec![1]);
    assert!(matches!(effective_value(&phi, &[0.0], &cfg, &spec), Err(Error::Config(_))));
    cfg.seeds = vec![1, 2];
    cfg.bisect_tol = 0.0;
    assert!(matches!(effective_value(&phi, &[0.0], &cfg, &spec), Err(Error::Config(_))));
    cfg.bisect_tol = 1e-3;
    cfg.max_steps = 2;
    assert!(matches!(effective_value(&phi, &[0.0], &cfg, &spec), Err(Error::Experiment(_))));
}

#[test]
fn corrector_below_the_barrier_dominates_it() {
    let env = sample_environment(&EnvironmentSpec::checkerboard(1), 9).unwrap();
    let phi = quad_phi(1.0);
    let dom = Domain::unit_ball(1, &[0.0]);
    let eps = [0.25, 0.125, 0.0625];
    let mut l0 = f64::INFINITY;
    for &e in &eps {
        let q = num().quadrature(&dom, 1, e).unwrap();
        let p = DirichletProblem::new(&env, OperatorKind::Frozen { phi, x0: [0.0; 2] }, dom, Rhs::Constant(0.0), Exterior::Constant(0.0), e, q);
        l0 = l0.min(barrier_threshold(&p).unwrap());
    }
    let prof = corrector_decay_profile(&phi, &[0.0], l0, &eps, &env, &num()).unwrap();
    let peak = Barrier::plus(&dom, 1).value(&[0.0]);
    for k in 0..eps.len() {
        assert!(prof.min[k] >= -1e-8);
        assert!(prof.max[k] >= peak - 1e-8);
        assert_eq!(prof.sup_norms[k], prof.max[k]);
    }
    assert_eq!(prof.records.len(), 3);
    assert!(matches!(corrector_decay_profile(&phi, &[0.0], 0.0, &[], &env, &num()), Err(Error::Config(_))));
}

fn extremal(class: KernelClass, conjecture: bool) -> ExtremalSetup {
    ExtremalSetup { dimension: 1, class, lambda: 1.0, lam_big: 2.0, numerics: num(), conjecture }
}

#[test]
fn cmi_rows_are_monotone_and_vanish_without_forcing() {
    let rows = comparison_measurable_experiment(&extremal(KernelClass::A, false), &[64, 16, 4, 1, 0], 7).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].sup_v <= w[0].sup_v + 1e-12);
    }
    assert_eq!(rows[4].sup_v, 0.0);
    assert_eq!(rows[4].measure, 0.0);
    assert!((rows[0].measure - 1.0).abs() < 1e-12);
    assert!(matches!(
        comparison_measurable_experiment(&extremal(KernelClass::A, false), &[100_000], 7),
        Err(Error::Config(_))
    ));
}

#[test]
fn cs_class_needs_the_conjecture_flag() {
    assert!(matches!(comparison_measurable_experiment(&extremal(KernelClass::Cs, false), &[4], 1), Err(Error::Config(_))));
    let rows = comparison_measurable_experiment(&extremal(KernelClass::Cs, true), &[16, 4], 1).unwrap();
    assert!(rows[1].sup_v <= rows[0].sup_v);
    let abp = AbpConfig { setup: extremal(KernelClass::Cs, true), support_radii: vec![0.5, 0.25], amplitude: 1.0 };
    assert!(abp_scaling_experiment(&abp).is_err());
}

#[test]
fn abp_basic_scaling() {
    let cfg = AbpConfig { setup: extremal(KernelClass::A, false), support_radii: vec![1.0, 0.5, 0.25, 0.125], amplitude: 1.0 };
    let r = abp_scaling_experiment(&cfg).unwrap();
    assert_eq!(r.exterior_sup, 0.0);
    assert!((r.amplitude_ratio - 2.0).abs() < 1e-6, "{}", r.amplitude_ratio);
    assert!(r.fitted_slope > 0.0);
    for w in r.rows.windows(2) {
        assert!(w[1].sup_v < w[0].sup_v);
    }
    let one = AbpConfig { support_radii: vec![0.5], ..cfg };
    assert!(matches!(abp_scaling_experiment(&one), Err(Error::Config(_))));
}

#[test]
fn fit_slope_recovers_a_power_law() {
    let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|&x| (x.ln(), (3.0 * x.powf(0.7)).ln())).collect();
    assert!((fit_slope(&pts) - 0.7).abs() < 1e-12);
}

fn converge_cfg(seeds: Vec<u64>) -> ConvergeConfig {
    ConvergeConfig {
        numerics: num(),
        domain: Domain::unit_ball(1, &[0.0]),
        exterior: ExteriorSpec::Bump { amplitude: 1.0, center: [1.25, 0.0], radius: 0.5 },
        eps: vec![0.25, 0.125, 0.0625],
        seeds,
        translation: [0.5, 0.5],
    }
}

#[test]
fn convergence_harness_is_exact_for_constant_media() {
    let spec = constant_spec(1.5, 0.0);
    let cfg = converge_cfg(vec![1, 2, 3, 4]);
    let mut r = convergence_experiment(&cfg, &spec).unwrap();
    assert!(r.seed_discrepancy.iter().all(|&d| d == 0.0));
    assert!(r.eps_cauchy.iter().all(|&d| d == 0.0));
    assert!(r.sup_norms[0][0] > 0.0);
    assert_eq!(r.records.len(), 12);
    translation_diagnostics(&cfg, &spec, &mut r).unwrap();
    assert!(r.translation_discrepancy.iter().all(|&d| d == 0.0));
    assert!(r.translation_covariance_error <= 1e-8);
}

#[test]
fn convergence_harness_translation_covariance_on_random_media() {
    let spec = EnvironmentSpec::checkerboard(1);
    let cfg = converge_cfg(vec![1, 2]);
    let mut r = convergence_experiment(&cfg, &spec).unwrap();
    assert!(r.seed_discrepancy.iter().all(|&d| d > 0.0));
    translation_diagnostics(&cfg, &spec, &mut r).unwrap();
    assert!(r.translation_covariance_error <= 1e-7, "{}", r.translation_covariance_error);
    let mut bad = cfg.clone();
    bad.numerics.points_per_cell = Some(4.0);
    assert!(matches!(convergence_experiment(&bad, &spec), Err(Error::Config(_))));
    bad = cfg.clone();
    bad.seeds = vec![1];
    assert!(matches!(convergence_experiment(&bad, &spec), Err(Error::Config(_))));
}

/// Independent periodic field: `values[⌊x⌋ mod len]`.
struct PeriodicOracle {
    a: Vec<f64>,
    f: Vec<f64>,
}

impl CoefficientField for PeriodicOracle {
    fn dimension(&self) -> usize {
        1
    }
    fn n_alpha(&self) -> usize {
        1
    }
    fn n_beta(&self) -> usize {
        1
    }
    fn coefficient(&self, _: usize, _: usize, x: &[f64]) -> (Sym, f64) {
        let k = x[0].floor() as i64;
        let i = k.rem_euclid(self.a.len() as i64) as usize;
        (Sym::scalar(self.a[i]), self.f[i % self.f.len()])
    }
}

#[test]
fn periodic_environment_matches_an_independent_field() {
    let a = vec![1.0, 2.0, 1.25];
    let f = vec![0.5, -0.5, 0.0];
    let spec = EnvironmentSpec {
        pairs: vec![PairLaw { coefficient: CoefficientLaw::Periodic { values: a.clone() }, forcing: ScalarLaw::Periodic { values: f.clone() } }],
        interpolation: Interpolation::PiecewiseConstant,
        shift: ShiftMode::Zero,
        ..constant_spec(1.0, 0.0)
    };
    assert!(spec.is_deterministic());
    let env = sample_environment(&spec, 11).unwrap();
    let oracle = PeriodicOracle { a, f };
    let cfg = converge_cfg(vec![0, 1]);
    let mine = convergence_with_fields(&cfg, &[&env, &env], 1).unwrap();
    let theirs = convergence_with_fields(&cfg, &[&oracle, &oracle], 1).unwrap();
    assert_eq!(mine.sup_norms, theirs.sup_norms);
    assert_eq!(mine.eps_cauchy, theirs.eps_cauchy);
    assert!(mine.seed_discrepancy.iter().all(|&d| d == 0.0));
}

#[test]
fn periodic_effective_value_matches_the_harmonic_formula() {
    // One β and scalar coefficients: F̄ = (c + ⟨f/a⟩) / ⟨1/a⟩.
    let a = [1.0, 2.0];
    let f = [0.5, -0.5];
    let spec = EnvironmentSpec {
        pairs: vec![PairLaw { coefficient: CoefficientLaw::Periodic { values: a.to_vec() }, forcing: ScalarLaw::Periodic { values: f.to_vec() } }],
        interpolation: Interpolation::PiecewiseConstant,
        shift: ShiftMode::Zero,
        ..constant_spec(1.0, 0.0)
    };
    let phi = quad_phi(1.0);
    let cfg = EffectiveConfig { eps: vec![0.125, 0.0625], ..effective_cfg(vec![1, 2]) };
    let s = effective_value(&phi, &[0.0], &cfg, &spec).unwrap();
    let c = moment_trace(&phi, 0.0);
    let mean_inv = 0.5 * (1.0 / a[0] + 1.0 / a[1]);
    let mean_fa = 0.5 * (f[0] / a[0] + f[1] / a[1]);
    let expect = (c + mean_fa) / mean_inv;
    assert!((s.estimate - expect).abs() <= 0.05 * expect.abs(), "{} vs {expect}", s.estimate);
}

#[test]
fn quadrature_cache_returns_shared_tables() {
    let a = cached_quadrature(1, 1.0, H, 16.0).unwrap();
    let b = cached_quadrature(1, 1.0, H, 16.0).unwrap();
    assert!(std::sync::Arc::ptr_eq(&a, &b));
}
