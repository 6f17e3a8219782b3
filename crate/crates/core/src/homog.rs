//! Homogenization pipeline: contact statistics, their limits, effective
//! operator extraction, corrector decay, ABP and measurable-ingredient
//! experiments and the convergence harness.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{sample_environment, translate, CoefficientField, Environment, EnvironmentSpec};
use crate::error::{config, Error, Result};
use crate::kernels::{cached_quadrature, KernelClass, QuadratureTable};
use crate::nonlocal::{pad, Domain, Exterior, GridFunction, Sign, TestFunction};
use crate::solve::{
    barrier_threshold, operator_values, solve_dirichlet, solve_obstacle, DirichletProblem, OperatorKind, Rhs,
    Solution, SolverSettings,
};

/// Discretization shared by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub sigma: f64,
    pub h: f64,
    /// Defaults to eight times the domain diameter.
    #[serde(default)]
    pub r_out: Option<f64>,
    /// When set, each solve at scale ε uses `h = ε / points_per_cell`
    /// instead of `h`, so every scale sees the same discrete cell problem.
    #[serde(default)]
    pub points_per_cell: Option<f64>,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl Numerics {
    pub fn new(sigma: f64, h: f64) -> Self {
        Numerics { sigma, h, r_out: None, points_per_cell: None, solver: SolverSettings::default() }
    }

    pub fn r_out_for(&self, domain: &Domain, n: usize) -> f64 {
        self.r_out.unwrap_or_else(|| 8.0 * diameter(domain, n))
    }

    /// Grid spacing used at scale `eps`.
    pub fn h_for(&self, eps: f64) -> f64 {
        self.points_per_cell.map_or(self.h, |k| eps / k)
    }

    pub fn quadrature(&self, domain: &Domain, n: usize, eps: f64) -> Result<Arc<QuadratureTable>> {
        cached_quadrature(n, self.sigma, self.h_for(eps), self.r_out_for(domain, n))
    }
}

pub fn diameter(domain: &Domain, n: usize) -> f64 {
    match domain {
        Domain::Ball { radius, .. } => 2.0 * radius,
        _ => {
            let (lo, hi) = domain.bounds();
            (0..n).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt()
        }
    }
}

/// One row of per-solve output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub experiment_id: String,
    pub eps: f64,
    pub seed: u64,
    pub level: f64,
    pub contact_fraction: Option<f64>,
    pub sup_norm: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wall_ms: f64,
}

impl SolveRecord {
    pub fn from_solution(id: &str, eps: f64, seed: u64, level: f64, s: &Solution) -> Self {
        SolveRecord {
            experiment_id: id.to_string(),
            eps,
            seed,
            level,
            contact_fraction: None,
            sup_norm: s.u.sup_norm(),
            iterations: s.iterations,
            residual: s.residual,
            wall_ms: s.wall_ms,
        }
    }
}

/// Contact fraction of one obstacle solve.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactSample {
    pub fraction: f64,
    pub count: usize,
    pub cells: usize,
    pub record: SolveRecord,
}

/// `m^{ε,l}(ω)`: contact fraction of the obstacle problem for `F_{φ,x₀}` with
/// right-hand side `l` on `Q₁(x₀)`, coefficients read at `x/ε`.
pub fn contact_statistic(
    phi: &TestFunction,
    x0: &[f64],
    l: f64,
    eps: f64,
    env: &dyn CoefficientField,
    num: &Numerics,
) -> Result<ContactSample> {
    let n = env.dimension();
    let domain = Domain::unit_cube(n, x0);
    let quad = num.quadrature(&domain, n, eps)?;
    let p = DirichletProblem::new(
        env,
        OperatorKind::Frozen { phi: *phi, x0: pad(x0, n) },
        domain,
        Rhs::Constant(l),
        Exterior::Constant(0.0),
        eps,
        quad,
    );
    let s = solve_obstacle(&p, &num.solver)?;
    Ok(ContactSample {
        fraction: s.contact_fraction,
        count: s.contact_count,
        cells: s.contact.len(),
        record: SolveRecord {
            experiment_id: String::new(),
            eps,
            seed: 0,
            level: l,
            contact_fraction: Some(s.contact_fraction),
            sup_norm: s.u.sup_norm(),
            iterations: s.iterations,
            residual: s.residual,
            wall_ms: s.wall_ms,
        },
    })
}

/// Monte Carlo estimate of `m̄^l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MbarEstimate {
    pub phi: TestFunction,
    pub x0: [f64; 2],
    pub level: f64,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `fractions[k][s]` at `eps[k]` and `seeds[s]`.
    pub fractions: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Sample standard deviation over seeds, per ε.
    pub spreads: Vec<f64>,
    /// Mean at the smallest ε.
    pub estimate: f64,
    pub std_error: f64,
    /// Interior cell count at the common grid.
    pub cells: usize,
    pub records: Vec<SolveRecord>,
}

fn check_eps_list(eps: &[f64], min_len: usize) -> Result<()> {
    if eps.len() < min_len {
        return config(format!("need at least {min_len} eps values, got {}", eps.len()));
    }
    if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return config("eps list must be positive and strictly decreasing");
    }
    Ok(())
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

/// Samples the environment for every seed.
pub fn sample_all(spec: &EnvironmentSpec, seeds: &[u64]) -> Result<Vec<Environment>> {
    seeds.iter().map(|&s| sample_environment(spec, s)).collect()
}

/// Averages `m^{ε,l}` over seeds for each ε and extrapolates with the smallest ε.
///
/// A generic centre is handled by the reduction `F̄(φ, x₀) = F̄(φ(· + x₀), 0)`,
/// so every solve runs on `Q₁(0)`.
pub fn estimate_mbar(
    phi: &TestFunction,
    x0: &[f64],
    l: f64,
    eps: &[f64],
    envs: &[Environment],
    num: &Numerics,
) -> Result<MbarEstimate> {
    check_eps_list(eps, 2)?;
    if envs.len() < 2 {
        return config("estimate_mbar needs at least two seeds");
    }
    let n = envs[0].dimension();
    let reduced = phi.shifted(x0);
    let zero = [0.0; 2];
    let items: Vec<(usize, usize)> = (0..eps.len()).flat_map(|k| (0..envs.len()).map(move |s| (k, s))).collect();
    let samples: Vec<ContactSample> = items
        .par_iter()
        .map(|&(k, s)| {
            let mut c = contact_statistic(&reduced, &zero[..n], l, eps[k], &envs[s], num)?;
            c.record.seed = envs[s].seed;
            c.record.experiment_id = "mbar".into();
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let ns = envs.len();
    let mut fractions = vec![vec![0.0; ns]; eps.len()];
    for (&(k, s), c) in items.iter().zip(&samples) {
        fractions[k][s] = c.fraction;
    }
    let stats: Vec<(f64, f64)> = fractions.iter().map(|f| mean_sd(f)).collect();
    let last = stats[eps.len() - 1];
    Ok(MbarEstimate {
        phi: *phi,
        x0: pad(x0, n),
        level: l,
        eps: eps.to_vec(),
        seeds: envs.iter().map(|e| e.seed).collect(),
        fractions,
        means: stats.iter().map(|s| s.0).collect(),
        spreads: stats.iter().map(|s| s.1).collect(),
        estimate: last.0,
        std_error: last.1 / (ns as f64).sqrt(),
        cells: samples[0].cells,
        records: samples.into_iter().map(|c| c.record).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveConfig {
    pub numerics: Numerics,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Zero tolerance for `m̄`. Defaults to two interior cells.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "default_bisect_tol")]
    pub bisect_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_bisect_tol() -> f64 {
    1e-3
}

fn default_max_steps() -> usize {
    80
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub level: f64,
    pub mbar: f64,
    pub std_error: f64,
    pub spreads: Vec<f64>,
    pub zero_regime: bool,
}

/// One extraction of `F̄(φ, x₀)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSample {
    pub phi: TestFunction,
    pub x0: [f64; 2],
    /// Certified initial bracket.
    pub initial_bracket: [f64; 2],
    /// Final bracket `[l_lo, l_hi]`.
    pub bracket: [f64; 2],
    pub estimate: f64,
    pub theta: f64,
    pub bisect_tol: f64,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `min F(P⁺)` over seeds and ε.
    pub barrier_level: f64,
    pub steps: Vec<BisectionStep>,
    #[serde(skip)]
    pub records: Vec<SolveRecord>,
}

/// `F̄(φ, x₀) = sup{l : m̄^l = 0}` by bisection on `l`.
///
/// The lower end is certified by the barrier `P⁺` (and by `min F(0)`, below
/// which no node can touch the obstacle); the upper end by `max F(0)`, where
/// the obstacle itself is the solution. Both ends are then measured.
pub fn effective_value(phi: &TestFunction, x0: &[f64], cfg: &EffectiveConfig, spec: &EnvironmentSpec) -> Result<EffectiveSample> {
    check_eps_list(&cfg.eps, 2)?;
    if !(cfg.bisect_tol > 0.0) {
        return config("bisect_tol must be positive");
    }
    let envs = sample_all(spec, &cfg.seeds)?;
    if envs.len() < 2 {
        return config("effective_value needs at least two seeds");
    }
    let n = spec.dimension;
    let num = &cfg.numerics;
    let reduced = phi.shifted(x0);
    let domain = Domain::unit_cube(n, &[0.0, 0.0]);
    let op = OperatorKind::Frozen { phi: reduced, x0: [0.0; 2] };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut barrier = f64::INFINITY;
    let mut cells = 0;
    for env in &envs {
        for &e in &cfg.eps {
            let quad = num.quadrature(&domain, n, e)?;
            let p = DirichletProblem::new(env, op.clone(), domain, Rhs::Constant(0.0), Exterior::Constant(0.0), e, quad);
            let l0 = barrier_threshold(&p)?;
            let zero = GridFunction::constant(crate::nonlocal::Lattice::covering(&domain, n, num.h_for(e)), 0.0);
            let f0 = operator_values(&p, &zero)?;
            cells = f0.len();
            let fmin = f0.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            let fmax = f0.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
            barrier = barrier.min(l0);
            lo = lo.min(l0.min(fmin) - cfg.bisect_tol);
            hi = hi.max(fmax);
        }
    }
    let theta = cfg.theta.unwrap_or(2.0 / cells as f64);
    let mut records = Vec::new();
    let mut steps = Vec::new();
    let mut measure = |l: f64, steps: &mut Vec<BisectionStep>| -> Result<f64> {
        let m = estimate_mbar(&reduced, &[0.0, 0.0][..n], l, &cfg.eps, &envs, num)?;
        records.extend(m.records.iter().cloned().map(|mut r| {
            r.experiment_id = "effective".into();
            r
        }));
        steps.push(BisectionStep {
            level: l,
            mbar: m.estimate,
            std_error: m.std_error,
            spreads: m.spreads.clone(),
            zero_regime: m.estimate <= theta,
        });
        Ok(m.estimate)
    };
    let m_lo = measure(lo, &mut steps)?;
    let m_hi = measure(hi, &mut steps)?;
    if m_lo > theta || m_hi <= theta {
        return Err(Error::Experiment(format!(
            "bracket certification failed: m̄({lo:.6}) = {m_lo:.4}, m̄({hi:.6}) = {m_hi:.4}, theta = {theta:.4}"
        )));
    }
    let initial = [lo, hi];
    let mut count = 0;
    while hi - lo > cfg.bisect_tol {
        if count >= cfg.max_steps {
            return Err(Error::Experiment(format!("bisection did not reach tolerance in {} steps", cfg.max_steps)));
        }
        count += 1;
        let mid = 0.5 * (lo + hi);
        if measure(mid, &mut steps)? <= theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EffectiveSample {
        phi: *phi,
        x0: pad(x0, n),
        initial_bracket: initial,
        bracket: [lo, hi],
        estimate: 0.5 * (lo + hi),
        theta,
        bisect_tol: cfg.bisect_tol,
        eps: cfg.eps.clone(),
        seeds: cfg.seeds.clone(),
        barrier_level: barrier,
        steps,
        records,
    })
}

/// Corrector sizes along an ε sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorProfile {
    pub level: f64,
    pub eps: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub max: Vec<f64>,
    pub min: Vec<f64>,
    #[serde(skip)]
    pub records: Vec<SolveRecord>,
}

/// Solves `F_{φ,x₀}(w, x/ε) = l` on `B₁(x₀)`, `w = 0` outside, for each ε.
pub fn corrector_decay_profile(
    phi: &TestFunction,
    x0: &[f64],
    l: f64,
    eps: &[f64],
    env: &Environment,
    num: &Numerics,
) -> Result<CorrectorProfile> {
    if eps.is_empty() {
        return config("corrector profile needs at least one eps");
    }
    let n = env.dimension();
    let domain = Domain::unit_ball(n, x0);
    let sols: Vec<Solution> = eps
        .par_iter()
        .map(|&e| {
            let quad = num.quadrature(&domain, n, e)?;
            let p = DirichletProblem::new(
                env,
                OperatorKind::Frozen { phi: *phi, x0: pad(x0, n) },
                domain,
                Rhs::Constant(l),
                Exterior::Constant(0.0),
                e,
                quad,
            );
            solve_dirichlet(&p, &num.solver)
        })
        .collect::<Result<_>>()?;
    let mut out = CorrectorProfile { level: l, eps: eps.to_vec(), sup_norms: vec![], max: vec![], min: vec![], records: vec![] };
    for (s, &e) in sols.iter().zip(eps) {
        let vals: Vec<f64> = s.u.domain_values().collect();
        out.sup_norms.push(s.u.sup_norm());
        out.max.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        out.min.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
        out.records.push(SolveRecord::from_solution("corrector", e, env.seed, l, s));
    }
    Ok(out)
}

/// Settings for the extremal-operator experiments on `B₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtremalSetup {
    pub dimension: usize,
    pub class: KernelClass,
    pub lambda: f64,
    pub lam_big: f64,
    pub numerics: Numerics,
    /// Allows the CS class, whose comparison property is only conjectured.
    #[serde(default)]
    pub conjecture: bool,
}

impl ExtremalSetup {
    fn check(&self) -> Result<()> {
        if self.class == KernelClass::Cs && !self.conjecture {
            return config("the CS class is only allowed with the conjecture flag");
        }
        Ok(())
    }

    fn quadrature(&self, domain: &Domain) -> Result<Arc<QuadratureTable>> {
        let num = &self.numerics;
        cached_quadrature(self.dimension, num.sigma, num.h, num.r_out_for(domain, self.dimension))
    }

    fn domain(&self) -> Domain {
        Domain::unit_ball(self.dimension, &[0.0, 0.0])
    }

    /// Solves `M⁺(v) = −g` on `B₁` with `v = 0` outside.
    fn solve(&self, g: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>) -> Result<Solution> {
        self.solve_with(Sign::Plus, Rhs::Function(Arc::new(move |x| -g(x))))
    }

    /// Solves `M^±(v) = rhs` on `B₁` with `v = 0` outside.
    pub fn solve_with(&self, sign: Sign, rhs: Rhs) -> Result<Solution> {
        self.check()?;
        let domain = self.domain();
        let quad = self.quadrature(&domain)?;
        let field = NullField { n: self.dimension };
        let p = DirichletProblem::new(
            &field,
            OperatorKind::Extremal { sign, class: self.class, lambda: self.lambda, lam_big: self.lam_big },
            domain,
            rhs,
            Exterior::Constant(0.0),
            1.0,
            quad,
        );
        solve_dirichlet(&p, &self.numerics.solver)
    }

    fn free_nodes(&self) -> Result<Vec<[i64; 2]>> {
        let domain = self.domain();
        let quad = self.quadrature(&domain)?;
        let field = NullField { n: self.dimension };
        let p = DirichletProblem::new(
            &field,
            OperatorKind::Extremal { sign: Sign::Plus, class: self.class, lambda: self.lambda, lam_big: self.lam_big },
            domain,
            Rhs::Constant(0.0),
            Exterior::Constant(0.0),
            1.0,
            quad,
        );
        crate::solve::free_nodes(&p)
    }
}

/// Coefficient field for operators that ignore the environment.
struct NullField {
    n: usize,
}

impl CoefficientField for NullField {
    fn dimension(&self) -> usize {
        self.n
    }
    fn n_alpha(&self) -> usize {
        1
    }
    fn n_beta(&self) -> usize {
        1
    }
    fn coefficient(&self, _: usize, _: usize, _: &[f64]) -> (crate::sym::Sym, f64) {
        (crate::sym::Sym::identity(self.n), 0.0)
    }
}

fn node_indicator(nodes: HashSet<[i64; 2]>, h: f64, n: usize, amplitude: f64) -> Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> {
    Arc::new(move |x: &[f64]| {
        let m = [(x[0] / h).round() as i64, if n == 2 { (x[1] / h).round() as i64 } else { 0 }];
        if nodes.contains(&m) {
            amplitude
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmiRow {
    pub nodes: usize,
    pub measure: f64,
    pub sup_v: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wall_ms: f64,
}

/// `sup v` for `M⁺(v) = −g`, `g = 1` on a random node set of each size.
///
/// The sets are nested prefixes of one random ordering of the nodes of `B₁`,
/// so `g` decreases along the list and comparison makes `sup v` monotone.
pub fn comparison_measurable_experiment(setup: &ExtremalSetup, sizes: &[usize], seed: u64) -> Result<Vec<CmiRow>> {
    setup.check()?;
    let mut nodes = setup.free_nodes()?;
    let total = nodes.len();
    if let Some(&m) = sizes.iter().find(|&&m| m > total) {
        return config(format!("set size {m} exceeds the {total} nodes of the domain"));
    }
    // Fisher-Yates with the environment hash as the random source.
    let mut state = seed ^ 0xC0FF_EE00_D15E_A5E5;
    for i in (1..total).rev() {
        state = splitmix(state);
        let j = (state % (i as u64 + 1)) as usize;
        nodes.swap(i, j);
    }
    let h = setup.numerics.h;
    let n = setup.dimension;
    sizes
        .par_iter()
        .map(|&m| {
            let set: HashSet<[i64; 2]> = nodes[..m].iter().copied().collect();
            let s = setup.solve(node_indicator(set, h, n, 1.0))?;
            Ok(CmiRow {
                nodes: m,
                measure: m as f64 * h.powi(n as i32),
                sup_v: s.u.sup_norm(),
                iterations: s.iterations,
                residual: s.residual,
                wall_ms: s.wall_ms,
            })
        })
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbpConfig {
    pub setup: ExtremalSetup,
    /// Radii of the centred balls carrying the forcing, largest first.
    pub support_radii: Vec<f64>,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbpRow {
    pub radius: f64,
    pub measure: f64,
    pub sup_v: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbpReport {
    pub rows: Vec<AbpRow>,
    /// Least-squares slope of `log sup v` against `log |support|`.
    pub fitted_slope: f64,
    /// `sup v(2c) / sup v(c)` at the largest support.
    pub amplitude_ratio: f64,
    /// `sup v` with the forcing placed outside the domain.
    pub exterior_sup: f64,
}

/// Measure of the node set carrying the forcing: nodes times `h^n`.
fn support_nodes(free: &[[i64; 2]], h: f64, n: usize, radius: f64) -> HashSet<[i64; 2]> {
    free.iter()
        .copied()
        .filter(|m| {
            let r2: f64 = (0..n).map(|d| (m[d] as f64 * h).powi(2)).sum();
            r2 < radius * radius
        })
        .collect()
}

/// Checks the two scaling exponents of the ABP-type bound separately.
pub fn abp_scaling_experiment(cfg: &AbpConfig) -> Result<AbpReport> {
    let setup = &cfg.setup;
    if setup.class != KernelClass::A {
        return config("the ABP experiment requires the A class");
    }
    if cfg.support_radii.len() < 2 {
        return config("need at least two support radii");
    }
    let free = setup.free_nodes()?;
    let h = setup.numerics.h;
    let n = setup.dimension;
    let rows: Vec<AbpRow> = cfg
        .support_radii
        .par_iter()
        .map(|&r| {
            let set = support_nodes(&free, h, n, r);
            if set.is_empty() {
                return config(format!("support radius {r} holds no grid node"));
            }
            let m = set.len() as f64 * h.powi(n as i32);
            let s = setup.solve(node_indicator(set, h, n, cfg.amplitude))?;
            Ok(AbpRow { radius: r, measure: m, sup_v: s.u.sup_norm(), iterations: s.iterations, residual: s.residual, wall_ms: s.wall_ms })
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.measure.ln(), r.sup_v.ln())).collect();
    let fitted_slope = fit_slope(&pts);
    let big = support_nodes(&free, h, n, cfg.support_radii[0]);
    let doubled = setup.solve(node_indicator(big, h, n, 2.0 * cfg.amplitude))?;
    let amplitude_ratio = doubled.u.sup_norm() / rows[0].sup_v;
    // Forcing supported only outside the domain never enters the equation.
    let outside = setup.solve(Arc::new(|x: &[f64]| if x.iter().map(|v| v * v).sum::<f64>() >= 1.0 { 1.0 } else { 0.0 }))?;
    Ok(AbpReport { rows, fitted_slope, amplitude_ratio, exterior_sup: outside.u.sup_norm() })
}

/// Ordinary least-squares slope.
pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Exterior data for the convergence harness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExteriorSpec {
    Constant { value: f64 },
    /// `amplitude (1 − |x − c|²/r²)₊²`.
    Bump { amplitude: f64, center: [f64; 2], radius: f64 },
}

impl ExteriorSpec {
    pub fn build(&self, n: usize) -> Exterior {
        match *self {
            ExteriorSpec::Constant { value } => Exterior::Constant(value),
            ExteriorSpec::Bump { amplitude, center, radius } => Exterior::Function {
                f: Arc::new(move |x: &[f64]| {
                    let r2: f64 = (0..n).map(|d| (x[d] - center[d]).powi(2)).sum::<f64>() / (radius * radius);
                    if r2 >= 1.0 {
                        0.0
                    } else {
                        amplitude * (1.0 - r2) * (1.0 - r2)
                    }
                }),
                far: 0.0,
            },
        }
    }

    fn shifted(&self, z: &[f64; 2]) -> ExteriorSpec {
        match *self {
            ExteriorSpec::Bump { amplitude, center, radius } => {
                ExteriorSpec::Bump { amplitude, center: [center[0] + z[0], center[1] + z[1]], radius }
            }
            c => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub numerics: Numerics,
    pub domain: Domain,
    pub exterior: ExteriorSpec,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Translation in the fast variable, in units of environment cells.
    #[serde(default = "default_shift")]
    pub translation: [f64; 2],
}

fn default_shift() -> [f64; 2] {
    [0.5, 0.5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    /// Mean of `‖u^ε(ω₁) − u^ε(ω₂)‖∞` over disjoint consecutive seed pairs.
    pub seed_discrepancy: Vec<f64>,
    /// Mean over seeds of `‖u^{ε_k} − u^{ε_{k+1}}‖∞`.
    pub eps_cauchy: Vec<f64>,
    /// Mean over seeds of `‖u^ε(τ_z ω) − u^ε(ω)‖∞`.
    pub translation_discrepancy: Vec<f64>,
    /// Largest deviation from exact covariance: the solve on `D + εz` under
    /// `ω` against the solve on `D` under `τ_z ω`, compared node by node.
    pub translation_covariance_error: f64,
    pub sup_norms: Vec<Vec<f64>>,
    #[serde(skip)]
    pub records: Vec<SolveRecord>,
}

/// Solves at different ε are compared node by node, so the grid must not
/// follow ε here.
fn fixed_grid_quadrature(cfg: &ConvergeConfig, n: usize) -> Result<Arc<QuadratureTable>> {
    if cfg.numerics.points_per_cell.is_some() {
        return config("the convergence harness needs a fixed grid; unset points_per_cell");
    }
    cfg.numerics.quadrature(&cfg.domain, n, 1.0)
}

fn max_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves `F(u^ε, x/ε) = 0` in `D`, `u^ε = g` outside, for every `(ε, seed)`.
pub fn convergence_experiment(cfg: &ConvergeConfig, spec: &EnvironmentSpec) -> Result<ConvergenceReport> {
    check_eps_list(&cfg.eps, 3)?;
    if cfg.seeds.len() < 2 {
        return config("convergence experiment needs at least two seeds");
    }
    let envs = sample_all(spec, &cfg.seeds)?;
    let fields: Vec<&dyn CoefficientField> = envs.iter().map(|e| e as &dyn CoefficientField).collect();
    convergence_with_fields(cfg, &fields, spec.dimension)
}

/// Same harness over arbitrary coefficient fields (used with independent oracles).
pub fn convergence_with_fields(cfg: &ConvergeConfig, fields: &[&dyn CoefficientField], n: usize) -> Result<ConvergenceReport> {
    check_eps_list(&cfg.eps, 3)?;
    let num = &cfg.numerics;
    let quad = fixed_grid_quadrature(cfg, n)?;
    let ext = cfg.exterior.build(n);
    let items: Vec<(usize, usize)> = (0..cfg.eps.len()).flat_map(|k| (0..fields.len()).map(move |s| (k, s))).collect();
    let sols: Vec<Solution> = items
        .par_iter()
        .map(|&(k, s)| {
            let p = DirichletProblem::new(fields[s], OperatorKind::Plain, cfg.domain, Rhs::Constant(0.0), ext.clone(), cfg.eps[k], quad.clone());
            solve_dirichlet(&p, &num.solver)
        })
        .collect::<Result<_>>()?;
    let ns = fields.len();
    let at = |k: usize, s: usize| &sols[k * ns + s];
    let mut report = ConvergenceReport {
        eps: cfg.eps.clone(),
        seed_discrepancy: vec![],
        eps_cauchy: vec![],
        translation_discrepancy: vec![],
        translation_covariance_error: 0.0,
        sup_norms: vec![],
        records: vec![],
    };
    for k in 0..cfg.eps.len() {
        let pairs: Vec<f64> = (0..ns / 2).map(|i| max_diff(&at(k, 2 * i).u, &at(k, 2 * i + 1).u)).collect();
        report.seed_discrepancy.push(pairs.iter().sum::<f64>() / pairs.len() as f64);
        report.sup_norms.push((0..ns).map(|s| at(k, s).u.sup_norm()).collect());
    }
    for k in 0..cfg.eps.len() - 1 {
        let d: f64 = (0..ns).map(|s| max_diff(&at(k, s).u, &at(k + 1, s).u)).sum::<f64>() / ns as f64;
        report.eps_cauchy.push(d);
    }
    for (&(k, s), sol) in items.iter().zip(&sols) {
        report.records.push(SolveRecord::from_solution("converge", cfg.eps[k], cfg.seeds.get(s).copied().unwrap_or(s as u64), 0.0, sol));
    }
    Ok(report)
}

/// Adds the translation diagnostics to a report computed from environments.
pub fn translation_diagnostics(cfg: &ConvergeConfig, spec: &EnvironmentSpec, report: &mut ConvergenceReport) -> Result<()> {
    let n = spec.dimension;
    let envs = sample_all(spec, &cfg.seeds)?;
    let num = &cfg.numerics;
    let quad = fixed_grid_quadrature(cfg, n)?;
    let ext = cfg.exterior.build(n);
    let z = cfg.translation;
    let mut disc = Vec::new();
    let mut cov: f64 = 0.0;
    for &e in &cfg.eps {
        let per_seed: Vec<(f64, f64)> = envs
            .par_iter()
            .map(|env| {
                let moved = translate(env, &z[..n]);
                let base = DirichletProblem::new(env, OperatorKind::Plain, cfg.domain, Rhs::Constant(0.0), ext.clone(), e, quad.clone());
                let u = solve_dirichlet(&base, &num.solver)?;
                let pm = DirichletProblem { field: &moved, ..base.clone() };
                let um = solve_dirichlet(&pm, &num.solver)?;
                // Exact covariance: shift the domain and the data by εz.
                let dz = [e * z[0], e * z[1]];
                let shifted = DirichletProblem {
                    domain: cfg.domain.translated(&dz, n),
                    exterior: cfg.exterior.shifted(&dz).build(n),
                    ..base.clone()
                };
                let us = solve_dirichlet(&shifted, &num.solver)?;
                let h = num.h;
                let step = [(dz[0] / h).round() as i64, (dz[1] / h).round() as i64];
                let mut err: f64 = 0.0;
                for i in 0..um.u.lattice.len() {
                    let m = um.u.lattice.global(i);
                    let x = um.u.lattice.point(i);
                    if !cfg.domain.contains(&x[..n], n) {
                        continue;
                    }
                    let ms = [m[0] + step[0], if n == 2 { m[1] + step[1] } else { 0 }];
                    err = err.max((us.u.node_value(ms) - um.u.node_value(m)).abs());
                }
                Ok((max_diff(&u.u, &um.u), err))
            })
            .collect::<Result<_>>()?;
        disc.push(per_seed.iter().map(|p| p.0).sum::<f64>() / per_seed.len() as f64);
        cov = cov.max(per_seed.iter().map(|p| p.1).fold(0.0, f64::max));
    }
    report.translation_discrepancy = disc;
    report.translation_covariance_error = cov;
    Ok(())
}
