//! Run configuration: TOML on disk, fully resolved before execution.

use std::path::{Path, PathBuf};

use nonlocal_homog::env::EnvironmentSpec;
use nonlocal_homog::homog::{diameter, ExteriorSpec, Numerics};
use nonlocal_homog::kernels::KernelClass;
use nonlocal_homog::nonlocal::{Domain, TestFunction};
use nonlocal_homog::sym::Sym;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "one_dim")]
    pub dimension: usize,
    /// Worker threads. Defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Write measured solve times. When false every `wall_ms` is zero, which
    /// makes output files byte-for-byte reproducible.
    #[serde(default = "yes")]
    pub timing: bool,
    /// Defaults to the i.i.d. checkerboard of the given dimension.
    #[serde(default)]
    pub environment: Option<EnvironmentSpec>,
    pub numerics: Numerics,
    pub experiment: Experiment,
}

fn one_dim() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_tol() -> f64 {
    1e-3
}

fn default_steps() -> usize {
    80
}

fn default_translation() -> [f64; 2] {
    [0.5, 0.5]
}

fn default_amplitude() -> f64 {
    1.0
}

fn zero_exterior() -> ExteriorSpec {
    ExteriorSpec::Constant { value: 0.0 }
}

/// Capped quadratic `φ(x) = ½ (x − c)ᵀ P (x − c) + p · (x − c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSpec {
    /// `[p]` in 1D, `[p00, p01, p11]` in 2D.
    pub hessian: Vec<f64>,
    #[serde(default)]
    pub gradient: [f64; 2],
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
}

fn default_cutoff() -> f64 {
    4.0
}

impl PhiSpec {
    pub fn quadratic(p: f64) -> Self {
        PhiSpec { hessian: vec![p], gradient: [0.0; 2], center: [0.0; 2], cutoff: 4.0 }
    }

    pub fn build(&self, n: usize) -> Result<TestFunction, CliError> {
        let p_mat = match (n, self.hessian.as_slice()) {
            (1, [p]) => Sym::scalar(*p),
            (2, [a, b, c]) => Sym::new2(*a, *b, *c),
            _ => {
                return Err(CliError::Config(format!(
                    "phi.hessian needs {} entries in dimension {n}, got {}",
                    if n == 1 { 1 } else { 3 },
                    self.hessian.len()
                )))
            }
        };
        if !p_mat.is_finite() || !(self.cutoff > 0.0) {
            return Err(CliError::Config("phi needs a finite hessian and a positive cutoff".into()));
        }
        let mut t = TestFunction::quadratic(n, &self.center, p_mat);
        t.p = self.gradient;
        t.cutoff = self.cutoff;
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// `F(u, x/ε) = rhs` in `domain`, `u = exterior` outside.
    Solve {
        domain: Domain,
        #[serde(default = "zero_exterior")]
        exterior: ExteriorSpec,
        #[serde(default)]
        rhs: f64,
        eps: f64,
        seed: u64,
    },
    /// Obstacle problem for `F_{φ,x₀}` on `Q₁(x₀)`.
    Obstacle {
        phi: PhiSpec,
        #[serde(default)]
        x0: [f64; 2],
        level: f64,
        eps: f64,
        seed: u64,
    },
    Mbar {
        phi: PhiSpec,
        #[serde(default)]
        x0: [f64; 2],
        level: f64,
        eps: Vec<f64>,
        seeds: Vec<u64>,
    },
    Effective {
        phi: PhiSpec,
        #[serde(default)]
        x0: [f64; 2],
        eps: Vec<f64>,
        seeds: Vec<u64>,
        #[serde(default)]
        theta: Option<f64>,
        #[serde(default = "default_tol")]
        bisect_tol: f64,
        #[serde(default = "default_steps")]
        max_steps: usize,
    },
    Corrector {
        phi: PhiSpec,
        #[serde(default)]
        x0: [f64; 2],
        level: f64,
        eps: Vec<f64>,
        seed: u64,
    },
    Converge {
        domain: Domain,
        #[serde(default = "zero_exterior")]
        exterior: ExteriorSpec,
        eps: Vec<f64>,
        seeds: Vec<u64>,
        #[serde(default = "default_translation")]
        translation: [f64; 2],
        #[serde(default = "yes")]
        translation_check: bool,
    },
    Abp {
        class: KernelClass,
        lambda: f64,
        lam_big: f64,
        support_radii: Vec<f64>,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        conjecture: bool,
    },
    Cmi {
        class: KernelClass,
        lambda: f64,
        lam_big: f64,
        sizes: Vec<usize>,
        seed: u64,
        #[serde(default)]
        conjecture: bool,
    },
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Solve { .. } => "solve",
            Experiment::Obstacle { .. } => "obstacle",
            Experiment::Mbar { .. } => "mbar",
            Experiment::Effective { .. } => "effective",
            Experiment::Corrector { .. } => "corrector",
            Experiment::Converge { .. } => "converge",
            Experiment::Abp { .. } => "abp",
            Experiment::Cmi { .. } => "cmi",
        }
    }

    /// Every ε the experiment solves at.
    fn eps_list(&self) -> Vec<f64> {
        match self {
            Experiment::Solve { eps, .. } | Experiment::Obstacle { eps, .. } => vec![*eps],
            Experiment::Mbar { eps, .. }
            | Experiment::Effective { eps, .. }
            | Experiment::Corrector { eps, .. }
            | Experiment::Converge { eps, .. } => eps.clone(),
            Experiment::Abp { .. } | Experiment::Cmi { .. } => vec![],
        }
    }

    /// Domain the quadrature range is sized for.
    fn domain(&self, n: usize) -> Domain {
        let origin = |x0: &[f64; 2]| [x0[0], if n == 2 { x0[1] } else { 0.0 }];
        match self {
            Experiment::Solve { domain, .. } | Experiment::Converge { domain, .. } => *domain,
            Experiment::Obstacle { x0, .. } | Experiment::Mbar { x0, .. } => Domain::unit_cube(n, &origin(x0)),
            Experiment::Effective { .. } => Domain::unit_cube(n, &[0.0, 0.0]),
            Experiment::Corrector { x0, .. } => Domain::unit_ball(n, &origin(x0)),
            Experiment::Abp { .. } | Experiment::Cmi { .. } => Domain::unit_ball(n, &[0.0, 0.0]),
        }
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

fn check_eps(eps: &[f64], min_len: usize) -> Result<(), CliError> {
    if eps.len() < min_len {
        return bad(format!("experiment.eps needs at least {min_len} values, got {}", eps.len()));
    }
    if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return bad("experiment.eps must be positive and strictly decreasing");
    }
    Ok(())
}

fn check_seeds(seeds: &[u64], min_len: usize) -> Result<(), CliError> {
    if seeds.len() < min_len {
        return bad(format!("experiment.seeds needs at least {min_len} values, got {}", seeds.len()));
    }
    let mut s = seeds.to_vec();
    s.sort_unstable();
    if s.windows(2).any(|w| w[0] == w[1]) {
        return bad("experiment.seeds contains duplicates");
    }
    Ok(())
}

fn check_class(lambda: f64, lam_big: f64) -> Result<(), CliError> {
    if !(lambda > 0.0) || !(lam_big >= lambda) || !lam_big.is_finite() {
        return bad(format!("need 0 < lambda <= lam_big, got {lambda} and {lam_big}"));
    }
    Ok(())
}

fn check_domain(d: &Domain, n: usize) -> Result<(), CliError> {
    let ok = match d {
        Domain::Cube { side, .. } => *side > 0.0 && side.is_finite(),
        Domain::Ball { radius, .. } => *radius > 0.0 && radius.is_finite(),
        Domain::HalfOpenBox { lo, hi } => (0..n).all(|k| hi[k] > lo[k]),
    };
    if !ok {
        return bad("experiment.domain is empty or degenerate");
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn environment(&self) -> EnvironmentSpec {
        self.environment.clone().unwrap_or_else(|| EnvironmentSpec::checkerboard(self.dimension))
    }

    /// Re-checks every cross-field constraint ahead of the solvers, so bad
    /// input surfaces as a named configuration error.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let n = self.dimension;
        if n != 1 && n != 2 {
            return bad(format!("dimension must be 1 or 2, got {n}"));
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        let env = self.environment();
        env.validate().map_err(CliError::from)?;
        if env.dimension != n {
            return bad(format!("environment.dimension {} does not match dimension {n}", env.dimension));
        }
        let num = &self.numerics;
        if !(num.sigma > 0.0 && num.sigma < 2.0) {
            return bad(format!("numerics.sigma must lie in (0, 2), got {}", num.sigma));
        }
        if !(num.h > 0.0) || !num.h.is_finite() {
            return bad(format!("numerics.h must be positive, got {}", num.h));
        }
        if let Some(k) = num.points_per_cell {
            if !(k >= 4.0) {
                return bad(format!("numerics.points_per_cell must be at least 4, got {k}"));
            }
        }
        if let Some(r) = num.r_out {
            if !(r > 0.0) || !r.is_finite() {
                return bad(format!("numerics.r_out must be positive, got {r}"));
            }
        }
        num.solver.validate().map_err(CliError::from)?;
        let eps = self.experiment.eps_list();
        for &e in &eps {
            if num.h_for(e) > 0.25 * e * (1.0 + 1e-12) {
                return bad(format!("resolution check failed: h = {} exceeds eps/4 = {} at eps = {e}", num.h_for(e), 0.25 * e));
            }
        }
        match &self.experiment {
            Experiment::Solve { domain, eps, .. } => {
                check_domain(domain, n)?;
                check_eps(&[*eps], 1)?;
            }
            Experiment::Obstacle { phi, eps, level, .. } => {
                phi.build(n)?;
                check_eps(&[*eps], 1)?;
                finite("level", *level)?;
            }
            Experiment::Mbar { phi, eps, seeds, level, .. } => {
                phi.build(n)?;
                check_eps(eps, 2)?;
                check_seeds(seeds, 2)?;
                finite("level", *level)?;
            }
            Experiment::Effective { phi, eps, seeds, theta, bisect_tol, max_steps, .. } => {
                phi.build(n)?;
                check_eps(eps, 2)?;
                check_seeds(seeds, 2)?;
                if let Some(t) = theta {
                    if !(*t >= 0.0 && *t < 1.0) {
                        return bad(format!("experiment.theta must lie in [0, 1), got {t}"));
                    }
                }
                if !(*bisect_tol > 0.0) {
                    return bad("experiment.bisect_tol must be positive");
                }
                if *max_steps == 0 {
                    return bad("experiment.max_steps must be positive");
                }
            }
            Experiment::Corrector { phi, eps, level, .. } => {
                phi.build(n)?;
                check_eps(eps, 1)?;
                finite("level", *level)?;
            }
            Experiment::Converge { domain, eps, seeds, translation, .. } => {
                check_domain(domain, n)?;
                check_eps(eps, 3)?;
                check_seeds(seeds, 2)?;
                if num.points_per_cell.is_some() {
                    return bad("the convergence experiment needs a fixed grid; unset numerics.points_per_cell");
                }
                if translation.iter().any(|t| !t.is_finite()) {
                    return bad("experiment.translation must be finite");
                }
            }
            Experiment::Abp { class, lambda, lam_big, support_radii, amplitude, .. } => {
                check_class(*lambda, *lam_big)?;
                if *class != KernelClass::A {
                    return bad("the ABP experiment is defined for the A class only");
                }
                if support_radii.len() < 2 || support_radii.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
                    return bad("experiment.support_radii needs at least two radii in (0, 1]");
                }
                if !(*amplitude > 0.0) {
                    return bad("experiment.amplitude must be positive");
                }
            }
            Experiment::Cmi { class, lambda, lam_big, sizes, conjecture, .. } => {
                check_class(*lambda, *lam_big)?;
                if *class == KernelClass::Cs && !conjecture {
                    return bad("the CS class needs conjecture = true");
                }
                if sizes.is_empty() {
                    return bad("experiment.sizes must not be empty");
                }
            }
        }
        Ok(())
    }

    /// Copy with every defaulted value written out, ready for replay.
    pub fn resolved(&self, workers: usize) -> RunConfig {
        let mut c = self.clone();
        c.workers = Some(workers);
        c.environment = Some(self.environment());
        let d = self.experiment.domain(self.dimension);
        if c.numerics.r_out.is_none() {
            c.numerics.r_out = Some(8.0 * diameter(&d, self.dimension));
        }
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }
}

fn finite(name: &str, v: f64) -> Result<(), CliError> {
    if !v.is_finite() {
        return bad(format!("experiment.{name} must be finite"));
    }
    Ok(())
}
