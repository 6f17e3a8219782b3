//! Random environments: lazily hashed checkerboard coefficient fields with an
//! exact translation action.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::kernels::KernelClass;
use crate::sym::Sym;

/// Law of the kernel coefficient of one `(α, β)` pair.
///
/// Scalar laws produce `a · Id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientLaw {
    Constant { value: f64 },
    /// Fixed matrix `[m00, m01, m11]`, dimension 2 only.
    Matrix { value: [f64; 3] },
    Uniform { lo: f64, hi: f64 },
    /// `hi` with probability `p`, else `lo`.
    TwoPoint { lo: f64, hi: f64, p: f64 },
    /// Deterministic cycle indexed by the sum of the cell coordinates.
    Periodic { values: Vec<f64> },
    /// Dimension 2: eigenvalues uniform in `[lo, hi]`, uniformly random axes.
    Spectral { lo: f64, hi: f64 },
}

/// Law of a bounded scalar forcing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarLaw {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    TwoPoint { lo: f64, hi: f64, p: f64 },
    Periodic { values: Vec<f64> },
}

impl ScalarLaw {
    pub fn mean(&self) -> f64 {
        match self {
            ScalarLaw::Constant { value } => *value,
            ScalarLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalarLaw::TwoPoint { lo, hi, p } => (1.0 - p) * lo + p * hi,
            ScalarLaw::Periodic { values } => values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ScalarLaw::Constant { .. } => 0.0,
            ScalarLaw::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            ScalarLaw::TwoPoint { lo, hi, p } => p * (1.0 - p) * (hi - lo) * (hi - lo),
            ScalarLaw::Periodic { values } => {
                let m = self.mean();
                values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
            }
        }
    }

    /// Smallest and largest attainable value.
    pub fn support(&self) -> (f64, f64) {
        match self {
            ScalarLaw::Constant { value } => (*value, *value),
            ScalarLaw::Uniform { lo, hi } | ScalarLaw::TwoPoint { lo, hi, .. } => (*lo, *hi),
            ScalarLaw::Periodic { values } => bounds(values),
        }
    }

    fn shifted(&self, c: f64) -> ScalarLaw {
        match self {
            ScalarLaw::Constant { value } => ScalarLaw::Constant { value: value + c },
            ScalarLaw::Uniform { lo, hi } => ScalarLaw::Uniform { lo: lo + c, hi: hi + c },
            ScalarLaw::TwoPoint { lo, hi, p } => ScalarLaw::TwoPoint { lo: lo + c, hi: hi + c, p: *p },
            ScalarLaw::Periodic { values } => ScalarLaw::Periodic {
                values: values.iter().map(|v| v + c).collect(),
            },
        }
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairLaw {
    pub coefficient: CoefficientLaw,
    pub forcing: ScalarLaw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    PiecewiseConstant,
    #[default]
    Multilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    #[default]
    Random,
    Zero,
}

/// Parameters of the probability space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub dimension: usize,
    pub class: KernelClass,
    pub lambda: f64,
    pub lam_big: f64,
    pub n_alpha: usize,
    pub n_beta: usize,
    /// Row-major in `(α, β)`: entry `α * n_beta + β`.
    pub pairs: Vec<PairLaw>,
    /// Bound `C_f` on the forcing. Defaults to the largest support value.
    #[serde(default)]
    pub forcing_bound: Option<f64>,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default)]
    pub shift: ShiftMode,
}

impl EnvironmentSpec {
    /// One pair with a deterministic coefficient `a · Id` and forcing `f`.
    pub fn constant(dimension: usize, class: KernelClass, lambda: f64, lam_big: f64, a: f64, f: f64) -> Self {
        EnvironmentSpec {
            dimension,
            class,
            lambda,
            lam_big,
            n_alpha: 1,
            n_beta: 1,
            pairs: vec![PairLaw {
                coefficient: CoefficientLaw::Constant { value: a },
                forcing: ScalarLaw::Constant { value: f },
            }],
            forcing_bound: None,
            interpolation: Interpolation::Multilinear,
            shift: ShiftMode::Random,
        }
    }

    /// The default random medium: an i.i.d. checkerboard in the A class with
    /// `λ = 1`, `Λ = 2` and two competing `β` choices.
    pub fn checkerboard(dimension: usize) -> Self {
        EnvironmentSpec {
            dimension,
            class: KernelClass::A,
            lambda: 1.0,
            lam_big: 2.0,
            n_alpha: 1,
            n_beta: 2,
            pairs: vec![
                PairLaw {
                    coefficient: CoefficientLaw::Uniform { lo: 1.0, hi: 2.0 },
                    forcing: ScalarLaw::Uniform { lo: -1.0, hi: 1.0 },
                },
                PairLaw {
                    coefficient: CoefficientLaw::TwoPoint { lo: 1.0, hi: 2.0, p: 0.5 },
                    forcing: ScalarLaw::Uniform { lo: -1.5, hi: 0.5 },
                },
            ],
            forcing_bound: None,
            interpolation: Interpolation::Multilinear,
            shift: ShiftMode::Random,
        }
    }

    pub fn pair(&self, alpha: usize, beta: usize) -> &PairLaw {
        &self.pairs[alpha * self.n_beta + beta]
    }

    /// Bound `C_f`, explicit or implied by the forcing laws.
    pub fn forcing_bound(&self) -> f64 {
        self.forcing_bound.unwrap_or_else(|| {
            self.pairs
                .iter()
                .map(|p| {
                    let (lo, hi) = p.forcing.support();
                    lo.abs().max(hi.abs())
                })
                .fold(0.0, f64::max)
        })
    }

    /// True when no seed changes the field: constant laws everywhere, or
    /// periodic ones without a random phase.
    pub fn is_deterministic(&self) -> bool {
        let periodic_ok = self.shift == ShiftMode::Zero;
        self.pairs.iter().all(|p| {
            let f = match p.forcing {
                ScalarLaw::Constant { .. } => true,
                ScalarLaw::Periodic { .. } => periodic_ok,
                _ => false,
            };
            let a = match p.coefficient {
                CoefficientLaw::Constant { .. } | CoefficientLaw::Matrix { .. } => true,
                CoefficientLaw::Periodic { .. } => periodic_ok,
                _ => false,
            };
            f && a
        })
    }

    /// Same spec with every forcing law shifted by `c`.
    pub fn with_forcing_shift(&self, c: f64) -> EnvironmentSpec {
        let mut s = self.clone();
        for p in &mut s.pairs {
            p.forcing = p.forcing.shifted(c);
        }
        s.forcing_bound = self.forcing_bound.map(|b| b + c.abs());
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return config(format!("dimension must be 1 or 2, got {}", self.dimension));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return config(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.lam_big >= self.lambda) || !self.lam_big.is_finite() {
            return config(format!("lam_big ({}) must be at least lambda ({})", self.lam_big, self.lambda));
        }
        if self.n_alpha == 0 || self.n_beta == 0 {
            return config("index sets must be non-empty");
        }
        if self.pairs.len() != self.n_alpha * self.n_beta {
            return config(format!(
                "expected {} pair laws (n_alpha * n_beta), got {}",
                self.n_alpha * self.n_beta,
                self.pairs.len()
            ));
        }
        let cf = self.forcing_bound();
        if !(cf >= 0.0) || !cf.is_finite() {
            return config("forcing bound must be finite and nonnegative");
        }
        for (i, p) in self.pairs.iter().enumerate() {
            self.validate_coefficient(i, &p.coefficient)?;
            validate_scalar_law(i, &p.forcing)?;
            let (lo, hi) = p.forcing.support();
            if lo.abs() > cf || hi.abs() > cf {
                return config(format!("pair {i}: forcing support [{lo}, {hi}] exceeds bound {cf}"));
            }
        }
        Ok(())
    }

    fn validate_coefficient(&self, i: usize, law: &CoefficientLaw) -> Result<()> {
        let n = self.dimension as f64;
        let (l, big) = (self.lambda, self.lam_big);
        let scalar_ok = |a: f64| -> bool {
            match self.class {
                KernelClass::Cs => a >= l && a <= big,
                KernelClass::A => a >= 0.0 && a <= big && n * a >= l,
            }
        };
        let check_scalars = |vals: &[f64]| -> Result<()> {
            for &a in vals {
                if !a.is_finite() || !scalar_ok(a) {
                    return config(format!("pair {i}: coefficient {a} is not admissible for the ellipticity bounds"));
                }
            }
            Ok(())
        };
        match law {
            CoefficientLaw::Constant { value } => check_scalars(&[*value]),
            CoefficientLaw::Uniform { lo, hi } | CoefficientLaw::TwoPoint { lo, hi, .. } => {
                if lo > hi {
                    return config(format!("pair {i}: lo > hi"));
                }
                if let CoefficientLaw::TwoPoint { p, .. } = law {
                    check_probability(i, *p)?;
                }
                check_scalars(&[*lo, *hi])
            }
            CoefficientLaw::Periodic { values } => {
                if values.is_empty() {
                    return config(format!("pair {i}: periodic law needs values"));
                }
                check_scalars(values)
            }
            CoefficientLaw::Matrix { value } => {
                if self.dimension != 2 || self.class != KernelClass::A {
                    return config(format!("pair {i}: matrix law requires dimension 2 and class a"));
                }
                let m = Sym::new2(value[0], value[1], value[2]);
                if !m.is_finite() || !m.is_admissible(l, big, 0.0) {
                    return config(format!("pair {i}: matrix {value:?} is not admissible"));
                }
                Ok(())
            }
            CoefficientLaw::Spectral { lo, hi } => {
                if self.class != KernelClass::A {
                    return config(format!("pair {i}: spectral law requires class a"));
                }
                if lo > hi || *lo < 0.0 || *hi > big || n * lo < l {
                    return config(format!("pair {i}: spectral range [{lo}, {hi}] is not admissible"));
                }
                Ok(())
            }
        }
    }
}

fn check_probability(i: usize, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        config(format!("pair {i}: probability {p} outside [0, 1]"))
    }
}

fn validate_scalar_law(i: usize, law: &ScalarLaw) -> Result<()> {
    match law {
        ScalarLaw::Constant { value } if !value.is_finite() => config(format!("pair {i}: forcing not finite")),
        ScalarLaw::Uniform { lo, hi } if lo > hi => config(format!("pair {i}: forcing lo > hi")),
        ScalarLaw::TwoPoint { lo, hi, p } => {
            if lo > hi {
                return config(format!("pair {i}: forcing lo > hi"));
            }
            check_probability(i, *p)
        }
        ScalarLaw::Periodic { values } if values.is_empty() => {
            config(format!("pair {i}: periodic forcing needs values"))
        }
        _ => Ok(()),
    }
}

// Counter-based hashing.

const STREAM_SHIFT: u64 = 0x5348_4946_5400_0000;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn hash(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix(seed);
    for &w in words {
        h = mix(h ^ w);
    }
    h
}

#[inline]
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A sampled point of the probability space.
#[derive(Clone, Debug)]
pub struct Environment {
    pub spec: Arc<EnvironmentSpec>,
    pub seed: u64,
    /// Global uniform shift `s ∈ [0,1)^n`.
    pub shift: [f64; 2],
    /// Accumulated translation, applied before the shift.
    offset: [f64; 2],
}

/// Validates the spec and draws the shift from the seed.
pub fn sample_environment(spec: &EnvironmentSpec, seed: u64) -> Result<Environment> {
    spec.validate()?;
    let mut shift = [0.0; 2];
    if spec.shift == ShiftMode::Random {
        for (d, s) in shift.iter_mut().enumerate().take(spec.dimension) {
            // 32-bit dyadic value so that shifted lattice points stay exact.
            *s = (hash(seed, &[STREAM_SHIFT, d as u64]) >> 32) as f64 / 4_294_967_296.0;
        }
    }
    Ok(Environment {
        spec: Arc::new(spec.clone()),
        seed,
        shift,
        offset: [0.0; 2],
    })
}

/// `τ_z`: the environment seen from `x + z`.
pub fn translate(env: &Environment, z: &[f64]) -> Environment {
    let mut out = env.clone();
    for d in 0..env.spec.dimension {
        out.offset[d] = z[d] + env.offset[d];
    }
    out
}

/// Kernel coefficient and forcing of pair `(α, β)` at `x`.
pub fn coefficient_at(env: &Environment, alpha: usize, beta: usize, x: &[f64]) -> Result<(Sym, f64)> {
    if alpha >= env.spec.n_alpha || beta >= env.spec.n_beta {
        return Err(Error::Usage(format!(
            "pair ({alpha}, {beta}) outside index sets {}x{}",
            env.spec.n_alpha, env.spec.n_beta
        )));
    }
    if x.len() < env.spec.dimension {
        return Err(Error::Usage(format!("point has {} coordinates, need {}", x.len(), env.spec.dimension)));
    }
    Ok(env.lookup(alpha * env.spec.n_beta + beta, x))
}

impl Environment {
    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn offset(&self) -> [f64; 2] {
        self.offset
    }

    /// Raw draw of pair index `p` in lattice cell `k`.
    pub fn cell_value(&self, p: usize, k: [i64; 2]) -> (Sym, f64) {
        let n = self.spec.dimension;
        let law = &self.spec.pairs[p];
        let key = |stream: u64, draw: u64| -> f64 {
            let h = if n == 1 {
                hash(self.seed, &[stream, p as u64, k[0] as u64, draw])
            } else {
                hash(self.seed, &[stream, p as u64, k[0] as u64, k[1] as u64, draw])
            };
            unit(h)
        };
        let cyc = |len: usize| -> usize {
            let s = if n == 1 { k[0] } else { k[0] + k[1] };
            s.rem_euclid(len as i64) as usize
        };
        let coef = match &law.coefficient {
            CoefficientLaw::Constant { value } => Sym::scaled_identity(n, *value),
            CoefficientLaw::Matrix { value } => Sym::new2(value[0], value[1], value[2]),
            CoefficientLaw::Uniform { lo, hi } => Sym::scaled_identity(n, lo + (hi - lo) * key(1, 0)),
            CoefficientLaw::TwoPoint { lo, hi, p } => {
                Sym::scaled_identity(n, if key(1, 0) < *p { *hi } else { *lo })
            }
            CoefficientLaw::Periodic { values } => Sym::scaled_identity(n, values[cyc(values.len())]),
            CoefficientLaw::Spectral { lo, hi } => {
                let m1 = lo + (hi - lo) * key(1, 0);
                if n == 1 {
                    Sym::scalar(m1)
                } else {
                    let m2 = lo + (hi - lo) * key(1, 1);
                    let th = std::f64::consts::PI * key(1, 2);
                    let (s, c) = th.sin_cos();
                    Sym::new2(m1 * c * c + m2 * s * s, (m1 - m2) * c * s, m1 * s * s + m2 * c * c)
                }
            }
        };
        let f = match &law.forcing {
            ScalarLaw::Constant { value } => *value,
            ScalarLaw::Uniform { lo, hi } => lo + (hi - lo) * key(2, 0),
            ScalarLaw::TwoPoint { lo, hi, p } => {
                if key(2, 0) < *p {
                    *hi
                } else {
                    *lo
                }
            }
            ScalarLaw::Periodic { values } => values[cyc(values.len())],
        };
        (coef, f)
    }

    /// Lookup by flat pair index without bounds checks on the pair.
    pub fn lookup(&self, p: usize, x: &[f64]) -> (Sym, f64) {
        let n = self.spec.dimension;
        let mut q = [0.0; 2];
        for d in 0..n {
            q[d] = (x[d] + self.offset[d]) + self.shift[d];
        }
        match self.spec.interpolation {
            Interpolation::PiecewiseConstant => {
                let k = [q[0].floor() as i64, if n == 2 { q[1].floor() as i64 } else { 0 }];
                self.cell_value(p, k)
            }
            Interpolation::Multilinear => {
                // Draws sit at cell centres k + 1/2.
                let mut k0 = [0i64; 2];
                let mut t = [0.0; 2];
                for d in 0..n {
                    let r = q[d] - 0.5;
                    let f = r.floor();
                    k0[d] = f as i64;
                    t[d] = r - f;
                }
                if n == 1 {
                    let (a0, f0) = self.cell_value(p, [k0[0], 0]);
                    let (a1, f1) = self.cell_value(p, [k0[0] + 1, 0]);
                    let w = t[0];
                    (a0.scale(1.0 - w).add(&a1.scale(w)), (1.0 - w) * f0 + w * f1)
                } else {
                    let mut a = Sym::zero(2);
                    let mut f = 0.0;
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        let w = (if dx == 1 { t[0] } else { 1.0 - t[0] }) * (if dy == 1 { t[1] } else { 1.0 - t[1] });
                        let (ac, fc) = self.cell_value(p, [k0[0] + dx, k0[1] + dy]);
                        a = a.add(&ac.scale(w));
                        f += w * fc;
                    }
                    (a, f)
                }
            }
        }
    }
}

/// Anything that supplies `(A^{αβ}(x), f^{αβ}(x))`.
pub trait CoefficientField: Send + Sync {
    fn dimension(&self) -> usize;
    fn n_alpha(&self) -> usize;
    fn n_beta(&self) -> usize;
    fn coefficient(&self, alpha: usize, beta: usize, x: &[f64]) -> (Sym, f64);
}

impl CoefficientField for Environment {
    fn dimension(&self) -> usize {
        self.spec.dimension
    }
    fn n_alpha(&self) -> usize {
        self.spec.n_alpha
    }
    fn n_beta(&self) -> usize {
        self.spec.n_beta
    }
    fn coefficient(&self, alpha: usize, beta: usize, x: &[f64]) -> (Sym, f64) {
        self.lookup(alpha * self.spec.n_beta + beta, x)
    }
}

/// Reads the inner field at `x / ε`.
pub struct ScaledField<'a> {
    pub inner: &'a dyn CoefficientField,
    pub eps: f64,
}

impl CoefficientField for ScaledField<'_> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn n_alpha(&self) -> usize {
        self.inner.n_alpha()
    }
    fn n_beta(&self) -> usize {
        self.inner.n_beta()
    }
    fn coefficient(&self, alpha: usize, beta: usize, x: &[f64]) -> (Sym, f64) {
        let y = [x[0] / self.eps, if x.len() > 1 { x[1] / self.eps } else { 0.0 }];
        self.inner.coefficient(alpha, beta, &y[..self.dimension()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spec(n: usize) -> EnvironmentSpec {
        EnvironmentSpec {
            dimension: n,
            class: KernelClass::A,
            lambda: 1.0,
            lam_big: 2.0,
            n_alpha: 1,
            n_beta: 2,
            pairs: vec![
                PairLaw {
                    coefficient: if n == 2 {
                        CoefficientLaw::Spectral { lo: 0.5, hi: 2.0 }
                    } else {
                        CoefficientLaw::Uniform { lo: 1.0, hi: 2.0 }
                    },
                    forcing: ScalarLaw::Uniform { lo: -1.0, hi: 1.0 },
                },
                PairLaw {
                    coefficient: CoefficientLaw::TwoPoint { lo: 1.0, hi: 2.0, p: 0.3 },
                    forcing: ScalarLaw::TwoPoint { lo: -0.5, hi: 0.5, p: 0.5 },
                },
            ],
            forcing_bound: None,
            interpolation: Interpolation::Multilinear,
            shift: ShiftMode::Random,
        }
    }

    #[test]
    fn degenerate_law_gives_identity_everywhere() {
        let spec = EnvironmentSpec::constant(2, KernelClass::A, 1.0, 2.0, 1.0, 0.25);
        let env = sample_environment(&spec, 9).unwrap();
        for i in 0..50 {
            let x = [i as f64 * 0.731 - 10.0, i as f64 * -0.377 + 3.0];
            let (a, f) = coefficient_at(&env, 0, 0, &x).unwrap();
            assert_eq!(a, Sym::identity(2));
            assert_eq!(f, 0.25);
        }
    }

    #[test]
    fn same_seed_same_field() {
        let spec = random_spec(2);
        let e1 = sample_environment(&spec, 77).unwrap();
        let e2 = sample_environment(&spec, 77).unwrap();
        let mut s = 1u64;
        for _ in 0..1000 {
            s = mix(s);
            let x = [unit(s) * 40.0 - 20.0, unit(mix(s ^ 1)) * 40.0 - 20.0];
            for b in 0..2 {
                assert_eq!(e1.coefficient(0, b, &x), e2.coefficient(0, b, &x));
            }
        }
    }

    #[test]
    fn forcing_mean_obeys_law_of_large_numbers() {
        // ε = 1/64: a unit cube in the fast variable holds 64 cells.
        let mut spec = random_spec(1);
        spec.interpolation = Interpolation::PiecewiseConstant;
        let law = spec.pairs[0].forcing.clone();
        for seed in [3u64, 4, 5] {
            let env = sample_environment(&spec, seed).unwrap();
            let cells = 64;
            let mean = (0..cells)
                .map(|k| env.coefficient(0, 0, &[k as f64 + 0.5 - env.shift[0]]).1)
                .sum::<f64>()
                / cells as f64;
            let se = (law.variance() / cells as f64).sqrt();
            assert!((mean - law.mean()).abs() <= 3.0 * se, "seed {seed}: {mean}");
        }
    }

    #[test]
    fn translate_examples() {
        let spec = random_spec(1);
        let env = sample_environment(&spec, 11).unwrap();
        let e0 = translate(&env, &[0.0]);
        let moved = translate(&env, &[0.37]);
        let back = translate(&moved, &[-0.37]);
        for b in 0..2 {
            assert_eq!(moved.coefficient(0, b, &[0.0]), env.coefficient(0, b, &[0.37]));
            for i in 0..100 {
                let x = [i as f64 * 0.0625 - 3.0];
                assert_eq!(e0.coefficient(0, b, &x), env.coefficient(0, b, &x));
                assert_eq!(back.coefficient(0, b, &x), env.coefficient(0, b, &x));
            }
        }
    }

    #[test]
    fn centre_and_face_queries() {
        let mut spec = random_spec(1);
        spec.shift = ShiftMode::Zero;
        spec.interpolation = Interpolation::PiecewiseConstant;
        let pc = sample_environment(&spec, 5).unwrap();
        spec.interpolation = Interpolation::Multilinear;
        let ml = sample_environment(&spec, 5).unwrap();
        for k in -5i64..5 {
            let raw = pc.cell_value(0, [k, 0]);
            assert_eq!(pc.coefficient(0, 0, &[k as f64 + 0.5]), raw);
            assert_eq!(ml.coefficient(0, 0, &[k as f64 + 0.5]), raw);
            // Face between cells k-1 and k.
            let left = pc.cell_value(0, [k - 1, 0]);
            let (a, f) = ml.coefficient(0, 0, &[k as f64]);
            assert!((f - 0.5 * (left.1 + raw.1)).abs() < 1e-15);
            assert!((a.a[0] - 0.5 * (left.0.a[0] + raw.0.a[0])).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let mut s = random_spec(1);
        s.lambda = 0.0;
        assert!(matches!(sample_environment(&s, 1), Err(Error::Config(_))));
        let mut s = random_spec(1);
        s.lam_big = 0.5;
        assert!(matches!(sample_environment(&s, 1), Err(Error::Config(_))));
        let mut s = random_spec(1);
        s.n_beta = 0;
        assert!(matches!(sample_environment(&s, 1), Err(Error::Config(_))));
        let mut s = random_spec(1);
        s.pairs[0].coefficient = CoefficientLaw::Uniform { lo: 1.0, hi: 3.0 };
        assert!(matches!(sample_environment(&s, 1), Err(Error::Config(_))));
    }

    #[test]
    fn bad_pair_index_is_usage_error() {
        let env = sample_environment(&random_spec(1), 1).unwrap();
        assert!(matches!(coefficient_at(&env, 1, 0, &[0.0]), Err(Error::Usage(_))));
        assert!(matches!(coefficient_at(&env, 0, 2, &[0.0]), Err(Error::Usage(_))));
    }
}
