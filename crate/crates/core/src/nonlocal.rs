//! Second differences, linear operators, the inf-sup operator, its frozen
//! version and the extremal operators, evaluated through a quadrature table.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::CoefficientField;
use crate::error::{Error, Result};
use crate::kernels::{KernelClass, KernelFamily, QuadratureTable};
use crate::sym::{pucci_inf, pucci_sup, Sym};

/// Open cube, open ball or half-open box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    /// `Q_side(center)`: open cube with the given side length.
    Cube { center: [f64; 2], side: f64 },
    Ball { center: [f64; 2], radius: f64 },
    /// `[lo, hi)` componentwise. Tiles exactly along grid lines.
    HalfOpenBox { lo: [f64; 2], hi: [f64; 2] },
}

impl Domain {
    pub fn unit_cube(n: usize, center: &[f64]) -> Domain {
        Domain::Cube { center: pad(center, n), side: 1.0 }
    }

    pub fn unit_ball(n: usize, center: &[f64]) -> Domain {
        Domain::Ball { center: pad(center, n), radius: 1.0 }
    }

    pub fn contains(&self, x: &[f64], n: usize) -> bool {
        match self {
            Domain::Cube { center, side } => (0..n).all(|d| (x[d] - center[d]).abs() < 0.5 * side),
            Domain::Ball { center, radius } => {
                (0..n).map(|d| (x[d] - center[d]).powi(2)).sum::<f64>() < radius * radius
            }
            Domain::HalfOpenBox { lo, hi } => (0..n).all(|d| x[d] >= lo[d] && x[d] < hi[d]),
        }
    }

    /// Closed bounding box.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Domain::Cube { center, side } => (
                [center[0] - 0.5 * side, center[1] - 0.5 * side],
                [center[0] + 0.5 * side, center[1] + 0.5 * side],
            ),
            Domain::Ball { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Domain::HalfOpenBox { lo, hi } => (*lo, *hi),
        }
    }

    /// Largest coordinate extent of the bounding box.
    pub fn extent(&self, n: usize) -> f64 {
        let (lo, hi) = self.bounds();
        (0..n).map(|d| hi[d] - lo[d]).fold(0.0, f64::max)
    }

    /// Centre and radius of an inscribed ball.
    pub fn inscribed_ball(&self, n: usize) -> ([f64; 2], f64) {
        match self {
            Domain::Cube { center, side } => (*center, 0.5 * side),
            Domain::Ball { center, radius } => (*center, *radius),
            Domain::HalfOpenBox { lo, hi } => {
                let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
                let r = (0..n).map(|d| 0.5 * (hi[d] - lo[d])).fold(f64::INFINITY, f64::min);
                (c, r)
            }
        }
    }

    pub fn translated(&self, z: &[f64], n: usize) -> Domain {
        let z = pad(z, n);
        match *self {
            Domain::Cube { center, side } => Domain::Cube { center: [center[0] + z[0], center[1] + z[1]], side },
            Domain::Ball { center, radius } => {
                Domain::Ball { center: [center[0] + z[0], center[1] + z[1]], radius }
            }
            Domain::HalfOpenBox { lo, hi } => Domain::HalfOpenBox {
                lo: [lo[0] + z[0], lo[1] + z[1]],
                hi: [hi[0] + z[0], hi[1] + z[1]],
            },
        }
    }
}

pub(crate) fn pad(x: &[f64], n: usize) -> [f64; 2] {
    [x.first().copied().unwrap_or(0.0), if n > 1 { x.get(1).copied().unwrap_or(0.0) } else { 0.0 }]
}

/// Nodes `m h` for global integer `m` in a box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub n: usize,
    pub h: f64,
    pub lo: [i64; 2],
    pub dims: [usize; 2],
}

impl Lattice {
    /// Smallest lattice box containing the closed bounding box of `domain`.
    pub fn covering(domain: &Domain, n: usize, h: f64) -> Lattice {
        let (lo, hi) = domain.bounds();
        let mut l = [0i64; 2];
        let mut dims = [1usize; 2];
        for d in 0..n {
            let a = (lo[d] / h).ceil() as i64;
            let b = (hi[d] / h).floor() as i64;
            l[d] = a;
            dims[d] = (b - a + 1).max(1) as usize;
        }
        Lattice { n, h, lo: l, dims }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * if self.n == 2 { self.dims[1] } else { 1 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global integer coordinates of flat node `i`.
    pub fn global(&self, i: usize) -> [i64; 2] {
        if self.n == 1 {
            [self.lo[0] + i as i64, 0]
        } else {
            [self.lo[0] + (i / self.dims[1]) as i64, self.lo[1] + (i % self.dims[1]) as i64]
        }
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        let m = self.global(i);
        [m[0] as f64 * self.h, m[1] as f64 * self.h]
    }

    /// Flat index of global node `m`, if inside the box.
    pub fn local(&self, m: [i64; 2]) -> Option<usize> {
        let a = m[0] - self.lo[0];
        if a < 0 || a >= self.dims[0] as i64 {
            return None;
        }
        if self.n == 1 {
            return Some(a as usize);
        }
        let b = m[1] - self.lo[1];
        if b < 0 || b >= self.dims[1] as i64 {
            return None;
        }
        Some(a as usize * self.dims[1] + b as usize)
    }
}

/// Data prescribed on the complement of the computational domain.
#[derive(Clone)]
pub enum Exterior {
    Constant(f64),
    /// Bounded callback; `far` is its value beyond the truncation radius.
    Function { f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>, far: f64 },
}

impl fmt::Debug for Exterior {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exterior::Constant(c) => write!(fm, "Exterior::Constant({c})"),
            Exterior::Function { far, .. } => write!(fm, "Exterior::Function {{ far: {far} }}"),
        }
    }
}

impl Exterior {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Exterior::Constant(c) => *c,
            Exterior::Function { f, .. } => f(x),
        }
    }

    pub fn far(&self) -> f64 {
        match self {
            Exterior::Constant(c) => *c,
            Exterior::Function { far, .. } => *far,
        }
    }

    pub fn negated(&self) -> Exterior {
        self.scaled(-1.0)
    }

    pub fn scaled(&self, s: f64) -> Exterior {
        match self {
            Exterior::Constant(c) => Exterior::Constant(s * c),
            Exterior::Function { f, far } => {
                let f = f.clone();
                Exterior::Function { f: Arc::new(move |x| s * f(x)), far: s * far }
            }
        }
    }
}

/// A function on `R^n` that the quadrature can sample.
pub trait Profile {
    fn value(&self, x: &[f64]) -> f64;
    /// Value used beyond the truncation radius.
    fn far(&self) -> f64;
    /// Grid spacing, when the function lives on a lattice.
    fn spacing(&self) -> Option<f64> {
        None
    }
}

/// Node values on a lattice plus an exterior rule.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    /// Points outside this domain read the exterior rule.
    pub domain: Option<Domain>,
    pub exterior: Exterior,
}

impl GridFunction {
    /// Samples `f` at domain nodes and the exterior rule elsewhere.
    pub fn from_fn(lattice: Lattice, domain: Option<Domain>, exterior: Exterior, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..lattice.len())
            .map(|i| {
                let x = lattice.point(i);
                let x = &x[..lattice.n];
                match &domain {
                    Some(d) if !d.contains(x, lattice.n) => exterior.value(x),
                    _ => f(x),
                }
            })
            .collect();
        GridFunction { lattice, values, domain, exterior }
    }

    pub fn constant(lattice: Lattice, c: f64) -> Self {
        GridFunction { lattice, values: vec![c; lattice.len()], domain: None, exterior: Exterior::Constant(c) }
    }

    /// Value at global node `m`.
    pub fn node_value(&self, m: [i64; 2]) -> f64 {
        match self.lattice.local(m) {
            Some(i) => self.values[i],
            None => {
                let h = self.lattice.h;
                self.exterior.value(&[m[0] as f64 * h, m[1] as f64 * h][..self.lattice.n])
            }
        }
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let n = self.lattice.n;
        if let Some(d) = &self.domain {
            if !d.contains(x, n) {
                return self.exterior.value(x);
            }
        }
        let h = self.lattice.h;
        let mut base = [0i64; 2];
        let mut t = [0.0; 2];
        for d in 0..n {
            let r = x[d] / h;
            let k = r.round();
            if (r - k).abs() < 1e-9 {
                base[d] = k as i64;
                t[d] = 0.0;
            } else {
                let f = r.floor();
                base[d] = f as i64;
                t[d] = r - f;
            }
        }
        let inside = |m: [i64; 2]| self.lattice.local(m).is_some();
        if n == 1 {
            if t[0] == 0.0 {
                return if inside(base) { self.node_value(base) } else { self.exterior.value(x) };
            }
            let b1 = [base[0] + 1, 0];
            if !inside(base) || !inside(b1) {
                return self.exterior.value(x);
            }
            return (1.0 - t[0]) * self.node_value(base) + t[0] * self.node_value(b1);
        }
        let mut acc = 0.0;
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let w = (if dx == 1 { t[0] } else { 1.0 - t[0] }) * (if dy == 1 { t[1] } else { 1.0 - t[1] });
            if w == 0.0 {
                continue;
            }
            let m = [base[0] + dx, base[1] + dy];
            if !inside(m) {
                return self.exterior.value(x);
            }
            acc += w * self.node_value(m);
        }
        acc
    }

    /// Pointwise combination `a u + b v` on a shared lattice.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        if self.lattice != other.lattice {
            return Err(Error::Usage("grid functions live on different lattices".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(u, v)| a * u + b * v).collect();
        let (e1, e2) = (self.exterior.clone(), other.exterior.clone());
        let exterior = match (&e1, &e2) {
            (Exterior::Constant(p), Exterior::Constant(q)) => Exterior::Constant(a * p + b * q),
            _ => {
                let far = a * e1.far() + b * e2.far();
                Exterior::Function { f: Arc::new(move |x| a * e1.value(x) + b * e2.value(x)), far }
            }
        };
        Ok(GridFunction { lattice: self.lattice, values, domain: self.domain, exterior })
    }

    pub fn negated(&self) -> GridFunction {
        GridFunction {
            lattice: self.lattice,
            values: self.values.iter().map(|v| -v).collect(),
            domain: self.domain,
            exterior: self.exterior.negated(),
        }
    }

    /// Maximum of `|u|` over domain nodes (all nodes when no domain is set).
    pub fn sup_norm(&self) -> f64 {
        self.domain_values().map(f64::abs).fold(0.0, f64::max)
    }

    pub fn domain_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.lattice.len()).filter_map(move |i| {
            let x = self.lattice.point(i);
            match &self.domain {
                Some(d) if !d.contains(&x[..self.lattice.n], self.lattice.n) => None,
                _ => Some(self.values[i]),
            }
        })
    }
}

impl Profile for GridFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.value_at(x)
    }
    fn far(&self) -> f64 {
        self.exterior.far()
    }
    fn spacing(&self) -> Option<f64> {
        Some(self.lattice.h)
    }
}

/// Capped quadratic `c + η(|x − x₀|) (p·d + ½ dᵀ P d)`, `d = x − x₀`.
///
/// `η` equals 1 up to `R_c/2`, vanishes beyond `R_c` and is a quintic C²
/// blend in between, so the function is C^{1,1} and bounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub n: usize,
    pub center: [f64; 2],
    /// Hessian `P`.
    pub p_mat: Sym,
    pub p: [f64; 2],
    pub c: f64,
    pub cutoff: f64,
}

impl TestFunction {
    pub fn quadratic(n: usize, center: &[f64], p_mat: Sym) -> Self {
        TestFunction { n, center: pad(center, n), p_mat, p: [0.0; 2], c: 0.0, cutoff: 4.0 }
    }

    pub fn zero(n: usize) -> Self {
        TestFunction::quadratic(n, &[0.0, 0.0], Sym::zero(n))
    }

    /// `φ(· + z)`.
    pub fn shifted(&self, z: &[f64]) -> Self {
        let z = pad(z, self.n);
        let mut t = *self;
        t.center = [self.center[0] - z[0], self.center[1] - z[1]];
        t
    }

    /// `φ + ψ` when both share centre and cutoff.
    pub fn plus(&self, other: &TestFunction) -> Result<TestFunction> {
        if self.center != other.center || self.cutoff != other.cutoff || self.n != other.n {
            return Err(Error::Usage("test functions must share centre and cutoff to be added".into()));
        }
        let mut t = *self;
        t.p_mat = self.p_mat.add(&other.p_mat);
        t.p = [self.p[0] + other.p[0], self.p[1] + other.p[1]];
        t.c = self.c + other.c;
        Ok(t)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut d = [0.0; 2];
        for k in 0..self.n {
            d[k] = x[k] - self.center[k];
        }
        let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let eta = cutoff_weight(r, self.cutoff);
        if eta == 0.0 {
            return self.c;
        }
        let lin = self.p[0] * d[0] + if self.n == 2 { self.p[1] * d[1] } else { 0.0 };
        self.c + eta * (lin + 0.5 * self.p_mat.quad_form(&d[..self.n]))
    }
}

fn cutoff_weight(r: f64, rc: f64) -> f64 {
    let a = 0.5 * rc;
    if r <= a {
        1.0
    } else if r >= rc {
        0.0
    } else {
        let s = (r - a) / (rc - a);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

impl Profile for TestFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn far(&self) -> f64 {
        self.c
    }
}

/// `± (1 − |x − c|²/r²)₊²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barrier {
    pub n: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub sign: f64,
}

impl Barrier {
    /// `P⁺` on the inscribed ball of `domain`.
    pub fn plus(domain: &Domain, n: usize) -> Barrier {
        let (center, radius) = domain.inscribed_ball(n);
        Barrier { n, center, radius, sign: 1.0 }
    }

    pub fn minus(domain: &Domain, n: usize) -> Barrier {
        Barrier { sign: -1.0, ..Barrier::plus(domain, n) }
    }
}

impl Profile for Barrier {
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = (0..self.n).map(|d| (x[d] - self.center[d]).powi(2)).sum::<f64>() / (self.radius * self.radius);
        if r2 >= 1.0 {
            0.0
        } else {
            self.sign * (1.0 - r2) * (1.0 - r2)
        }
    }
    fn far(&self) -> f64 {
        0.0
    }
}

/// Wraps a closure as a profile.
pub struct FnProfile<F: Fn(&[f64]) -> f64> {
    pub f: F,
    pub far: f64,
}

impl<F: Fn(&[f64]) -> f64> Profile for FnProfile<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn far(&self) -> f64 {
        self.far
    }
}

/// `δu(x, y) = u(x + y) + u(x − y) − 2 u(x)`.
pub fn second_difference(u: &dyn Profile, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let mut p = [0.0; 2];
    let mut m = [0.0; 2];
    for d in 0..n {
        p[d] = x[d] + y[d];
        m[d] = x[d] - y[d];
    }
    u.value(&p[..n]) + u.value(&m[..n]) - 2.0 * u.value(&x[..n])
}

fn check_spacing(u: &dyn Profile, quad: &QuadratureTable) -> Result<()> {
    if let Some(h) = u.spacing() {
        if (h - quad.h).abs() > 1e-12 * quad.h {
            return Err(Error::Usage(format!("grid spacing {h} does not match quadrature spacing {}", quad.h)));
        }
    }
    Ok(())
}

/// Moment matrix `B_u(z) = Σ_j S_j (u(z + jh) − u(z)) + 2 T (u_far − u(z))`.
///
/// `Tr(A B_u(z))` is the discrete `∫ δu(z, y) K(y) dy` for the kernel with
/// coefficient `A`.
pub fn moment(u: &dyn Profile, z: &[f64], quad: &QuadratureTable) -> Result<Sym> {
    check_spacing(u, quad)?;
    let n = quad.n;
    let h = quad.h;
    let u0 = u.value(&z[..n]);
    let mut b = quad.tail.scale(2.0 * (u.far() - u0));
    let mut y = [0.0; 2];
    for (j, w) in quad.offsets() {
        for d in 0..n {
            y[d] = z[d] + j[d] as f64 * h;
        }
        let du = u.value(&y[..n]) - u0;
        if du != 0.0 {
            b = b.add(&w.scale(du));
        }
    }
    Ok(b)
}

/// Pairwise form: per unordered offset `±j`, the scalar weight `Tr S_j` and
/// `δu(z, jh)`, followed by the tail term. Used by the pointwise CS extremals.
fn pair_terms(u: &dyn Profile, z: &[f64], quad: &QuadratureTable) -> (Vec<(f64, f64)>, f64, f64) {
    let n = quad.n;
    let h = quad.h;
    let u0 = u.value(&z[..n]);
    let mut out = Vec::new();
    let mut p = [0.0; 2];
    let mut m = [0.0; 2];
    for (j, w) in quad.offsets() {
        // Keep one representative of each pair.
        if j[0] < 0 || (j[0] == 0 && j[1] < 0) {
            continue;
        }
        for d in 0..n {
            p[d] = z[d] + j[d] as f64 * h;
            m[d] = z[d] - j[d] as f64 * h;
        }
        let delta = u.value(&p[..n]) + u.value(&m[..n]) - 2.0 * u0;
        out.push((w.trace(), delta));
    }
    (out, quad.tail.trace(), 2.0 * (u.far() - u0))
}

/// `[L^{αβ} u(z)](x)`: second differences centred at `z`, coefficients at `x`.
#[allow(clippy::too_many_arguments)]
pub fn apply_linear(
    field: &dyn CoefficientField,
    alpha: usize,
    beta: usize,
    z: &[f64],
    x: &[f64],
    u: &dyn Profile,
    quad: &QuadratureTable,
) -> Result<f64> {
    if alpha >= field.n_alpha() || beta >= field.n_beta() {
        return Err(Error::Usage(format!("pair ({alpha}, {beta}) outside index sets")));
    }
    let b = moment(u, z, quad)?;
    let (a, _) = field.coefficient(alpha, beta, x);
    Ok(a.dot(&b))
}

/// `inf_α sup_β { f^{αβ}(x) + Tr(A^{αβ}(x) b) }`.
pub fn isaacs(field: &dyn CoefficientField, x: &[f64], b: &Sym) -> f64 {
    let mut best = f64::INFINITY;
    for al in 0..field.n_alpha() {
        let mut inner = f64::NEG_INFINITY;
        for be in 0..field.n_beta() {
            let (a, f) = field.coefficient(al, be, x);
            inner = inner.max(f + a.dot(b));
        }
        best = best.min(inner);
    }
    best
}

/// `F(u, x)`.
pub fn evaluate_f(u: &dyn Profile, x: &[f64], field: &dyn CoefficientField, quad: &QuadratureTable) -> Result<f64> {
    let b = moment(u, x, quad)?;
    Ok(isaacs(field, x, &b))
}

/// `F_{φ,x₀}(v, x)`: the φ slot is centred at the fixed point `x₀`.
pub fn evaluate_frozen(
    phi: &dyn Profile,
    x0: &[f64],
    v: &dyn Profile,
    x: &[f64],
    field: &dyn CoefficientField,
    quad: &QuadratureTable,
) -> Result<f64> {
    let bp = moment(phi, x0, quad)?;
    let bv = moment(v, x, quad)?;
    Ok(isaacs(field, x, &bp.add(&bv)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

/// `M^±` of the given class.
///
/// The CS class is optimized pointwise in `y`. The A class uses the eigenvalue
/// closed form on the moment matrix.
pub fn extremal(
    u: &dyn Profile,
    x: &[f64],
    sign: Sign,
    class: KernelClass,
    lambda: f64,
    lam_big: f64,
    quad: &QuadratureTable,
) -> Result<f64> {
    check_spacing(u, quad)?;
    match class {
        KernelClass::A => {
            let b = moment(u, x, quad)?;
            Ok(extremal_a(&b, sign, lambda, lam_big))
        }
        KernelClass::Cs => {
            let (pairs, tail, tail_delta) = pair_terms(u, x, quad);
            let psi = |s: f64| pucci_scalar(s, sign, lambda, lam_big);
            Ok(pairs.iter().map(|&(w, d)| w * psi(d)).sum::<f64>() + tail * psi(tail_delta))
        }
    }
}

/// `M^±` over scalar multipliers only: `sup_{a ∈ [λ, Λ]} a Tr B_u`.
pub fn extremal_cs_scalar(
    u: &dyn Profile,
    x: &[f64],
    sign: Sign,
    lambda: f64,
    lam_big: f64,
    quad: &QuadratureTable,
) -> Result<f64> {
    let b = moment(u, x, quad)?;
    Ok(pucci_scalar(b.trace(), sign, lambda, lam_big))
}

pub fn extremal_a(b: &Sym, sign: Sign, lambda: f64, lam_big: f64) -> f64 {
    match sign {
        Sign::Plus => pucci_sup(b, lambda, lam_big).0,
        Sign::Minus => pucci_inf(b, lambda, lam_big).0,
    }
}

/// `Λ s⁺ − λ s⁻` for `+`, `λ s⁺ − Λ s⁻` for `−`.
#[inline]
pub fn pucci_scalar(s: f64, sign: Sign, lambda: f64, lam_big: f64) -> f64 {
    let (up, down) = match sign {
        Sign::Plus => (lam_big, lambda),
        Sign::Minus => (lambda, lam_big),
    };
    if s > 0.0 {
        up * s
    } else {
        down * s
    }
}

/// Family helper: extremal with the family's own bounds.
pub fn family_extremal(u: &dyn Profile, x: &[f64], sign: Sign, fam: &KernelFamily, quad: &QuadratureTable) -> Result<f64> {
    extremal(u, x, sign, fam.class, fam.lambda, fam.lam_big, quad)
}
