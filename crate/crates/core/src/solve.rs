//! Discrete Dirichlet and obstacle problems solved by monotone nonlinear
//! Gauss-Seidel.
//!
//! Each pointwise update places `u_i` at the exact root of the scalar map
//! `t ↦ F_i(t) − rhs_i` with all other node values frozen. Every `F_i` is
//! nonincreasing in `t` and nondecreasing in the other values, so the damped
//! update (damping `ω ≤ 1`) is a monotone map and the iteration obeys the
//! discrete comparison principle.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use crate::nonlocal::Domain;

use crate::env::{CoefficientField, ScaledField};
use crate::error::{config, Error, Result};
use crate::kernels::{KernelClass, QuadratureTable};
use crate::nonlocal::{
    extremal_a, isaacs, moment, pucci_scalar, Barrier, Exterior, GridFunction, Lattice, Profile, Sign, TestFunction,
};
use crate::sym::{pucci_inf, pucci_sup, Sym};

/// Which operator the problem uses.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    /// `F(u, x/ε)`.
    Plain,
    /// `F_{φ,x₀}(u, x/ε)`.
    Frozen { phi: TestFunction, x0: [f64; 2] },
    /// `M^±` of a class, with no forcing and no environment.
    Extremal { sign: Sign, class: KernelClass, lambda: f64, lam_big: f64 },
}

/// Right-hand side of `F(u) = rhs`.
#[derive(Clone)]
pub enum Rhs {
    Constant(f64),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Rhs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rhs::Constant(c) => write!(f, "Rhs::Constant({c})"),
            Rhs::Function(_) => write!(f, "Rhs::Function"),
        }
    }
}

impl Rhs {
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            Rhs::Constant(c) => *c,
            Rhs::Function(f) => f(x),
        }
    }
}

/// `F(u, x/ε) = rhs` in `domain`, `u = g` outside.
#[derive(Clone)]
pub struct DirichletProblem<'a> {
    pub field: &'a dyn CoefficientField,
    pub op: OperatorKind,
    pub domain: Domain,
    pub rhs: Rhs,
    pub exterior: Exterior,
    pub eps: f64,
    pub quad: Arc<QuadratureTable>,
}

impl<'a> DirichletProblem<'a> {
    pub fn new(
        field: &'a dyn CoefficientField,
        op: OperatorKind,
        domain: Domain,
        rhs: Rhs,
        exterior: Exterior,
        eps: f64,
        quad: Arc<QuadratureTable>,
    ) -> Self {
        DirichletProblem { field, op, domain, rhs, exterior, eps, quad }
    }

    pub fn dimension(&self) -> usize {
        self.quad.n
    }

    pub fn h(&self) -> f64 {
        self.quad.h
    }

    pub fn with_rhs(&self, rhs: Rhs) -> Self {
        DirichletProblem { rhs, ..self.clone() }
    }

    pub fn with_domain(&self, domain: Domain) -> Self {
        DirichletProblem { domain, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.quad.n;
        if self.field.dimension() != n {
            return config(format!(
                "field dimension {} does not match quadrature dimension {n}",
                self.field.dimension()
            ));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return config(format!("eps must be positive, got {}", self.eps));
        }
        // Environment cells have unit size in the fast variable.
        if self.quad.h > 0.25 * self.eps * (1.0 + 1e-12) {
            return config(format!(
                "resolution check failed: h = {} exceeds eps/4 = {}",
                self.quad.h,
                0.25 * self.eps
            ));
        }
        let ext = self.domain.extent(n);
        if self.quad.near_radius() < ext {
            return config(format!(
                "r_out = {} is smaller than the domain extent {ext}",
                self.quad.r_out
            ));
        }
        if let OperatorKind::Extremal { class: KernelClass::Cs, .. } = self.op {
            if !matches!(self.exterior, Exterior::Constant(_)) {
                return config("pointwise CS extremal solves need constant exterior data");
            }
        }
        if let OperatorKind::Extremal { lambda, lam_big, .. } = self.op {
            if !(lambda > 0.0) || lam_big < lambda {
                return config("extremal operator needs 0 < lambda <= lam_big");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Bound on the sup-norm of the pointwise residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor of each pointwise update.
    pub damping: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-8, max_iter: 200_000, damping: 0.8 }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return config(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return config("max_iter must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return config(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        Ok(())
    }
}

/// Solution of a Dirichlet problem with diagnostics.
#[derive(Clone, Debug)]
pub struct Solution {
    pub u: GridFunction,
    pub iterations: usize,
    pub residual: f64,
    pub wall_ms: f64,
}

/// Least discrete supersolution above the zero obstacle.
#[derive(Clone, Debug)]
pub struct ObstacleSolution {
    pub u: GridFunction,
    /// Per free node, in the order of [`ObstacleSolution::free_nodes`].
    pub contact: Vec<bool>,
    pub free_nodes: Vec<[i64; 2]>,
    pub contact_count: usize,
    pub contact_fraction: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wall_ms: f64,
}

enum NodeOp {
    Isaacs {
        /// Per node, per pair: `(A, f)`.
        coef: Vec<(Sym, f64)>,
        /// Per node, per pair: `Tr(A D)`.
        diag: Vec<f64>,
        n_alpha: usize,
        n_beta: usize,
    },
    ExtremalA { sign: Sign, lambda: f64, lam_big: f64 },
    ExtremalCs {
        sign: Sign,
        lambda: f64,
        lam_big: f64,
        /// Per node: `(weight, plus side, minus side)` with `u32::MAX` for exterior.
        pairs: Vec<Vec<(f64, u32, u32)>>,
        /// Weight of pairs lying wholly outside, tail included.
        w_out: Vec<f64>,
        g: f64,
    },
}

/// Precomputed discrete operator on the free nodes of a domain.
pub(crate) struct Discretization {
    n: usize,
    lattice: Lattice,
    free_local: Vec<usize>,
    free_glob: Vec<[i64; 2]>,
    jw: i64,
    side: i64,
    w: Vec<f64>,
    diag: Sym,
    /// `Φ + E_i`: frozen moment plus the exterior contribution.
    base: Vec<Sym>,
    rhs: Vec<f64>,
    node_op: NodeOp,
    exterior_values: Vec<f64>,
    domain: Domain,
    exterior: Exterior,
}

const OUTSIDE: u32 = u32::MAX;

impl Discretization {
    pub(crate) fn new(p: &DirichletProblem<'_>) -> Result<Self> {
        p.validate()?;
        let n = p.quad.n;
        let ncomp = Sym::ncomp(n);
        let quad = &*p.quad;
        let lattice = Lattice::covering(&p.domain, n, quad.h);
        let mut free_local = Vec::new();
        let mut free_glob = Vec::new();
        let mut exterior_values = vec![0.0; lattice.len()];
        for i in 0..lattice.len() {
            let x = lattice.point(i);
            if p.domain.contains(&x[..n], n) {
                free_local.push(i);
                free_glob.push(lattice.global(i));
            } else {
                exterior_values[i] = p.exterior.value(&x[..n]);
            }
        }
        if free_local.is_empty() {
            return config("domain contains no grid nodes");
        }
        let jw = quad.half_width as i64;
        let side = quad.side() as i64;
        let mut w = vec![0.0; quad.weights.len() * ncomp];
        for (k, s) in quad.weights.iter().enumerate() {
            w[k * ncomp..(k + 1) * ncomp].copy_from_slice(&s.a[..ncomp]);
        }
        let nf = free_local.len();
        let mut d = Discretization {
            n,
            lattice,
            free_local,
            free_glob,
            jw,
            side,
            w,
            diag: quad.total,
            base: vec![Sym::zero(n); nf],
            rhs: vec![0.0; nf],
            node_op: NodeOp::ExtremalA { sign: Sign::Plus, lambda: 1.0, lam_big: 1.0 },
            exterior_values,
            domain: p.domain,
            exterior: p.exterior.clone(),
        };
        d.check_contiguous();
        // Exterior contribution E_i.
        match &p.exterior {
            Exterior::Constant(g) => {
                let ones = vec![1.0; nf];
                for i in 0..nf {
                    let inner = d.coupling(i, &ones);
                    d.base[i] = quad.total.sub(&inner).scale(*g);
                }
            }
            Exterior::Function { f, far } => {
                for i in 0..nf {
                    let m = d.free_glob[i];
                    let mut e = quad.tail.scale(2.0 * far);
                    for (j, s) in quad.offsets() {
                        let mm = [m[0] + j[0], m[1] + j[1]];
                        if d.is_free(mm) {
                            continue;
                        }
                        let x = [mm[0] as f64 * quad.h, mm[1] as f64 * quad.h];
                        e = e.add(&s.scale(f(&x[..n])));
                    }
                    d.base[i] = e;
                }
            }
        }
        let scaled = ScaledField { inner: p.field, eps: p.eps };
        for i in 0..nf {
            let x = d.point(i);
            d.rhs[i] = p.rhs.at(&x[..n]);
        }
        d.node_op = match &p.op {
            OperatorKind::Plain | OperatorKind::Frozen { .. } => {
                if let OperatorKind::Frozen { phi, x0 } = &p.op {
                    let phi_m = moment(phi, &x0[..n], quad)?;
                    for b in &mut d.base {
                        *b = b.add(&phi_m);
                    }
                }
                let (na, nb) = (p.field.n_alpha(), p.field.n_beta());
                let mut coef = Vec::with_capacity(nf * na * nb);
                let mut diag = Vec::with_capacity(nf * na * nb);
                for i in 0..nf {
                    let x = d.point(i);
                    for al in 0..na {
                        for be in 0..nb {
                            let (a, f) = scaled.coefficient(al, be, &x[..n]);
                            let dd = a.dot(&quad.total);
                            if !(dd > 0.0) {
                                return Err(Error::Domain(format!("degenerate coefficient at node {i}: Tr(A D) = {dd}")));
                            }
                            coef.push((a, f));
                            diag.push(dd);
                        }
                    }
                }
                NodeOp::Isaacs { coef, diag, n_alpha: na, n_beta: nb }
            }
            OperatorKind::Extremal { sign, class: KernelClass::A, lambda, lam_big } => {
                NodeOp::ExtremalA { sign: *sign, lambda: *lambda, lam_big: *lam_big }
            }
            OperatorKind::Extremal { sign, class: KernelClass::Cs, lambda, lam_big } => {
                let g = p.exterior.far();
                let mut pairs = Vec::with_capacity(nf);
                let mut w_out = Vec::with_capacity(nf);
                for i in 0..nf {
                    let m = d.free_glob[i];
                    let mut list = Vec::new();
                    let mut out = quad.tail.trace();
                    for (j, s) in quad.offsets() {
                        if j[0] < 0 || (j[0] == 0 && j[1] < 0) {
                            continue;
                        }
                        let wt = s.trace();
                        let kp = d.free_index([m[0] + j[0], m[1] + j[1]]);
                        let km = d.free_index([m[0] - j[0], m[1] - j[1]]);
                        if kp.is_none() && km.is_none() {
                            out += wt;
                        } else {
                            list.push((wt, kp.map_or(OUTSIDE, |k| k as u32), km.map_or(OUTSIDE, |k| k as u32)));
                        }
                    }
                    pairs.push(list);
                    w_out.push(out);
                }
                NodeOp::ExtremalCs { sign: *sign, lambda: *lambda, lam_big: *lam_big, pairs, w_out, g }
            }
        };
        Ok(d)
    }

    fn check_contiguous(&self) {
        if self.n == 1 {
            debug_assert!(self.free_glob.windows(2).all(|w| w[1][0] == w[0][0] + 1));
        }
    }

    fn point(&self, i: usize) -> [f64; 2] {
        let m = self.free_glob[i];
        [m[0] as f64 * self.lattice.h, m[1] as f64 * self.lattice.h]
    }

    fn free_index(&self, m: [i64; 2]) -> Option<usize> {
        let loc = self.lattice.local(m)?;
        self.free_local.binary_search(&loc).ok()
    }

    fn is_free(&self, m: [i64; 2]) -> bool {
        self.free_index(m).is_some()
    }

    pub(crate) fn len(&self) -> usize {
        self.free_local.len()
    }

    /// `Σ_{k free} S_{m_k − m_i} u_k`.
    #[inline]
    fn coupling(&self, i: usize, u: &[f64]) -> Sym {
        if self.n == 1 {
            // Free nodes are contiguous in 1D, so the weights form a slice.
            let start = (self.jw - i as i64) as usize;
            let ws = &self.w[start..start + u.len()];
            let mut acc = 0.0;
            for (a, b) in ws.iter().zip(u) {
                acc += a * b;
            }
            return Sym::scalar(acc);
        }
        let mi = self.free_glob[i];
        let mut acc = [0.0; 3];
        for (k, mk) in self.free_glob.iter().enumerate() {
            let idx = ((mk[0] - mi[0] + self.jw) * self.side + (mk[1] - mi[1] + self.jw)) as usize * 3;
            let uk = u[k];
            acc[0] += self.w[idx] * uk;
            acc[1] += self.w[idx + 1] * uk;
            acc[2] += self.w[idx + 2] * uk;
        }
        Sym::new2(acc[0], acc[1], acc[2])
    }

    /// `F_i(t)` with the coupling of the other nodes frozen in `c`.
    fn node_value(&self, i: usize, c: &Sym, t: f64, u: &[f64]) -> f64 {
        match &self.node_op {
            NodeOp::Isaacs { coef, diag, n_alpha, n_beta } => {
                let np = n_alpha * n_beta;
                let mut best = f64::INFINITY;
                for al in 0..*n_alpha {
                    let mut inner = f64::NEG_INFINITY;
                    for be in 0..*n_beta {
                        let k = i * np + al * n_beta + be;
                        let (a, f) = &coef[k];
                        inner = inner.max(f + a.dot(c) - diag[k] * t);
                    }
                    best = best.min(inner);
                }
                best
            }
            NodeOp::ExtremalA { sign, lambda, lam_big } => {
                extremal_a(&c.sub(&self.diag.scale(t)), *sign, *lambda, *lam_big)
            }
            NodeOp::ExtremalCs { sign, lambda, lam_big, pairs, w_out, g } => {
                self.cs_value(&pairs[i], w_out[i], *g, u, t, *sign, *lambda, *lam_big).0
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn cs_value(
        &self,
        pairs: &[(f64, u32, u32)],
        w_out: f64,
        g: f64,
        u: &[f64],
        t: f64,
        sign: Sign,
        lambda: f64,
        lam_big: f64,
    ) -> (f64, f64) {
        let val = |k: u32| if k == OUTSIDE { g } else { u[k as usize] };
        let (up, down) = match sign {
            Sign::Plus => (lam_big, lambda),
            Sign::Minus => (lambda, lam_big),
        };
        let mut v = 0.0;
        let mut slope = 0.0;
        for &(w, kp, km) in pairs {
            let s = val(kp) + val(km) - 2.0 * t;
            v += w * pucci_scalar(s, sign, lambda, lam_big);
            slope -= 2.0 * w * if s > 0.0 { up } else { down };
        }
        let s = 2.0 * (g - t);
        v += w_out * pucci_scalar(s, sign, lambda, lam_big);
        slope -= 2.0 * w_out * if s > 0.0 { up } else { down };
        (v, slope)
    }

    /// Root `t*` of `F_i(t) = r`.
    fn node_root(&self, i: usize, c: &Sym, r: f64, u: &[f64], t0: f64) -> f64 {
        match &self.node_op {
            NodeOp::Isaacs { coef, diag, n_alpha, n_beta } => {
                // Each branch is affine and decreasing in t, so the root of the
                // min-max is the min-max of the branch roots.
                let np = n_alpha * n_beta;
                let mut best = f64::INFINITY;
                for al in 0..*n_alpha {
                    let mut inner = f64::NEG_INFINITY;
                    for be in 0..*n_beta {
                        let k = i * np + al * n_beta + be;
                        let (a, f) = &coef[k];
                        inner = inner.max((f + a.dot(c) - r) / diag[k]);
                    }
                    best = best.min(inner);
                }
                best
            }
            NodeOp::ExtremalA { sign, lambda, lam_big } => {
                if self.n == 1 {
                    // ψ(c − D t) = r with ψ piecewise linear and increasing.
                    let s = pucci_inverse(r, *sign, *lambda, *lam_big);
                    return (c.a[0] - s) / self.diag.a[0];
                }
                let (sign, lambda, lam_big) = (*sign, *lambda, *lam_big);
                let diag = self.diag;
                newton_root(t0, |t| {
                    let b = c.sub(&diag.scale(t));
                    let (v, a) = match sign {
                        Sign::Plus => pucci_sup(&b, lambda, lam_big),
                        Sign::Minus => pucci_inf(&b, lambda, lam_big),
                    };
                    (v - r, -a.dot(&diag))
                })
            }
            NodeOp::ExtremalCs { sign, lambda, lam_big, pairs, w_out, g } => newton_root(t0, |t| {
                let (v, s) = self.cs_value(&pairs[i], w_out[i], *g, u, t, *sign, *lambda, *lam_big);
                (v - r, s)
            }),
        }
    }

    /// Coupling moment used by the node equation: `base_i + Σ S u_k`, with
    /// the diagonal contribution of `u_i` itself removed.
    #[inline]
    fn frozen_moment(&self, i: usize, u: &[f64]) -> Sym {
        match self.node_op {
            NodeOp::ExtremalCs { .. } => Sym::zero(self.n),
            _ => self.base[i].add(&self.coupling(i, u)),
        }
    }

    pub(crate) fn residuals(&self, u: &[f64], obstacle: bool) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let c = self.frozen_moment(i, u);
                let r = self.node_value(i, &c, u[i], u) - self.rhs[i];
                if obstacle {
                    r.max(-u[i])
                } else {
                    r
                }
            })
            .collect()
    }

    pub(crate) fn operator_values(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let c = self.frozen_moment(i, u);
                self.node_value(i, &c, u[i], u)
            })
            .collect()
    }

    fn iterate(&self, u: &mut [f64], s: &SolverSettings, obstacle: bool) -> Result<(usize, f64)> {
        s.validate()?;
        let mut history = Vec::new();
        let omega = s.damping;
        for it in 1..=s.max_iter {
            let mut maxr: f64 = 0.0;
            for i in 0..u.len() {
                let c = self.frozen_moment(i, u);
                let ui = u[i];
                let fi = self.node_value(i, &c, ui, u) - self.rhs[i];
                let ri = if obstacle { fi.max(-ui) } else { fi };
                maxr = maxr.max(ri.abs());
                let t = self.node_root(i, &c, self.rhs[i], u, ui);
                if obstacle && t <= 0.0 {
                    // Exact projection onto the obstacle.
                    u[i] = 0.0;
                    continue;
                }
                u[i] = ui + omega * (t - ui);
            }
            history.push(maxr);
            if !maxr.is_finite() {
                return Err(Error::NonConvergence { iterations: it, residual: maxr, history });
            }
            if maxr <= s.tol {
                let r = self.residuals(u, obstacle).iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if r <= s.tol {
                    return Ok((it, r));
                }
            }
        }
        let r = self.residuals(u, obstacle).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Err(Error::NonConvergence { iterations: s.max_iter, residual: r, history })
    }

    fn initial(&self, init: Option<&GridFunction>) -> Vec<f64> {
        match init {
            Some(g) => self.free_glob.iter().map(|m| g.node_value(*m)).collect(),
            None => vec![0.0; self.len()],
        }
    }

    pub(crate) fn to_grid(&self, u: &[f64]) -> GridFunction {
        let mut values = self.exterior_values.clone();
        for (k, &loc) in self.free_local.iter().enumerate() {
            values[loc] = u[k];
        }
        GridFunction { lattice: self.lattice, values, domain: Some(self.domain), exterior: self.exterior.clone() }
    }

    pub(crate) fn free_values(&self, g: &GridFunction) -> Vec<f64> {
        self.free_glob.iter().map(|m| g.node_value(*m)).collect()
    }

    pub(crate) fn free_glob(&self) -> &[[i64; 2]] {
        &self.free_glob
    }
}

fn pucci_inverse(r: f64, sign: Sign, lambda: f64, lam_big: f64) -> f64 {
    let (up, down) = match sign {
        Sign::Plus => (lam_big, lambda),
        Sign::Minus => (lambda, lam_big),
    };
    if r > 0.0 {
        r / up
    } else {
        r / down
    }
}

/// Newton iteration for a decreasing convex or concave scalar map.
///
/// After the first step the iterates are monotone, so the loop terminates on
/// piecewise linear maps; the cap only guards against round-off cycling.
fn newton_root(t0: f64, g: impl Fn(f64) -> (f64, f64)) -> f64 {
    let mut t = t0;
    for _ in 0..200 {
        let (v, s) = g(t);
        if v == 0.0 || !(s < 0.0) {
            break;
        }
        let next = t - v / s;
        if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) {
            t = next;
            break;
        }
        t = next;
    }
    t
}

/// Solves `F(u, x/ε) = rhs` in the domain with exterior data.
pub fn solve_dirichlet(p: &DirichletProblem<'_>, s: &SolverSettings) -> Result<Solution> {
    solve_dirichlet_from(p, s, None)
}

pub fn solve_dirichlet_from(p: &DirichletProblem<'_>, s: &SolverSettings, init: Option<&GridFunction>) -> Result<Solution> {
    let start = Instant::now();
    let d = Discretization::new(p)?;
    let mut u = d.initial(init);
    let (iterations, residual) = d.iterate(&mut u, s, false)?;
    Ok(Solution { u: d.to_grid(&u), iterations, residual, wall_ms: start.elapsed().as_secs_f64() * 1e3 })
}

/// Least supersolution `U ≥ 0` of `F(U) ≤ rhs`, via projected iteration.
///
/// Starting from the obstacle the iterates increase monotonically, so nodes
/// of the exact contact set stay exactly zero.
pub fn solve_obstacle(p: &DirichletProblem<'_>, s: &SolverSettings) -> Result<ObstacleSolution> {
    let start = Instant::now();
    let d = Discretization::new(p)?;
    let mut u = vec![0.0; d.len()];
    let (iterations, residual) = d.iterate(&mut u, s, true)?;
    let contact: Vec<bool> = u.iter().map(|&v| v == 0.0).collect();
    let contact_count = contact.iter().filter(|&&c| c).count();
    Ok(ObstacleSolution {
        u: d.to_grid(&u),
        contact_fraction: contact_count as f64 / contact.len() as f64,
        contact,
        free_nodes: d.free_glob().to_vec(),
        contact_count,
        iterations,
        residual,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// `F(u) − rhs` on domain nodes, zero elsewhere. Exterior values come from the problem.
pub fn residual_field(p: &DirichletProblem<'_>, u: &GridFunction) -> Result<GridFunction> {
    let d = Discretization::new(p)?;
    let r = d.residuals(&d.free_values(u), false);
    let mut g = d.to_grid(&r);
    for (i, v) in g.values.iter_mut().enumerate() {
        if !d.free_local.contains(&i) {
            *v = 0.0;
        }
    }
    g.exterior = Exterior::Constant(0.0);
    Ok(g)
}

/// Operator values `F(u)(x_i)` at the free nodes, in lattice order.
pub fn operator_values(p: &DirichletProblem<'_>, u: &GridFunction) -> Result<Vec<([i64; 2], f64)>> {
    let d = Discretization::new(p)?;
    let v = d.operator_values(&d.free_values(u));
    Ok(d.free_glob().iter().copied().zip(v).collect())
}

/// Free node coordinates of the problem's domain.
pub fn free_nodes(p: &DirichletProblem<'_>) -> Result<Vec<[i64; 2]>> {
    Ok(Discretization::new(p)?.free_glob().to_vec())
}

/// Value of the problem's operator on a profile at `x`, with the profile's
/// own data outside the domain.
pub fn operator_on_profile(p: &DirichletProblem<'_>, u: &dyn Profile, x: &[f64]) -> Result<f64> {
    let n = p.quad.n;
    let b = moment(u, x, &p.quad)?;
    Ok(match &p.op {
        OperatorKind::Plain => isaacs(&ScaledField { inner: p.field, eps: p.eps }, &x[..n], &b),
        OperatorKind::Frozen { phi, x0 } => {
            let bp = moment(phi, &x0[..n], &p.quad)?;
            isaacs(&ScaledField { inner: p.field, eps: p.eps }, &x[..n], &bp.add(&b))
        }
        OperatorKind::Extremal { sign, class, lambda, lam_big } => {
            crate::nonlocal::extremal(u, x, *sign, *class, *lambda, *lam_big, &p.quad)?
        }
    })
}

/// `l₀ = min_x F(P⁺)(x)` over domain nodes.
pub fn barrier_threshold(p: &DirichletProblem<'_>) -> Result<f64> {
    let bar = Barrier::plus(&p.domain, p.quad.n);
    let mut m = f64::INFINITY;
    for g in free_nodes(p)? {
        let x = [g[0] as f64 * p.h(), g[1] as f64 * p.h()];
        m = m.min(operator_on_profile(p, &bar, &x)?);
    }
    Ok(m)
}

/// `max_x F(P⁻)(x)` over domain nodes.
pub fn dual_barrier_threshold(p: &DirichletProblem<'_>) -> Result<f64> {
    let bar = Barrier::minus(&p.domain, p.quad.n);
    let mut m = f64::NEG_INFINITY;
    for g in free_nodes(p)? {
        let x = [g[0] as f64 * p.h(), g[1] as f64 * p.h()];
        m = m.max(operator_on_profile(p, &bar, &x)?);
    }
    Ok(m)
}

/// Whether `P⁺` is a subsolution: `F(P⁺) ≥ l` at every domain node.
pub fn barrier_check(p: &DirichletProblem<'_>, l: f64) -> Result<bool> {
    Ok(l <= barrier_threshold(p)?)
}

/// Whether `P⁻` is a supersolution: `F(P⁻) ≤ l` at every domain node.
pub fn dual_barrier_check(p: &DirichletProblem<'_>, l: f64) -> Result<bool> {
    Ok(dual_barrier_threshold(p)? <= l)
}
