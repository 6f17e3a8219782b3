//! Kernel classes and quadrature weights for singular second-difference integrals.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::env::CoefficientField;
use crate::error::{config, Error, Result};
use crate::sym::Sym;

/// Ellipticity class of the kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelClass {
    /// `a(x) |y|^{-n-σ}` with `λ ≤ a ≤ Λ`.
    Cs,
    /// `yᵀ A(x) y / |y|^{n+σ+2}` with `A` admissible.
    A,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelFamily {
    pub class: KernelClass,
    pub dimension: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub lam_big: f64,
}

impl KernelFamily {
    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)?;
        if self.dimension != 1 && self.dimension != 2 {
            return config(format!("dimension must be 1 or 2, got {}", self.dimension));
        }
        if !(self.lambda > 0.0) || !(self.lam_big >= self.lambda) {
            return config(format!("need 0 < lambda <= lam_big, got {} and {}", self.lambda, self.lam_big));
        }
        Ok(())
    }

    /// Radial envelope `|y|^{-n-σ}`.
    pub fn envelope(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        r2.powf(-0.5 * (self.dimension as f64 + self.sigma))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 2.0 {
        Ok(())
    } else {
        config(format!("sigma must lie strictly inside (0, 2), got {sigma}"))
    }
}

/// `K^{αβ}(x, y)` read from the coefficient field at `x`.
pub fn kernel_value(
    fam: &KernelFamily,
    field: &dyn CoefficientField,
    alpha: usize,
    beta: usize,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    let n = fam.dimension;
    if y.len() < n || x.len() < n {
        return Err(Error::Usage("point or offset has too few coordinates".into()));
    }
    let y = &y[..n];
    let r2: f64 = y.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Err(Error::Domain("kernel is singular at y = 0".into()));
    }
    if alpha >= field.n_alpha() || beta >= field.n_beta() {
        return Err(Error::Usage(format!("pair ({alpha}, {beta}) outside index sets")));
    }
    let (a, _) = field.coefficient(alpha, beta, x);
    let nf = n as f64;
    Ok(match fam.class {
        KernelClass::A => a.quad_form(y) / r2.powf(0.5 * (nf + fam.sigma + 2.0)),
        KernelClass::Cs => a.trace() / nf * r2.powf(-0.5 * (nf + fam.sigma)),
    })
}

/// Precomputed weights on the lattice `h Z^n` truncated at `R_out`.
///
/// Every weight is a moment matrix `∫ yyᵀ |y|^{-n-σ-2} dy` over a cell, so the
/// linear operator with coefficient `A` is `Tr(A B_u)` with
/// `B_u(x) = Σ_{j≠0} S_j (u(x + jh) − u(x)) + 2 T (u_far − u(x))`.
/// The CS class with multiplier `a` is the case `A = a Id`.
#[derive(Clone, Debug)]
pub struct QuadratureTable {
    pub n: usize,
    pub sigma: f64,
    pub h: f64,
    pub r_out: f64,
    /// `J`: offsets run over `{-J..J}^n`.
    pub half_width: usize,
    /// Exact cell integrals `W_j` of `yyᵀ/|y|^{n+σ+2}`; the origin cell entry is zero.
    pub cells: Vec<Sym>,
    /// `S_j = 2 W̃_j` plus origin compensation, where `W̃_j` weights the cell
    /// integral by `|y|²/|jh|²` so each cell reproduces its second moment.
    pub weights: Vec<Sym>,
    /// Origin compensation per stencil direction, already divided by `h²`.
    pub origin: Vec<([i64; 2], Sym)>,
    /// Moment of the region outside the near-field box (both sides).
    pub tail: Sym,
    /// `D = Σ_{j≠0} S_j + 2 T`.
    pub total: Sym,
}

impl QuadratureTable {
    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    /// Effective outer radius `(J + 1/2) h` of the near field.
    pub fn near_radius(&self) -> f64 {
        (self.half_width as f64 + 0.5) * self.h
    }

    pub fn index(&self, j: &[i64]) -> Option<usize> {
        let jw = self.half_width as i64;
        if j.iter().take(self.n).any(|&v| v < -jw || v > jw) {
            return None;
        }
        Some(if self.n == 1 {
            (j[0] + jw) as usize
        } else {
            (j[0] + jw) as usize * self.side() + (j[1] + jw) as usize
        })
    }

    pub fn weight(&self, j: &[i64]) -> Option<&Sym> {
        self.index(j).map(|i| &self.weights[i])
    }

    /// All nonzero offsets with their pair weight.
    pub fn offsets(&self) -> impl Iterator<Item = ([i64; 2], &Sym)> + '_ {
        let jw = self.half_width as i64;
        let side = self.side() as i64;
        self.weights.iter().enumerate().filter_map(move |(i, w)| {
            let j = if self.n == 1 {
                [i as i64 - jw, 0]
            } else {
                [i as i64 / side - jw, i as i64 % side - jw]
            };
            if j == [0, 0] {
                None
            } else {
                Some((j, w))
            }
        })
    }
}

/// Builds the table for `fam` at spacing `h` and truncation `r_out`.
pub fn build_quadrature(fam: &KernelFamily, h: f64, r_out: f64) -> Result<QuadratureTable> {
    check_sigma(fam.sigma)?;
    build_table(fam.dimension, fam.sigma, h, r_out)
}

fn build_table(n: usize, sigma: f64, h: f64, r_out: f64) -> Result<QuadratureTable> {
    check_sigma(sigma)?;
    if !(h > 0.0) || !(r_out > h) || !r_out.is_finite() {
        return config(format!("need 0 < h < r_out, got h = {h}, r_out = {r_out}"));
    }
    let jw = (r_out / h).round() as usize;
    match n {
        1 => Ok(build_1d(sigma, h, r_out, jw)),
        2 => {
            if jw > 1024 {
                return config(format!("2D near field of half-width {jw} cells is too large; reduce r_out / h"));
            }
            Ok(build_2d(sigma, h, r_out, jw))
        }
        _ => config(format!("dimension must be 1 or 2, got {n}")),
    }
}

fn build_1d(sigma: f64, h: f64, r_out: f64, jw: usize) -> QuadratureTable {
    let side = 2 * jw + 1;
    let mut cells = vec![Sym::zero(1); side];
    let mut matched = vec![Sym::zero(1); side];
    for i in 0..side {
        let j = (i as i64 - jw as i64).unsigned_abs() as f64;
        if j > 0.0 {
            let a = (j - 0.5) * h;
            let b = (j + 0.5) * h;
            cells[i] = Sym::scalar((a.powf(-sigma) - b.powf(-sigma)) / sigma);
            let second = (b.powf(2.0 - sigma) - a.powf(2.0 - sigma)) / (2.0 - sigma);
            matched[i] = Sym::scalar(second / (j * h).powi(2));
        }
    }
    let comp = 2.0 * (0.5 * h).powf(2.0 - sigma) / (2.0 - sigma) / (h * h);
    let origin = vec![([1, 0], Sym::scalar(comp))];
    let r = (jw as f64 + 0.5) * h;
    let tail = Sym::scalar(2.0 * r.powf(-sigma) / sigma);
    finish(1, sigma, h, r_out, jw, cells, matched, origin, tail)
}

fn build_2d(sigma: f64, h: f64, r_out: f64, jw: usize) -> QuadratureTable {
    let side = 2 * jw + 1;
    let p = 4.0 + sigma;
    // Raw moments, then the same weighted by |y|² for second-moment matching.
    let integrand = |y0: f64, y1: f64| -> [f64; 6] {
        let r2 = y0 * y0 + y1 * y1;
        let s = r2.powf(-0.5 * p);
        let t = s * r2;
        [y0 * y0 * s, y0 * y1 * s, y1 * y1 * s, y0 * y0 * t, y0 * y1 * t, y1 * y1 * t]
    };
    let g8 = gauss_legendre(8);
    let g6 = gauss_legendre(6);
    let g3 = gauss_legendre(3);
    let g2 = gauss_legendre(2);
    let mut cells = vec![Sym::zero(2); side * side];
    let mut matched = vec![Sym::zero(2); side * side];
    for i0 in 0..side {
        for i1 in 0..side {
            let j0 = i0 as i64 - jw as i64;
            let j1 = i1 as i64 - jw as i64;
            let m = j0.abs().max(j1.abs());
            // Fill one of each ±j pair and mirror, so S_{-j} = S_j bit for bit.
            if m == 0 || j0 < 0 || (j0 == 0 && j1 < 0) {
                continue;
            }
            let mirror = (side - 1 - i0) * side + (side - 1 - i1);
            let (rule, sub) = match m {
                1..=2 => (&g8, 4),
                3..=6 => (&g6, 1),
                7..=20 => (&g3, 1),
                _ => (&g2, 1),
            };
            let x0 = (j0 as f64 - 0.5) * h;
            let y0 = (j1 as f64 - 0.5) * h;
            let hs = h / sub as f64;
            let mut acc = [0.0; 6];
            for s0 in 0..sub {
                for s1 in 0..sub {
                    let ax = x0 + s0 as f64 * hs;
                    let ay = y0 + s1 as f64 * hs;
                    for (u, wu) in rule {
                        for (v, wv) in rule {
                            let f = integrand(ax + 0.5 * hs * (u + 1.0), ay + 0.5 * hs * (v + 1.0));
                            let w = wu * wv * 0.25 * hs * hs;
                            for k in 0..6 {
                                acc[k] += w * f[k];
                            }
                        }
                    }
                }
            }
            let c2 = ((j0 * j0 + j1 * j1) as f64) * h * h;
            for idx in [i0 * side + i1, mirror] {
                cells[idx] = Sym::new2(acc[0], acc[1], acc[2]);
                matched[idx] = Sym::new2(acc[3], acc[4], acc[5]).scale(1.0 / c2);
            }
        }
    }
    // Fourth moments of the origin cell in polar form.
    let half = 0.5 * h;
    let i40 = polar_integral(|c, _| c.powi(4), |rho| rho.powf(2.0 - sigma) / (2.0 - sigma), half);
    let i22 = polar_integral(|c, s| c * c * s * s, |rho| rho.powf(2.0 - sigma) / (2.0 - sigma), half);
    let h2 = h * h;
    let origin = vec![
        ([1, 0], Sym::new2(i40 - i22, 0.0, 0.0).scale(1.0 / h2)),
        ([0, 1], Sym::new2(0.0, 0.0, i40 - i22).scale(1.0 / h2)),
        ([1, 1], Sym::new2(1.0, 1.0, 1.0).scale(0.5 * i22 / h2)),
        ([1, -1], Sym::new2(1.0, -1.0, 1.0).scale(0.5 * i22 / h2)),
    ];
    let r = (jw as f64 + 0.5) * h;
    let t = 0.5 * polar_integral(|_, _| 1.0, |rho| rho.powf(-sigma) / sigma, r);
    finish(2, sigma, h, r_out, jw, cells, matched, origin, Sym::new2(t, 0.0, t))
}

/// `∫_0^{2π} g(cos θ, sin θ) F(ρ(θ)) dθ` with `ρ` the radial distance to the
/// boundary of the square of half-width `half`.
fn polar_integral(g: impl Fn(f64, f64) -> f64, radial: impl Fn(f64) -> f64, half: f64) -> f64 {
    let rule = gauss_legendre(24);
    let q = std::f64::consts::FRAC_PI_4;
    let mut acc = 0.0;
    for k in 0..8 {
        let a = k as f64 * q;
        for (u, w) in &rule {
            let th = a + 0.5 * q * (u + 1.0);
            let (s, c) = th.sin_cos();
            let rho = half / c.abs().max(s.abs());
            acc += 0.5 * q * w * g(c, s) * radial(rho);
        }
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn finish(
    n: usize,
    sigma: f64,
    h: f64,
    r_out: f64,
    jw: usize,
    cells: Vec<Sym>,
    matched: Vec<Sym>,
    origin: Vec<([i64; 2], Sym)>,
    tail: Sym,
) -> QuadratureTable {
    let mut t = QuadratureTable {
        n,
        sigma,
        h,
        r_out,
        half_width: jw,
        weights: matched.iter().map(|w| w.scale(2.0)).collect(),
        cells,
        origin: origin.clone(),
        tail,
        total: Sym::zero(n),
    };
    for (d, c) in &origin {
        for sgn in [1, -1] {
            let j = [sgn * d[0], sgn * d[1]];
            let i = t.index(&j).expect("stencil inside near field");
            t.weights[i] = t.weights[i].add(c);
        }
    }
    let mut total = tail.scale(2.0);
    for (_, w) in t.offsets() {
        total = total.add(w);
    }
    t.total = total;
    t
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

type CacheKey = (usize, u64, u64, u64);

/// Shared, immutable tables keyed by `(n, σ, h, r_out)`.
pub fn cached_quadrature(n: usize, sigma: f64, h: f64, r_out: f64) -> Result<Arc<QuadratureTable>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<QuadratureTable>>>> = OnceLock::new();
    let key = (n, sigma.to_bits(), h.to_bits(), r_out.to_bits());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("quadrature cache poisoned").get(&key) {
        return Ok(t.clone());
    }
    let t = Arc::new(build_table(n, sigma, h, r_out)?);
    cache.lock().expect("quadrature cache poisoned").insert(key, t.clone());
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(n: usize, sigma: f64) -> KernelFamily {
        KernelFamily { class: KernelClass::A, dimension: n, sigma, lambda: 1.0, lam_big: 2.0 }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let r = gauss_legendre(5);
        let s: f64 = r.iter().map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn bad_sigma_and_spacing_rejected() {
        for s in [0.0, 2.0, -1.0, 2.5] {
            assert!(matches!(build_quadrature(&fam(1, s), 0.1, 1.0), Err(Error::Config(_))));
        }
        assert!(matches!(build_quadrature(&fam(1, 1.0), 0.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(build_quadrature(&fam(1, 1.0), 2.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn weights_symmetric_and_nonnegative() {
        for n in [1, 2] {
            let t = build_quadrature(&fam(n, 0.7), 0.125, 2.0).unwrap();
            for (j, w) in t.offsets() {
                let m = t.weight(&[-j[0], -j[1]]).unwrap();
                assert_eq!(w, m);
                let ev = w.eigenvalues();
                assert!(ev[0] >= 0.0, "{j:?} {w:?}");
            }
        }
    }

    #[test]
    fn origin_compensation_reproduces_fourth_moments() {
        // Σ_d C_d (dᵀ P d) h² must equal ∫_{cell0} (yᵀPy) yyᵀ |y|^{-4-σ}.
        let sigma = 1.3;
        let h = 0.25;
        let t = build_quadrature(&fam(2, sigma), h, 1.0).unwrap();
        let p = Sym::new2(0.7, -0.4, 1.9);
        let mut lhs = Sym::zero(2);
        for (d, c) in &t.origin {
            let y = [d[0] as f64 * h, d[1] as f64 * h];
            lhs = lhs.add(&c.scale(p.quad_form(&y)));
        }
        // Independent oracle: tensor midpoint sums over the origin cell. The
        // integrand behaves like |y|^{-σ}, so the error is c·ds^{2-σ} to
        // leading order; one Richardson step removes it.
        let midpoint = |m: usize| {
            let mut acc = [0.0; 3];
            let ds = h / m as f64;
            for a in 0..m {
                for b in 0..m {
                    let y0 = -0.5 * h + (a as f64 + 0.5) * ds;
                    let y1 = -0.5 * h + (b as f64 + 0.5) * ds;
                    let r2 = y0 * y0 + y1 * y1;
                    let k = ds * ds * p.quad_form(&[y0, y1]) * r2.powf(-0.5 * (4.0 + sigma));
                    acc[0] += k * y0 * y0;
                    acc[1] += k * y0 * y1;
                    acc[2] += k * y1 * y1;
                }
            }
            acc
        };
        let (coarse, fine) = (midpoint(600), midpoint(1200));
        let g = 2f64.powf(2.0 - sigma);
        let rhs: Vec<f64> = (0..3).map(|k| (g * fine[k] - coarse[k]) / (g - 1.0)).collect();
        for k in 0..3 {
            assert!((lhs.a[k] - rhs[k]).abs() < 1e-4 * (1.0 + rhs[k].abs()), "{k}: {} vs {}", lhs.a[k], rhs[k]);
        }
    }
}
