//! Small symmetric matrices in dimension one or two.

use serde::{Deserialize, Serialize};

/// Symmetric matrix of size 1 or 2.
///
/// In dimension 1 only `a[0]` is used. In dimension 2 the entries are
/// `[m00, m01, m11]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym {
    pub n: usize,
    pub a: [f64; 3],
}

impl Sym {
    pub fn zero(n: usize) -> Self {
        Sym { n, a: [0.0; 3] }
    }

    pub fn scalar(v: f64) -> Self {
        Sym { n: 1, a: [v, 0.0, 0.0] }
    }

    pub fn new2(m00: f64, m01: f64, m11: f64) -> Self {
        Sym { n: 2, a: [m00, m01, m11] }
    }

    pub fn scaled_identity(n: usize, v: f64) -> Self {
        match n {
            1 => Sym::scalar(v),
            _ => Sym::new2(v, 0.0, v),
        }
    }

    pub fn identity(n: usize) -> Self {
        Sym::scaled_identity(n, 1.0)
    }

    /// Outer product `y yᵀ`.
    pub fn outer(y: &[f64]) -> Self {
        match y.len() {
            1 => Sym::scalar(y[0] * y[0]),
            _ => Sym::new2(y[0] * y[0], y[0] * y[1], y[1] * y[1]),
        }
    }

    /// Number of stored components (1 or 3).
    pub fn ncomp(n: usize) -> usize {
        if n == 1 {
            1
        } else {
            3
        }
    }

    pub fn trace(&self) -> f64 {
        match self.n {
            1 => self.a[0],
            _ => self.a[0] + self.a[2],
        }
    }

    /// Frobenius inner product `Tr(A B)`.
    pub fn dot(&self, o: &Sym) -> f64 {
        match self.n {
            1 => self.a[0] * o.a[0],
            _ => self.a[0] * o.a[0] + 2.0 * self.a[1] * o.a[1] + self.a[2] * o.a[2],
        }
    }

    pub fn quad_form(&self, y: &[f64]) -> f64 {
        match self.n {
            1 => self.a[0] * y[0] * y[0],
            _ => self.a[0] * y[0] * y[0] + 2.0 * self.a[1] * y[0] * y[1] + self.a[2] * y[1] * y[1],
        }
    }

    pub fn add(&self, o: &Sym) -> Sym {
        Sym {
            n: self.n,
            a: [self.a[0] + o.a[0], self.a[1] + o.a[1], self.a[2] + o.a[2]],
        }
    }

    pub fn sub(&self, o: &Sym) -> Sym {
        Sym {
            n: self.n,
            a: [self.a[0] - o.a[0], self.a[1] - o.a[1], self.a[2] - o.a[2]],
        }
    }

    pub fn scale(&self, s: f64) -> Sym {
        Sym {
            n: self.n,
            a: [self.a[0] * s, self.a[1] * s, self.a[2] * s],
        }
    }

    pub fn neg(&self) -> Sym {
        self.scale(-1.0)
    }

    /// Eigenvalues in ascending order. Only the first `n` entries are meaningful.
    pub fn eigenvalues(&self) -> [f64; 2] {
        if self.n == 1 {
            return [self.a[0], self.a[0]];
        }
        let (p, q, r) = (self.a[0], self.a[1], self.a[2]);
        let m = 0.5 * (p + r);
        let d = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        [m - d, m + d]
    }

    /// Unit eigenvector for the largest eigenvalue (2D), `[1]` in 1D.
    pub fn top_eigenvector(&self) -> [f64; 2] {
        if self.n == 1 {
            return [1.0, 0.0];
        }
        let (p, q, r) = (self.a[0], self.a[1], self.a[2]);
        let mu = self.eigenvalues()[1];
        // Pick the better conditioned of the two null-vector candidates.
        let v1 = [q, mu - p];
        let v2 = [mu - r, q];
        let n1 = v1[0].hypot(v1[1]);
        let n2 = v2[0].hypot(v2[1]);
        if n1 < 1e-300 && n2 < 1e-300 {
            return [1.0, 0.0];
        }
        if n1 >= n2 {
            [v1[0] / n1, v1[1] / n1]
        } else {
            [v2[0] / n2, v2[1] / n2]
        }
    }

    /// Admissible for the quadratic class: `A ⪰ 0`, `Tr A ≥ λ`, `A ⪯ Λ Id`.
    pub fn is_admissible(&self, lambda: f64, lam_big: f64, slack: f64) -> bool {
        let [lo, hi] = self.eigenvalues();
        lo >= -slack && hi <= lam_big + slack && self.trace() >= lambda - slack
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
    }
}

/// Maximizer of `Tr(A B)` over `{A ⪰ 0, Tr A ≥ λ, A ⪯ Λ Id}` and its value.
///
/// If `B` has a positive eigenvalue the optimum is `Λ` times the projector onto
/// the positive eigenspace. Otherwise the trace constraint binds and the best
/// choice is `λ` times the top eigendirection.
pub fn pucci_sup(b: &Sym, lambda: f64, lam_big: f64) -> (f64, Sym) {
    if b.n == 1 {
        let v = b.a[0];
        return if v > 0.0 {
            (lam_big * v, Sym::scalar(lam_big))
        } else {
            (lambda * v, Sym::scalar(lambda))
        };
    }
    let ev = b.eigenvalues();
    let v = b.top_eigenvector();
    let top = Sym::outer(&v);
    if ev[0] > 0.0 {
        (lam_big * (ev[0] + ev[1]), Sym::identity(2).scale(lam_big))
    } else if ev[1] > 0.0 {
        (lam_big * ev[1], top.scale(lam_big))
    } else {
        (lambda * ev[1], top.scale(lambda))
    }
}

/// Minimizer counterpart: `inf Tr(A B) = −sup Tr(A (−B))`.
pub fn pucci_inf(b: &Sym, lambda: f64, lam_big: f64) -> (f64, Sym) {
    let (v, a) = pucci_sup(&b.neg(), lambda, lam_big);
    (-v, a)
}
