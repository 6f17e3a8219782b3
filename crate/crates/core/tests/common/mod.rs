#![allow(dead_code)]

use nonlocal_homog::env::{sample_environment, Environment, EnvironmentSpec};
use nonlocal_homog::kernels::KernelClass;
use nonlocal_homog::nonlocal::{Domain, Exterior, GridFunction, Lattice};
use proptest::prelude::RngExt;
use proptest::test_runner::{RngAlgorithm, TestRng};

pub fn rng(seed: u64) -> TestRng {
    let mut bytes = [0u8; 16];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..].copy_from_slice(&(!seed).to_le_bytes());
    TestRng::from_seed(RngAlgorithm::XorShift, &bytes)
}

pub fn uniform(r: &mut TestRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

pub fn constant_env(n: usize, a: f64, f: f64) -> Environment {
    sample_environment(&EnvironmentSpec::constant(n, KernelClass::A, 1.0, 2.0, a, f), 0).unwrap()
}

/// Random node values on `domain`, zero outside.
pub fn random_grid(domain: &Domain, n: usize, h: f64, r: &mut TestRng, amp: f64) -> GridFunction {
    let mut g = GridFunction::from_fn(Lattice::covering(domain, n, h), Some(*domain), Exterior::Constant(0.0), |_| 0.0);
    for i in 0..g.values.len() {
        let x = g.lattice.point(i);
        if domain.contains(&x[..n], n) {
            g.values[i] = uniform(r, -amp, amp);
        }
    }
    g
}

/// Adaptive Simpson on `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}
