//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use kmseries::lattice::{int_matrix, OLattice};
use kmseries::numberfield::{FieldElement, TotallyRealField};
use kmseries::perioddomain::PeriodPoint;
use kmseries::quadspace::QuadraticSpace;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn diag_space(diag: &[i64], e: usize) -> QuadraticSpace {
    let n = diag.len();
    let rows: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| if i == j { diag[i] } else { 0 }).collect()).collect();
    QuadraticSpace::new(TotallyRealField::rational(), int_matrix(&rows), e).unwrap()
}

/// diag(2, -sqrt5, -sqrt5) over Q(sqrt5): signature (1, 2) then (3, 0).
pub fn sqrt5_space() -> QuadraticSpace {
    let f = TotallyRealField::quadratic(5).unwrap();
    let z = f.zero();
    let m = f.elt(0, -1);
    let gram = vec![vec![f.from_int(2), z.clone(), z.clone()], vec![z.clone(), m.clone(), z.clone()], vec![z.clone(), z, m]];
    QuadraticSpace::new(f, gram, 1).unwrap()
}

pub fn e8() -> OLattice {
    let s = QuadraticSpace::new(TotallyRealField::rational(), int_matrix(&kmseries::lattice::e8_gram()), 0).unwrap();
    OLattice::standard(s).unwrap()
}

pub fn ints(v: &[i64]) -> Vec<FieldElement> {
    v.iter().map(|&x| FieldElement::integer(x)).collect()
}

pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Standard point `span(e_2, e_3)` of diag(2, -2, -2).
pub fn standard_tau(space: &QuadraticSpace) -> PeriodPoint {
    PeriodPoint::new(space, 1, dvec(&[0.0, 1.0, 0.0]), dvec(&[0.0, 0.0, 1.0])).unwrap()
}

/// `R(x, tau) = -B(x_-, x_-)` with `x_-` found by solving the 2x2 Gram system
/// of the plane (no orthogonality assumed); `B = G / 2`.
pub fn r_by_projection(gram: &DMatrix<f64>, alpha: &DVector<f64>, beta: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let b = |u: &DVector<f64>, v: &DVector<f64>| 0.5 * u.dot(&(gram * v));
    let m = nalgebra::Matrix2::new(b(alpha, alpha), b(alpha, beta), b(beta, alpha), b(beta, beta));
    let rhs = nalgebra::Vector2::new(b(x, alpha), b(x, beta));
    let c = m.try_inverse().unwrap() * rhs;
    let p = alpha * c[0] + beta * c[1];
    -b(&p, &p)
}

/// Adaptive Simpson on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (f(a) + 4.0 * fm + f(b)), fm)
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, _) = simpson(f, a, m);
        let (r, _) = simpson(f, m, b);
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            return l + r + (l + r - whole) / 15.0;
        }
        rec(f, a, m, l, tol / 2.0, depth - 1) + rec(f, m, b, r, tol / 2.0, depth - 1)
    }
    let (whole, _) = simpson(f, a, b);
    rec(f, a, b, whole, tol, 50)
}

/// `E_1(t) = int_1^inf e^{-t s} / s ds`, split at `s = 1 + 40/t` where the
/// integrand is below `e^{-40}`.
pub fn e1_quadrature(t: f64) -> f64 {
    let g = |s: f64| (-t * s).exp() / s;
    let mid = 1.0 + 1.0 / t;
    let end = 1.0 + 60.0 / t;
    adaptive_simpson(&g, 1.0, mid, 1e-16) + adaptive_simpson(&g, mid, end, 1e-16)
}

/// `E_1` from its convergent power series (fine for `t <= 4`).
pub fn e1_series(t: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= -t / k as f64;
        let c = -term / k as f64;
        sum += c;
        if c.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - t.ln() + sum
}

/// Counts of `(x, x) = 2m` in `D8+`, `m = 0..=mmax`, by brute force over
/// integer and half-integer coordinate vectors.
pub fn d8plus_counts(mmax: usize) -> Vec<u64> {
    let mut counts = vec![0u64; mmax + 1];
    let lim2 = 2 * mmax as i64;
    // doubled coordinates: all even or all odd, sum divisible by 4
    let bound = ((4 * lim2) as f64).sqrt() as i64;
    let mut c = [0i64; 8];
    fn rec(i: usize, c: &mut [i64; 8], parity: i64, bound: i64, lim: i64, counts: &mut [u64]) {
        let norm4: i64 = c[..i].iter().map(|v| v * v).sum();
        if norm4 > 4 * lim {
            return;
        }
        if i == 8 {
            let s: i64 = c.iter().sum();
            if s.rem_euclid(4) == 0 && norm4 % 8 == 0 {
                counts[(norm4 / 8) as usize] += 1;
            }
            return;
        }
        let mut v = -bound;
        while v <= bound {
            if v.rem_euclid(2) == parity {
                c[i] = v;
                rec(i + 1, c, parity, bound, lim, counts);
            }
            v += 1;
        }
    }
    for parity in [0, 1] {
        rec(0, &mut c, parity, bound, lim2, &mut counts);
    }
    counts
}

/// `E_4(tau) = 1 + 240 sum sigma_3(n) q^n`.
pub fn eisenstein_e4(tau: Complex64) -> Complex64 {
    let q = (Complex64::new(0.0, 2.0 * PI) * tau).exp();
    let mut acc = Complex64::new(1.0, 0.0);
    let mut qn = Complex64::new(1.0, 0.0);
    for n in 1u64..400 {
        qn *= q;
        if qn.norm() < 1e-30 {
            break;
        }
        let s3: u64 = (1..=n).filter(|d| n % d == 0).map(|d| d * d * d).sum();
        acc += qn * (240 * s3) as f64;
    }
    acc
}

/// `sum_k e^{2 pi i k^2 tau}`, the theta series of `Z` with `q(x) = x^2`.
pub fn theta_z(tau: Complex64) -> Complex64 {
    (-60i64..=60).map(|k| (Complex64::new(0.0, 2.0 * PI) * tau * (k * k) as f64).exp()).sum()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
