//! Oriented negative 2-planes at an indefinite place, the majorant
//! `R(x, tau)`, the positive form `q_tau = q + 2R`, and holomorphic charts.
//!
//! All formulas here use the polarization `B(x, y) = <x, y> / 2`, so that
//! `B(x, x) = q(x)`. Period points are normalized to `q(alpha) = q(beta) = -1`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::clifford::{self, CliffordElement};
use crate::error::{Error, Result};
use crate::quadspace::QuadraticSpace;

/// Relative tolerance for orthogonality/normalization invariants.
pub const PLANE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodPoint {
    place: usize,
    alpha: DVector<f64>,
    beta: DVector<f64>,
    bil: DMatrix<f64>,
}

fn b(bil: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&(bil * y))
}

impl PeriodPoint {
    /// Gram-Schmidt corrects `beta` against `alpha` and normalizes both to
    /// `q = -1`, keeping the orientation of the ordered pair.
    pub fn new(space: &QuadraticSpace, place: usize, alpha: DVector<f64>, beta: DVector<f64>) -> Result<Self> {
        if place == 0 || place > space.e() {
            return Err(Error::EmbeddingIndex { index: place, degree: space.e() });
        }
        for v in [&alpha, &beta] {
            if v.len() != space.dim() {
                return Err(Error::DimensionMismatch { expected: space.dim(), got: v.len() });
            }
        }
        Self::from_bilinear(place, space.bilinear_at(place)?, alpha, beta)
    }

    fn from_bilinear(place: usize, bil: DMatrix<f64>, alpha: DVector<f64>, beta: DVector<f64>) -> Result<Self> {
        let scale = bil.iter().fold(0.0f64, |a, &x| a.max(x.abs())) * alpha.norm().max(beta.norm()).powi(2);
        let tol = PLANE_TOL * scale.max(f64::MIN_POSITIVE);
        let (aa, ab, bb) = (b(&bil, &alpha, &alpha), b(&bil, &alpha, &beta), b(&bil, &beta, &beta));
        let det = aa * bb - ab * ab;
        if alpha.norm() == 0.0 || beta.norm() == 0.0 {
            return Err(Error::Dependent);
        }
        let cross = (alpha.norm_squared() * beta.norm_squared() - alpha.dot(&beta).powi(2)).max(0.0).sqrt();
        if cross <= 1e-12 * alpha.norm() * beta.norm() {
            return Err(Error::Dependent);
        }
        if !(aa < -tol && det > tol * (aa.abs() + bb.abs())) {
            return Err(Error::NotNegativePlane);
        }
        let beta = &beta - &alpha * (ab / aa);
        let bb = b(&bil, &beta, &beta);
        if bb >= -tol {
            return Err(Error::NotNegativePlane);
        }
        let alpha = alpha / (-aa).sqrt();
        let beta = &beta / (-bb).sqrt();
        Ok(PeriodPoint { place, alpha, beta, bil })
    }

    pub fn place(&self) -> usize {
        self.place
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// Embedded polarization `B` at this point's place.
    pub fn bilinear(&self) -> &DMatrix<f64> {
        &self.bil
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn b(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        b(&self.bil, x, y)
    }

    /// `x_tau`, the projection of `x` onto the plane.
    pub fn negative_projection(&self, x: &DVector<f64>) -> DVector<f64> {
        let ca = self.b(x, &self.alpha) / self.b(&self.alpha, &self.alpha);
        let cb = self.b(x, &self.beta) / self.b(&self.beta, &self.beta);
        &self.alpha * ca + &self.beta * cb
    }

    /// `R(x, tau) = -B(x, alpha)^2 / B(alpha, alpha) - B(x, beta)^2 / B(beta, beta)`.
    pub fn majorant_r(&self, x: &DVector<f64>) -> f64 {
        let (xa, xb) = (self.b(x, &self.alpha), self.b(x, &self.beta));
        -(xa * xa) / self.b(&self.alpha, &self.alpha) - (xb * xb) / self.b(&self.beta, &self.beta)
    }

    /// `R(x, tau) = -q(x_tau)`.
    pub fn majorant_r_projection(&self, x: &DVector<f64>) -> f64 {
        let p = self.negative_projection(x);
        -self.b(&p, &p)
    }

    /// Matrix `M` with `q_tau(x) = x^T M x`.
    pub fn majorant_form(&self) -> DMatrix<f64> {
        let ba = &self.bil * &self.alpha;
        let bb = &self.bil * &self.beta;
        let r = -(&ba * ba.transpose()) / self.b(&self.alpha, &self.alpha) - (&bb * bb.transpose()) / self.b(&self.beta, &self.beta);
        &self.bil + r * 2.0
    }

    pub fn q_tau(&self, x: &DVector<f64>) -> f64 {
        self.b(x, x) + 2.0 * self.majorant_r(x)
    }

    /// `|B(x, alpha + i beta)|^2 / |B(alpha + i beta, alpha - i beta)|`.
    pub fn section_norm_sq(&self, x: &DVector<f64>) -> f64 {
        let (xa, xb) = (self.b(x, &self.alpha), self.b(x, &self.beta));
        let denom = (self.b(&self.alpha, &self.alpha) + self.b(&self.beta, &self.beta)).abs();
        (xa * xa + xb * xb) / denom
    }

    /// `g . tau`; `g` must act on `V`.
    pub fn act(&self, g: &CliffordElement) -> Result<PeriodPoint> {
        let a = g.vector_action(&self.alpha)?;
        let bt = g.vector_action(&self.beta)?;
        Self::from_bilinear(self.place, self.bil.clone(), a, bt)
    }

    /// Projection onto the positive complement `tau^perp`.
    pub fn positive_projection(&self, x: &DVector<f64>) -> DVector<f64> {
        x - self.negative_projection(x)
    }

    /// `B`-orthonormal positive basis of `tau^perp` obtained by projecting
    /// `seeds` and running Gram-Schmidt. Returns the basis and the Gram
    /// determinant of the projected seeds (a conditioning measure).
    pub fn complete_frame(&self, seeds: &[DVector<f64>]) -> (Vec<DVector<f64>>, f64) {
        let projected: Vec<DVector<f64>> = seeds.iter().map(|s| self.positive_projection(s)).collect();
        let k = projected.len();
        let gram = DMatrix::from_fn(k, k, |i, j| self.b(&projected[i], &projected[j]));
        let det = gram.determinant();
        let mut out: Vec<DVector<f64>> = Vec::with_capacity(k);
        for p in projected {
            let mut v = p;
            for u in &out {
                let c = self.b(&v, u);
                v -= u * c;
            }
            let nv = self.b(&v, &v);
            if nv > 0.0 {
                out.push(v / nv.sqrt());
            } else {
                out.push(v);
            }
        }
        (out, det)
    }

    /// Deterministic adapted basis: standard basis vectors projected onto
    /// `tau^perp`, skipping those that are (nearly) dependent.
    pub fn adapted_positives(&self) -> Vec<DVector<f64>> {
        let m = self.dim();
        let n = m - 2;
        let mut out: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut candidates: Vec<DVector<f64>> = (0..m).map(|i| self.positive_projection(&DVector::from_fn(m, |j, _| (i == j) as u8 as f64))).collect();
        while out.len() < n {
            for c in candidates.iter_mut() {
                for u in &out {
                    let coef = self.b(c, u);
                    *c -= u * coef;
                }
            }
            let (k, best) = candidates.iter().enumerate().fold((0, -1.0), |acc, (k, c)| {
                let nv = self.b(c, c);
                if nv > acc.1 * (1.0 + 1e-9) { (k, nv) } else { acc }
            });
            let v = candidates.remove(k);
            out.push(v / best.sqrt());
        }
        out
    }
}

/// One period point per indefinite place.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPeriodPoint {
    points: Vec<PeriodPoint>,
}

impl PolyPeriodPoint {
    pub fn new(space: &QuadraticSpace, points: Vec<PeriodPoint>) -> Result<Self> {
        if points.len() != space.e() {
            return Err(Error::LengthMismatch { expected: space.e(), got: points.len() });
        }
        for (i, p) in points.iter().enumerate() {
            if p.place != i + 1 {
                return Err(Error::Input(format!("period point {} has place {}", i + 1, p.place)));
            }
            if p.dim() != space.dim() {
                return Err(Error::DimensionMismatch { expected: space.dim(), got: p.dim() });
            }
        }
        Ok(PolyPeriodPoint { points })
    }

    /// For totally definite spaces.
    pub fn empty() -> Self {
        PolyPeriodPoint { points: Vec::new() }
    }

    pub fn points(&self) -> &[PeriodPoint] {
        &self.points
    }

    /// Period point at `place` (1-based).
    pub fn at(&self, place: usize) -> &PeriodPoint {
        &self.points[place - 1]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Positives first, then two negatives, each with `|q| = 1`.
pub fn normalized_frame(space: &QuadraticSpace, place: usize) -> Result<Vec<DVector<f64>>> {
    let fr = clifford::orthogonalize(space, place)?;
    Ok((0..fr.dim()).map(|i| fr.basis.column(i) / fr.square(i).abs().sqrt()).collect())
}

/// Random point of `D_place`: `alpha = n1 + sum X_i1 p_i`,
/// `beta = n2 + sum X_i2 p_i` with the singular values of `X` below `spread < 1`.
pub fn random_period_point<R: Rng>(space: &QuadraticSpace, place: usize, rng: &mut R, spread: f64) -> Result<PeriodPoint> {
    let basis = normalized_frame(space, place)?;
    let n = space.n();
    let mut x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let smax = x.clone().svd(false, false).singular_values.max();
    if smax > 0.0 {
        x *= spread * rng.gen::<f64>() / smax;
    }
    let mut alpha = basis[n].clone();
    let mut beta = basis[n + 1].clone();
    for i in 0..n {
        alpha += &basis[i] * x[(i, 0)];
        beta += &basis[i] * x[(i, 1)];
    }
    PeriodPoint::new(space, place, alpha, beta)
}

/// Empirical comparability constants `c <= q_tau / q_tau0 <= d`.
pub fn comparability(tau0: &PeriodPoint, taus: &[PeriodPoint]) -> Result<(f64, f64)> {
    let l = nalgebra::linalg::Cholesky::new(tau0.majorant_form()).ok_or(Error::NotPositiveDefinite)?;
    let linv = l.l().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let (mut c, mut d) = (f64::INFINITY, 0.0f64);
    for t in taus {
        let m = &linv * t.majorant_form() * linv.transpose();
        let eig = nalgebra::linalg::SymmetricEigen::new(m).eigenvalues;
        c = c.min(eig.min());
        d = d.max(eig.max());
    }
    Ok((c, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `s(0) = +i`: the basepoint itself.
    Plus,
    /// `s(0) = -i`: the oppositely oriented basepoint.
    Minus,
}

/// Affine chart of the quadric around a basepoint `z0`:
/// `v(w) = sum w_i f_i + alpha0 + s(w) beta0` with `q(v) = 0`, i.e.
/// `s^2 = sum w_i^2 - 1`, where `(f_i, alpha0, beta0)` is the adapted basis at `z0`.
#[derive(Debug, Clone)]
pub struct Chart {
    base: PeriodPoint,
    positives: Vec<DVector<f64>>,
}

const CONTINUATION_STEPS: usize = 64;

impl Chart {
    pub fn new(base: &PeriodPoint) -> Self {
        Chart { positives: base.adapted_positives(), base: base.clone() }
    }

    pub fn with_positives(base: &PeriodPoint, positives: Vec<DVector<f64>>) -> Self {
        Chart { base: base.clone(), positives }
    }

    pub fn base(&self) -> &PeriodPoint {
        &self.base
    }

    pub fn positives(&self) -> &[DVector<f64>] {
        &self.positives
    }

    pub fn n(&self) -> usize {
        self.positives.len()
    }

    /// `s(w)` continued along the segment `t w`, `t in [0, 1]`.
    pub fn s(&self, w: &[Complex64], branch: Branch) -> Result<Complex64> {
        if w.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: w.len() });
        }
        let mut s = match branch {
            Branch::Plus => Complex64::i(),
            Branch::Minus => -Complex64::i(),
        };
        for k in 1..=CONTINUATION_STEPS {
            let t = k as f64 / CONTINUATION_STEPS as f64;
            let sum: Complex64 = w.iter().map(|wi| (wi * t) * (wi * t)).sum();
            let root = (sum - 1.0).sqrt();
            if root.norm() < 1e-8 {
                return Err(Error::Ramification);
            }
            s = if (root - s).norm() <= (-root - s).norm() { root } else { -root };
        }
        Ok(s)
    }

    /// The isotropic vector `v(w)` and the chart value `s(w)`.
    pub fn vector(&self, w: &[Complex64], branch: Branch) -> Result<(DVector<Complex64>, Complex64)> {
        let s = self.s(w, branch)?;
        let m = self.base.dim();
        let mut v = DVector::from_fn(m, |i, _| Complex64::new(self.base.alpha[i], 0.0) + s * self.base.beta[i]);
        for (wi, f) in w.iter().zip(&self.positives) {
            for i in 0..m {
                v[i] += wi * f[i];
            }
        }
        // <v, vbar> < 0 defines the domain
        let hv = hermitian(self.base.bilinear(), &v, &v);
        if hv >= -1e-10 {
            return Err(Error::Domain(format!("chart point outside D (B(v, vbar) = {hv:.3e})")));
        }
        Ok((v, s))
    }

    /// `dv/dw_i = f_i + (w_i / s) beta0`.
    pub fn derivatives(&self, w: &[Complex64], s: Complex64) -> Vec<DVector<Complex64>> {
        let m = self.base.dim();
        self.positives
            .iter()
            .zip(w)
            .map(|(f, wi)| DVector::from_fn(m, |k, _| Complex64::new(f[k], 0.0) + (wi / s) * self.base.beta[k]))
            .collect()
    }

    pub fn point(&self, w: &[Complex64], branch: Branch) -> Result<PeriodPoint> {
        let (v, _) = self.vector(w, branch)?;
        let alpha = v.map(|z| z.re);
        let beta = v.map(|z| z.im);
        PeriodPoint::from_bilinear(self.base.place, self.base.bil.clone(), alpha, beta)
    }
}

/// `B(x, ybar)` for complex vectors.
pub fn hermitian(bil: &DMatrix<f64>, x: &DVector<Complex64>, y: &DVector<Complex64>) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..x.len() {
        for j in 0..y.len() {
            acc += x[i] * bil[(i, j)] * y[j].conj();
        }
    }
    acc.re
}
