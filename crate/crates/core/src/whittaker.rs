//! Symplectic group data at an archimedean place: Iwasawa decomposition,
//! the `det^{1/2}` character with a branch bit, holomorphic Whittaker
//! functions and the standard Gaussian.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, FMatrix};
use crate::numberfield::TotallyRealField;

/// Symplectic defect tolerance (relative to `|g|^2`).
pub const SYMPLECTIC_TOL: f64 = 1e-10;
/// Eigenvalue tolerance of the positivity gate.
pub const PSD_TOL: f64 = 1e-12;

/// `J = [[0, I], [-I, 0]]`.
pub fn standard_j(r: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * r, 2 * r);
    for i in 0..r {
        j[(i, r + i)] = 1.0;
        j[(r + i, i)] = -1.0;
    }
    j
}

/// `g = [[A, B], [C, D]]` in `Sp_{2r}(R)` with a metaplectic branch bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticElement {
    m: DMatrix<f64>,
    branch: bool,
}

impl SymplecticElement {
    pub fn new(m: DMatrix<f64>, branch: bool) -> Result<Self> {
        if m.nrows() != m.ncols() || !m.nrows().is_multiple_of(2) || m.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: 2 * (m.nrows() / 2).max(1), got: m.ncols() });
        }
        let r = m.nrows() / 2;
        let j = standard_j(r);
        let defect = (m.transpose() * &j * &m - &j).amax();
        let scale = m.amax().powi(2).max(1.0);
        if defect > SYMPLECTIC_TOL * scale {
            return Err(Error::NotSymplectic(defect));
        }
        Ok(SymplecticElement { m, branch })
    }

    pub fn identity(r: usize) -> Self {
        SymplecticElement { m: DMatrix::identity(2 * r, 2 * r), branch: false }
    }

    /// `n(u) = [[I, u], [0, I]]`, `u` symmetric.
    pub fn unipotent(u: &DMatrix<f64>) -> Self {
        let r = u.nrows();
        let mut m = DMatrix::identity(2 * r, 2 * r);
        m.view_mut((0, r), (r, r)).copy_from(u);
        SymplecticElement { m, branch: false }
    }

    /// `m(a) = [[a, 0], [0, a^{-T}]]`.
    pub fn levi(a: &DMatrix<f64>) -> Result<Self> {
        let r = a.nrows();
        let inv_t = a.clone().try_inverse().ok_or(Error::NotInvertible)?.transpose();
        let mut m = DMatrix::zeros(2 * r, 2 * r);
        m.view_mut((0, 0), (r, r)).copy_from(a);
        m.view_mut((r, r), (r, r)).copy_from(&inv_t);
        Ok(SymplecticElement { m, branch: false })
    }

    /// `k = [[A, B], [-B, A]]` for unitary `A + iB`.
    pub fn compact(u: &DMatrix<Complex64>, branch: bool) -> Result<Self> {
        let r = u.nrows();
        let a = u.map(|z| z.re);
        let b = u.map(|z| z.im);
        let mut m = DMatrix::zeros(2 * r, 2 * r);
        m.view_mut((0, 0), (r, r)).copy_from(&a);
        m.view_mut((0, r), (r, r)).copy_from(&b);
        m.view_mut((r, 0), (r, r)).copy_from(&(-&b));
        m.view_mut((r, r), (r, r)).copy_from(&a);
        Self::new(m, branch)
    }

    /// `r = 1` rotation by `theta`: `A + iB = e^{i theta}`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        SymplecticElement { m: DMatrix::from_row_slice(2, 2, &[c, s, -s, c]), branch: false }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn branch(&self) -> bool {
        self.branch
    }

    pub fn with_branch(&self, branch: bool) -> Self {
        SymplecticElement { m: self.m.clone(), branch }
    }

    pub fn genus(&self) -> usize {
        self.m.nrows() / 2
    }

    fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let r = self.genus();
        (
            self.m.view((0, 0), (r, r)).into_owned(),
            self.m.view((0, r), (r, r)).into_owned(),
            self.m.view((r, 0), (r, r)).into_owned(),
            self.m.view((r, r), (r, r)).into_owned(),
        )
    }

    /// Product; branch bits add mod 2.
    pub fn mul(&self, other: &Self) -> Self {
        SymplecticElement { m: &self.m * &other.m, branch: self.branch ^ other.branch }
    }

    /// `(A tau + B)(C tau + D)^{-1}`.
    pub fn act(&self, tau: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let (a, b, c, d) = self.blocks();
        let cx = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        let num = cx(&a) * tau + cx(&b);
        let den = cx(&c) * tau + cx(&d);
        let inv = den.try_inverse().ok_or(Error::NotInvertible)?;
        let t = num * inv;
        Ok((&t + t.transpose()) * Complex64::new(0.5, 0.0))
    }
}

/// Result of `g = n(u) m(v) k`.
#[derive(Debug, Clone)]
pub struct Iwasawa {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub k: SymplecticElement,
}

impl Iwasawa {
    /// `tau' = g . iI = u + i v v^T`.
    pub fn tau(&self) -> DMatrix<Complex64> {
        let y = &self.v * self.v.transpose();
        DMatrix::from_fn(self.u.nrows(), self.u.ncols(), |i, j| Complex64::new(self.u[(i, j)], y[(i, j)]))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mv = SymplecticElement::levi(&self.v).expect("v is invertible");
        SymplecticElement::unipotent(&self.u).m * mv.m * &self.k.m
    }
}

/// Upper-triangular `v` with positive diagonal and `v v^T = y`.
fn upper_cholesky(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = y.nrows();
    let rev = |m: &DMatrix<f64>| DMatrix::from_fn(r, r, |i, j| m[(r - 1 - i, r - 1 - j)]);
    let l = linalg::cholesky(&rev(y)).ok_or(Error::NotPositiveDefinite)?;
    Ok(rev(&l))
}

pub fn iwasawa(g: &SymplecticElement) -> Result<Iwasawa> {
    let r = g.genus();
    let i_r = DMatrix::from_diagonal_element(r, r, Complex64::i());
    let tau = g.act(&i_r)?;
    let u = tau.map(|z| z.re);
    let y = tau.map(|z| z.im);
    let v = upper_cholesky(&y)?;
    let mv_inv = SymplecticElement::levi(&v.clone().try_inverse().ok_or(Error::NotInvertible)?)?;
    let k = mv_inv.mul(&SymplecticElement::unipotent(&(-&u))).mul(g);
    Ok(Iwasawa { u, v, k: SymplecticElement { m: k.m, branch: g.branch } })
}

/// `det(A + iB)` for `k` in the maximal compact, negated when the branch bit is set.
pub fn det_half(k: &SymplecticElement) -> Complex64 {
    let (a, b, _, _) = k.blocks();
    let z = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| Complex64::new(a[(i, j)], b[(i, j)]));
    let d = z.determinant();
    if k.branch {
        -d
    } else {
        d
    }
}

/// Smallest eigenvalue is at least `-PSD_TOL`.
pub fn is_psd(beta: &DMatrix<f64>) -> bool {
    beta.nrows() == 0 || linalg::min_eigenvalue(beta) >= -PSD_TOL
}

/// `W_beta(g) = det(v)^{m/2} e^{2 pi i tr(beta tau')} det_half(k)^m`,
/// zero unless `beta` is positive semidefinite. `weight_dim = m = n + 2`.
pub fn whittaker_w(beta: &DMatrix<f64>, g: &SymplecticElement, weight_dim: usize) -> Result<Complex64> {
    if beta.nrows() != g.genus() || beta.ncols() != g.genus() {
        return Err(Error::DimensionMismatch { expected: g.genus(), got: beta.nrows() });
    }
    if !is_psd(beta) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let iw = iwasawa(g)?;
    let tau = iw.tau();
    let tr: Complex64 = (0..beta.nrows()).flat_map(|i| (0..beta.ncols()).map(move |j| (i, j))).map(|(i, j)| tau[(j, i)] * beta[(i, j)]).sum();
    let phase = (Complex64::new(0.0, 2.0 * PI) * tr).exp();
    let detv = iw.v.determinant();
    Ok(phase * detv.powf(weight_dim as f64 / 2.0) * det_half(&iw.k).powi(weight_dim as i32))
}

/// `prod_j W_{sigma_j(beta)}(g_j)`.
pub fn whittaker_hilbert(field: &TotallyRealField, beta: &FMatrix, gs: &[SymplecticElement], weight_dim: usize) -> Result<Complex64> {
    if gs.len() != field.degree() {
        return Err(Error::LengthMismatch { expected: field.degree(), got: gs.len() });
    }
    let mut acc = Complex64::new(1.0, 0.0);
    for (j, g) in gs.iter().enumerate() {
        let b = linalg::embed_matrix(field, beta, j + 1);
        let w = whittaker_w(&b, g, weight_dim)?;
        if w == Complex64::new(0.0, 0.0) {
            return Ok(w);
        }
        acc *= w;
    }
    Ok(acc)
}

/// Per-place Iwasawa data of a tuple `g`, for evaluating many `W_beta(g)`.
#[derive(Debug, Clone)]
pub struct PreparedWhittaker {
    taus: Vec<DMatrix<Complex64>>,
    prefactors: Vec<Complex64>,
    vs: Vec<DMatrix<f64>>,
    weight_dim: usize,
}

impl PreparedWhittaker {
    pub fn new(gs: &[SymplecticElement], weight_dim: usize) -> Result<Self> {
        let mut taus = Vec::with_capacity(gs.len());
        let mut prefactors = Vec::with_capacity(gs.len());
        let mut vs = Vec::with_capacity(gs.len());
        for g in gs {
            let iw = iwasawa(g)?;
            taus.push(iw.tau());
            prefactors.push(det_half(&iw.k).powi(weight_dim as i32) * iw.v.determinant().powf(weight_dim as f64 / 2.0));
            vs.push(iw.v);
        }
        Ok(PreparedWhittaker { taus, prefactors, vs, weight_dim })
    }

    pub fn taus(&self) -> &[DMatrix<Complex64>] {
        &self.taus
    }

    /// Iwasawa `v` per place.
    pub fn vs(&self) -> &[DMatrix<f64>] {
        &self.vs
    }

    pub fn weight_dim(&self) -> usize {
        self.weight_dim
    }

    /// `prod_j det(v_j)^{m/2} det_half(k_j)^m`.
    pub fn prefactor(&self) -> Complex64 {
        self.prefactors.iter().product()
    }

    /// Smallest eigenvalue of `Im tau'_j` per place.
    pub fn min_imaginary(&self) -> Vec<f64> {
        self.taus.iter().map(|t| linalg::min_eigenvalue(&t.map(|z| z.im))).collect()
    }

    /// `prod_j W_{sigma_j(beta)}(g_j)` from embedded `beta`s.
    pub fn eval_embedded(&self, betas: &[DMatrix<f64>]) -> Complex64 {
        let mut exponent = Complex64::new(0.0, 0.0);
        for (b, t) in betas.iter().zip(&self.taus) {
            if !is_psd(b) {
                return Complex64::new(0.0, 0.0);
            }
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    exponent += t[(j, i)] * b[(i, j)];
                }
            }
        }
        (Complex64::new(0.0, 2.0 * PI) * exponent).exp() * self.prefactor()
    }

    pub fn eval(&self, field: &TotallyRealField, beta: &FMatrix) -> Complex64 {
        let betas: Vec<DMatrix<f64>> = (1..=self.taus.len()).map(|j| linalg::embed_matrix(field, beta, j)).collect();
        self.eval_embedded(&betas)
    }
}

/// `e^{-pi tr (x, x)}` from the Gram matrix `(<x_i, x_j>)` of a tuple.
pub fn gaussian_standard(gram: &[Vec<f64>]) -> f64 {
    let tr: f64 = gram.iter().enumerate().map(|(i, r)| r[i]).sum();
    (-PI * tr).exp()
}

pub fn random_unitary<R: Rng>(r: usize, rng: &mut R) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(r, r, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = z.qr();
    let (q, rr) = qr.unpack();
    // fix column phases so the distribution does not depend on QR conventions
    let phases = DVector::from_fn(r, |i, _| {
        let d = rr[(i, i)];
        if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) }
    });
    DMatrix::from_fn(r, r, |i, j| q[(i, j)] * phases[j])
}

pub fn random_compact<R: Rng>(r: usize, rng: &mut R) -> SymplecticElement {
    SymplecticElement::compact(&random_unitary(r, rng), rng.gen()).expect("unitary gives a symplectic matrix")
}

/// `n(u) m(a) k` with random symmetric `u`, `a` near the identity and
/// random compact `k`.
pub fn random_symplectic<R: Rng>(r: usize, rng: &mut R) -> SymplecticElement {
    let mut u = DMatrix::from_fn(r, r, |_, _| rng.gen_range(-1.0..1.0));
    u = (&u + u.transpose()) * 0.5;
    let a = DMatrix::identity(r, r) + DMatrix::from_fn(r, r, |_, _| rng.gen_range(-0.3..0.3));
    let k = random_compact(r, rng);
    SymplecticElement::unipotent(&u).mul(&SymplecticElement::levi(&a).expect("near identity")).mul(&k)
}

/// Symmetric sample grid `x_i = (i - (points - 1) / 2) step` on each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierGrid {
    pub points: usize,
    pub step: f64,
}

impl FourierGrid {
    pub fn coords(&self) -> Vec<f64> {
        let off = (self.points as f64 - 1.0) / 2.0;
        (0..self.points).map(|i| (i as f64 - off) * self.step).collect()
    }
}

/// Rows `k = 0..=kmax` of Hermite functions `psi_k(x_i)`, orthonormal in `dx`
/// with `psi_0 = 2^{1/4} e^{-pi x^2}` (eigenvalue `(-i)^k` under Fourier).
pub fn hermite_functions(grid: &FourierGrid, kmax: usize) -> DMatrix<f64> {
    let xs = grid.coords();
    let s = (2.0 * PI).sqrt();
    let mut h = DMatrix::zeros(kmax + 1, xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let y = s * x;
        let mut prev = 0.0;
        let mut cur = PI.powf(-0.25) * (-0.5 * y * y).exp();
        for k in 0..=kmax {
            h[(k, i)] = cur * s.sqrt();
            let next = (2.0 / (k as f64 + 1.0)).sqrt() * y * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
        }
    }
    h
}

/// Hermite rows whose discrete Gram block is the identity to 1e-9.
fn resolved_hermite(grid: &FourierGrid) -> DMatrix<f64> {
    let h = hermite_functions(grid, (grid.points - 1).min(80));
    let gram = &h * h.transpose() * grid.step;
    let mut kmax = 0;
    for k in 0..h.nrows() {
        let ok = (0..=k).all(|j| (gram[(k, j)] - if j == k { 1.0 } else { 0.0 }).abs() < 1e-9);
        if !ok {
            break;
        }
        kmax = k;
    }
    h.rows(0, kmax + 1).into_owned()
}

/// Fractional Fourier transform with angle `theta` along axes with sign `+1`
/// and `-theta` along axes with sign `-1`, computed in the Hermite basis
/// (`psi_k -> e^{-i k theta} psi_k`). `samples` are row-major on the tensor
/// grid with `signs.len() <= 3` axes.
pub fn fractional_fourier_oracle(samples: &[Complex64], grid: &FourierGrid, theta: f64, signs: &[i8]) -> Result<Vec<Complex64>> {
    let dims = signs.len();
    if dims == 0 || dims > 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: dims });
    }
    let m = grid.points;
    if samples.len() != m.pow(dims as u32) {
        return Err(Error::LengthMismatch { expected: m.pow(dims as u32), got: samples.len() });
    }
    let h = resolved_hermite(grid);
    let kmax = h.nrows() - 1;
    let mut data = samples.to_vec();
    for (axis, &sign) in signs.iter().enumerate() {
        let stride = m.pow((dims - 1 - axis) as u32);
        let phases: Vec<Complex64> = (0..=kmax).map(|k| Complex64::from_polar(1.0, -(sign as f64) * k as f64 * theta)).collect();
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for base in 0..data.len() {
            if !(base / stride).is_multiple_of(m) {
                continue;
            }
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            let coeffs: Vec<Complex64> = (0..=kmax).map(|k| line.iter().enumerate().map(|(i, v)| v * h[(k, i)]).sum::<Complex64>() * grid.step * phases[k]).collect();
            for i in 0..m {
                data[base + i * stride] = coeffs.iter().enumerate().map(|(k, c)| c * h[(k, i)]).sum();
            }
        }
    }
    let energy = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let (e_in, e_out) = (energy(samples), energy(&data));
    if e_in > 0.0 && e_out < 0.99 * e_in {
        return Err(Error::Domain(format!("grid too coarse: energy loss {:.2}%", 100.0 * (1.0 - e_out / e_in))));
    }
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct EigenphaseReport {
    pub thetas: Vec<f64>,
    /// `arg(lambda(theta)) / theta` with `lambda = <F_theta f, f> / <f, f>`.
    pub rates: Vec<f64>,
    /// `|F_theta f - lambda f| / |f|`.
    pub residuals: Vec<f64>,
    /// `-mean(rate) + (p - q) / 2` with the Gaussian cocycle of signature `(1, 2)`.
    pub weight: f64,
}

impl EigenphaseReport {
    pub fn spread(&self) -> f64 {
        let lo = self.rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Eigenphase regression for the `omega_{1,1} ^ omega_{2,1}` coefficient of
/// `phi^{(1)}(x) e^{-pi q(x)}` on `R^{1,2}`.
pub fn phi_eigenphase(grid: &FourierGrid, thetas: &[f64]) -> Result<EigenphaseReport> {
    let xs = grid.coords();
    let mut f = Vec::with_capacity(xs.len().pow(3));
    for &a in &xs {
        for &b in &xs {
            for &c in &xs {
                let q = a * a - b * b - c * c;
                let v = crate::kmform::km_phi1(&[a, b, c], 1).coeff(&[1], &[1]) * (-PI * q).exp();
                f.push(Complex64::new(v, 0.0));
            }
        }
    }
    let norm2: f64 = f.iter().map(|z| z.norm_sqr()).sum();
    let mut rates = Vec::new();
    let mut residuals = Vec::new();
    for &t in thetas {
        if t == 0.0 {
            return Err(Error::Domain("theta samples must be nonzero".into()));
        }
        let g = fractional_fourier_oracle(&f, grid, t, &[1, -1, -1])?;
        let lambda = g.iter().zip(&f).map(|(a, b)| a * b.conj()).sum::<Complex64>() / norm2;
        let res: f64 = g.iter().zip(&f).map(|(a, b)| (a - lambda * b).norm_sqr()).sum();
        rates.push(lambda.arg() / t);
        residuals.push((res / norm2).sqrt());
    }
    let mean = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
    Ok(EigenphaseReport { thetas: thetas.to_vec(), rates, residuals, weight: -mean - 0.5 })
}
