//! `O_F`-lattices given by a `Z`-basis of rank `d (n + 2)`, enumerated under
//! positive definite majorants with Fincke-Pohst after LLL reduction.

use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::linalg::{self, FMatrix, FVector};
use crate::numberfield::FieldElement;
use crate::perioddomain::PolyPeriodPoint;
use crate::quadspace::{self, QuadraticSpace};

/// Relative slack on enumeration bounds.
pub const BOUND_SLACK: f64 = 1e-9;

/// Integer-scaled Gram `<b_j, b_k> = (A_jk + B_jk sqrt D) / den` on the `Z`-basis.
#[derive(Debug, Clone)]
pub struct ExactGram {
    a: Vec<Vec<i128>>,
    b: Vec<Vec<i128>>,
    den: i128,
    d: i64,
}

impl ExactGram {
    fn new(gram: &FMatrix, d: i64) -> Result<Self> {
        let mut den = BigInt::one();
        for row in gram {
            for x in row {
                den = den.lcm(&x.denominator());
            }
        }
        let scale = |q: &BigRational| -> Result<i128> {
            (q * BigRational::from_integer(den.clone())).to_integer().to_i128().ok_or_else(|| Error::Input("gram entries too large".into()))
        };
        let a = gram.iter().map(|r| r.iter().map(|x| scale(x.a())).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
        let b = gram.iter().map(|r| r.iter().map(|x| scale(x.b())).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
        Ok(ExactGram { a, b, den: den.to_i128().ok_or_else(|| Error::Input("denominator too large".into()))?, d })
    }

    /// `(a, b)` with `<y(c), y(c')> = (a + b sqrt D) / den`.
    pub fn inner_parts(&self, c: &[i64], c2: &[i64]) -> (i128, i128) {
        let mut sa = 0i128;
        let mut sb = 0i128;
        for (j, &cj) in c.iter().enumerate() {
            if cj == 0 {
                continue;
            }
            let (mut ra, mut rb) = (0i128, 0i128);
            for (k, &ck) in c2.iter().enumerate() {
                ra += self.a[j][k] * ck as i128;
                rb += self.b[j][k] * ck as i128;
            }
            sa += cj as i128 * ra;
            sb += cj as i128 * rb;
        }
        (sa, sb)
    }

    pub fn den(&self) -> i128 {
        self.den
    }

    pub fn inner(&self, c: &[i64], c2: &[i64]) -> FieldElement {
        let (a, b) = self.inner_parts(c, c2);
        let den = BigInt::from(self.den);
        let fa = BigRational::new(BigInt::from(a), den.clone());
        let fb = BigRational::new(BigInt::from(b), den);
        element(self.d, fa, fb)
    }

    /// `q(y(c)) = <y, y> / 2`.
    pub fn quad(&self, c: &[i64]) -> FieldElement {
        &self.inner(c, c) * &FieldElement::ratio(1, 2)
    }
}

fn element(d: i64, a: BigRational, b: BigRational) -> FieldElement {
    if b.is_zero() || d == 0 {
        FieldElement::rational(a)
    } else {
        crate::numberfield::TotallyRealField::quadratic(d).expect("valid generator").element(a, b).expect("same field")
    }
}

#[derive(Debug, Clone)]
pub struct OLattice {
    space: QuadraticSpace,
    zbasis: Vec<FVector>,
    coord_inv: FMatrix,
    exact: ExactGram,
}

/// `y -> (a-parts, b-parts)` as rational field elements.
fn flatten(y: &[FieldElement], degree: usize) -> FVector {
    let mut out: FVector = y.iter().map(|x| FieldElement::rational(x.a().clone())).collect();
    if degree == 2 {
        out.extend(y.iter().map(|x| FieldElement::rational(x.b().clone())));
    }
    out
}

impl OLattice {
    pub fn new(space: QuadraticSpace, zbasis: Vec<FVector>) -> Result<Self> {
        let d = space.degree();
        let rank = d * space.dim();
        if zbasis.len() != rank {
            return Err(Error::LengthMismatch { expected: rank, got: zbasis.len() });
        }
        for b in &zbasis {
            if b.len() != space.dim() {
                return Err(Error::DimensionMismatch { expected: space.dim(), got: b.len() });
            }
        }
        // columns are flattened basis vectors
        let flat: Vec<FVector> = zbasis.iter().map(|b| flatten(b, d)).collect();
        let m: FMatrix = (0..rank).map(|i| flat.iter().map(|col| col[i].clone()).collect()).collect();
        let coord_inv = linalg::inverse(&m).ok_or_else(|| Error::Input("Z-basis is not of full rank".into()))?;
        let gram = space.tuple_gram(&zbasis)?;
        let exact = ExactGram::new(&gram, space.field().generator().unwrap_or(0))?;
        Ok(OLattice { space, zbasis, coord_inv, exact })
    }

    /// `O_F^{n+2}` with the integral basis of `O_F` in every coordinate.
    pub fn standard(space: QuadraticSpace) -> Result<Self> {
        let ib = space.field().integer_basis();
        let m = space.dim();
        let mut zbasis = Vec::new();
        for beta in &ib {
            for i in 0..m {
                zbasis.push((0..m).map(|j| if i == j { beta.clone() } else { FieldElement::integer(0) }).collect());
            }
        }
        Self::new(space, zbasis)
    }

    pub fn space(&self) -> &QuadraticSpace {
        &self.space
    }

    pub fn zbasis(&self) -> &[FVector] {
        &self.zbasis
    }

    pub fn rank(&self) -> usize {
        self.zbasis.len()
    }

    pub fn exact_gram(&self) -> &ExactGram {
        &self.exact
    }

    /// `sum c_j b_j` for rational coordinates.
    pub fn vector_rational(&self, c: &[BigRational]) -> FVector {
        let mut y: FVector = vec![FieldElement::integer(0); self.space.dim()];
        for (cj, b) in c.iter().zip(&self.zbasis) {
            if cj.is_zero() {
                continue;
            }
            let s = FieldElement::rational(cj.clone());
            y = linalg::add(&y, &linalg::scale(&s, b));
        }
        y
    }

    pub fn vector(&self, c: &[i64]) -> FVector {
        let q: Vec<BigRational> = c.iter().map(|&x| BigRational::from_integer(x.into())).collect();
        self.vector_rational(&q)
    }

    /// Rational coordinates of `y` in the `Z`-basis.
    pub fn coordinates(&self, y: &[FieldElement]) -> Vec<BigRational> {
        linalg::mat_vec(&self.coord_inv, &flatten(y, self.space.degree())).into_iter().map(|x| x.a().clone()).collect()
    }

    pub fn contains(&self, y: &[FieldElement]) -> bool {
        self.coordinates(y).iter().all(|c| c.is_integer())
    }

    /// Both lattices are the same `Z`-module.
    pub fn same_module(&self, other: &OLattice) -> bool {
        other.zbasis.iter().all(|b| self.contains(b)) && self.zbasis.iter().all(|b| other.contains(b))
    }

    /// `sigma_place(b_j)` as columns.
    pub fn embedded_basis(&self, place: usize) -> Result<DMatrix<f64>> {
        let cols: Vec<DVector<f64>> = self.zbasis.iter().map(|b| self.space.embed_vector(b, place)).collect::<Result<_>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// `Q_maj(y) = sum_{i <= e} q_{tau_i}(sigma_i y) + sum_{i > e} q(sigma_i y)` on the `Z`-basis.
    pub fn total_majorant(&self, tau: Option<&PolyPeriodPoint>) -> Result<DMatrix<f64>> {
        let e = self.space.e();
        let got = tau.map_or(0, |t| t.len());
        if got != e {
            return Err(Error::LengthMismatch { expected: e, got });
        }
        let n = self.rank();
        let mut q = DMatrix::zeros(n, n);
        for place in 1..=self.space.degree() {
            let eb = self.embedded_basis(place)?;
            let m = if place <= e { tau.unwrap().at(place).majorant_form() } else { self.space.bilinear_at(place)? };
            q += eb.transpose() * m * &eb;
        }
        let q = (&q + q.transpose()) * 0.5;
        linalg::cholesky(&q).ok_or(Error::NotPositiveDefinite)?;
        Ok(q)
    }

    /// Trace-form dual `{y : tr <y, L> in Z}`.
    pub fn dual_lattice(&self) -> Result<OLattice> {
        let n = self.rank();
        let gram = self.space.tuple_gram(&self.zbasis)?;
        let f = self.space.field();
        let gt: FMatrix = gram.iter().map(|r| r.iter().map(|x| FieldElement::rational(f.trace(x))).collect()).collect();
        let inv = linalg::inverse(&gt).ok_or_else(|| Error::Input("trace form is degenerate on the lattice".into()))?;
        let basis = (0..n)
            .map(|k| {
                let mut y: FVector = vec![FieldElement::integer(0); self.space.dim()];
                for j in 0..n {
                    y = linalg::add(&y, &linalg::scale(&inv[j][k], &self.zbasis[j]));
                }
                y
            })
            .collect();
        OLattice::new(self.space.clone(), basis)
    }

    /// Vectors with `Q(c + center) <= bound` (see [`enumerate`]).
    pub fn enumerate_below(&self, tau: Option<&PolyPeriodPoint>, bound: f64, center: Option<&[f64]>, budget: usize) -> Result<Vec<LatticePoint>> {
        let q = self.total_majorant(tau)?;
        enumerate(&q, bound, center, budget)
    }

    /// Lattice vectors `y` with `q(y) = target` exactly and `Q_maj(y) <= radius`,
    /// sorted by `(Q_maj, coords)`.
    pub fn norm_fiber(&self, tau: Option<&PolyPeriodPoint>, target: &FieldElement, radius: f64, budget: usize) -> Result<Vec<LatticePoint>> {
        let q = self.total_majorant(tau)?;
        let mut out = Vec::new();
        let mut over = false;
        enumerate_with(&q, radius, None, &mut |c, v| {
            if self.exact.quad(c) == *target {
                if out.len() >= budget {
                    over = true;
                    return ControlFlow::Break(());
                }
                out.push(LatticePoint { coords: c.to_vec(), q_maj: v });
            }
            ControlFlow::Continue(())
        });
        if over {
            return Err(Error::Budget { bound: radius, budget });
        }
        sort_points(&mut out);
        Ok(out)
    }

    /// All `x in L^r` with `T(x) = t` and every `Q_maj(x_i) <= bound`.
    /// Definite spaces derive the complete bound `Q_maj(x_i) = tr(T_ii)`; with
    /// indefinite places the fiber is infinite and a bound is required.
    pub fn fibers_with_t(&self, t: &FMatrix, tau: Option<&PolyPeriodPoint>, bound: Option<f64>, budget: usize) -> Result<Vec<Vec<Vec<i64>>>> {
        let r = t.len();
        for (i, row) in t.iter().enumerate() {
            if row.len() != r {
                return Err(Error::DimensionMismatch { expected: r, got: row.len() });
            }
            for j in 0..i {
                if t[i][j] != t[j][i] {
                    return Err(Error::NotSymmetric(i + 1, j + 1));
                }
            }
        }
        let f = self.space.field();
        let definite = self.space.e() == 0;
        if definite && !quadspace::is_totally_psd(f, t, 1e-12) {
            return Ok(vec![]);
        }
        let q = self.total_majorant(tau)?;
        let mut candidates: Vec<Vec<Vec<i64>>> = Vec::with_capacity(r);
        for i in 0..r {
            let b = match (bound, definite) {
                (Some(b), _) => b,
                (None, true) => f.trace(&t[i][i]).to_f64().unwrap_or(f64::INFINITY),
                (None, false) => return Err(Error::BoundRequired("T-fibers of an indefinite lattice are infinite".into())),
            };
            let target = &t[i][i];
            let mut found = Vec::new();
            enumerate_with(&q, b, None, &mut |c, _| {
                if self.exact.quad(c) == *target {
                    found.push(c.to_vec());
                }
                ControlFlow::Continue(())
            });
            if found.len() > budget {
                return Err(Error::Budget { bound: b, budget });
            }
            candidates.push(found);
        }
        let mut out = Vec::new();
        let mut current: Vec<Vec<i64>> = Vec::with_capacity(r);
        self.extend_tuples(t, &candidates, &mut current, &mut out, budget)?;
        Ok(out)
    }

    fn extend_tuples(&self, t: &FMatrix, cand: &[Vec<Vec<i64>>], cur: &mut Vec<Vec<i64>>, out: &mut Vec<Vec<Vec<i64>>>, budget: usize) -> Result<()> {
        let i = cur.len();
        if i == cand.len() {
            if out.len() >= budget {
                return Err(Error::Budget { bound: f64::NAN, budget });
            }
            out.push(cur.clone());
            return Ok(());
        }
        let two = FieldElement::integer(2);
        for c in &cand[i] {
            if (0..i).all(|j| self.exact.inner(&cur[j], c) == &t[j][i] * &two) {
                cur.push(c.clone());
                self.extend_tuples(t, cand, cur, out, budget)?;
                cur.pop();
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    pub coords: Vec<i64>,
    pub q_maj: f64,
}

/// Fincke-Pohst data for `Q(x) = sum_i d_i (x_i + sum_{j>i} u_ij x_j)^2`
/// on an LLL-reduced basis.
#[derive(Debug, Clone)]
pub struct Enumerator {
    transform: DMatrix<i64>,
    reduced: DMatrix<f64>,
    diag: Vec<f64>,
    upper: DMatrix<f64>,
}

impl Enumerator {
    pub fn new(q: &DMatrix<f64>) -> Result<Self> {
        let transform = lll_gram(q, 0.99);
        let tf = transform.map(|x| x as f64);
        let reduced = tf.transpose() * q * &tf;
        let reduced = (&reduced + reduced.transpose()) * 0.5;
        let l = linalg::cholesky(&reduced).ok_or(Error::NotPositiveDefinite)?;
        let r = l.transpose();
        let n = q.nrows();
        let diag: Vec<f64> = (0..n).map(|i| r[(i, i)] * r[(i, i)]).collect();
        let upper = DMatrix::from_fn(n, n, |i, j| if j > i { r[(i, j)] / r[(i, i)] } else { 0.0 });
        Ok(Enumerator { transform, reduced, diag, upper })
    }

    /// Diagonal of the `LDL^T` factor of the reduced Gram.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn reduced_gram(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    /// Calls `f(coords, Q)` for every integer `c` with `Q(c + center) <= bound`
    /// (original coordinates). Returns `false` if stopped early.
    pub fn run(&self, bound: f64, center: Option<&[f64]>, f: &mut dyn FnMut(&[i64], f64) -> ControlFlow<()>) -> bool {
        let n = self.diag.len();
        let slack = bound + BOUND_SLACK * bound.abs().max(1.0);
        // center in reduced coordinates: c + mu = U (c' + mu')
        let mu: Vec<f64> = match center {
            None => vec![0.0; n],
            Some(c) => {
                let tf = self.transform.map(|x| x as f64);
                let sol = tf.lu().solve(&DVector::from_column_slice(c)).expect("unimodular transform");
                sol.iter().copied().collect()
            }
        };
        let mut x = vec![0i64; n];
        let mut orig = vec![0i64; n];
        let mut shifted = vec![0.0; n];
        self.recurse(n, 0.0, slack, bound, &mu, &mut x, &mut shifted, &mut orig, f).is_continue()
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        level: usize,
        partial: f64,
        slack: f64,
        bound: f64,
        mu: &[f64],
        x: &mut [i64],
        shifted: &mut [f64],
        orig: &mut [i64],
        f: &mut dyn FnMut(&[i64], f64) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        let n = self.diag.len();
        if level == 0 {
            if partial > bound + BOUND_SLACK * bound.abs().max(1.0) {
                return ControlFlow::Continue(());
            }
            for i in 0..n {
                orig[i] = (0..n).map(|j| self.transform[(i, j)] * x[j]).sum();
            }
            return f(orig, partial);
        }
        let i = level - 1;
        let mut z = -mu[i];
        for j in i + 1..n {
            z -= self.upper[(i, j)] * shifted[j];
        }
        let rem = (slack - partial).max(0.0);
        let w = (rem / self.diag[i]).sqrt();
        let lo = (z - w).ceil() as i64;
        let hi = (z + w).floor() as i64;
        for c in lo..=hi {
            x[i] = c;
            shifted[i] = c as f64 + mu[i];
            let t = c as f64 - z;
            let p = partial + self.diag[i] * t * t;
            if p > slack {
                continue;
            }
            self.recurse(i, p, slack, bound, mu, x, shifted, orig, f)?;
        }
        ControlFlow::Continue(())
    }

    /// Volume of `{Q <= t}`, the leading term of the lattice point count.
    pub fn volume(&self, t: f64) -> f64 {
        let n = self.diag.len() as f64;
        let ball = std::f64::consts::PI.powf(n / 2.0) / gamma_half_int(self.diag.len() + 2);
        ball * t.max(0.0).powf(n / 2.0) / self.diag.iter().map(|d| d.sqrt()).product::<f64>()
    }

    /// Upper bound on `#{c : Q(c + center) <= t}`.
    pub fn count_bound(&self, t: f64) -> f64 {
        self.diag.iter().map(|d| 2.0 * (t.max(0.0) / d).sqrt() + 1.0).product()
    }

    /// Bound on `sum_{Q > b} e^{-a Q} P(Q)` over shells `[b + j, b + j + 1]`,
    /// `P` nondecreasing.
    pub fn gaussian_tail(&self, b: f64, a: f64, poly: &dyn Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        let mut j = 0.0;
        loop {
            let term = (-a * (b + j)).exp() * poly(b + j + 1.0) * self.count_bound(b + j + 1.0);
            total += term;
            if term <= 1e-18 * total.max(1e-300) || j > 1e6 {
                break;
            }
            j += 1.0;
        }
        total
    }

    /// Smallest bound (to 0.25) whose Gaussian tail is at most `eps`.
    pub fn radius_for(&self, a: f64, eps: f64, poly: &dyn Fn(f64) -> f64) -> f64 {
        let mut b = 1.0;
        while self.gaussian_tail(b, a, poly) > eps {
            b *= 1.5;
            if b > 1e7 {
                return f64::INFINITY;
            }
        }
        let (mut lo, mut hi) = (b / 1.5, b);
        while hi - lo > 0.25 {
            let mid = 0.5 * (lo + hi);
            if self.gaussian_tail(mid, a, poly) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// `Gamma(k / 2)`.
fn gamma_half_int(k: usize) -> f64 {
    let mut g = if k.is_multiple_of(2) { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut j = if k.is_multiple_of(2) { 2 } else { 1 };
    while j + 2 <= k {
        g *= j as f64 / 2.0;
        j += 2;
    }
    g
}

/// Refuses enumerations whose expected size is far beyond `budget`.
pub fn check_volume(en: &Enumerator, bound: f64, budget: usize) -> Result<()> {
    if en.volume(bound) > 4.0 * budget as f64 {
        return Err(Error::Budget { bound, budget });
    }
    Ok(())
}

/// Streams vectors with `Q(c + center) <= bound`.
pub fn enumerate_with(q: &DMatrix<f64>, bound: f64, center: Option<&[f64]>, f: &mut dyn FnMut(&[i64], f64) -> ControlFlow<()>) -> bool {
    match Enumerator::new(q) {
        Ok(e) => e.run(bound, center, f),
        Err(_) => false,
    }
}

/// Collects vectors with `Q(c + center) <= bound`, sorted by `(Q, coords)`.
pub fn enumerate(q: &DMatrix<f64>, bound: f64, center: Option<&[f64]>, budget: usize) -> Result<Vec<LatticePoint>> {
    let en = Enumerator::new(q)?;
    check_volume(&en, bound, budget)?;
    let mut out = Vec::new();
    let complete = en.run(bound, center, &mut |c, v| {
        if out.len() >= budget {
            return ControlFlow::Break(());
        }
        out.push(LatticePoint { coords: c.to_vec(), q_maj: v });
        ControlFlow::Continue(())
    });
    if !complete {
        return Err(Error::Budget { bound, budget });
    }
    sort_points(&mut out);
    Ok(out)
}

pub fn sort_points(v: &mut [LatticePoint]) {
    v.sort_by(|a, b| a.q_maj.partial_cmp(&b.q_maj).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.coords.cmp(&b.coords)));
}

/// LLL reduction of a positive definite Gram matrix; returns the unimodular
/// transform whose columns are the reduced basis in old coordinates.
pub fn lll_gram(g: &DMatrix<f64>, delta: f64) -> DMatrix<i64> {
    let n = g.nrows();
    let mut u = DMatrix::<i64>::identity(n, n);
    let mut gm = g.clone();
    if n <= 1 {
        return u;
    }
    let gso = |gm: &DMatrix<f64>| -> (DMatrix<f64>, Vec<f64>) {
        let mut mu = DMatrix::zeros(n, n);
        let mut bs = vec![0.0; n];
        for i in 0..n {
            for j in 0..i {
                let mut s = gm[(i, j)];
                for k in 0..j {
                    s -= mu[(j, k)] * mu[(i, k)] * bs[k];
                }
                mu[(i, j)] = s / bs[j];
            }
            let mut s = gm[(i, i)];
            for k in 0..i {
                s -= mu[(i, k)] * mu[(i, k)] * bs[k];
            }
            bs[i] = s;
        }
        (mu, bs)
    };
    let mut k = 1;
    let mut iterations = 0;
    while k < n && iterations < 100_000 {
        iterations += 1;
        for j in (0..k).rev() {
            let (mu, _) = gso(&gm);
            let r = mu[(k, j)].round();
            if r != 0.0 {
                let ri = r as i64;
                for row in 0..n {
                    u[(row, k)] -= ri * u[(row, j)];
                }
                // b_k -= r b_j on the Gram
                let col_j = gm.column(j).into_owned();
                for row in 0..n {
                    gm[(row, k)] -= r * col_j[row];
                }
                let row_j = gm.row(j).into_owned();
                for col in 0..n {
                    gm[(k, col)] -= r * row_j[col];
                }
            }
        }
        let (mu, bs) = gso(&gm);
        if bs[k] >= (delta - mu[(k, k - 1)].powi(2)) * bs[k - 1] {
            k += 1;
        } else {
            u.swap_columns(k, k - 1);
            gm.swap_columns(k, k - 1);
            gm.swap_rows(k, k - 1);
            k = (k - 1).max(1);
        }
    }
    u
}

/// The `E8` root lattice Gram matrix (`<,>`, diagonal 2).
pub fn e8_gram() -> Vec<Vec<i64>> {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (2, 7)];
    let mut g = vec![vec![0i64; 8]; 8];
    for (i, row) in g.iter_mut().enumerate() {
        row[i] = 2;
    }
    for &(a, b) in &edges {
        g[a][b] = -1;
        g[b][a] = -1;
    }
    g
}

pub fn int_matrix(m: &[Vec<i64>]) -> FMatrix {
    m.iter().map(|r| r.iter().map(|&x| FieldElement::integer(x)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberfield::TotallyRealField;
    use crate::perioddomain::PeriodPoint;

    fn signature12() -> (OLattice, PolyPeriodPoint) {
        let s = QuadraticSpace::new(TotallyRealField::rational(), int_matrix(&[vec![2, 0, 0], vec![0, -2, 0], vec![0, 0, -2]]), 1).unwrap();
        let tau = PeriodPoint::new(&s, 1, DVector::from_vec(vec![0.0, 1.0, 0.0]), DVector::from_vec(vec![0.0, 0.0, 1.0])).unwrap();
        let poly = PolyPeriodPoint::new(&s, vec![tau]).unwrap();
        (OLattice::standard(s).unwrap(), poly)
    }

    fn e8() -> OLattice {
        let s = QuadraticSpace::new(TotallyRealField::rational(), int_matrix(&e8_gram()), 0).unwrap();
        OLattice::standard(s).unwrap()
    }

    #[test]
    fn volume_tracks_counts_and_gates_budget() {
        // Z^3 with Q = |x|^2: 4/3 pi t^{3/2}
        let en = Enumerator::new(&DMatrix::identity(3, 3)).unwrap();
        assert!((en.volume(4.0) - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-9);
        let mut n = 0;
        en.run(400.0, None, &mut |_, _| {
            n += 1;
            ControlFlow::Continue(())
        });
        assert!((n as f64 / en.volume(400.0) - 1.0).abs() < 0.02);
        assert!(matches!(enumerate(&DMatrix::identity(3, 3), 1e6, None, 1000), Err(Error::Budget { .. })));
    }

    #[test]
    fn majorant_over_q_is_q_tau() {
        let (l, tau) = signature12();
        let q = l.total_majorant(Some(&tau)).unwrap();
        assert!((q - DMatrix::identity(3, 3)).amax() < 1e-15);
        assert!(l.total_majorant(None).is_err());
    }

    #[test]
    fn enumeration_matches_box_scan() {
        let (l, tau) = signature12();
        let pts = l.enumerate_below(Some(&tau), 2.5, None, 1000).unwrap();
        let mut oracle = Vec::new();
        for a in -3i64..=3 {
            for b in -3i64..=3 {
                for c in -3i64..=3 {
                    if (a * a + b * b + c * c) as f64 <= 2.5 {
                        oracle.push(vec![a, b, c]);
                    }
                }
            }
        }
        let mut got: Vec<Vec<i64>> = pts.iter().map(|p| p.coords.clone()).collect();
        got.sort();
        oracle.sort();
        assert_eq!(got, oracle);
        let only_zero = l.enumerate_below(Some(&tau), 0.5, None, 10).unwrap();
        assert_eq!(only_zero.len(), 1);
        assert!(only_zero[0].coords.iter().all(|&c| c == 0));
        assert!(matches!(l.enumerate_below(Some(&tau), 2.5, None, 3), Err(Error::Budget { .. })));
    }

    #[test]
    fn lll_is_unimodular_and_reduces() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 10.0, 3.0, 10.0, 101.0, 29.0, 3.0, 29.0, 11.0]);
        let u = lll_gram(&g, 0.99);
        let det = u.map(|x| x as f64).determinant();
        assert!((det.abs() - 1.0).abs() < 1e-9);
        let r = u.map(|x| x as f64).transpose() * &g * u.map(|x| x as f64);
        assert!(r.diagonal().max() < 20.0);
    }

    #[test]
    fn e8_fibers() {
        let l = e8();
        let one = vec![vec![FieldElement::integer(1)]];
        assert_eq!(l.fibers_with_t(&one, None, None, 10_000).unwrap().len(), 240);
        let zero = vec![vec![FieldElement::integer(0)]];
        let z = l.fibers_with_t(&zero, None, None, 10).unwrap();
        assert_eq!(z, vec![vec![vec![0i64; 8]]]);
        let neg = vec![vec![FieldElement::integer(-1)]];
        assert!(l.fibers_with_t(&neg, None, None, 10).unwrap().is_empty());
        // orthogonal pairs of roots: 240 * 126
        let t = vec![vec![FieldElement::integer(1), FieldElement::integer(0)], vec![FieldElement::integer(0), FieldElement::integer(1)]];
        assert_eq!(l.fibers_with_t(&t, None, None, 100_000).unwrap().len(), 240 * 126);
    }

    #[test]
    fn indefinite_fibers_need_a_bound() {
        let (l, tau) = signature12();
        let one = vec![vec![FieldElement::integer(1)]];
        assert!(matches!(l.fibers_with_t(&one, Some(&tau), None, 10), Err(Error::BoundRequired(_))));
        let f = l.fibers_with_t(&one, Some(&tau), Some(1.0), 10).unwrap();
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn duals() {
        let l = e8();
        let d = l.dual_lattice().unwrap();
        assert!(d.same_module(&l));
        let (s, _) = signature12();
        let d = s.dual_lattice().unwrap();
        let half = FieldElement::ratio(1, 2);
        assert_eq!(d.zbasis()[0][0], half);
        assert_eq!(d.zbasis()[1][1], -half.clone());
        let g = d.space().tuple_gram(d.zbasis()).unwrap();
        assert_eq!(g[0][0], half);
        assert_eq!(g[1][1], -FieldElement::ratio(1, 2));
        let dd = d.dual_lattice().unwrap();
        assert_eq!(dd.zbasis(), s.zbasis());
    }

    #[test]
    fn sqrt5_majorant_is_6x6() {
        let f = TotallyRealField::quadratic(5).unwrap();
        let t = f.elt(4, -2);
        let gram = vec![vec![f.from_int(2), f.zero(), f.zero()], vec![f.zero(), t.clone(), f.zero()], vec![f.zero(), f.zero(), t]];
        let s = QuadraticSpace::new(f, gram, 1).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let tau = crate::perioddomain::random_period_point(&s, 1, &mut rng, 0.5).unwrap();
        let poly = PolyPeriodPoint::new(&s, vec![tau]).unwrap();
        let l = OLattice::standard(s).unwrap();
        let q = l.total_majorant(Some(&poly)).unwrap();
        assert_eq!(q.nrows(), 6);
        assert!(linalg::cholesky(&q).is_some());
    }
}
