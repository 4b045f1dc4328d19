//! Clifford algebra over an orthogonalized real frame at one place, and the
//! GSpin action on `V`.
//!
//! Generators satisfy `e_i e_j = -e_j e_i` for `i != j` and `e_i^2 = q(e_i)`,
//! so `u v + v u = <u, v>` for vectors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::FVector;
use crate::numberfield::FieldElement;
use crate::quadspace::QuadraticSpace;

/// Residual tolerance for `g V g^{-1} = V`.
pub const STABILITY_TOL: f64 = 1e-8;

/// Orthogonal basis of `V (x)_sigma R` at one place.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub place: usize,
    /// Columns are the basis vectors in standard coordinates.
    pub basis: DMatrix<f64>,
    /// `<b_i, b_i>`; the Clifford square of `b_i` is half of this.
    pub diag: Vec<f64>,
    basis_inv: DMatrix<f64>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Frame coordinates of a standard-coordinate vector.
    pub fn to_frame(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis_inv * v
    }

    pub fn to_standard(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.basis * c
    }

    /// `e_i^2 = q(b_i)`.
    pub fn square(&self, i: usize) -> f64 {
        self.diag[i] / 2.0
    }
}

/// Gram-Schmidt on the standard basis with respect to the embedded Gram;
/// an isotropic candidate is swapped for the most anisotropic remaining one.
/// Positive directions are ordered first.
pub fn orthogonalize(space: &QuadraticSpace, place: usize) -> Result<Frame> {
    let g = space.embedded_gram(place)?;
    let m = g.nrows();
    let scale = g.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let ip = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * &g * v)[(0, 0)];

    let mut pending: Vec<DVector<f64>> = (0..m).map(|i| DVector::from_fn(m, |j, _| (i == j) as u8 as f64)).collect();
    let mut done: Vec<(DVector<f64>, f64)> = Vec::new();
    while !pending.is_empty() {
        let norms: Vec<f64> = pending.iter().map(|v| ip(v, v)).collect();
        let pick = if norms[0].abs() > tol {
            Some(0)
        } else {
            let (k, best) = norms.iter().enumerate().fold((0, 0.0f64), |acc, (k, &n)| if n.abs() > acc.1 { (k, n.abs()) } else { acc });
            (best > tol).then_some(k)
        };
        let k = match pick {
            Some(k) => k,
            None => {
                // all remaining vectors isotropic: combine two with nonzero pairing
                let mut fixed = false;
                'outer: for i in 0..pending.len() {
                    for j in i + 1..pending.len() {
                        if ip(&pending[i], &pending[j]).abs() > tol {
                            let add = pending[j].clone();
                            pending[i] += add;
                            fixed = true;
                            break 'outer;
                        }
                    }
                }
                if !fixed {
                    return Err(Error::SingularGram(place));
                }
                continue;
            }
        };
        let v = pending.remove(k);
        let nv = ip(&v, &v);
        for w in pending.iter_mut() {
            let c = ip(&v, w) / nv;
            *w -= &v * c;
        }
        done.push((v, nv));
    }
    done.sort_by_key(|(_, n)| (*n < 0.0) as u8);
    let basis = DMatrix::from_columns(&done.iter().map(|(v, _)| v.clone()).collect::<Vec<_>>());
    let basis_inv = basis.clone().try_inverse().ok_or(Error::SingularGram(place))?;
    Ok(Frame { place, basis, diag: done.iter().map(|(_, n)| *n).collect(), basis_inv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

/// Dense multivector; index `mask` is the blade `e_{i1} ... e_{ik}` with
/// `i1 < ... < ik` the set bits.
#[derive(Debug, Clone)]
pub struct CliffordElement {
    frame: Arc<Frame>,
    coeffs: Vec<f64>,
}

fn reorder_sign(a: usize, b: usize) -> f64 {
    // parity of #{(i, j) : i in a, j in b, i > j}
    let mut count = 0u32;
    let mut bits = b;
    while bits != 0 {
        let j = bits.trailing_zeros();
        count += (a >> (j + 1)).count_ones();
        bits &= bits - 1;
    }
    if count.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

impl CliffordElement {
    pub fn zero(frame: &Arc<Frame>) -> Self {
        CliffordElement { frame: frame.clone(), coeffs: vec![0.0; 1 << frame.dim()] }
    }

    pub fn scalar(frame: &Arc<Frame>, c: f64) -> Self {
        Self::blade(frame, 0, c)
    }

    pub fn blade(frame: &Arc<Frame>, mask: usize, c: f64) -> Self {
        let mut z = Self::zero(frame);
        z.coeffs[mask] = c;
        z
    }

    /// Vector with the given frame coordinates.
    pub fn vector(frame: &Arc<Frame>, coords: &DVector<f64>) -> Self {
        let mut z = Self::zero(frame);
        for (i, &c) in coords.iter().enumerate() {
            z.coeffs[1 << i] = c;
        }
        z
    }

    /// Vector given in standard coordinates.
    pub fn from_standard(frame: &Arc<Frame>, v: &DVector<f64>) -> Self {
        Self::vector(frame, &frame.to_frame(v))
    }

    pub fn frame(&self) -> &Arc<Frame> {
        &self.frame
    }

    pub fn coeff(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn same_frame(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.frame, &other.frame) || *self.frame == *other.frame {
            Ok(())
        } else {
            Err(Error::FrameMismatch)
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_frame(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(CliffordElement { frame: self.frame.clone(), coeffs })
    }

    pub fn scale(&self, c: f64) -> Self {
        CliffordElement { frame: self.frame.clone(), coeffs: self.coeffs.iter().map(|a| a * c).collect() }
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        self.same_frame(other)?;
        let m = self.frame.dim();
        let mut out = vec![0.0; 1 << m];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for (b, &cb) in other.coeffs.iter().enumerate() {
                if cb == 0.0 {
                    continue;
                }
                let (mask, w) = blade_product(&self.frame, a, b);
                out[mask] += w * ca * cb;
            }
        }
        Ok(CliffordElement { frame: self.frame.clone(), coeffs: out })
    }

    pub fn parity(&self) -> Parity {
        let even = self.coeffs.iter().enumerate().any(|(m, &c)| c != 0.0 && m.count_ones() % 2 == 0);
        let odd = self.coeffs.iter().enumerate().any(|(m, &c)| c != 0.0 && m.count_ones() % 2 == 1);
        match (even, odd) {
            (_, false) => Parity::Even,
            (false, true) => Parity::Odd,
            (true, true) => Parity::Mixed,
        }
    }

    /// Matrix of left multiplication `y -> self * y`.
    fn left_regular(&self) -> DMatrix<f64> {
        let size = self.coeffs.len();
        let mut l = DMatrix::zeros(size, size);
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for b in 0..size {
                let (mask, w) = blade_product(&self.frame, a, b);
                l[(mask, b)] += w * ca;
            }
        }
        l
    }

    /// Two-sided inverse via the regular representation.
    pub fn inverse(&self) -> Result<Self> {
        let l = self.left_regular();
        let scale = l.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let lu = l.clone().lu();
        let mut rhs = DVector::zeros(self.coeffs.len());
        rhs[0] = 1.0;
        let y = lu.solve(&rhs).ok_or(Error::NotInvertible)?;
        let resid = (&l * &y - &rhs).amax();
        if !y.iter().all(|v| v.is_finite()) || resid > 1e-9 * scale.max(1.0) || scale == 0.0 {
            return Err(Error::NotInvertible);
        }
        Ok(CliffordElement { frame: self.frame.clone(), coeffs: y.iter().copied().collect() })
    }

    /// `g v g^{-1}` for `v` in standard coordinates, returned in standard
    /// coordinates together with the off-`V` residual (relative).
    pub fn conjugate_vector(&self, v: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if self.parity() != Parity::Even {
            return Err(Error::Domain("GSpin elements are even".into()));
        }
        let inv = self.inverse()?;
        let x = CliffordElement::from_standard(&self.frame, v);
        let y = self.product(&x)?.product(&inv)?;
        let m = self.frame.dim();
        let coords = DVector::from_fn(m, |i, _| y.coeffs[1 << i]);
        let off: f64 = y
            .coeffs
            .iter()
            .enumerate()
            .filter(|(mask, _)| mask.count_ones() != 1)
            .map(|(_, c)| c * c)
            .sum::<f64>()
            .sqrt();
        let denom = coords.norm().max(x.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()).max(f64::MIN_POSITIVE);
        Ok((self.frame.to_standard(&coords), off / denom))
    }

    /// `g v g^{-1}`; fails if the result leaves `V`.
    pub fn vector_action(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let (w, resid) = self.conjugate_vector(v)?;
        if resid > STABILITY_TOL {
            return Err(Error::NotGSpinStable(resid));
        }
        Ok(w)
    }

    /// Even, invertible, and stabilizes every basis vector of `V`.
    pub fn is_gspin(&self) -> bool {
        if self.parity() != Parity::Even {
            return false;
        }
        let m = self.frame.dim();
        (0..m).all(|i| {
            let v = self.frame.basis.column(i).into_owned();
            matches!(self.conjugate_vector(&v), Ok((_, r)) if r <= STABILITY_TOL)
        })
    }
}

/// `e_a e_b = w e_{a xor b}`.
fn blade_product(frame: &Frame, a: usize, b: usize) -> (usize, f64) {
    let mut w = reorder_sign(a, b);
    let common = a & b;
    for i in 0..frame.dim() {
        if common >> i & 1 == 1 {
            w *= frame.square(i);
        }
    }
    (a ^ b, w)
}

/// A GSpin element stored both numerically and as an exact product of an
/// even number of anisotropic `F`-vectors `u_1 ... u_k`.
#[derive(Debug, Clone)]
pub struct GSpinElement {
    pub element: CliffordElement,
    pub factors: Vec<FVector>,
}

impl GSpinElement {
    /// Exact action on `V(F)`: conjugation by `u` is `-s_u`, so an even
    /// product acts by the composite of reflections.
    pub fn act_exact(&self, space: &QuadraticSpace, x: &[FieldElement]) -> Result<FVector> {
        let mut v = x.to_vec();
        for u in self.factors.iter().rev() {
            let qu = space.quad_value(u)?;
            let c = &space.inner_product(u, &v)? / &qu;
            v = v.iter().zip(u).map(|(vi, ui)| vi - &(&c * ui)).collect();
        }
        Ok(v)
    }

    pub fn act(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.element.vector_action(v)
    }
}

/// Product of the given vectors, normalized by `sqrt |prod q(u_i)|`.
pub fn gspin_from_factors(space: &QuadraticSpace, frame: &Arc<Frame>, factors: Vec<FVector>) -> Result<GSpinElement> {
    if !factors.len().is_multiple_of(2) {
        return Err(Error::Domain("GSpin needs an even number of vector factors".into()));
    }
    let mut g = CliffordElement::scalar(frame, 1.0);
    let mut norm = 1.0;
    for u in &factors {
        let qu = space.quad_value(u)?;
        if qu.is_zero() {
            return Err(Error::Domain("isotropic factor".into()));
        }
        norm *= space.field().embed(&qu, frame.place)?.abs();
        let uv = CliffordElement::from_standard(frame, &space.embed_vector(u, frame.place)?);
        g = g.product(&uv)?;
    }
    Ok(GSpinElement { element: g.scale(1.0 / norm.sqrt()), factors })
}

/// `count` random GSpin elements, each a normalized product of 2, 4 or 6
/// anisotropic vectors with small integral coordinates.
pub fn random_gspin(space: &QuadraticSpace, frame: &Arc<Frame>, seed: u64, count: usize) -> Result<Vec<GSpinElement>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = space.field();
    let place = frame.place;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let k = 2 * rng.gen_range(1..=3);
        let mut factors = Vec::with_capacity(k);
        while factors.len() < k {
            let u: FVector = (0..space.dim())
                .map(|_| {
                    let a = rng.gen_range(-3..=3);
                    let b = if f.degree() == 2 { rng.gen_range(-1..=1) } else { 0 };
                    f.elt(a, b)
                })
                .collect();
            let qu = space.quad_value(&u)?;
            // keep |q(u)| away from 0 at the working place for conditioning
            let lim = 0.25 * u.iter().map(|x| f.embed(x, place).unwrap().powi(2)).sum::<f64>();
            if qu.is_zero() || f.embed(&qu, place)?.abs() < lim.max(0.5) {
                continue;
            }
            factors.push(u);
        }
        out.push(gspin_from_factors(space, frame, factors)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberfield::TotallyRealField;

    fn space(diag: &[i64], e: usize) -> QuadraticSpace {
        let n = diag.len();
        let gram = (0..n)
            .map(|i| (0..n).map(|j| FieldElement::integer(if i == j { diag[i] } else { 0 })).collect())
            .collect();
        QuadraticSpace::new(TotallyRealField::rational(), gram, e).unwrap()
    }

    #[test]
    fn orthogonalize_examples() {
        let f = orthogonalize(&space(&[2, -2, -2], 1), 1).unwrap();
        assert_eq!(f.basis, DMatrix::identity(3, 3));
        assert_eq!(f.diag, vec![2.0, -2.0, -2.0]);
        let g = QuadraticSpace::new(
            TotallyRealField::rational(),
            vec![vec![FieldElement::integer(2), FieldElement::integer(1)], vec![FieldElement::integer(1), FieldElement::integer(2)]],
            0,
        )
        .unwrap();
        let f = orthogonalize(&g, 1).unwrap();
        assert!((f.diag[0] - 2.0).abs() < 1e-14 && (f.diag[1] - 1.5).abs() < 1e-14);
        let f = orthogonalize(&space(&[-2, 2, -2], 1), 1).unwrap();
        assert!(f.diag[0] > 0.0 && f.diag[1] < 0.0 && f.diag[2] < 0.0);
        // isotropic standard basis vectors
        let h = QuadraticSpace::new(
            TotallyRealField::rational(),
            vec![
                vec![FieldElement::integer(0), FieldElement::integer(1), FieldElement::integer(0)],
                vec![FieldElement::integer(1), FieldElement::integer(0), FieldElement::integer(0)],
                vec![FieldElement::integer(0), FieldElement::integer(0), FieldElement::integer(-2)],
            ],
            1,
        )
        .unwrap();
        let f = orthogonalize(&h, 1).unwrap();
        let gm = h.embedded_gram(1).unwrap();
        let d = f.basis.transpose() * gm * &f.basis;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(d[(i, j)].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn products_and_parity() {
        let fr = Arc::new(orthogonalize(&space(&[2, -2, -2], 1), 1).unwrap());
        let e1 = CliffordElement::blade(&fr, 0b001, 1.0);
        let e2 = CliffordElement::blade(&fr, 0b010, 1.0);
        let e12 = e1.product(&e2).unwrap();
        assert_eq!(e12.coeff(0b011), 1.0);
        assert_eq!(e2.product(&e1).unwrap().coeff(0b011), -1.0);
        assert_eq!(e1.product(&e1).unwrap().coeff(0), 1.0);
        // (e1 e2)^2 = -q(e1) q(e2) = 1
        assert_eq!(e12.product(&e12).unwrap().coeff(0), 1.0);
        let one = CliffordElement::scalar(&fr, 1.0);
        assert_eq!(one.add(&e12).unwrap().parity(), Parity::Even);
        assert_eq!(e1.parity(), Parity::Odd);
        assert_eq!(one.add(&e1).unwrap().parity(), Parity::Mixed);
        let other = Arc::new(orthogonalize(&space(&[2, -2, -6], 1), 1).unwrap());
        assert_eq!(e1.product(&CliffordElement::scalar(&other, 1.0)).unwrap_err(), Error::FrameMismatch);
    }

    #[test]
    fn actions() {
        let v = space(&[2, -2, -2], 1);
        let fr = Arc::new(orthogonalize(&v, 1).unwrap());
        let one = CliffordElement::scalar(&fr, 1.0);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((one.vector_action(&x).unwrap() - &x).norm() < 1e-15);
        assert!(one.is_gspin());
        let e1 = CliffordElement::blade(&fr, 0b001, 1.0);
        let e2 = CliffordElement::blade(&fr, 0b010, 1.0);
        let e12 = e1.product(&e2).unwrap();
        // e1 e2 negates e1 and e2 and fixes e3
        let y = e12.vector_action(&x).unwrap();
        assert!((y - DVector::from_vec(vec![-1.0, -2.0, 3.0])).norm() < 1e-12);
        assert!(e12.is_gspin());
        assert!(one.add(&e1).unwrap().vector_action(&x).is_err());
        assert!(!e1.is_gspin());
        // a non-invertible even element: 1 + e1 e2 squares to 2(1 + e1 e2)
        assert_eq!(one.add(&e12).unwrap().inverse().unwrap_err(), Error::NotInvertible);
    }

    #[test]
    fn exact_and_numeric_actions_agree() {
        let v = QuadraticSpace::new(TotallyRealField::rational(), vec![
            vec![FieldElement::integer(2), FieldElement::integer(1), FieldElement::integer(0), FieldElement::integer(0)],
            vec![FieldElement::integer(1), FieldElement::integer(-2), FieldElement::integer(0), FieldElement::integer(0)],
            vec![FieldElement::integer(0), FieldElement::integer(0), FieldElement::integer(-2), FieldElement::integer(0)],
            vec![FieldElement::integer(0), FieldElement::integer(0), FieldElement::integer(0), FieldElement::integer(4)],
        ], 1).unwrap();
        let fr = Arc::new(orthogonalize(&v, 1).unwrap());
        for g in random_gspin(&v, &fr, 7, 20).unwrap() {
            assert!(g.element.is_gspin());
            let x: FVector = [1, -2, 3, 1].iter().map(|&a| FieldElement::integer(a)).collect();
            let exact = g.act_exact(&v, &x).unwrap();
            let num = g.act(&v.embed_vector(&x, 1).unwrap()).unwrap();
            let ex = v.embed_vector(&exact, 1).unwrap();
            assert!((num - &ex).norm() <= 1e-9 * ex.norm().max(1.0));
            assert_eq!(v.quad_value(&exact).unwrap(), v.quad_value(&x).unwrap());
        }
    }
}
