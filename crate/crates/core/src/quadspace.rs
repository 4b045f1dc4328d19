//! Quadratic spaces over a totally real field with signature profile
//! `(n,2)` at the first `e` places and positive definite elsewhere.
//!
//! The Gram matrix stores `<e_i, e_j>` with `<x, x> = 2 q(x)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, FMatrix, FVector};
use crate::numberfield::{FieldElement, TotallyRealField};

/// `r` vectors of one space, each of length `n + 2`.
pub type VectorTuple = Vec<FVector>;

/// Relative eigenvalue tolerance for embedded signatures.
pub const SIGNATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpace {
    field: TotallyRealField,
    gram: FMatrix,
    e: usize,
}

impl QuadraticSpace {
    /// Validated constructor: symmetric Gram, nondegenerate at every place,
    /// signature `(n, 2)` at places `1..=e` and `(n + 2, 0)` after.
    pub fn new(field: TotallyRealField, gram: FMatrix, e: usize) -> Result<Self> {
        let space = Self::unvalidated(field, gram, e)?;
        for (place, found) in space.signatures()?.into_iter().enumerate() {
            let expected = space.expected_signature(place + 1);
            if found != expected {
                return Err(Error::Profile { place: place + 1, expected, found });
            }
        }
        Ok(space)
    }

    /// Checks only shape, symmetry and `e <= d`; signatures are left to the
    /// caller (used to report profile tables for invalid inputs).
    pub fn unvalidated(field: TotallyRealField, gram: FMatrix, e: usize) -> Result<Self> {
        let m = gram.len();
        if m == 0 {
            return Err(Error::Input("empty gram matrix".into()));
        }
        for row in &gram {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: row.len() });
            }
        }
        for i in 0..m {
            for j in 0..i {
                if gram[i][j] != gram[j][i] {
                    return Err(Error::NotSymmetric(i + 1, j + 1));
                }
            }
        }
        if e > field.degree() {
            return Err(Error::Input(format!("e = {e} exceeds field degree {}", field.degree())));
        }
        if e > 0 && m < 3 {
            return Err(Error::Input("indefinite places need dimension n + 2 >= 3".into()));
        }
        Ok(QuadraticSpace { field, gram, e })
    }

    pub fn field(&self) -> &TotallyRealField {
        &self.field
    }

    pub fn gram(&self) -> &FMatrix {
        &self.gram
    }

    pub fn e(&self) -> usize {
        self.e
    }

    pub fn degree(&self) -> usize {
        self.field.degree()
    }

    pub fn dim(&self) -> usize {
        self.gram.len()
    }

    /// `n = dim - 2`.
    pub fn n(&self) -> usize {
        self.dim().saturating_sub(2)
    }

    pub fn expected_signature(&self, place: usize) -> (usize, usize) {
        if place <= self.e {
            (self.n(), 2)
        } else {
            (self.dim(), 0)
        }
    }

    fn check_len(&self, x: &[FieldElement]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// `<x, y> = x^T G y`.
    pub fn inner_product(&self, x: &[FieldElement], y: &[FieldElement]) -> Result<FieldElement> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(linalg::dot(x, &linalg::mat_vec(&self.gram, y)))
    }

    /// `q(x) = <x, x> / 2`.
    pub fn quad_value(&self, x: &[FieldElement]) -> Result<FieldElement> {
        Ok(&self.inner_product(x, x)? * &FieldElement::ratio(1, 2))
    }

    /// Gram matrix `(<x_i, x_j>)` of a tuple.
    pub fn tuple_gram(&self, xs: &[FVector]) -> Result<FMatrix> {
        let gx: Vec<FVector> = xs
            .iter()
            .map(|x| {
                self.check_len(x)?;
                Ok(linalg::mat_vec(&self.gram, x))
            })
            .collect::<Result<_>>()?;
        Ok(xs.iter().map(|xi| gx.iter().map(|gxj| linalg::dot(xi, gxj)).collect()).collect())
    }

    /// `T(x) = 1/2 (<x_i, x_j>)`.
    pub fn intersection_matrix(&self, xs: &[FVector]) -> Result<FMatrix> {
        let half = FieldElement::ratio(1, 2);
        Ok(self
            .tuple_gram(xs)?
            .into_iter()
            .map(|row| row.iter().map(|v| v * &half).collect())
            .collect())
    }

    /// Embedded Gram `sigma_place(<e_i, e_j>)`.
    pub fn embedded_gram(&self, place: usize) -> Result<DMatrix<f64>> {
        self.check_place(place)?;
        Ok(linalg::embed_matrix(&self.field, &self.gram, place))
    }

    /// Embedded polarization `B = G / 2`, so that `B(x, x) = q(x)`.
    pub fn bilinear_at(&self, place: usize) -> Result<DMatrix<f64>> {
        Ok(self.embedded_gram(place)? * 0.5)
    }

    pub fn embed_vector(&self, x: &[FieldElement], place: usize) -> Result<nalgebra::DVector<f64>> {
        self.check_len(x)?;
        self.check_place(place)?;
        Ok(linalg::embed_vector(&self.field, x, place))
    }

    fn check_place(&self, place: usize) -> Result<()> {
        if place == 0 || place > self.degree() {
            return Err(Error::EmbeddingIndex { index: place, degree: self.degree() });
        }
        Ok(())
    }

    pub fn signature_at(&self, place: usize) -> Result<(usize, usize)> {
        let g = self.embedded_gram(place)?;
        linalg::inertia(&g, SIGNATURE_TOL).ok_or(Error::SingularGram(place))
    }

    pub fn signatures(&self) -> Result<Vec<(usize, usize)>> {
        (1..=self.degree()).map(|i| self.signature_at(i)).collect()
    }

    /// Greedy left-to-right choice of vectors that enlarge the span.
    /// Indices are 1-based.
    pub fn canonical_subtuple(&self, xs: &[FVector]) -> (Vec<usize>, VectorTuple) {
        let mut chosen: Vec<FVector> = Vec::new();
        let mut idx = Vec::new();
        for (i, x) in xs.iter().enumerate() {
            let mut trial = chosen.clone();
            trial.push(x.clone());
            if linalg::rank(&trial, self.dim()) > chosen.len() {
                chosen.push(x.clone());
                idx.push(i + 1);
            }
        }
        (idx, chosen)
    }

    /// `dim U(x)`.
    pub fn span_rank(&self, xs: &[FVector]) -> usize {
        linalg::rank(xs, self.dim())
    }

    /// Positive definite at every place, decided by exact leading minors of
    /// the Gram of a spanning subset. The zero subspace counts as positive.
    pub fn is_totally_positive_subspace(&self, xs: &[FVector]) -> bool {
        let (_, basis) = self.canonical_subtuple(xs);
        if basis.is_empty() {
            return true;
        }
        match self.tuple_gram(&basis) {
            Ok(g) => is_totally_positive_definite(&self.field, &g),
            Err(_) => false,
        }
    }

    /// Basis of `{y : <y, x_j> = 0 for all j}`.
    pub fn orthogonal_complement(&self, xs: &[FVector]) -> Vec<FVector> {
        let rows: Vec<FVector> = xs.iter().map(|x| linalg::mat_vec(&self.gram, x)).collect();
        if rows.is_empty() {
            return (0..self.dim())
                .map(|i| (0..self.dim()).map(|j| FieldElement::integer((i == j) as i64)).collect())
                .collect();
        }
        linalg::nullspace(&rows, self.dim())
    }

    /// Restriction of the form to the span of `basis` (Gram `<b_i, b_j>`).
    pub fn restrict(&self, basis: &[FVector], e: usize) -> Result<QuadraticSpace> {
        QuadraticSpace::new(self.field, self.tuple_gram(basis)?, e)
    }
}

/// Exact test: all leading principal minors totally positive.
pub fn is_totally_positive_definite(field: &TotallyRealField, m: &FMatrix) -> bool {
    linalg::leading_minors(m).iter().all(|x| field.is_totally_positive(x))
}

/// Totally positive semidefinite: positive semidefinite at every embedding,
/// decided from the embedded eigenvalues with relative tolerance.
pub fn is_totally_psd(field: &TotallyRealField, m: &FMatrix, tol: f64) -> bool {
    if m.is_empty() {
        return true;
    }
    (1..=field.degree()).all(|place| {
        let em = linalg::embed_matrix(field, m, place);
        linalg::min_eigenvalue(&em) >= -tol
    })
}
