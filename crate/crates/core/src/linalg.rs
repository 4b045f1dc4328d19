//! Exact linear algebra over `F` and small real helpers shared by the
//! numeric modules.

use nalgebra::{DMatrix, DVector};

use crate::numberfield::{FieldElement, TotallyRealField};

pub type FVector = Vec<FieldElement>;
pub type FMatrix = Vec<Vec<FieldElement>>;

fn zero() -> FieldElement {
    FieldElement::integer(0)
}

/// Reduced row echelon form. Returns the reduced rows and pivot columns.
pub fn rref(rows: &[FVector], ncols: usize) -> (FMatrix, Vec<usize>) {
    let mut m: FMatrix = rows.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == m.len() {
            break;
        }
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].inv().unwrap();
        m[r] = m[r].iter().map(|v| v * &inv).collect();
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let factor = m[i][c].clone();
                let pivot_row = m[r].clone();
                for (dst, src) in m[i].iter_mut().zip(&pivot_row) {
                    *dst = &*dst - &(&factor * src);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    m.truncate(r);
    (m, pivots)
}

pub fn rank(rows: &[FVector], ncols: usize) -> usize {
    rref(rows, ncols).1.len()
}

/// Basis of `{y : M y = 0}` for the matrix with the given rows.
pub fn nullspace(rows: &[FVector], ncols: usize) -> Vec<FVector> {
    let (red, pivots) = rref(rows, ncols);
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut y = vec![zero(); ncols];
            y[f] = FieldElement::integer(1);
            for (row, &p) in red.iter().zip(&pivots) {
                y[p] = -&row[f];
            }
            y
        })
        .collect()
}

pub fn determinant(m: &FMatrix) -> FieldElement {
    let n = m.len();
    let mut a = m.clone();
    let mut det = FieldElement::integer(1);
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_zero()) else {
            return zero();
        };
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det = &det * &a[c][c];
        let inv = a[c][c].inv().unwrap();
        for i in c + 1..n {
            if a[i][c].is_zero() {
                continue;
            }
            let factor = &a[i][c] * &inv;
            let pivot_row = a[c].clone();
            for (dst, src) in a[i].iter_mut().zip(&pivot_row).skip(c) {
                *dst = &*dst - &(&factor * src);
            }
        }
    }
    det
}

pub fn inverse(m: &FMatrix) -> Option<FMatrix> {
    let n = m.len();
    let aug: FMatrix = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| FieldElement::integer((i == j) as i64)));
            r
        })
        .collect();
    let (red, pivots) = rref(&aug, 2 * n);
    if pivots.len() < n || pivots[n - 1] >= n {
        return None;
    }
    Some(red.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Leading principal minors `det(M[..k, ..k])`, `k = 1..=n`.
pub fn leading_minors(m: &FMatrix) -> Vec<FieldElement> {
    (1..=m.len())
        .map(|k| determinant(&m[..k].iter().map(|r| r[..k].to_vec()).collect()))
        .collect()
}

pub fn mat_vec(m: &FMatrix, v: &[FieldElement]) -> FVector {
    m.iter()
        .map(|row| row.iter().zip(v).fold(zero(), |acc, (a, b)| &acc + &(a * b)))
        .collect()
}

pub fn dot(u: &[FieldElement], v: &[FieldElement]) -> FieldElement {
    u.iter().zip(v).fold(zero(), |acc, (a, b)| &acc + &(a * b))
}

pub fn scale(c: &FieldElement, v: &[FieldElement]) -> FVector {
    v.iter().map(|x| c * x).collect()
}

pub fn add(u: &[FieldElement], v: &[FieldElement]) -> FVector {
    u.iter().zip(v).map(|(a, b)| a + b).collect()
}

pub fn sub(u: &[FieldElement], v: &[FieldElement]) -> FVector {
    u.iter().zip(v).map(|(a, b)| a - b).collect()
}

pub fn embed_vector(field: &TotallyRealField, v: &[FieldElement], place: usize) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|x| field.embed(x, place).unwrap()))
}

pub fn embed_matrix(field: &TotallyRealField, m: &FMatrix, place: usize) -> DMatrix<f64> {
    let (r, c) = (m.len(), m.first().map_or(0, |row| row.len()));
    DMatrix::from_fn(r, c, |i, j| field.embed(&m[i][j], place).unwrap())
}

/// Lower-triangular Cholesky factor, or `None` if not positive definite.
pub fn cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::linalg::Cholesky::new(m.clone()).map(|c| c.l())
}

/// `(positives, negatives)` of a real symmetric matrix; `None` if some
/// eigenvalue has magnitude below `rel_tol * max|eigenvalue|`.
pub fn inertia(m: &DMatrix<f64>, rel_tol: f64) -> Option<(usize, usize)> {
    let eig = nalgebra::linalg::SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let mut counts = (0, 0);
    for &l in eig.eigenvalues.iter() {
        if l.abs() <= rel_tol * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        if l > 0.0 {
            counts.0 += 1;
        } else {
            counts.1 += 1;
        }
    }
    Some(counts)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::linalg::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &l| a.min(l))
}
