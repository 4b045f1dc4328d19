//! Kudla-Millson forms evaluated in an adapted frame.
//!
//! Generators of the exterior algebra are `omega_{1,i}, omega_{2,i}`,
//! `i = 1..n`, stored as bits in the interleaved order
//! `omega_{1,1}, omega_{2,1}, omega_{1,2}, omega_{2,2}, ...`. A mask denotes
//! the wedge of its generators in increasing bit order.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::FVector;
use crate::perioddomain::{Chart, PeriodPoint, PolyPeriodPoint};
use crate::quadspace::QuadraticSpace;

/// Minimum Gram determinant accepted when transporting a frame.
pub const FRAME_DET_TOL: f64 = 1e-10;

fn bit1(i: usize) -> u64 {
    1 << (2 * i)
}

fn bit2(i: usize) -> u64 {
    1 << (2 * i + 1)
}

fn wedge_sign(a: u64, b: u64) -> f64 {
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

/// Element of the exterior algebra on `{omega_{1,i}, omega_{2,i}}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExteriorFormValue {
    n: usize,
    coeffs: BTreeMap<u64, f64>,
}

impl ExteriorFormValue {
    pub fn zero(n: usize) -> Self {
        ExteriorFormValue { n, coeffs: BTreeMap::new() }
    }

    pub fn one(n: usize) -> Self {
        Self::zero(n).with(0, 1.0)
    }

    fn with(mut self, mask: u64, c: f64) -> Self {
        if c != 0.0 {
            *self.coeffs.entry(mask).or_insert(0.0) += c;
        }
        self
    }

    /// `c * omega_{1,i} ^ omega_{2,j}` (1-based indices).
    pub fn two_form(n: usize, i: usize, j: usize, c: f64) -> Self {
        let (a, b) = (bit1(i - 1), bit2(j - 1));
        Self::zero(n).with(a | b, c * wedge_sign(a, b))
    }

    /// Canonical monomial for index sets `s1` (on `omega_1`) and `s2` (on
    /// `omega_2`), 1-based.
    pub fn monomial(n: usize, s1: &[usize], s2: &[usize], c: f64) -> Self {
        let mut mask = 0;
        for &i in s1 {
            mask |= bit1(i - 1);
        }
        for &j in s2 {
            mask |= bit2(j - 1);
        }
        Self::zero(n).with(mask, c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.coeffs.iter().map(|(&m, &c)| (m, c))
    }

    pub fn coeff_mask(&self, mask: u64) -> f64 {
        self.coeffs.get(&mask).copied().unwrap_or(0.0)
    }

    /// Coefficient of the canonical monomial on `(s1, s2)`.
    pub fn coeff(&self, s1: &[usize], s2: &[usize]) -> f64 {
        let m = Self::monomial(self.n, s1, s2, 1.0);
        self.coeff_mask(*m.coeffs.keys().next().unwrap_or(&0))
    }

    pub fn index_sets(mask: u64) -> (Vec<usize>, Vec<usize>) {
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        for bit in 0..64 {
            if mask >> bit & 1 == 1 {
                if bit % 2 == 0 {
                    s1.push(bit / 2 + 1);
                } else {
                    s2.push(bit / 2 + 1);
                }
            }
        }
        (s1, s2)
    }

    /// JSON key `"S1|S2"` with comma-separated 1-based indices.
    pub fn key(mask: u64) -> String {
        let (s1, s2) = Self::index_sets(mask);
        let join = |s: &[usize]| s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        format!("{}|{}", join(&s1), join(&s2))
    }

    pub fn parse_key(n: usize, key: &str) -> Result<u64> {
        let (a, b) = key.split_once('|').ok_or_else(|| Error::Input(format!("bad form key {key:?}")))?;
        let parse = |s: &str| -> Result<Vec<usize>> {
            if s.trim().is_empty() {
                return Ok(vec![]);
            }
            s.split(',')
                .map(|t| {
                    let i: usize = t.trim().parse().map_err(|_| Error::Input(format!("bad index {t:?}")))?;
                    if i == 0 || i > n {
                        return Err(Error::Input(format!("index {i} out of range 1..={n}")));
                    }
                    Ok(i)
                })
                .collect()
        };
        let m = Self::monomial(n, &parse(a)?, &parse(b)?, 1.0);
        Ok(*m.coeffs.keys().next().unwrap_or(&0))
    }

    /// Bidegree `(|S1|, |S2|)` of a mask.
    pub fn bidegree(mask: u64) -> (usize, usize) {
        let odd = 0xAAAA_AAAA_AAAA_AAAAu64;
        ((mask & !odd).count_ones() as usize, (mask & odd).count_ones() as usize)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.n = self.n.max(other.n);
        for (&m, &c) in &other.coeffs {
            *out.coeffs.entry(m).or_insert(0.0) += c;
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.n = self.n.max(other.n);
        for (&m, &c) in &other.coeffs {
            *self.coeffs.entry(m).or_insert(0.0) += c;
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        ExteriorFormValue { n: self.n, coeffs: self.coeffs.iter().map(|(&m, &v)| (m, v * c)).collect() }
    }

    pub fn wedge(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.n.max(other.n));
        for (&a, &ca) in &self.coeffs {
            for (&b, &cb) in &other.coeffs {
                if a & b == 0 {
                    *out.coeffs.entry(a | b).or_insert(0.0) += wedge_sign(a, b) * ca * cb;
                }
            }
        }
        out
    }

    /// Keeps monomials whose generators all have index in `keep` (1-based).
    pub fn restrict_to(&self, keep: &[usize]) -> Self {
        let allowed = keep.iter().fold(0u64, |m, &i| m | bit1(i - 1) | bit2(i - 1));
        ExteriorFormValue { n: self.n, coeffs: self.coeffs.iter().filter(|(&m, _)| m & !allowed == 0).map(|(&m, &c)| (m, c)).collect() }
    }

    /// Renames generator index `i` to `map[i - 1]` (1-based, order-preserving
    /// maps keep signs; general maps are re-signed).
    pub fn reindex(&self, new_n: usize, map: &[usize]) -> Self {
        let mut out = Self::zero(new_n);
        for (&m, &c) in &self.coeffs {
            let mut acc = Self::one(new_n).scale(c);
            for bit in 0..2 * self.n {
                if m >> bit & 1 == 1 {
                    let target = map[bit / 2] - 1;
                    let g = if bit % 2 == 0 { bit1(target) } else { bit2(target) };
                    acc = acc.wedge(&Self::zero(new_n).with(g, 1.0));
                }
            }
            out.add_assign(&acc);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.add(&other.scale(-1.0)).max_abs()
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.coeffs.values().sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self.coeffs.iter().filter(|(_, c)| **c != 0.0).map(|(&m, &c)| (Self::key(m), serde_json::json!(c))).collect();
        serde_json::Value::Object(map)
    }

    pub fn from_json(n: usize, v: &serde_json::Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::Input("form value must be an object".into()))?;
        let mut out = Self::zero(n);
        for (k, c) in obj {
            let c = c.as_f64().ok_or_else(|| Error::Input(format!("coefficient for {k} is not a number")))?;
            out = out.with(Self::parse_key(n, k)?, c);
        }
        Ok(out)
    }
}

/// Element of the tensor product over indefinite places; each key lists one
/// per-place monomial mask.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlacesFormValue {
    n: usize,
    places: usize,
    coeffs: BTreeMap<Vec<u64>, f64>,
}

impl PlacesFormValue {
    pub fn zero(n: usize, places: usize) -> Self {
        PlacesFormValue { n, places, coeffs: BTreeMap::new() }
    }

    /// Pure tensor `p_1^* w_1 ^ ... ^ p_e^* w_e`.
    pub fn from_places(values: &[ExteriorFormValue]) -> Self {
        let n = values.iter().map(|v| v.n).max().unwrap_or(0);
        let mut coeffs: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
        coeffs.insert(vec![], 1.0);
        for v in values {
            let mut next = BTreeMap::new();
            for (k, c) in &coeffs {
                for (&m, &cm) in &v.coeffs {
                    let mut key = k.clone();
                    key.push(m);
                    *next.entry(key).or_insert(0.0) += c * cm;
                }
            }
            coeffs = next;
        }
        PlacesFormValue { n, places: values.len(), coeffs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn places(&self) -> usize {
        self.places
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u64>, f64)> + '_ {
        self.coeffs.iter().map(|(k, &c)| (k, c))
    }

    pub fn coeff(&self, key: &[u64]) -> f64 {
        self.coeffs.get(key).copied().unwrap_or(0.0)
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.n = self.n.max(other.n);
        self.places = self.places.max(other.places);
        for (k, &c) in &other.coeffs {
            *self.coeffs.entry(k.clone()).or_insert(0.0) += c;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        PlacesFormValue { n: self.n, places: self.places, coeffs: self.coeffs.iter().map(|(k, &v)| (k.clone(), v * c)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.add(&other.scale(-1.0)).max_abs()
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.coeffs.values().sum()
    }

    /// `"S1|S2;S1|S2;..."`, one `S1|S2` block per place.
    pub fn key(masks: &[u64]) -> String {
        masks.iter().map(|&m| ExteriorFormValue::key(m)).collect::<Vec<_>>().join(";")
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self.coeffs.iter().filter(|(_, c)| **c != 0.0).map(|(k, &c)| (Self::key(k), serde_json::json!(c))).collect();
        serde_json::Value::Object(map)
    }

    /// Single-place view (`e = 1`).
    pub fn single_place(&self) -> Option<ExteriorFormValue> {
        if self.places != 1 {
            return None;
        }
        let mut out = ExteriorFormValue::zero(self.n);
        for (k, &c) in &self.coeffs {
            out = out.with(k[0], c);
        }
        Some(out)
    }
}

/// `B`-orthonormal frame adapted to a basepoint: `n` positive vectors with
/// `q = 1` spanning `z0^perp`, then `alpha0, beta0` with `q = -1`.
#[derive(Debug, Clone)]
pub struct KMFrame {
    base: PeriodPoint,
    positives: Vec<DVector<f64>>,
}

impl KMFrame {
    pub fn new(z0: &PeriodPoint) -> Self {
        KMFrame { positives: z0.adapted_positives(), base: z0.clone() }
    }

    /// Uses the given positives (projected onto `z0^perp` and orthonormalized).
    pub fn with_positives(z0: &PeriodPoint, seeds: &[DVector<f64>]) -> Result<Self> {
        let (positives, det) = z0.complete_frame(seeds);
        if det.abs() < FRAME_DET_TOL || positives.len() + 2 != z0.dim() {
            return Err(Error::IllConditioned(det.abs()));
        }
        Ok(KMFrame { base: z0.clone(), positives })
    }

    pub fn base(&self) -> &PeriodPoint {
        &self.base
    }

    pub fn place(&self) -> usize {
        self.base.place()
    }

    pub fn n(&self) -> usize {
        self.positives.len()
    }

    pub fn positives(&self) -> &[DVector<f64>] {
        &self.positives
    }

    /// Columns `f_1, ..., f_n, alpha0, beta0`.
    pub fn basis(&self) -> DMatrix<f64> {
        let mut cols = self.positives.clone();
        cols.push(self.base.alpha().clone());
        cols.push(self.base.beta().clone());
        DMatrix::from_columns(&cols)
    }

    /// Embedded Gram (`<,>`) of the frame; `diag(2, ..., 2, -2, -2)`.
    pub fn gram_in_frame(&self) -> DMatrix<f64> {
        let b = self.basis();
        b.transpose() * self.base.bilinear() * &b * 2.0
    }

    /// Coordinates `x = sum c_i f_i + c_{n+1} alpha0 + c_{n+2} beta0`.
    pub fn coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut c = DVector::zeros(n + 2);
        for (i, f) in self.positives.iter().enumerate() {
            c[i] = self.base.b(x, f);
        }
        c[n] = -self.base.b(x, self.base.alpha());
        c[n + 1] = -self.base.b(x, self.base.beta());
        c
    }

    /// Frame at `tau`: projections of these positives onto `tau^perp`,
    /// orthonormalized. Fails when the projection is nearly degenerate.
    pub fn transport(&self, tau: &PeriodPoint) -> Result<KMFrame> {
        if tau.place() != self.place() || tau.dim() != self.base.dim() {
            return Err(Error::Input("period point does not match the frame".into()));
        }
        Self::with_positives(tau, &self.positives)
    }

    /// `phi^{(1)}(x)` at the basepoint, `x` in standard coordinates.
    pub fn phi1(&self, x: &DVector<f64>) -> ExteriorFormValue {
        km_phi1(self.coordinates(x).as_slice(), self.n())
    }
}

/// `phi^{(1)}` for frame coordinates `x` (length `n + 2`):
/// `e^{-2 pi R} (sum_{i,j} 2 x_i x_j omega_{1,i} ^ omega_{2,j} - 1/(2 pi) sum_i omega_{1,i} ^ omega_{2,i})`
/// with `R = x_{n+1}^2 + x_{n+2}^2`.
pub fn km_phi1(x: &[f64], n: usize) -> ExteriorFormValue {
    let r = x[n] * x[n] + x[n + 1] * x[n + 1];
    let g = (-2.0 * PI * r).exp();
    let mut out = ExteriorFormValue::zero(n);
    for i in 0..n {
        for j in 0..n {
            let mut c = 2.0 * x[i] * x[j];
            if i == j {
                c -= 1.0 / (2.0 * PI);
            }
            out.add_assign(&ExteriorFormValue::two_form(n, i + 1, j + 1, g * c));
        }
    }
    out
}

/// Symmetric coefficient matrix `S` of a `(1,1)` form `sum S_ij omega_{1,i} ^ omega_{2,j}`.
pub fn two_form_matrix(form: &ExteriorFormValue) -> DMatrix<f64> {
    let n = form.n;
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (bit1(i), bit2(j));
        form.coeff_mask(a | b) * wedge_sign(a, b)
    })
}

/// `phi^{(1)}(x_1) ^ ... ^ phi^{(1)}(x_m)`, vectors in frame coordinates.
pub fn km_phi_m(xs: &[Vec<f64>], n: usize) -> ExteriorFormValue {
    xs.iter().fold(ExteriorFormValue::one(n), |acc, x| acc.wedge(&km_phi1(x, n)))
}

/// Gaussian normalization of `phi°`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiNormalization {
    /// `e^{-2 pi q_{z0}(x)} phi^{(1)}`, `q_{z0} = q + 2R`.
    #[default]
    Literal,
    /// `e^{-2 pi q(x)} phi^{(1)}`.
    Standard,
}

/// `phi°` for frame coordinates.
pub fn km_phi_circ(xs: &[Vec<f64>], n: usize, norm: PhiNormalization) -> ExteriorFormValue {
    let exponent: f64 = xs
        .iter()
        .map(|x| {
            let pos: f64 = x[..n].iter().map(|v| v * v).sum();
            let r = x[n] * x[n] + x[n + 1] * x[n + 1];
            let q = pos - r;
            match norm {
                PhiNormalization::Literal => q + 2.0 * r,
                PhiNormalization::Standard => q,
            }
        })
        .sum();
    km_phi_m(xs, n).scale((-2.0 * PI * exponent).exp())
}

/// `(-1)^r phi^{(r)}(0) = (1/(2 pi))^r (sum_i omega_{1,i} ^ omega_{2,i})^r`.
pub fn km_zero_form(r: usize, n: usize) -> ExteriorFormValue {
    let zero = vec![0.0; n + 2];
    let sign = if r.is_multiple_of(2) { 1.0 } else { -1.0 };
    km_phi_m(&vec![zero; r], n).scale(sign)
}

/// `phi_KM(x, tau)` in the frame transported from `frame` to `tau`.
pub fn evaluate_at(x: &DVector<f64>, tau: &PeriodPoint, frame: &KMFrame) -> Result<ExteriorFormValue> {
    Ok(frame.transport(tau)?.phi1(x))
}

/// `phi^{(m)}(x_1, ..., x_m; tau)` in the transported frame.
pub fn evaluate_m_at(xs: &[DVector<f64>], tau: &PeriodPoint, frame: &KMFrame) -> Result<ExteriorFormValue> {
    let fr = frame.transport(tau)?;
    let coords: Vec<Vec<f64>> = xs.iter().map(|x| fr.coordinates(x).as_slice().to_vec()).collect();
    Ok(km_phi_m(&coords, fr.n()))
}

/// Embeds a tuple at `place` and applies the optional `GL_k` scaling
/// `(x v)_j = sum_l x_l v_{lj}`.
pub fn embedded_tuple(space: &QuadraticSpace, xs: &[FVector], place: usize, scale: Option<&DMatrix<f64>>) -> Result<Vec<DVector<f64>>> {
    let emb: Vec<DVector<f64>> = xs.iter().map(|x| space.embed_vector(x, place)).collect::<Result<_>>()?;
    match scale {
        None => Ok(emb),
        Some(v) => {
            if v.nrows() != emb.len() || v.ncols() != emb.len() {
                return Err(Error::DimensionMismatch { expected: emb.len(), got: v.nrows() });
            }
            Ok((0..emb.len())
                .map(|j| emb.iter().enumerate().fold(DVector::zeros(space.dim()), |acc, (l, x)| acc + x * v[(l, j)]))
                .collect())
        }
    }
}

/// `omega_2(x, tau) = p_1^* phi^{(k)}(v_1 x, tau_1) ^ ... ^ p_e^* phi^{(k)}(v_e x, tau_e)`.
pub fn omega2(space: &QuadraticSpace, xs: &[FVector], tau: &PolyPeriodPoint, frames: &[KMFrame], scale: Option<&[DMatrix<f64>]>) -> Result<PlacesFormValue> {
    let e = space.e();
    if tau.len() != e || frames.len() != e {
        return Err(Error::LengthMismatch { expected: e, got: tau.len().min(frames.len()) });
    }
    if let Some(s) = scale {
        if s.len() != e {
            return Err(Error::LengthMismatch { expected: e, got: s.len() });
        }
    }
    let mut per_place = Vec::with_capacity(e);
    for place in 1..=e {
        let v = scale.map(|s| &s[place - 1]);
        let emb = embedded_tuple(space, xs, place, v)?;
        per_place.push(evaluate_m_at(&emb, tau.at(place), &frames[place - 1])?);
    }
    Ok(PlacesFormValue::from_places(&per_place))
}

/// Pullback of a `(1,1)` form `sum S_ij omega_{1,i} ^ omega_{2,j}` (given in
/// `frame_at_tau`, the frame at the chart point `w`) to the chart:
/// returns `h` with form `= sum_{a,b} h_{ab} i dw_a ^ dwbar_b`.
pub fn pullback_to_chart(form: &ExteriorFormValue, frame_at_tau: &KMFrame, chart: &Chart, w: &[Complex64], branch: crate::perioddomain::Branch) -> Result<DMatrix<Complex64>> {
    let (v, s) = chart.vector(w, branch)?;
    let re = v.map(|z| z.re);
    let nrm = (-frame_at_tau.base().b(&re, &re)).sqrt();
    let derivs = chart.derivatives(w, s);
    let n = frame_at_tau.n();
    let bil = frame_at_tau.base().bilinear();
    // c_{a i} = B(dv/dw_a, f_i) / N
    let c = DMatrix::from_fn(derivs.len(), n, |a, i| {
        let f = &frame_at_tau.positives()[i];
        let bf = bil * f;
        derivs[a].iter().zip(bf.iter()).map(|(d, x)| d * x).sum::<Complex64>() / nrm
    });
    let smat = two_form_matrix(form).map(|x| Complex64::new(x, 0.0));
    Ok(&c * smat * c.adjoint() * Complex64::new(0.5, 0.0))
}

/// Compares `phi°^{(m)}(x'')` at `tau_U`, restricted to the generators of
/// `U^perp`, with `gaussian(x'') * phi^{(m)}_{V_U}(0)` computed in the
/// complement space. Returns the max coefficient deviation.
pub fn restriction_splitting_check(
    space: &QuadraticSpace,
    u_basis: &[FVector],
    x_dd: &[FVector],
    tau_u: &PeriodPoint,
    norm: PhiNormalization,
) -> Result<f64> {
    let place = tau_u.place();
    let k = u_basis.len();
    if x_dd.is_empty() {
        return Ok(0.0);
    }
    if !space.is_totally_positive_subspace(u_basis) || space.span_rank(u_basis) != k {
        return Err(Error::Domain("U must be a totally positive subspace with the given basis".into()));
    }
    let u_emb: Vec<DVector<f64>> = u_basis.iter().map(|u| space.embed_vector(u, place)).collect::<Result<_>>()?;
    let scale = tau_u.bilinear().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for u in &u_emb {
        let off = tau_u.b(u, tau_u.alpha()).abs().max(tau_u.b(u, tau_u.beta()).abs());
        if off > 1e-10 * scale * u.norm().max(1.0) {
            return Err(Error::Domain(format!("tau_U is not orthogonal to U (|B| = {off:.3e})")));
        }
    }

    // complement space V_U with its own frame
    let comp_basis = space.orthogonal_complement(u_basis);
    let comp_space = QuadraticSpace::unvalidated(*space.field(), space.tuple_gram(&comp_basis)?, space.e())?;
    let comp_emb = DMatrix::from_columns(&comp_basis.iter().map(|c| space.embed_vector(c, place)).collect::<Result<Vec<_>>>()?);
    let to_comp = |x: &DVector<f64>| -> Result<DVector<f64>> {
        comp_emb.clone().svd(true, true).solve(x, 1e-14).map_err(|e| Error::Domain(e.to_string()))
    };
    let tau_c = PeriodPoint::new(&comp_space, place, to_comp(tau_u.alpha())?, to_comp(tau_u.beta())?)?;
    let comp_frame = KMFrame::new(&tau_c);
    let m = x_dd.len();
    let nc = comp_frame.n();
    let rhs_comp = km_phi_m(&vec![vec![0.0; nc + 2]; m], nc);

    // big frame at tau_U: orthonormal basis of U first, then the complement positives
    let mut seeds = u_emb.clone();
    seeds.extend(comp_frame.positives().iter().map(|p| &comp_emb * p));
    let big = KMFrame::with_positives(tau_u, &seeds)?;
    let n = big.n();
    let x_emb: Vec<DVector<f64>> = x_dd.iter().map(|x| space.embed_vector(x, place)).collect::<Result<_>>()?;
    let coords: Vec<Vec<f64>> = x_emb.iter().map(|x| big.coordinates(x).as_slice().to_vec()).collect();
    let comp_idx: Vec<usize> = (k + 1..=n).collect();
    let lhs = km_phi_circ(&coords, n, norm).restrict_to(&comp_idx);

    let gauss = crate::whittaker::gaussian_standard(&space.tuple_gram(x_dd)?.iter().map(|r| r.iter().map(|v| space.field().embed(v, place).unwrap()).collect()).collect::<Vec<Vec<f64>>>());
    let rhs = rhs_comp.reindex(n, &comp_idx).scale(gauss);
    Ok(lhs.max_abs_diff(&rhs))
}

/// Finite-difference `d` of the chart pullback of `phi^{(1)}(x)` at `w`:
/// `sum h_ab i dw_a ^ dwbar_b` is closed iff `d_c h_ab = d_a h_cb` and
/// `dbar_c h_ab = dbar_b h_ac`. Returns the largest violation relative to
/// the largest derivative. Vacuous (zero) for `n = 1`.
pub fn closedness_check(x: &DVector<f64>, chart: &Chart, w: &[Complex64], h: f64) -> Result<f64> {
    closedness_check_with(chart, w, h, &|frame: &KMFrame| frame.phi1(x))
}

/// [`closedness_check`] for any `(1,1)` form given in the frame at each point.
pub fn closedness_check_with(chart: &Chart, w: &[Complex64], h: f64, form: &dyn Fn(&KMFrame) -> ExteriorFormValue) -> Result<f64> {
    let n = chart.n();
    let branch = crate::perioddomain::Branch::Plus;
    let hm = |w: &[Complex64]| -> Result<DMatrix<Complex64>> {
        let tau = chart.point(w, branch)?;
        let frame = KMFrame::new(&tau);
        pullback_to_chart(&form(&frame), &frame, chart, w, branch)
    };
    // d/dw_c = (d/du_c - i d/dv_c) / 2, dbar = (d/du_c + i d/dv_c) / 2
    let mut dw = Vec::with_capacity(n);
    let mut dwbar = Vec::with_capacity(n);
    for c in 0..n {
        let shifted = |delta: Complex64| -> Result<DMatrix<Complex64>> {
            let mut p = w.to_vec();
            p[c] += delta;
            hm(&p)
        };
        let du = (shifted(Complex64::new(h, 0.0))? - shifted(Complex64::new(-h, 0.0))?) / Complex64::new(2.0 * h, 0.0);
        let dv = (shifted(Complex64::new(0.0, h))? - shifted(Complex64::new(0.0, -h))?) / Complex64::new(2.0 * h, 0.0);
        let i = Complex64::i();
        dw.push((&du - &dv * i) * Complex64::new(0.5, 0.0));
        dwbar.push((&du + &dv * i) * Complex64::new(0.5, 0.0));
    }
    let scale = dw.iter().chain(&dwbar).map(|m| m.iter().map(|z| z.norm()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                worst = worst.max((dw[c][(a, b)] - dw[a][(c, b)]).norm());
                worst = worst.max((dwbar[c][(a, b)] - dwbar[b][(a, c)]).norm());
            }
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Human-readable listing, one monomial per line.
pub fn describe(form: &ExteriorFormValue) -> String {
    let mut s = String::new();
    for (m, c) in form.terms() {
        let _ = writeln!(s, "{:>12} {:+.12e}", ExteriorFormValue::key(m), c);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numberfield::{FieldElement, TotallyRealField};
    use crate::perioddomain::Branch;

    const C: f64 = 1.0 / (2.0 * PI);

    fn space(diag: &[i64]) -> QuadraticSpace {
        let n = diag.len();
        let gram = (0..n).map(|i| (0..n).map(|j| FieldElement::integer(if i == j { diag[i] } else { 0 })).collect()).collect();
        QuadraticSpace::new(TotallyRealField::rational(), gram, 1).unwrap()
    }

    fn vecf(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn z(v: &[i64]) -> FVector {
        v.iter().map(|&x| FieldElement::integer(x)).collect()
    }

    #[test]
    fn wedge_signs_and_keys() {
        let a = ExteriorFormValue::two_form(2, 1, 1, 1.0);
        let b = ExteriorFormValue::two_form(2, 2, 2, 1.0);
        let ab = a.wedge(&b);
        assert_eq!(ab.coeff(&[1, 2], &[1, 2]), 1.0);
        assert_eq!(ab, b.wedge(&a));
        // omega_{1,2} ^ omega_{2,1} = - omega_{2,1} ^ omega_{1,2}
        let c = ExteriorFormValue::two_form(2, 2, 1, 1.0);
        assert_eq!(c.coeff(&[2], &[1]), -1.0);
        assert_eq!(ExteriorFormValue::key(bit1(0) | bit2(0) | bit1(1)), "1,2|1");
        assert_eq!(ExteriorFormValue::parse_key(2, "1,2|1").unwrap(), bit1(0) | bit2(0) | bit1(1));
        assert_eq!(ExteriorFormValue::key(0), "|");
        let back = ExteriorFormValue::from_json(2, &ab.to_json()).unwrap();
        assert_eq!(back, ab);
    }

    #[test]
    fn phi1_examples() {
        let z0 = km_phi1(&[0.0, 0.0, 0.0], 1);
        assert_eq!(z0, ExteriorFormValue::two_form(1, 1, 1, -C));
        let neg = km_phi1(&[0.0, 0.3, 0.4], 1);
        assert!((neg.coeff(&[1], &[1]) + C * (-2.0 * PI * 0.25f64).exp()).abs() < 1e-15);
        let e1 = km_phi1(&[1.0, 0.0, 0.0], 1);
        assert!((e1.coeff(&[1], &[1]) - (2.0 - C)).abs() < 1e-15);
        // x=0 form sums over matching indices only
        let z2 = km_phi1(&[0.0; 4], 2);
        assert_eq!(z2.coeff(&[1], &[2]), 0.0);
        assert_eq!(z2.coeff(&[2], &[2]), -C);
    }

    #[test]
    fn zero_forms() {
        assert!((km_zero_form(1, 1).coeff(&[1], &[1]) - C).abs() < 1e-15);
        assert_eq!(km_zero_form(2, 1).max_abs(), 0.0);
        assert_eq!(km_zero_form(3, 2).max_abs(), 0.0);
        let f = km_zero_form(2, 2);
        assert!((f.coeff(&[1, 2], &[1, 2]) - 2.0 * C * C).abs() < 1e-15);
    }

    #[test]
    fn phi_m_orthogonal_units_by_hand() {
        // phi(e1) ^ phi(e2) with n = 2: expand over 4 generators
        let a = km_phi1(&[1.0, 0.0, 0.0, 0.0], 2);
        let b = km_phi1(&[0.0, 1.0, 0.0, 0.0], 2);
        let w = km_phi_m(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]], 2);
        assert_eq!(w, a.wedge(&b));
        // a = (2 - C) w11 - C w22, b = -C w11 + (2 - C) w22, w_ii = omega_{1,i}^omega_{2,i}
        let expect = (2.0 - C) * (2.0 - C) + C * C;
        assert!((w.coeff(&[1, 2], &[1, 2]) - expect).abs() < 1e-14);
    }

    #[test]
    fn frames_and_evaluation() {
        let s = space(&[2, -2, -2]);
        let z0 = PeriodPoint::new(&s, 1, vecf(&[0.0, 1.0, 0.0]), vecf(&[0.0, 0.0, 1.0])).unwrap();
        let fr = KMFrame::new(&z0);
        let g = fr.gram_in_frame();
        assert!((g - DMatrix::from_diagonal(&vecf(&[2.0, -2.0, -2.0]))).amax() < 1e-12);
        let x = vecf(&[1.0, 0.5, -0.25]);
        assert_eq!(evaluate_at(&x, &z0, &fr).unwrap(), fr.phi1(&x));
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let tau = crate::perioddomain::random_period_point(&s, 1, &mut rng, 0.8).unwrap();
        let v = evaluate_at(&x, &tau, &fr).unwrap();
        let r = tau.majorant_r(&x);
        let xi = fr.transport(&tau).unwrap().coordinates(&x)[0];
        let expect = (-2.0 * PI * r).exp() * (2.0 * xi * xi - C);
        assert!((v.coeff(&[1], &[1]) - expect).abs() < 1e-12);
    }

    #[test]
    fn omega2_single_place_and_identity_scale() {
        let s = space(&[2, -2, -2]);
        let z0 = PeriodPoint::new(&s, 1, vecf(&[0.0, 1.0, 0.0]), vecf(&[0.0, 0.0, 1.0])).unwrap();
        let tau = PolyPeriodPoint::new(&s, vec![z0.clone()]).unwrap();
        let frames = vec![KMFrame::new(&z0)];
        let x = vec![z(&[1, 1, 0])];
        let w = omega2(&s, &x, &tau, &frames, None).unwrap();
        let id = vec![DMatrix::identity(1, 1)];
        assert_eq!(omega2(&s, &x, &tau, &frames, Some(&id)).unwrap(), w);
        let single = w.single_place().unwrap();
        assert_eq!(single, frames[0].phi1(&vecf(&[1.0, 1.0, 0.0])));
    }

    #[test]
    fn restriction_splitting_n2() {
        let s = space(&[2, 2, -2, -2]);
        let z0 = PeriodPoint::new(&s, 1, vecf(&[0.0, 0.0, 1.0, 0.0]), vecf(&[0.3, 0.0, 0.2, 1.0])).unwrap();
        let u = vec![z(&[0, 1, 0, 0])];
        let tau_u = PeriodPoint::new(&s, 1, z0.alpha().clone(), z0.beta().clone()).unwrap();
        // tau_u must be orthogonal to U = span(e2): it is
        let dev = restriction_splitting_check(&s, &u, &[z(&[0, 1, 0, 0])], &tau_u, PhiNormalization::Literal).unwrap();
        assert!(dev <= 1e-9, "{dev}");
        let dev0 = restriction_splitting_check(&s, &u, &[z(&[0, 0, 0, 0])], &tau_u, PhiNormalization::Literal).unwrap();
        assert!(dev0 <= 1e-12);
        assert_eq!(restriction_splitting_check(&s, &u, &[], &tau_u, PhiNormalization::Literal).unwrap(), 0.0);
        let bad = vec![z(&[1, 0, 0, 0])];
        assert!(restriction_splitting_check(&s, &bad, &[z(&[1, 0, 0, 0])], &tau_u, PhiNormalization::Literal).is_err());
    }

    #[test]
    fn pullback_gauge_invariant_at_base() {
        let s = space(&[2, -2, -2]);
        let z0 = PeriodPoint::new(&s, 1, vecf(&[0.0, 1.0, 0.0]), vecf(&[0.0, 0.0, 1.0])).unwrap();
        let fr = KMFrame::new(&z0);
        let chart = Chart::new(&z0);
        let w = [Complex64::new(0.0, 0.0)];
        // at w = 0, dv/dw = f_1 so c = 1/N with N = 1
        let h = pullback_to_chart(&ExteriorFormValue::two_form(1, 1, 1, 1.0), &fr, &chart, &w, Branch::Plus).unwrap();
        assert!((h[(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn phi1_pullback_is_closed() {
        let s = space(&[2, 2, -2, -2]);
        let z0 = PeriodPoint::new(&s, 1, vecf(&[0.0, 0.0, 1.0, 0.0]), vecf(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        let chart = Chart::new(&z0);
        let x = vecf(&[0.4, -0.3, 0.8, 0.5]);
        let w = [Complex64::new(0.1, -0.05), Complex64::new(-0.2, 0.1)];
        let dev = closedness_check(&x, &chart, &w, 1e-3).unwrap();
        assert!(dev <= 1e-3, "{dev}");
        // control: doubling the Gaussian exponent gives a non-closed form
        let bad = closedness_check_with(&chart, &w, 1e-3, &|fr: &KMFrame| {
            let r = fr.base().majorant_r(&x);
            fr.phi1(&x).scale((-2.0 * PI * r).exp())
        })
        .unwrap();
        assert!(bad > 1e-2, "{bad}");
        let s1 = space(&[2, -2, -2]);
        let z1 = PeriodPoint::new(&s1, 1, vecf(&[0.0, 1.0, 0.0]), vecf(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(closedness_check(&vecf(&[0.3, 1.0, 0.2]), &Chart::new(&z1), &[Complex64::new(0.1, 0.0)], 1e-3).unwrap(), 0.0);
    }
}
