//! The generating-series theta function: lattice sums of Whittaker values
//! times `omega_2`, their q-expansions by exact `T`, scalar (Hilbert) theta
//! series of definite lattices, and modularity checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::ControlFlow;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kmform::{self, KMFrame, PlacesFormValue};
use crate::lattice::{Enumerator, OLattice};
use crate::linalg::{self, FMatrix, FVector};
use crate::numberfield::{FieldElement, TotallyRealField};
use crate::perioddomain::PolyPeriodPoint;
use crate::quadspace;
use crate::whittaker::{PreparedWhittaker, SymplecticElement};

/// Exact `T(x)` key, a symmetric `r x r` matrix over `F`.
pub type TKey = Vec<Vec<FieldElement>>;

/// `"t"` for `r = 1`, otherwise upper-triangle rows `"t11 t12;t22"`.
pub fn t_key_string(t: &TKey) -> String {
    if t.len() == 1 {
        return t[0][0].to_string();
    }
    (0..t.len()).map(|i| (i..t.len()).map(|j| t[i][j].to_string()).collect::<Vec<_>>().join(" ")).collect::<Vec<_>>().join(";")
}

/// Form with complex coefficients, stored as real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexForm {
    pub re: PlacesFormValue,
    pub im: PlacesFormValue,
}

impl ComplexForm {
    pub fn zero(n: usize, places: usize) -> Self {
        ComplexForm { re: PlacesFormValue::zero(n, places), im: PlacesFormValue::zero(n, places) }
    }

    /// `self += c * f`.
    pub fn add_scaled(&mut self, c: Complex64, f: &PlacesFormValue) {
        self.re.add_assign(&f.scale(c.re));
        self.im.add_assign(&f.scale(c.im));
    }

    pub fn add_assign(&mut self, other: &ComplexForm) {
        self.re.add_assign(&other.re);
        self.im.add_assign(&other.im);
    }

    pub fn scale(&self, c: Complex64) -> ComplexForm {
        ComplexForm { re: self.re.scale(c.re).add(&self.im.scale(-c.im)), im: self.re.scale(c.im).add(&self.im.scale(c.re)) }
    }

    /// Coefficients by per-place monomial key.
    pub fn components(&self) -> BTreeMap<Vec<u64>, Complex64> {
        let mut out: BTreeMap<Vec<u64>, Complex64> = BTreeMap::new();
        for (k, c) in self.re.terms() {
            out.entry(k.clone()).or_default().re += c;
        }
        for (k, c) in self.im.terms() {
            out.entry(k.clone()).or_default().im += c;
        }
        out
    }

    /// Scalar part (empty key); the whole value when there are no places.
    pub fn scalar(&self) -> Complex64 {
        Complex64::new(self.re.coeff(&[]), self.im.coeff(&[]))
    }

    pub fn max_abs(&self) -> f64 {
        self.components().values().fold(0.0, |a, c| a.max(c.norm()))
    }

    /// Largest coefficient-wise modulus of the difference.
    pub fn max_abs_diff(&self, other: &ComplexForm) -> f64 {
        let a = self.components();
        let b = other.components();
        a.keys().chain(b.keys()).map(|k| (a.get(k).copied().unwrap_or_default() - b.get(k).copied().unwrap_or_default()).norm()).fold(0.0, f64::max)
    }
}

/// Lattice, tuple length, anchor point and frames, truncation target, and the
/// finite datum: the characteristic function of `coset + L` (`None` = `L`).
#[derive(Debug, Clone)]
pub struct GeneratingSeriesSpec {
    pub lattice: OLattice,
    pub r: usize,
    pub tau: PolyPeriodPoint,
    pub frames: Vec<KMFrame>,
    pub epsilon: f64,
    pub coset: Option<Vec<BigRational>>,
}

/// How tuples are scaled inside `omega_2`.
#[derive(Debug, Clone)]
pub enum VScale {
    /// The Iwasawa `v` of each `g_j`.
    Iwasawa,
    Identity,
    Custom(Vec<DMatrix<f64>>),
}

impl GeneratingSeriesSpec {
    pub fn new(lattice: OLattice, r: usize, tau: PolyPeriodPoint, epsilon: f64) -> Result<Self> {
        let frames = tau.points().iter().map(KMFrame::new).collect();
        Self::with_frames(lattice, r, tau, frames, epsilon)
    }

    pub fn with_frames(lattice: OLattice, r: usize, tau: PolyPeriodPoint, frames: Vec<KMFrame>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Input(format!("epsilon must be positive, got {epsilon}")));
        }
        if r == 0 {
            return Err(Error::Input("tuple length r must be at least 1".into()));
        }
        let e = lattice.space().e();
        if tau.len() != e || frames.len() != e {
            return Err(Error::LengthMismatch { expected: e, got: tau.len().min(frames.len()) });
        }
        Ok(GeneratingSeriesSpec { lattice, r, tau, frames, epsilon, coset: None })
    }

    /// Restricts to `coset + L`; the offset (rational `Z`-basis coordinates)
    /// must lie in the dual lattice.
    pub fn with_coset(mut self, coset: Vec<BigRational>) -> Result<Self> {
        if coset.len() != self.lattice.rank() {
            return Err(Error::LengthMismatch { expected: self.lattice.rank(), got: coset.len() });
        }
        let y = self.lattice.vector_rational(&coset);
        if !self.lattice.dual_lattice()?.contains(&y) {
            return Err(Error::Input("coset offset is not in the dual lattice".into()));
        }
        self.coset = if coset.iter().all(|c| c.is_integer()) { None } else { Some(coset) };
        Ok(self)
    }

    pub fn field(&self) -> &TotallyRealField {
        self.lattice.space().field()
    }

    pub fn weight_dim(&self) -> usize {
        self.lattice.space().dim()
    }

    fn tau_opt(&self) -> Option<&PolyPeriodPoint> {
        if self.tau.is_empty() {
            None
        } else {
            Some(&self.tau)
        }
    }

    pub fn enumerator(&self) -> Result<Enumerator> {
        Enumerator::new(&self.lattice.total_majorant(self.tau_opt())?)
    }

    fn center(&self) -> Option<Vec<f64>> {
        self.coset.as_ref().map(|c| c.iter().map(|x| x.to_f64().unwrap_or(0.0)).collect())
    }

    /// Vectors of `coset + L` with `Q_maj <= radius`, sorted.
    pub fn candidates(&self, en: &Enumerator, radius: f64, budget: usize) -> Result<Vec<(Vec<i64>, f64)>> {
        let center = self.center();
        let mut out = Vec::new();
        let complete = en.run(radius, center.as_deref(), &mut |c, q| {
            if out.len() >= budget {
                return ControlFlow::Break(());
            }
            out.push((c.to_vec(), q));
            ControlFlow::Continue(())
        });
        if !complete {
            return Err(Error::Budget { bound: radius, budget });
        }
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }

    pub fn vector(&self, c: &[i64]) -> FVector {
        match &self.coset {
            None => self.lattice.vector(c),
            Some(mu) => {
                let q: Vec<BigRational> = c.iter().zip(mu).map(|(&ci, m)| BigRational::from_integer(ci.into()) + m).collect();
                self.lattice.vector_rational(&q)
            }
        }
    }

    /// Exact `T(x) = (<x_i, x_j> / 2)`.
    pub fn exact_t(&self, tuple: &[&[i64]]) -> Result<TKey> {
        match &self.coset {
            None => {
                let g = self.lattice.exact_gram();
                let half = FieldElement::ratio(1, 2);
                Ok((0..tuple.len()).map(|i| (0..tuple.len()).map(|j| &g.inner(tuple[i], tuple[j]) * &half).collect()).collect())
            }
            Some(_) => {
                let xs: Vec<FVector> = tuple.iter().map(|c| self.vector(c)).collect();
                self.lattice.space().intersection_matrix(&xs)
            }
        }
    }

    fn omega2(&self, xs: &[FVector], scale: Option<&[DMatrix<f64>]>) -> Result<PlacesFormValue> {
        kmform::omega2(self.lattice.space(), xs, &self.tau, &self.frames, scale)
    }

    fn is_psd_key(&self, t: &TKey) -> bool {
        quadspace::is_totally_psd(self.field(), t, 1e-12)
    }
}

/// Decay rate `a` and polynomial weight `P` with
/// `|term(x)| <= P(Q) e^{-2 pi a Q}`, `Q` the total majorant of the tuple.
#[derive(Debug, Clone)]
pub struct TailModel {
    pub a: f64,
    pub prefactor: f64,
    /// `(s_p^2)` per indefinite place.
    pub stretch: Vec<f64>,
    pub n: usize,
    pub r: usize,
}

impl TailModel {
    pub fn for_tuple(spec: &GeneratingSeriesSpec, prep: &PreparedWhittaker, scale: &VScale) -> Result<Self> {
        let e = spec.lattice.space().e();
        let mins = prep.min_imaginary();
        let mut a = f64::INFINITY;
        let mut stretch = Vec::with_capacity(e);
        for (p, &lam) in mins.iter().enumerate() {
            if p < e {
                let (c, s2) = match scale {
                    VScale::Identity => (1.0, 1.0),
                    VScale::Iwasawa => {
                        let y = &prep.vs()[p] * prep.vs()[p].transpose();
                        (linalg::min_eigenvalue(&y), -linalg::min_eigenvalue(&(-&y)))
                    }
                    VScale::Custom(v) => {
                        let y = &v[p] * v[p].transpose();
                        (linalg::min_eigenvalue(&y), -linalg::min_eigenvalue(&(-&y)))
                    }
                };
                a = a.min(lam.min(c / 2.0));
                stretch.push(s2);
            } else {
                a = a.min(lam);
            }
        }
        if !(a > 0.0) {
            return Err(Error::Domain("imaginary part is not positive definite".into()));
        }
        Ok(TailModel { a, prefactor: prep.prefactor().norm(), stretch, n: spec.lattice.space().n().max(1), r: spec.r })
    }

    /// The reference tuple `g = 1` with unscaled `omega_2`.
    pub fn identity(spec: &GeneratingSeriesSpec) -> Result<Self> {
        let gs = vec![SymplecticElement::identity(spec.r); spec.field().degree()];
        Self::for_tuple(spec, &PreparedWhittaker::new(&gs, spec.weight_dim())?, &VScale::Identity)
    }

    pub fn poly(&self, t: f64) -> f64 {
        self.stretch.iter().map(|s2| (self.n as f64 * (2.0 * s2 * t + 1.0)).powi(self.r as i32)).product::<f64>() * self.prefactor
    }

    /// Bound on the sum over tuples with total majorant above `b`.
    pub fn tail(&self, en: &Enumerator, b: f64) -> f64 {
        let mut total = 0.0;
        let mut j = 0.0;
        loop {
            let t = b + j;
            let term = (-2.0 * PI * self.a * t).exp() * self.poly(t + 1.0) * en.count_bound(t + 1.0).powi(self.r as i32);
            total += term;
            if term <= 1e-18 * total.max(1e-300) || j > 1e6 {
                break;
            }
            j += 1.0;
        }
        total
    }

    pub fn radius_for(&self, en: &Enumerator, eps: f64) -> Result<f64> {
        smallest_radius(&|b| self.tail(en, b), eps)
    }
}

/// Smallest `b` (to within 1/8) with `tail(b) <= eps`.
pub fn smallest_radius(tail: &dyn Fn(f64) -> f64, eps: f64) -> Result<f64> {
    let mut hi = 1.0;
    while tail(hi) > eps {
        hi *= 1.5;
        if hi > 1e6 {
            return Err(Error::Budget { bound: hi, budget: 0 });
        }
    }
    if tail(0.0) <= eps {
        return Ok(0.0);
    }
    let mut lo = hi / 1.5;
    if tail(lo) <= eps {
        lo = 0.0;
    }
    while hi - lo > 0.125 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

fn for_each_tuple(cands: &[(Vec<i64>, f64)], r: usize, f: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
    if cands.is_empty() {
        return Ok(());
    }
    let mut idx = vec![0usize; r];
    loop {
        f(&idx)?;
        let mut k = r;
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < cands.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThetaValue {
    pub value: ComplexForm,
    pub radius: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

fn scale_matrices(spec: &GeneratingSeriesSpec, prep: &PreparedWhittaker, scale: &VScale) -> Result<Option<Vec<DMatrix<f64>>>> {
    let e = spec.lattice.space().e();
    Ok(match scale {
        VScale::Identity => None,
        VScale::Iwasawa => Some(prep.vs()[..e].to_vec()),
        VScale::Custom(v) => {
            if v.len() != e {
                return Err(Error::LengthMismatch { expected: e, got: v.len() });
            }
            Some(v.clone())
        }
    })
}

/// One term `W_{T(x)}(g) omega_2(v x, tau)`.
pub fn km_theta_term(spec: &GeneratingSeriesSpec, xs: &[FVector], prep: &PreparedWhittaker, scale: &VScale) -> Result<ComplexForm> {
    let t = spec.lattice.space().intersection_matrix(xs)?;
    let w = prep.eval(spec.field(), &t);
    let e = spec.lattice.space().e();
    let mut out = ComplexForm::zero(spec.lattice.space().n(), e);
    if w == Complex64::new(0.0, 0.0) {
        return Ok(out);
    }
    let sm = scale_matrices(spec, prep, scale)?;
    out.add_scaled(w, &spec.omega2(xs, sm.as_deref())?);
    Ok(out)
}

/// `sum_{x in (coset + L)^r} W_{T(x)}(g) omega_2(v x, tau)` truncated so the
/// omitted terms are bounded by `spec.epsilon` coefficient-wise.
pub fn km_theta(spec: &GeneratingSeriesSpec, gs: &[SymplecticElement], scale: &VScale, budget: usize) -> Result<ThetaValue> {
    let d = spec.field().degree();
    if gs.len() != d {
        return Err(Error::LengthMismatch { expected: d, got: gs.len() });
    }
    if gs.iter().any(|g| g.genus() != spec.r) {
        return Err(Error::DimensionMismatch { expected: spec.r, got: gs[0].genus() });
    }
    let prep = PreparedWhittaker::new(gs, spec.weight_dim())?;
    let model = TailModel::for_tuple(spec, &prep, scale)?;
    let en = spec.enumerator()?;
    let radius = model.radius_for(&en, spec.epsilon)?;
    let tail_bound = model.tail(&en, radius);
    let cands = spec.candidates(&en, radius, budget)?;
    if (cands.len() as f64).powi(spec.r as i32) > budget as f64 {
        return Err(Error::Budget { bound: radius, budget });
    }
    let sm = scale_matrices(spec, &prep, scale)?;
    let e = spec.lattice.space().e();
    let mut value = ComplexForm::zero(spec.lattice.space().n(), e);
    let mut terms = 0;
    let vectors: Vec<FVector> = cands.iter().map(|(c, _)| spec.vector(c)).collect();
    for_each_tuple(&cands, spec.r, &mut |idx| {
        let tuple: Vec<&[i64]> = idx.iter().map(|&i| cands[i].0.as_slice()).collect();
        let t = spec.exact_t(&tuple)?;
        let w = prep.eval(spec.field(), &t);
        if w == Complex64::new(0.0, 0.0) {
            return Ok(());
        }
        let xs: Vec<FVector> = idx.iter().map(|&i| vectors[i].clone()).collect();
        value.add_scaled(w, &spec.omega2(&xs, sm.as_deref())?);
        terms += 1;
        Ok(())
    })?;
    Ok(ThetaValue { value, radius, tail_bound, terms })
}

/// Coefficients `c_T = sum_{T(x) = T} omega_2(x, tau)` over totally psd `T`,
/// from all tuples with entries of total majorant at most `radius`.
#[derive(Debug, Clone)]
pub struct QExpansion {
    pub field: TotallyRealField,
    pub r: usize,
    pub n: usize,
    pub places: usize,
    pub coefficients: BTreeMap<TKey, PlacesFormValue>,
    pub radius: f64,
    /// Bound on omitted terms at the reference tuple `g = 1`.
    pub tail_bound: f64,
}

impl QExpansion {
    /// `sum_T c_T W_T(g)`.
    pub fn eval(&self, prep: &PreparedWhittaker) -> ComplexForm {
        let mut out = ComplexForm::zero(self.n, self.places);
        for (t, c) in &self.coefficients {
            let w = prep.eval(&self.field, t);
            if w != Complex64::new(0.0, 0.0) {
                out.add_scaled(w, c);
            }
        }
        out
    }

    /// Bound on terms omitted from [`QExpansion::eval`] at `g`.
    pub fn tail_bound_for(&self, spec: &GeneratingSeriesSpec, prep: &PreparedWhittaker) -> Result<f64> {
        Ok(TailModel::for_tuple(spec, prep, &VScale::Identity)?.tail(&spec.enumerator()?, self.radius))
    }

    /// `T,re,im` for scalar series, `T,component,re,im` when form-valued,
    /// preceded by a comment line with the radius and tail bound.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# radius={},tail_bound={:.6e}\n", self.radius, self.tail_bound);
        if self.places == 0 {
            s.push_str("T,re,im\n");
            for (t, c) in &self.coefficients {
                let _ = writeln!(s, "{},{},0", t_key_string(t), fmt_num(c.coeff(&[])));
            }
        } else {
            s.push_str("T,component,re,im\n");
            for (t, c) in &self.coefficients {
                for (k, v) in c.terms() {
                    if v != 0.0 {
                        let _ = writeln!(s, "{},{},{},0", t_key_string(t), PlacesFormValue::key(k), fmt_num(v));
                    }
                }
            }
        }
        s
    }
}

/// Integers print without exponent; others with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}

pub fn q_expansion(spec: &GeneratingSeriesSpec, radius: f64, budget: usize) -> Result<QExpansion> {
    let en = spec.enumerator()?;
    let cands = spec.candidates(&en, radius, budget)?;
    if (cands.len() as f64).powi(spec.r as i32) > budget as f64 {
        return Err(Error::Budget { bound: radius, budget });
    }
    let e = spec.lattice.space().e();
    let n = spec.lattice.space().n();
    let vectors: Vec<FVector> = cands.iter().map(|(c, _)| spec.vector(c)).collect();
    let mut coefficients: BTreeMap<TKey, PlacesFormValue> = BTreeMap::new();
    for_each_tuple(&cands, spec.r, &mut |idx| {
        let tuple: Vec<&[i64]> = idx.iter().map(|&i| cands[i].0.as_slice()).collect();
        let t = spec.exact_t(&tuple)?;
        if !spec.is_psd_key(&t) {
            return Ok(());
        }
        let xs: Vec<FVector> = idx.iter().map(|&i| vectors[i].clone()).collect();
        let w = spec.omega2(&xs, None)?;
        coefficients.entry(t).or_insert_with(|| PlacesFormValue::zero(n, e)).add_assign(&w);
        Ok(())
    })?;
    let tail_bound = TailModel::identity(spec)?.tail(&en, radius);
    Ok(QExpansion { field: *spec.field(), r: spec.r, n, places: e, coefficients, radius, tail_bound })
}

#[derive(Debug, Clone)]
pub struct Coefficient {
    pub value: PlacesFormValue,
    /// Every tuple with this `T` was summed.
    pub complete: bool,
    /// Bound on the omitted part (0 when complete).
    pub tail_bound: f64,
    pub fiber_size: usize,
}

/// `c_T = sum_{x : T(x) = T} phi_f(x) omega_2(x, tau)`. Definite lattices sum
/// the complete fiber; otherwise the fiber is infinite and is truncated at
/// `bound` (or at a radius derived from `spec.epsilon`).
pub fn coefficient_of_t(spec: &GeneratingSeriesSpec, t: &FMatrix, bound: Option<f64>, budget: usize) -> Result<Coefficient> {
    let r = spec.r;
    if t.len() != r || t.iter().any(|row| row.len() != r) {
        return Err(Error::DimensionMismatch { expected: r, got: t.len() });
    }
    let e = spec.lattice.space().e();
    let n = spec.lattice.space().n();
    if !spec.is_psd_key(t) {
        return Ok(Coefficient { value: PlacesFormValue::zero(n, e), complete: true, tail_bound: 0.0, fiber_size: 0 });
    }
    let f = spec.field();
    let c_t: f64 = (0..r).map(|i| f.trace(&t[i][i]).to_f64().unwrap_or(f64::INFINITY)).sum();
    let en = spec.enumerator()?;
    let (radius, complete, tail) = if e == 0 {
        (c_t, true, 0.0)
    } else {
        // |omega_2(x)| <= P(Q) e^{-pi (Q - c_T)} on the fiber
        let m = TailModel::identity(spec)?;
        let tail_at = |b: f64| -> f64 {
            let mut total = 0.0;
            let mut j = 0.0;
            loop {
                let s = b + j;
                let term = (-PI * (s - c_t)).exp() * m.poly(s + 1.0) * en.count_bound(s + 1.0).powi(r as i32);
                total += term;
                if term <= 1e-18 * total.max(1e-300) || j > 1e6 {
                    break;
                }
                j += 1.0;
            }
            total
        };
        let b = match bound {
            Some(b) => b,
            None => c_t + smallest_radius(&|s| tail_at(c_t + s), spec.epsilon)?,
        };
        (b, false, tail_at(b))
    };
    // candidates per entry with the right diagonal value
    let cands = spec.candidates(&en, radius, budget)?;
    let mut per_entry: Vec<Vec<usize>> = Vec::with_capacity(r);
    for i in 0..r {
        let mut v = Vec::new();
        for (k, (c, _)) in cands.iter().enumerate() {
            if spec.exact_t(&[c.as_slice()])?[0][0] == t[i][i] {
                v.push(k);
            }
        }
        per_entry.push(v);
    }
    let mut value = PlacesFormValue::zero(n, e);
    let mut size = 0usize;
    let mut idx: Vec<usize> = Vec::with_capacity(r);
    extend_fiber(spec, t, &cands, &per_entry, &mut idx, &mut |idx| {
        let xs: Vec<FVector> = idx.iter().map(|&i| spec.vector(&cands[i].0)).collect();
        value.add_assign(&spec.omega2(&xs, None)?);
        size += 1;
        if size > budget {
            return Err(Error::Budget { bound: radius, budget });
        }
        Ok(())
    })?;
    Ok(Coefficient { value, complete, tail_bound: tail, fiber_size: size })
}

fn extend_fiber(
    spec: &GeneratingSeriesSpec,
    t: &FMatrix,
    cands: &[(Vec<i64>, f64)],
    per_entry: &[Vec<usize>],
    idx: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    let i = idx.len();
    if i == per_entry.len() {
        return f(idx);
    }
    for &k in &per_entry[i] {
        let mut ok = true;
        for j in 0..i {
            let tt = spec.exact_t(&[cands[idx[j]].0.as_slice(), cands[k].0.as_slice()])?;
            if tt[0][1] != t[j][i] {
                ok = false;
                break;
            }
        }
        if ok {
            idx.push(k);
            extend_fiber(spec, t, cands, per_entry, idx, f)?;
            idx.pop();
        }
    }
    Ok(())
}

/// `theta_L(tau') = sum_x e^{2 pi i sum_j sigma_j(q(x)) tau'_j}` for a definite
/// lattice, stored as counts by exact `q`.
#[derive(Debug, Clone)]
pub struct ScalarTheta {
    pub field: TotallyRealField,
    pub counts: BTreeMap<FieldElement, u64>,
    pub radius: f64,
    enumerator: Enumerator,
}

impl ScalarTheta {
    pub fn with_radius(lattice: &OLattice, radius: f64, budget: usize) -> Result<Self> {
        if lattice.space().e() != 0 {
            return Err(Error::Input("scalar theta needs a totally positive definite lattice".into()));
        }
        let en = Enumerator::new(&lattice.total_majorant(None)?)?;
        crate::lattice::check_volume(&en, radius, budget)?;
        let g = lattice.exact_gram();
        let mut counts: BTreeMap<(i128, i128), u64> = BTreeMap::new();
        let mut seen = 0usize;
        let complete = en.run(radius, None, &mut |c, _| {
            seen += 1;
            if seen > budget {
                return ControlFlow::Break(());
            }
            *counts.entry(g.inner_parts(c, c)).or_insert(0) += 1;
            ControlFlow::Continue(())
        });
        if !complete {
            return Err(Error::Budget { bound: radius, budget });
        }
        let field = *lattice.space().field();
        let den = BigRational::from_integer((2 * g.den()).into());
        let counts = counts
            .into_iter()
            .map(|((a, b), n)| {
                let fa = BigRational::from_integer(a.into()) / &den;
                let fb = BigRational::from_integer(b.into()) / &den;
                let q = if fb.is_zero() { FieldElement::rational(fa) } else { field.element(fa, fb).expect("same field") };
                (q, n)
            })
            .collect();
        Ok(ScalarTheta { field, counts, radius, enumerator: en })
    }

    /// Radius with tail at most `eps` for every `tau'` with all `Im >= y_min`.
    pub fn new(lattice: &OLattice, y_min: f64, eps: f64, budget: usize) -> Result<Self> {
        if !(y_min > 0.0) {
            return Err(Error::Domain(format!("Im tau' must be positive, got {y_min}")));
        }
        let en = Enumerator::new(&lattice.total_majorant(None)?)?;
        let radius = smallest_radius(&|b| gaussian_count_tail(&en, y_min, b), eps)?;
        Self::with_radius(lattice, radius, budget)
    }

    pub fn tail_bound(&self, y_min: f64) -> f64 {
        gaussian_count_tail(&self.enumerator, y_min, self.radius)
    }

    pub fn eval(&self, taus: &[Complex64]) -> Result<Complex64> {
        let d = self.field.degree();
        if taus.len() != d {
            return Err(Error::LengthMismatch { expected: d, got: taus.len() });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (q, &n) in &self.counts {
            let emb = self.field.embeddings(q);
            let arg: Complex64 = emb.iter().zip(taus).map(|(x, t)| t * x).sum();
            acc += (Complex64::new(0.0, 2.0 * PI) * arg).exp() * n as f64;
        }
        Ok(acc)
    }

    /// `(q, count)` with `q` rational, for `F = Q`.
    pub fn integer_counts(&self) -> Vec<(BigRational, u64)> {
        self.counts.iter().map(|(q, &n)| (q.a().clone(), n)).collect()
    }

    pub fn to_csv(&self, y_min: f64) -> String {
        let mut s = format!("# radius={},tail_bound={:.6e}\nT,re,im\n", self.radius, self.tail_bound(y_min));
        for (q, n) in &self.counts {
            let _ = writeln!(s, "{q},{n},0");
        }
        s
    }
}

fn gaussian_count_tail(en: &Enumerator, y_min: f64, b: f64) -> f64 {
    let mut total = 0.0;
    let mut j = 0.0;
    loop {
        let t = b + j;
        let term = (-2.0 * PI * y_min * t).exp() * en.count_bound(t + 1.0);
        total += term;
        if term <= 1e-18 * total.max(1e-300) || j > 1e6 {
            break;
        }
        j += 1.0;
    }
    total
}

/// `theta_L(tau')` with the omitted part bounded by `eps`.
pub fn theta_scalar(lattice: &OLattice, taus: &[Complex64], eps: f64, budget: usize) -> Result<(Complex64, f64)> {
    let y_min = taus.iter().map(|t| t.im).fold(f64::INFINITY, f64::min);
    if y_min < 0.1 {
        return Err(Error::Domain(format!("Im tau' = {y_min} is below 0.1")));
    }
    let th = ScalarTheta::new(lattice, y_min, eps, budget)?;
    Ok((th.eval(taus)?, th.tail_bound(y_min)))
}

#[derive(Debug, Clone)]
pub struct TranslationReport {
    /// `tr(T mu)` is an integer for every stored `T`.
    pub phases_exact: bool,
    pub max_deviation: f64,
}

fn integral_phase(field: &TotallyRealField, t: &FieldElement, mu: &FieldElement) -> bool {
    field.trace(&(t * mu)).is_integer()
}

/// `theta(tau' + sigma(mu))` against `theta(tau')` at the samples.
pub fn translation_check_scalar(theta: &ScalarTheta, mu: &FieldElement, samples: &[Vec<Complex64>]) -> Result<TranslationReport> {
    let f = &theta.field;
    let phases_exact = theta.counts.keys().all(|q| integral_phase(f, q, mu));
    let shift = f.embeddings(mu);
    let mut dev: f64 = 0.0;
    for s in samples {
        let moved: Vec<Complex64> = s.iter().zip(&shift).map(|(t, m)| t + m).collect();
        dev = dev.max((theta.eval(&moved)? - theta.eval(s)?).norm());
    }
    Ok(TranslationReport { phases_exact, max_deviation: dev })
}

/// `km_theta(n(mu) g)` against `km_theta(g)`, `n(mu) = (1, sigma_j(mu) 1; 0, 1)`.
pub fn modularity_check_translation(spec: &GeneratingSeriesSpec, mu: &FieldElement, g_samples: &[Vec<SymplecticElement>], budget: usize) -> Result<TranslationReport> {
    let f = spec.field();
    let shift = f.embeddings(mu);
    let mut dev: f64 = 0.0;
    let mut exact = true;
    let mut radius: f64 = 0.0;
    for gs in g_samples {
        let moved: Vec<SymplecticElement> = gs.iter().zip(&shift).map(|(g, m)| SymplecticElement::unipotent(&DMatrix::from_diagonal_element(spec.r, spec.r, *m)).mul(g)).collect();
        let a = km_theta(spec, gs, &VScale::Identity, budget)?;
        let b = km_theta(spec, &moved, &VScale::Identity, budget)?;
        dev = dev.max(a.value.max_abs_diff(&b.value));
        radius = radius.max(a.radius).max(b.radius);
    }
    // phases on the keys that occur within the largest radius used
    let qexp = q_expansion(spec, radius, budget)?;
    for t in qexp.coefficients.keys() {
        let tr = (0..spec.r).fold(FieldElement::integer(0), |acc, i| &acc + &t[i][i]);
        exact &= integral_phase(f, &tr, mu);
    }
    Ok(TranslationReport { phases_exact: exact, max_deviation: dev })
}

/// Sizes of the `T`-fiber and of the `v^t T v`-fiber for `v` in `GL_r(Z)`;
/// `x -> x v` matches them bijectively.
pub fn fiber_transport_check(spec: &GeneratingSeriesSpec, t: &FMatrix, v: &[Vec<i64>], budget: usize) -> Result<(usize, usize)> {
    let r = t.len();
    if v.len() != r || v.iter().any(|row| row.len() != r) {
        return Err(Error::DimensionMismatch { expected: r, got: v.len() });
    }
    let det = linalg::determinant(&crate::lattice::int_matrix(v));
    if det != FieldElement::integer(1) && det != FieldElement::integer(-1) {
        return Err(Error::Input("v must be invertible over Z".into()));
    }
    let tv: FMatrix = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| {
                    let mut acc = FieldElement::integer(0);
                    for k in 0..r {
                        for l in 0..r {
                            acc = &acc + &(&t[k][l] * &FieldElement::integer(v[k][i] * v[l][j]));
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let tau = spec.tau_opt();
    let a = spec.lattice.fibers_with_t(t, tau, None, budget)?.len();
    let b = spec.lattice.fibers_with_t(&tv, tau, None, budget)?.len();
    Ok((a, b))
}

/// Max relative error of `theta_L(-1/tau) = (tau/i)^{m/2} det(G)^{-1/2} theta_{L#}(tau)`
/// over the samples, for a definite lattice over `Q` (`G` the Gram of `<,>`).
pub fn modularity_check_inversion(lattice: &OLattice, samples: &[Complex64], eps: f64, budget: usize) -> Result<f64> {
    if lattice.space().degree() != 1 || lattice.space().e() != 0 {
        return Err(Error::Input("inversion check needs a definite lattice over Q".into()));
    }
    let dual = lattice.dual_lattice()?;
    let m = lattice.space().dim() as f64;
    let gram = lattice.space().tuple_gram(lattice.zbasis())?;
    let det = linalg::determinant(&gram).a().to_f64().unwrap_or(f64::NAN);
    let inv: Vec<Complex64> = samples.iter().map(|t| -t.inv()).collect();
    let y_l = inv.iter().map(|t| t.im).fold(f64::INFINITY, f64::min);
    let y_d = samples.iter().map(|t| t.im).fold(f64::INFINITY, f64::min);
    if y_l.min(y_d) < 0.1 {
        return Err(Error::Domain("sample imaginary parts below 0.1".into()));
    }
    let (th_l, th_d) = if dual.same_module(lattice) {
        let th = ScalarTheta::new(lattice, y_l.min(y_d), eps, budget)?;
        (th.clone(), th)
    } else {
        (ScalarTheta::new(lattice, y_l, eps, budget)?, ScalarTheta::new(&dual, y_d, eps, budget)?)
    };
    let mut worst: f64 = 0.0;
    for (t, ti) in samples.iter().zip(&inv) {
        let lhs = th_l.eval(&[*ti])?;
        let weight = (t / Complex64::i()).powf(m / 2.0);
        let rhs = weight / det.sqrt() * th_d.eval(&[*t])?;
        worst = worst.max((lhs - rhs).norm() / rhs.norm());
    }
    Ok(worst)
}

/// `count` points with `Re in [-1/2, 1/2]`, `Im in [im_lo, im_hi]`.
pub fn sample_points(seed: u64, count: usize, im_lo: f64, im_hi: f64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Complex64::new(rng.gen_range(-0.5..=0.5), rng.gen_range(im_lo..=im_hi))).collect()
}

/// Random tuple of `d` elements of `Sp_{2r}(R)` with `Im tau'` eigenvalues
/// in `[y_lo, y_hi]` and random compact parts.
pub fn random_tuple<R: Rng>(d: usize, r: usize, y_lo: f64, y_hi: f64, rng: &mut R) -> Result<Vec<SymplecticElement>> {
    (0..d)
        .map(|_| {
            let q = crate::whittaker::random_unitary(r, rng).map(|z| z.re);
            let (qo, _) = (q.clone().qr().q(), ());
            let eig = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(r, |_, _| rng.gen_range(y_lo..=y_hi).sqrt()));
            let v = &qo * eig * qo.transpose();
            let u = DMatrix::from_fn(r, r, |i, j| if i <= j { rng.gen_range(-0.5..0.5) } else { 0.0 });
            let u = (&u + u.transpose()) * 0.5;
            let k = crate::whittaker::random_compact(r, rng);
            Ok(SymplecticElement::unipotent(&u).mul(&SymplecticElement::levi(&v)?).mul(&k))
        })
        .collect()
}
