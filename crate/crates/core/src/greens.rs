//! Green functions `f(2 pi R)`, star products of Green currents, averaged
//! sums over lattice vectors, and the finite-difference `dd^c` check.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kmform::{self, KMFrame, PlacesFormValue};
use crate::lattice::OLattice;
use crate::linalg::FVector;
use crate::numberfield::FieldElement;
use crate::perioddomain::{Branch, Chart, PeriodPoint, PolyPeriodPoint};
use crate::quadspace::QuadraticSpace;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `R` below which a period point counts as lying on `D_x`.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Minimum `R` on a `dd^c` grid.
pub const DDC_MIN_R: f64 = 0.5;

/// `f(t) = -Ei(-t) = E_1(t)`.
pub fn exp_integral_f(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("f(t) needs t > 0, got {t}")));
    }
    if t <= 1.0 {
        // -log t - gamma - sum_{k>=1} (-t)^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -t / k as f64;
            let c = term / k as f64;
            sum += c;
            if c.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        return Ok(-t.ln() - EULER_GAMMA - sum);
    }
    // modified Lentz on the continued fraction
    // E_1(t) = e^{-t} / (t + 1 - 1/(t + 3 - 4/(t + 5 - ...)))
    let tiny = 1e-300;
    let mut b = t + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    Ok(h * (-t).exp())
}

/// `eta_0(x, tau) = f(2 pi R(x, tau))`.
pub fn green_eta0(x: &DVector<f64>, tau: &PeriodPoint) -> Result<f64> {
    let r = tau.majorant_r(x);
    if r <= SINGULAR_TOL {
        return Err(Error::Domain(format!("period point lies on the singular locus of x (R = {r:.3e})")));
    }
    exp_integral_f(2.0 * PI * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StarSymbol {
    Phi(usize),
    F(usize),
    Delta(usize),
}

impl fmt::Display for StarSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StarSymbol::Phi(j) => write!(f, "phi({j})"),
            StarSymbol::F(j) => write!(f, "f({j})"),
            StarSymbol::Delta(j) => write!(f, "delta({j})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StarWord(pub Vec<StarSymbol>);

impl StarWord {
    pub fn symbols(&self) -> &[StarSymbol] {
        &self.0
    }

    /// Index of the single `f` symbol.
    pub fn green_index(&self) -> Option<usize> {
        let mut it = self.0.iter().filter_map(|s| if let StarSymbol::F(j) = s { Some(*j) } else { None });
        let first = it.next();
        if it.next().is_some() {
            None
        } else {
            first
        }
    }

    pub fn deltas(&self) -> Vec<usize> {
        self.0.iter().filter_map(|s| if let StarSymbol::Delta(j) = s { Some(*j) } else { None }).collect()
    }

    fn concat(&self, other: &StarWord) -> StarWord {
        StarWord(self.0.iter().chain(&other.0).copied().collect())
    }
}

impl fmt::Display for StarWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// `g_1 * ... * g_N = sum_j phi_1 ... phi_{j-1} f_j delta_{j+1} ... delta_N`.
pub fn star_expansion(n: usize) -> Result<Vec<StarWord>> {
    if n < 1 {
        return Err(Error::Input("star expansion needs N >= 1".into()));
    }
    Ok((1..=n)
        .map(|j| {
            let mut w: Vec<StarSymbol> = (1..j).map(StarSymbol::Phi).collect();
            w.push(StarSymbol::F(j));
            w.extend((j + 1..=n).map(StarSymbol::Delta));
            StarWord(w)
        })
        .collect())
}

/// Green current of a cycle, symbolically: Green words, its form `omega`
/// and its delta current.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicCurrent {
    pub green: Vec<StarWord>,
    pub omega: StarWord,
    pub delta: StarWord,
}

impl SymbolicCurrent {
    pub fn factor(j: usize) -> Self {
        SymbolicCurrent { green: vec![StarWord(vec![StarSymbol::F(j)])], omega: StarWord(vec![StarSymbol::Phi(j)]), delta: StarWord(vec![StarSymbol::Delta(j)]) }
    }

    /// `[g_Y] * [g_Z] = [g_Y] ^ delta_Z + [omega_Y] ^ [g_Z]`.
    pub fn star(&self, z: &SymbolicCurrent) -> SymbolicCurrent {
        let mut green: Vec<StarWord> = self.green.iter().map(|g| g.concat(&z.delta)).collect();
        green.extend(z.green.iter().map(|g| self.omega.concat(g)));
        SymbolicCurrent { green, omega: self.omega.concat(&z.omega), delta: self.delta.concat(&z.delta) }
    }
}

/// `g_1 * (g_2 * (... * g_N))` by the binary rule.
pub fn star_recursive(n: usize) -> Result<Vec<StarWord>> {
    if n < 1 {
        return Err(Error::Input("star expansion needs N >= 1".into()));
    }
    let mut acc = SymbolicCurrent::factor(n);
    for j in (1..n).rev() {
        acc = SymbolicCurrent::factor(j).star(&acc);
    }
    Ok(acc.green)
}

/// `((g_1 * g_2) * ...) * g_N`.
pub fn star_recursive_left(n: usize) -> Result<Vec<StarWord>> {
    if n < 1 {
        return Err(Error::Input("star expansion needs N >= 1".into()));
    }
    let mut acc = SymbolicCurrent::factor(1);
    for j in 2..=n {
        acc = acc.star(&SymbolicCurrent::factor(j));
    }
    Ok(acc.green)
}

/// A star-product term carrying delta currents; never evaluated numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMarker {
    pub word: StarWord,
    /// `(place, vector)` pairs, 1-based, whose cycles carry the delta factors.
    pub locus: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Eta2Value {
    /// The smooth word `phi_1 ... phi_{N-1} f_N`.
    pub smooth_word: StarWord,
    pub smooth: PlacesFormValue,
    pub markers: Vec<DeltaMarker>,
}

/// Smooth part of `eta_2(x, tau) = p_1^* eta_1(x, tau_1) * ... * p_e^* eta_1(x, tau_e)`
/// with each `eta_1` itself the star product over the tuple. Factors are
/// ordered by place, then by vector: factor `j = (p - 1) k + l`.
pub fn eta2_value(space: &QuadraticSpace, xs: &[FVector], tau: &PolyPeriodPoint, frames: &[KMFrame]) -> Result<Eta2Value> {
    let e = space.e();
    let k = xs.len();
    if e == 0 || k == 0 {
        return Err(Error::Input("eta_2 needs e >= 1 and a nonempty tuple".into()));
    }
    if tau.len() != e || frames.len() != e {
        return Err(Error::LengthMismatch { expected: e, got: tau.len().min(frames.len()) });
    }
    let words = star_expansion(e * k)?;
    let mut embedded = Vec::with_capacity(e);
    let mut on_locus = Vec::new();
    for p in 1..=e {
        let emb = kmform::embedded_tuple(space, xs, p, None)?;
        for (l, x) in emb.iter().enumerate() {
            let r = tau.at(p).majorant_r(x);
            if r <= SINGULAR_TOL {
                on_locus.push((p, l + 1));
            }
        }
        embedded.push(emb);
    }
    let to_pair = |j: usize| ((j - 1) / k + 1, (j - 1) % k + 1);
    let markers: Vec<DeltaMarker> = words[..e * k - 1].iter().map(|w| DeltaMarker { word: w.clone(), locus: w.deltas().into_iter().map(to_pair).collect() }).collect();
    if !on_locus.is_empty() {
        let flagged: Vec<String> = markers.iter().filter(|m| m.locus.iter().any(|p| on_locus.contains(p))).map(|m| m.word.to_string()).collect();
        return Err(Error::Domain(format!("tau lies on D_x for (place, vector) {on_locus:?}; delta terms on tau: [{}]", flagged.join(", "))));
    }
    let mut per_place = Vec::with_capacity(e);
    for p in 1..=e {
        let frame = &frames[p - 1];
        let emb = &embedded[p - 1];
        if p < e {
            per_place.push(kmform::evaluate_m_at(emb, tau.at(p), frame)?);
        } else {
            let g = green_eta0(&emb[k - 1], tau.at(p))?;
            per_place.push(kmform::evaluate_m_at(&emb[..k - 1], tau.at(p), frame)?.scale(g));
        }
    }
    Ok(Eta2Value { smooth_word: words[e * k - 1].clone(), smooth: PlacesFormValue::from_places(&per_place), markers })
}

/// Partial sums of a lattice series by enumeration radius.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceReport {
    pub radii: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Shell contributions `S(radius_k) - S(radius_{k-1})`, summed directly.
    pub increments: Vec<f64>,
    pub tail_estimates: Vec<f64>,
    /// Number of terms per shell.
    pub terms: Vec<usize>,
    /// Slope of `log |increment|` against `z`, when at least two shells are nonzero.
    pub fitted_decay: Option<f64>,
    /// Terms skipped because `tau` lies on their singular locus.
    pub skipped: usize,
    pub note: String,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,partial_sum,tail_estimate\n");
        for i in 0..self.radii.len() {
            s.push_str(&format!("{},{:.17e},{:.6e}\n", self.radii[i], self.partial_sums[i], self.tail_estimates[i]));
        }
        s
    }

    /// `d_k = max_{j >= k} |S_j - S_k|`. Shells may be empty, so single
    /// increments need not shrink monotonically.
    pub fn tail_envelope(&self) -> Vec<f64> {
        let s = &self.partial_sums;
        (0..s.len()).map(|k| s[k..].iter().map(|v| (v - s[k]).abs()).fold(0.0, f64::max)).collect()
    }

    /// The tail envelope is nonincreasing and ends below `1e-3` of its value
    /// at the second radius.
    pub fn is_cauchy(&self) -> bool {
        let d = self.tail_envelope();
        if d.len() < 3 {
            return false;
        }
        let mono = d.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
        mono && d[d.len() - 2] <= 1e-3 * d[1].max(1e-300)
    }
}

/// `e^{-2 pi z} z^{(n+2)/2}`.
pub fn tail_model(z: f64, n: usize) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    (-2.0 * PI * z).exp() * z.powf((n as f64 + 2.0) / 2.0)
}

/// `z` attached to a radius: the smallest `R` not yet enumerated,
/// `(radius - sum_p sigma_p(q)) / (2 e)`.
pub fn shell_z(radius: f64, space: &QuadraticSpace, q: &FieldElement) -> Result<f64> {
    let total_q: f64 = (1..=space.degree()).map(|p| space.field().embed(q, p)).sum::<Result<f64>>()?;
    Ok((radius - total_q) / (2.0 * space.e().max(1) as f64))
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("radii must be nonempty and strictly increasing".into()));
    }
    Ok(())
}

/// Sum over the orbit surrogate `{y in L : q(y) = q(x)}` (`{0}` for `x = 0`)
/// within each radius. `term` returns `None` for a skipped vector.
fn orbit_sums<T, F>(lattice: &OLattice, x: &[i64], tau: &PolyPeriodPoint, radii: &[f64], budget: usize, mut term: F) -> Result<(Vec<Vec<T>>, Vec<usize>, usize)>
where
    F: FnMut(&FVector) -> Result<Option<T>>,
{
    check_radii(radii)?;
    let target = lattice.exact_gram().quad(x);
    let points = if x.iter().all(|&c| c == 0) {
        vec![crate::lattice::LatticePoint { coords: x.to_vec(), q_maj: 0.0 }]
    } else {
        lattice.norm_fiber(Some(tau), &target, *radii.last().unwrap(), budget)?
    };
    let mut shells: Vec<Vec<T>> = (0..radii.len()).map(|_| Vec::new()).collect();
    let mut counts = vec![0usize; radii.len()];
    let mut skipped = 0;
    for p in &points {
        let Some(shell) = radii.iter().position(|&r| p.q_maj <= r * (1.0 + crate::lattice::BOUND_SLACK)) else { continue };
        let y = lattice.vector(&p.coords);
        match term(&y)? {
            Some(v) => {
                shells[shell].push(v);
                counts[shell] += 1;
            }
            None => skipped += 1,
        }
    }
    Ok((shells, counts, skipped))
}

/// Partial sums of the smooth `eta_2` term over the orbit surrogate of `x`
/// (coordinates in the lattice basis). The scalar reported is the
/// coefficient sum of the smooth form.
pub fn eta3_partial_sums(lattice: &OLattice, x: &[i64], tau: &PolyPeriodPoint, frames: &[KMFrame], radii: &[f64], budget: usize) -> Result<ConvergenceReport> {
    let space = lattice.space();
    let (shells, counts, skipped) = orbit_sums(lattice, x, tau, radii, budget, |y| match eta2_value(space, std::slice::from_ref(y), tau, frames) {
        Ok(v) => Ok(Some(v.smooth.coefficient_sum())),
        Err(Error::Domain(_)) => Ok(None),
        Err(e) => Err(e),
    })?;
    let q = lattice.exact_gram().quad(x);
    let n = space.n();
    let increments: Vec<f64> = shells.iter().map(|s| s.iter().fold(0.0, |a, b| a + b)).collect();
    let mut report = assemble(radii, increments, counts, skipped, space, &q, n)?;
    report.note = "orbit surrogate: all lattice vectors with q(y) = q(x)".into();
    Ok(report)
}

fn assemble(radii: &[f64], increments: Vec<f64>, terms: Vec<usize>, skipped: usize, space: &QuadraticSpace, q: &FieldElement, n: usize) -> Result<ConvergenceReport> {
    let mut partial = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    for inc in &increments {
        acc += inc;
        partial.push(acc);
    }
    let zs: Vec<f64> = radii.iter().map(|&r| shell_z(r, space, q)).collect::<Result<_>>()?;
    let tail_estimates = zs.iter().map(|&z| tail_model(z, n)).collect();
    let mut fx = Vec::new();
    let mut fy = Vec::new();
    for k in 1..radii.len() {
        if increments[k] != 0.0 && zs[k - 1] > 0.0 {
            fx.push(zs[k - 1]);
            fy.push(increments[k].abs().ln());
        }
    }
    Ok(ConvergenceReport { radii: radii.to_vec(), partial_sums: partial, increments, tail_estimates, terms, fitted_decay: fit_slope(&fx, &fy), skipped, note: String::new() })
}

/// `omega_3` partial sums over the orbit surrogate of `x`.
pub fn omega3_partial(lattice: &OLattice, x: &[i64], tau: &PolyPeriodPoint, frames: &[KMFrame], radii: &[f64], budget: usize) -> Result<(Vec<PlacesFormValue>, ConvergenceReport)> {
    let space = lattice.space();
    let (shells, counts, skipped) = orbit_sums(lattice, x, tau, radii, budget, |y| kmform::omega2(space, std::slice::from_ref(y), tau, frames, None).map(Some))?;
    let n = space.n();
    let mut partial_forms = Vec::with_capacity(radii.len());
    let mut acc = PlacesFormValue::zero(n, space.e());
    let mut increments = Vec::with_capacity(radii.len());
    for shell in &shells {
        let mut s = PlacesFormValue::zero(n, space.e());
        for v in shell {
            s.add_assign(v);
        }
        increments.push(s.max_abs());
        acc.add_assign(&s);
        partial_forms.push(acc.clone());
    }
    let q = lattice.exact_gram().quad(x);
    let mut report = assemble(radii, increments, counts, skipped, space, &q, n)?;
    report.partial_sums = partial_forms.iter().map(|f| f.coefficient_sum()).collect();
    report.note = "orbit surrogate: all lattice vectors with q(y) = q(x); increments are max coefficient of each shell".into();
    Ok((partial_forms, report))
}

#[derive(Debug, Clone)]
pub struct CountReport {
    pub ns: Vec<f64>,
    pub counts: Vec<usize>,
    /// Log-log slope over the `N >= 1` entries.
    pub exponent: Option<f64>,
}

/// `#{y in L : R(y, tau_p) <= N for p <= e, sigma_p(q(y)) <= q_max for all p}`.
pub fn count_bounded_r(lattice: &OLattice, tau: &PolyPeriodPoint, ns: &[f64], q_max: f64) -> Result<CountReport> {
    let space = lattice.space();
    let (d, e) = (space.degree(), space.e());
    let n_max = ns.iter().cloned().fold(0.0, f64::max);
    let radius = d as f64 * q_max.max(0.0) + 2.0 * e as f64 * n_max;
    let q = lattice.total_majorant(Some(tau))?;
    let en = crate::lattice::Enumerator::new(&q)?;
    let bases: Vec<nalgebra::DMatrix<f64>> = (1..=d).map(|p| lattice.embedded_basis(p)).collect::<Result<_>>()?;
    let bil: Vec<nalgebra::DMatrix<f64>> = (1..=d).map(|p| space.bilinear_at(p)).collect::<Result<_>>()?;
    let mut counts = vec![0usize; ns.len()];
    let tol = 1e-9;
    en.run(radius, None, &mut |c, _| {
        let cv = DVector::from_iterator(c.len(), c.iter().map(|&v| v as f64));
        let mut r_max: f64 = 0.0;
        for p in 0..d {
            let y = &bases[p] * &cv;
            let qp = y.dot(&(&bil[p] * &y));
            if qp > q_max + tol * q_max.abs().max(1.0) {
                return std::ops::ControlFlow::Continue(());
            }
            if p < e {
                r_max = r_max.max(tau.at(p + 1).majorant_r(&y));
            }
        }
        for (i, &n) in ns.iter().enumerate() {
            if r_max <= n + tol * n.max(1.0) {
                counts[i] += 1;
            }
        }
        std::ops::ControlFlow::Continue(())
    });
    let (fx, fy): (Vec<f64>, Vec<f64>) = ns.iter().zip(&counts).filter(|(&n, &c)| n >= 1.0 && c > 0).map(|(&n, &c)| (n.ln(), (c as f64).ln())).unzip();
    Ok(CountReport { ns: ns.to_vec(), counts, exponent: fit_slope(&fx, &fy) })
}

/// Five-point Laplacian `(d^2/du^2 + d^2/dv^2) g` at `w = u + iv`.
pub fn laplacian5(g: &dyn Fn(Complex64) -> Result<f64>, w: Complex64, h: f64) -> Result<f64> {
    let c = g(w)?;
    let sum = g(w + h)? + g(w - h)? + g(w + Complex64::new(0.0, h))? + g(w - Complex64::new(0.0, h))?;
    Ok((sum - 4.0 * c) / (h * h))
}

/// Max relative deviation between `(1/8 pi) Laplacian eta_0(x, chart(w))`
/// and the `i dw ^ dwbar` coefficient of `phi_KM(x)` pulled back to the chart
/// (`n = 1`), over the grid.
pub fn ddc_check(x: &DVector<f64>, chart: &Chart, grid: &[Complex64], h: f64) -> Result<f64> {
    if chart.n() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: chart.n() });
    }
    let branch = Branch::Plus;
    let eta = |w: Complex64| -> Result<f64> { green_eta0(x, &chart.point(&[w], branch)?) };
    let mut worst: f64 = 0.0;
    for &w in grid {
        let tau = chart.point(&[w], branch)?;
        let r = tau.majorant_r(x);
        if r < DDC_MIN_R {
            return Err(Error::Domain(format!("grid point {w} is too close to the singular locus (R = {r:.3e})")));
        }
        let lhs = laplacian5(&eta, w, h)? / (8.0 * PI);
        let frame = KMFrame::new(&tau);
        let form = frame.phi1(x);
        let hm = kmform::pullback_to_chart(&form, &frame, chart, &[w], branch)?;
        let rhs = hm[(0, 0)].re;
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
    }
    Ok(worst)
}

/// A `size x size` grid of chart points centered at `center` with spacing `step`.
pub fn chart_grid(center: Complex64, step: f64, size: usize) -> Vec<Complex64> {
    let off = (size as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            out.push(center + Complex64::new((i as f64 - off) * step, (j as f64 - off) * step));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::int_matrix;
    use crate::numberfield::TotallyRealField;

    fn space() -> QuadraticSpace {
        QuadraticSpace::new(TotallyRealField::rational(), int_matrix(&[vec![2, 0, 0], vec![0, -2, 0], vec![0, 0, -2]]), 1).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn tau0() -> PeriodPoint {
        PeriodPoint::new(&space(), 1, v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0])).unwrap()
    }

    /// Composite Simpson on `int_t^inf e^{-x}/x dx` after `x = t + s/(1-s)`.
    fn quad_e1(t: f64) -> f64 {
        let g = |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let x = t + s / (1.0 - s);
            (-x).exp() / x / ((1.0 - s) * (1.0 - s))
        };
        let m = 200_000;
        let hh = 1.0 / m as f64;
        let mut acc = g(0.0) + g(1.0);
        for i in 1..m {
            acc += g(i as f64 * hh) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * hh / 3.0
    }

    #[test]
    fn f_values() {
        assert!((exp_integral_f(1.0).unwrap() - 0.21938393439552).abs() < 1e-13);
        let t = 1e-8;
        // f(t) + log t + gamma = t - t^2/4 + ...
        let rem = exp_integral_f(t).unwrap() + t.ln() + EULER_GAMMA;
        assert!((rem - t).abs() <= 1e-13);
        let r = exp_integral_f(10.0).unwrap() * 10.0 * 10f64.exp();
        assert!((r - 1.0).abs() < 0.1);
        for t in [0.3, 0.99, 1.01, 2.5, 7.0, 20.0] {
            let q = quad_e1(t);
            assert!((exp_integral_f(t).unwrap() - q).abs() < 1e-9 * q, "t={t}");
        }
        assert!(exp_integral_f(0.0).is_err());
        assert!(exp_integral_f(-1.0).is_err());
    }

    #[test]
    fn eta0_examples() {
        let t = tau0();
        let g = green_eta0(&v(&[0.0, 1.0, 0.0]), &t).unwrap();
        assert!((g - exp_integral_f(2.0 * PI).unwrap()).abs() < 1e-18);
        // E_1(2 pi) to 15 digits from an arbitrary-precision evaluation
        assert!((g - 2.60420586396131e-4).abs() < 1e-17);
        let g2 = green_eta0(&v(&[0.0, 2.0, 0.0]), &t).unwrap();
        assert!((g2 - exp_integral_f(8.0 * PI).unwrap()).abs() < 1e-25);
        assert!(green_eta0(&v(&[1.0, 0.0, 0.0]), &t).is_err());
    }

    #[test]
    fn star_words() {
        assert_eq!(star_expansion(1).unwrap(), vec![StarWord(vec![StarSymbol::F(1)])]);
        let two = star_expansion(2).unwrap();
        assert_eq!(two[0], StarWord(vec![StarSymbol::F(1), StarSymbol::Delta(2)]));
        assert_eq!(two[1], StarWord(vec![StarSymbol::Phi(1), StarSymbol::F(2)]));
        for n in 1..=6 {
            let closed = star_expansion(n).unwrap();
            assert_eq!(closed, star_recursive(n).unwrap());
            assert_eq!(closed, star_recursive_left(n).unwrap());
            assert!(closed.iter().all(|w| w.green_index().is_some()));
        }
        assert!(star_expansion(0).is_err());
    }

    #[test]
    fn eta2_reduces_and_flags() {
        let s = space();
        let t = tau0();
        let poly = PolyPeriodPoint::new(&s, vec![t.clone()]).unwrap();
        let frames = vec![KMFrame::new(&t)];
        let x: FVector = [0, 1, 0].iter().map(|&c| FieldElement::integer(c)).collect();
        let val = eta2_value(&s, std::slice::from_ref(&x), &poly, &frames).unwrap();
        assert!((val.smooth.coefficient_sum() - green_eta0(&v(&[0.0, 1.0, 0.0]), &t).unwrap()).abs() < 1e-18);
        assert!(val.markers.is_empty());
        let x2: FVector = [1, 0, 0].iter().map(|&c| FieldElement::integer(c)).collect();
        let err = eta2_value(&s, &[x.clone(), x2], &poly, &frames).unwrap_err();
        assert!(matches!(&err, Error::Domain(m) if m.contains("f(1) delta(2)")));
    }

    #[test]
    fn counting_small() {
        let s = space();
        let l = OLattice::standard(s.clone()).unwrap();
        let poly = PolyPeriodPoint::new(&s, vec![tau0()]).unwrap();
        let rep = count_bounded_r(&l, &poly, &[0.0, 1.0, 2.0, 5.0], 1.0).unwrap();
        assert_eq!(rep.counts[0], 3);
        // oracle: b^2 + c^2 <= N, a^2 <= 1 + b^2 + c^2
        for (i, &n) in rep.ns.iter().enumerate() {
            let mut c = 0;
            for a in -10i64..=10 {
                for b in -10i64..=10 {
                    for cc in -10i64..=10 {
                        let r = (b * b + cc * cc) as f64;
                        if r <= n && a * a - b * b - cc * cc <= 1 {
                            c += 1;
                        }
                    }
                }
            }
            assert_eq!(rep.counts[i], c);
        }
        assert!(rep.counts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn laplacian_of_constant_and_quadratic() {
        let c = |_: Complex64| Ok(3.0);
        assert_eq!(laplacian5(&c, Complex64::new(0.1, 0.2), 1e-3).unwrap(), 0.0);
        let q = |w: Complex64| Ok(w.norm_sqr());
        assert!((laplacian5(&q, Complex64::new(0.1, 0.2), 1e-2).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn ddc_matches_phi() {
        let t = tau0();
        let chart = Chart::new(&t);
        let x = v(&[0.3, 1.0, 0.4]);
        let grid = chart_grid(Complex64::new(0.0, 0.0), 0.05, 4);
        let d1 = ddc_check(&x, &chart, &grid, 1e-3).unwrap();
        let d2 = ddc_check(&x, &chart, &grid, 5e-4).unwrap();
        assert!(d1 <= 1e-3, "{d1}");
        assert!(d2 < d1, "{d1} {d2}");
    }
}
