//! Exact arithmetic in the totally real fields `Q` and `Q(sqrt D)`.
//!
//! Elements are `a + b sqrt(D)` with arbitrary-precision rational components.
//! Conversion to floating point only happens at [`TotallyRealField::embed`].
//! Real embeddings are ordered so that `sigma_1(sqrt D) = +sqrt D` and
//! `sigma_2(sqrt D) = -sqrt D`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// `Q` (degree 1) or a real quadratic field `Q(sqrt D)` with `D > 1` squarefree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TotallyRealField {
    generator: Option<i64>,
}

fn is_squarefree(d: i64) -> bool {
    let mut k = 2i64;
    while k * k <= d {
        if d % (k * k) == 0 {
            return false;
        }
        k += 1;
    }
    true
}

impl TotallyRealField {
    pub fn rational() -> Self {
        TotallyRealField { generator: None }
    }

    pub fn quadratic(d: i64) -> Result<Self> {
        if d <= 1 {
            return Err(Error::InvalidField(format!("D = {d} must exceed 1")));
        }
        if !is_squarefree(d) {
            return Err(Error::InvalidField(format!("D = {d} is not squarefree")));
        }
        Ok(TotallyRealField { generator: Some(d) })
    }

    /// Builds the field from the `{"degree", "D"}` description.
    pub fn from_degree(degree: usize, d: Option<i64>) -> Result<Self> {
        match (degree, d) {
            (1, None) => Ok(Self::rational()),
            (1, Some(_)) => Err(Error::InvalidField("degree 1 takes no D".into())),
            (2, Some(d)) => Self::quadratic(d),
            (2, None) => Err(Error::InvalidField("degree 2 requires D".into())),
            (k, _) => Err(Error::InvalidField(format!("degree {k} unsupported"))),
        }
    }

    pub fn degree(&self) -> usize {
        if self.generator.is_some() {
            2
        } else {
            1
        }
    }

    /// The squarefree `D`, or `None` for `Q`.
    pub fn generator(&self) -> Option<i64> {
        self.generator
    }

    fn tag(&self) -> i64 {
        self.generator.unwrap_or(0)
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement::zero_in(self.tag())
    }

    pub fn one(&self) -> FieldElement {
        FieldElement::from_ratio_in(self.tag(), BigRational::one(), BigRational::zero())
    }

    pub fn from_int(&self, n: i64) -> FieldElement {
        FieldElement::from_ratio_in(self.tag(), BigRational::from_integer(n.into()), BigRational::zero())
    }

    pub fn element(&self, a: BigRational, b: BigRational) -> Result<FieldElement> {
        if self.generator.is_none() && !b.is_zero() {
            return Err(Error::InvalidField("b must vanish over Q".into()));
        }
        Ok(FieldElement::from_ratio_in(self.tag(), a, b))
    }

    /// `a + b sqrt(D)` from integer parts; `b` must be 0 over `Q`.
    pub fn elt(&self, a: i64, b: i64) -> FieldElement {
        self.element(BigRational::from_integer(a.into()), BigRational::from_integer(b.into()))
            .expect("irrational part over Q")
    }

    /// `sqrt(D)`; panics over `Q`.
    pub fn sqrt_d(&self) -> FieldElement {
        self.elt(0, 1)
    }

    /// `sigma_i(x)` in double precision (`i` is 1-based).
    pub fn embed(&self, x: &FieldElement, i: usize) -> Result<f64> {
        if i == 0 || i > self.degree() {
            return Err(Error::EmbeddingIndex { index: i, degree: self.degree() });
        }
        self.check(x);
        Ok(embed_value(x, self.generator.unwrap_or(0), if i == 1 { 1 } else { -1 }))
    }

    /// All embeddings in order.
    pub fn embeddings(&self, x: &FieldElement) -> Vec<f64> {
        (1..=self.degree()).map(|i| self.embed(x, i).unwrap()).collect()
    }

    /// True iff every real embedding is strictly positive, decided exactly.
    pub fn is_totally_positive(&self, x: &FieldElement) -> bool {
        self.check(x);
        match self.generator {
            None => x.a.is_positive(),
            Some(_) => x.a.is_positive() && x.norm_form().is_positive(),
        }
    }

    /// True iff every real embedding is `>= 0`.
    pub fn is_totally_nonnegative(&self, x: &FieldElement) -> bool {
        x.is_zero() || self.is_totally_positive(x)
    }

    pub fn trace(&self, x: &FieldElement) -> BigRational {
        self.check(x);
        match self.generator {
            None => x.a.clone(),
            Some(_) => &x.a * BigRational::from_integer(2.into()),
        }
    }

    pub fn norm(&self, x: &FieldElement) -> BigRational {
        self.check(x);
        match self.generator {
            None => x.a.clone(),
            Some(_) => x.norm_form(),
        }
    }

    /// A Z-basis of the ring of integers.
    pub fn integer_basis(&self) -> Vec<FieldElement> {
        match self.generator {
            None => vec![self.one()],
            Some(d) => {
                let half = BigRational::new(1.into(), 2.into());
                let omega = if d.rem_euclid(4) == 1 {
                    FieldElement::from_ratio_in(d, half.clone(), half)
                } else {
                    self.sqrt_d()
                };
                vec![self.one(), omega]
            }
        }
    }

    /// Field discriminant (`1` for `Q`).
    pub fn discriminant(&self) -> i64 {
        match self.generator {
            None => 1,
            Some(d) if d.rem_euclid(4) == 1 => d,
            Some(d) => 4 * d,
        }
    }

    /// `1/sqrt(disc)`, a generator of the inverse different.
    pub fn codifferent_generator(&self) -> Result<FieldElement> {
        let d = self
            .generator
            .ok_or_else(|| Error::InvalidField("codifferent generator needs degree 2".into()))?;
        let disc = self.discriminant();
        // 1/sqrt(disc) = sqrt(D)/(D * sqrt(disc/D))
        let b = if disc == d {
            BigRational::new(1.into(), d.into())
        } else {
            BigRational::new(1.into(), (2 * d).into())
        };
        Ok(FieldElement::from_ratio_in(d, BigRational::zero(), b))
    }

    fn check(&self, x: &FieldElement) {
        if x.d != 0 && x.d != self.tag() {
            panic!("{}", Error::FieldMismatch(x.d, self.tag()));
        }
    }
}

impl fmt::Display for TotallyRealField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.generator {
            None => write!(f, "Q"),
            Some(d) => write!(f, "Q(sqrt {d})"),
        }
    }
}

/// `a + b sqrt(D)`. A zero tag `d = 0` marks a rational value that can be
/// combined with elements of any field.
#[derive(Debug, Clone)]
pub struct FieldElement {
    a: BigRational,
    b: BigRational,
    d: i64,
}

// the tag is irrelevant for equality: rational values agree across fields
impl PartialEq for FieldElement {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b
    }
}

impl Eq for FieldElement {}

impl std::hash::Hash for FieldElement {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.a.hash(state);
        self.b.hash(state);
    }
}

fn embed_value(x: &FieldElement, d: i64, sign: i64) -> f64 {
    let a = x.a.to_f64().unwrap_or(f64::NAN);
    if x.b.is_zero() || d == 0 {
        return a;
    }
    let sb = if sign > 0 { x.b.clone() } else { -x.b.clone() };
    let b = sb.to_f64().unwrap_or(f64::NAN);
    let root = (d as f64).sqrt();
    if x.a.is_zero() || x.a.is_positive() == sb.is_positive() {
        a + b * root
    } else {
        // a + b sqrt D = (a^2 - b^2 D) / (a - b sqrt D) avoids cancellation
        let n = x.norm_form().to_f64().unwrap_or(f64::NAN);
        n / (a - b * root)
    }
}

impl FieldElement {
    fn zero_in(d: i64) -> Self {
        FieldElement { a: BigRational::zero(), b: BigRational::zero(), d }
    }

    fn from_ratio_in(d: i64, a: BigRational, b: BigRational) -> Self {
        FieldElement { a, b, d }
    }

    /// A rational constant usable in any field.
    pub fn rational(q: BigRational) -> Self {
        FieldElement { a: q, b: BigRational::zero(), d: 0 }
    }

    pub fn integer(n: i64) -> Self {
        Self::rational(BigRational::from_integer(n.into()))
    }

    pub fn ratio(p: i64, q: i64) -> Self {
        Self::rational(BigRational::new(p.into(), q.into()))
    }

    pub fn a(&self) -> &BigRational {
        &self.a
    }

    pub fn b(&self) -> &BigRational {
        &self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    /// `a^2 - b^2 D`.
    fn norm_form(&self) -> BigRational {
        &self.a * &self.a - &self.b * &self.b * BigRational::from_integer(self.d.into())
    }

    /// Galois conjugate `a - b sqrt D`.
    pub fn conjugate(&self) -> Self {
        FieldElement { a: self.a.clone(), b: -self.b.clone(), d: self.d }
    }

    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let n = self.norm_form();
        Some(FieldElement { a: &self.a / &n, b: -(&self.b / &n), d: self.d })
    }

    /// Embedding with sign `+1` or `-1` on `sqrt D`, without a field handle.
    pub fn to_f64_at(&self, sign: i64) -> f64 {
        embed_value(self, self.d, sign)
    }

    fn join(&self, other: &Self) -> i64 {
        match (self.d, other.d) {
            (0, d) | (d, 0) => d,
            (x, y) if x == y => x,
            (x, y) => panic!("{}", Error::FieldMismatch(x, y)),
        }
    }

    /// Common denominator of both components.
    pub fn denominator(&self) -> BigInt {
        self.a.denom().lcm(self.b.denom())
    }
}

impl PartialOrd for FieldElement {
    /// Lexicographic on `(a, b)`; used only for canonical key ordering.
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FieldElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.a.cmp(&other.a).then_with(|| self.b.cmp(&other.b))
    }
}

impl<'a> Add<&'a FieldElement> for &'a FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: &FieldElement) -> FieldElement {
        let d = self.join(rhs);
        FieldElement { a: &self.a + &rhs.a, b: &self.b + &rhs.b, d }
    }
}

impl<'a> Sub<&'a FieldElement> for &'a FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: &FieldElement) -> FieldElement {
        let d = self.join(rhs);
        FieldElement { a: &self.a - &rhs.a, b: &self.b - &rhs.b, d }
    }
}

impl<'a> Mul<&'a FieldElement> for &'a FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: &FieldElement) -> FieldElement {
        let d = self.join(rhs);
        let dd = BigRational::from_integer(d.into());
        FieldElement {
            a: &self.a * &rhs.a + &self.b * &rhs.b * dd,
            b: &self.a * &rhs.b + &self.b * &rhs.a,
            d,
        }
    }
}

impl<'a> Div<&'a FieldElement> for &'a FieldElement {
    type Output = FieldElement;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: &FieldElement) -> FieldElement {
        let inv = rhs.inv().expect("division by zero in field");
        self * &inv
    }
}

impl Neg for &FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement { a: -self.a.clone(), b: -self.b.clone(), d: self.d }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $m(self, rhs: FieldElement) -> FieldElement {
                (&self).$m(&rhs)
            }
        }
        impl<'a> $tr<&'a FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $m(self, rhs: &FieldElement) -> FieldElement {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        -&self
    }
}

fn fmt_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Parses `"p"`, `"p/q"` or `"-p/q"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let parse = |t: &str| -> Result<BigInt> {
        t.trim().parse::<BigInt>().map_err(|_| Error::Input(format!("bad rational {s:?}")))
    };
    match s.split_once('/') {
        None => Ok(BigRational::from_integer(parse(s)?)),
        Some((p, q)) => {
            let q = parse(q)?;
            if q.is_zero() {
                return Err(Error::Input(format!("zero denominator in {s:?}")));
            }
            Ok(BigRational::new(parse(p)?, q))
        }
    }
}

pub fn format_rational(q: &BigRational) -> String {
    fmt_rational(q)
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            return write!(f, "{}", fmt_rational(&self.a));
        }
        let root = format!("sqrt{}", self.d);
        let b = if self.b.is_one() {
            root
        } else if (-self.b.clone()).is_one() {
            format!("-{root}")
        } else {
            format!("{}*{}", fmt_rational(&self.b), root)
        };
        if self.a.is_zero() {
            write!(f, "{b}")
        } else if b.starts_with('-') {
            write!(f, "{}{}", fmt_rational(&self.a), b)
        } else {
            write!(f, "{}+{}", fmt_rational(&self.a), b)
        }
    }
}
