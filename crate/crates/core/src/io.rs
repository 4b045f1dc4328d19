//! JSON job input and output helpers.

use nalgebra::DVector;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lattice::OLattice;
use crate::linalg::{FMatrix, FVector};
use crate::numberfield::{format_rational, parse_rational, FieldElement, TotallyRealField};
use crate::perioddomain::{normalized_frame, PeriodPoint, PolyPeriodPoint};
use crate::quadspace::QuadraticSpace;

/// An element as `3`, `"1/2"`, or `{"a": "p/q", "b": "p/q"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementJson {
    Int(i64),
    Text(String),
    Parts {
        a: RationalJson,
        #[serde(default)]
        b: Option<RationalJson>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalJson {
    Int(i64),
    Text(String),
}

impl RationalJson {
    fn parse(&self) -> Result<BigRational> {
        match self {
            RationalJson::Int(n) => Ok(BigRational::from_integer((*n).into())),
            RationalJson::Text(s) => parse_rational(s),
        }
    }
}

impl ElementJson {
    pub fn parse(&self, field: &TotallyRealField) -> Result<FieldElement> {
        match self {
            ElementJson::Int(n) => Ok(FieldElement::integer(*n)),
            ElementJson::Text(s) => Ok(FieldElement::rational(parse_rational(s)?)),
            ElementJson::Parts { a, b } => {
                let a = a.parse()?;
                match b {
                    None => Ok(FieldElement::rational(a)),
                    Some(b) => field.element(a, b.parse()?),
                }
            }
        }
    }

    pub fn from_element(x: &FieldElement) -> Self {
        ElementJson::Parts {
            a: RationalJson::Text(format_rational(x.a())),
            b: Some(RationalJson::Text(format_rational(x.b()))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldJson {
    pub degree: usize,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceJson {
    pub gram: Vec<Vec<ElementJson>>,
    pub e: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeJson {
    pub zbasis: Vec<Vec<ElementJson>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodPointJson {
    pub place: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobJson {
    pub field: FieldJson,
    pub space: SpaceJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<PeriodPointJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<ElementJson>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coset: Option<Vec<RationalJson>>,
}

/// Parsed job. `space` is validated against the signature profile only by
/// [`Job::validated`].
#[derive(Debug, Clone)]
pub struct Job {
    pub field: TotallyRealField,
    pub space: QuadraticSpace,
    pub zbasis: Option<Vec<FVector>>,
    pub tau: Option<Vec<PeriodPointJson>>,
    pub x: Vec<FVector>,
    pub r: usize,
    pub coset: Option<Vec<BigRational>>,
}

fn parse_rows(rows: &[Vec<ElementJson>], field: &TotallyRealField) -> Result<FMatrix> {
    rows.iter().map(|row| row.iter().map(|x| x.parse(field)).collect()).collect()
}

impl Job {
    pub fn from_json_str(s: &str) -> Result<Job> {
        let raw: JobJson = serde_json::from_str(s).map_err(|e| Error::Input(format!("schema: {e}")))?;
        Job::from_raw(&raw)
    }

    pub fn from_raw(raw: &JobJson) -> Result<Job> {
        let field = TotallyRealField::from_degree(raw.field.degree, raw.field.d)?;
        let gram = parse_rows(&raw.space.gram, &field)?;
        let space = QuadraticSpace::unvalidated(field, gram, raw.space.e)?;
        let zbasis = raw.lattice.as_ref().map(|l| parse_rows(&l.zbasis, &field)).transpose()?;
        let x = raw.x.as_ref().map(|x| parse_rows(x, &field)).transpose()?.unwrap_or_default();
        for v in &x {
            if v.len() != space.dim() {
                return Err(Error::DimensionMismatch { expected: space.dim(), got: v.len() });
            }
        }
        let coset = raw.coset.as_ref().map(|c| c.iter().map(RationalJson::parse).collect::<Result<Vec<_>>>()).transpose()?;
        let r = raw.r.unwrap_or(if x.is_empty() { 1 } else { x.len() });
        if r == 0 {
            return Err(Error::Input("r must be at least 1".into()));
        }
        Ok(Job { field, space, zbasis, tau: raw.tau.clone(), x, r, coset })
    }

    /// Errors with the offending place when the signature profile fails.
    pub fn validated(&self) -> Result<QuadraticSpace> {
        QuadraticSpace::new(self.field, self.space.gram().clone(), self.space.e())
    }

    pub fn lattice(&self) -> Result<OLattice> {
        let space = self.validated()?;
        match &self.zbasis {
            Some(b) => OLattice::new(space, b.clone()),
            None => OLattice::standard(space),
        }
    }

    /// The given points, or the negative pair of the normalized frame at
    /// each indefinite place.
    pub fn period_point(&self) -> Result<PolyPeriodPoint> {
        let space = self.validated()?;
        let pts = match &self.tau {
            Some(ts) => ts
                .iter()
                .map(|t| PeriodPoint::new(&space, t.place, DVector::from_vec(t.alpha.clone()), DVector::from_vec(t.beta.clone())))
                .collect::<Result<Vec<_>>>()?,
            None => (1..=space.e())
                .map(|p| {
                    let f = normalized_frame(&space, p)?;
                    let m = f.len();
                    PeriodPoint::new(&space, p, f[m - 2].clone(), f[m - 1].clone())
                })
                .collect::<Result<Vec<_>>>()?,
        };
        PolyPeriodPoint::new(&space, pts)
    }
}

pub fn element_json(x: &FieldElement) -> Value {
    json!({"a": format_rational(x.a()), "b": format_rational(x.b())})
}

pub fn period_point_json(t: &PeriodPoint) -> Value {
    json!({"place": t.place(), "alpha": t.alpha().as_slice(), "beta": t.beta().as_slice()})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_elements() {
        let s = r#"{"field": {"degree": 2, "D": 5},
            "space": {"gram": [[2, {"a": "0", "b": "1"}, 0], [{"a": 0, "b": 1}, "-2", 0], [0, 0, -2]], "e": 1},
            "x": [[1, 0, 0]]}"#;
        let job = Job::from_json_str(s).unwrap();
        assert_eq!(job.space.gram()[0][1], job.field.elt(0, 1));
        assert_eq!(job.r, 1);
        assert_eq!(job.x[0][0], FieldElement::integer(1));
    }

    #[test]
    fn rejects_schema_and_asymmetry() {
        assert!(matches!(Job::from_json_str(r#"{"field": {"degree": 1}}"#), Err(Error::Input(_))));
        let s = r#"{"field": {"degree": 1}, "space": {"gram": [[2, 1, 0], [0, -2, 0], [0, 0, -2]], "e": 1}}"#;
        assert!(matches!(Job::from_json_str(s), Err(Error::NotSymmetric(2, 1))));
        let s = r#"{"field": {"degree": 1}, "space": {"gram": [[2]], "e": 0}, "extra": 1}"#;
        assert!(Job::from_json_str(s).is_err());
    }

    #[test]
    fn default_period_point_is_valid() {
        let s = r#"{"field": {"degree": 1}, "space": {"gram": [[2, 0, 0], [0, -2, 0], [0, 0, -2]], "e": 1}}"#;
        let job = Job::from_json_str(s).unwrap();
        let t = job.period_point().unwrap();
        let back: PeriodPointJson = serde_json::from_value(period_point_json(t.at(1))).unwrap();
        assert_eq!(back.place, 1);
        let e: ElementJson = serde_json::from_value(element_json(&FieldElement::ratio(-3, 4))).unwrap();
        assert_eq!(e.parse(&job.field).unwrap(), FieldElement::ratio(-3, 4));
    }
}
