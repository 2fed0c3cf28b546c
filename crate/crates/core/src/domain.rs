//! Input schema, mixed points and datasets.
//!
//! A mixed input `w = (x, t)` has `p` quantitative coordinates `x` in native
//! units and `q` qualitative level indices `t`. Level indices are 1-based on
//! every public surface (`t_j` ranges over `1..=m_j`).
//!
//! Kernels only ever see quantitative inputs mapped onto the unit cube; see
//! [`InputSchema::normalize`].

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A quantitative input with its native range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantInput {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl QuantInput {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// A nominal qualitative factor. The number of labels is the level count `m_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualFactor {
    pub name: String,
    pub levels: Vec<String>,
}

impl QualFactor {
    pub fn new<S: Into<String>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Self {
        Self { name: name.into(), levels: labels.into_iter().map(Into::into).collect() }
    }

    /// A factor whose labels are the 1-based level indices.
    pub fn unlabeled(name: impl Into<String>, m: usize) -> Self {
        Self::new(name, (1..=m).map(|l| l.to_string()))
    }

    pub fn m(&self) -> usize {
        self.levels.len()
    }

    /// Resolves a label, or failing that a 1-based index, to a 1-based level.
    pub fn parse_level(&self, s: &str) -> Option<usize> {
        let s = s.trim();
        if let Some(pos) = self.levels.iter().position(|l| l == s) {
            return Some(pos + 1);
        }
        match s.parse::<usize>() {
            Ok(l) if (1..=self.m()).contains(&l) => Some(l),
            _ => None,
        }
    }
}

/// Declares the `p` quantitative inputs and `q` qualitative factors of a problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct InputSchema {
    #[serde(default)]
    pub quantitative: Vec<QuantInput>,
    #[serde(default)]
    pub qualitative: Vec<QualFactor>,
}

#[derive(Deserialize)]
struct RawSchema {
    #[serde(default)]
    quantitative: Vec<QuantInput>,
    #[serde(default)]
    qualitative: Vec<QualFactor>,
}

impl TryFrom<RawSchema> for InputSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        InputSchema::new(raw.quantitative, raw.qualitative)
    }
}

impl InputSchema {
    pub fn new(quantitative: Vec<QuantInput>, qualitative: Vec<QualFactor>) -> Result<Self> {
        for (i, q) in quantitative.iter().enumerate() {
            if !(q.lower.is_finite() && q.upper.is_finite() && q.lower < q.upper) {
                return Err(Error::InvalidSchema(format!(
                    "input {} (`{}`) needs finite lower < upper, got [{}, {}]",
                    i + 1,
                    q.name,
                    q.lower,
                    q.upper
                )));
            }
        }
        for (j, f) in qualitative.iter().enumerate() {
            if f.m() < 2 {
                return Err(Error::InvalidSchema(format!(
                    "factor {} (`{}`) needs at least 2 levels",
                    j + 1,
                    f.name
                )));
            }
            let mut seen = HashSet::new();
            for l in &f.levels {
                if !seen.insert(l.as_str()) {
                    return Err(Error::InvalidSchema(format!(
                        "factor {} (`{}`) repeats label `{l}`",
                        j + 1,
                        f.name
                    )));
                }
            }
        }
        Ok(Self { quantitative, qualitative })
    }

    pub fn p(&self) -> usize {
        self.quantitative.len()
    }

    pub fn q(&self) -> usize {
        self.qualitative.len()
    }

    /// Level counts `m_j`.
    pub fn levels(&self) -> Vec<usize> {
        self.qualitative.iter().map(QualFactor::m).collect()
    }

    /// Same factors, with every quantitative range replaced by `[0, 1]`.
    pub fn unit_cube(&self) -> InputSchema {
        InputSchema {
            quantitative: self
                .quantitative
                .iter()
                .map(|q| QuantInput::new(q.name.clone(), 0.0, 1.0))
                .collect(),
            qualitative: self.qualitative.clone(),
        }
    }

    /// Every violated constraint of `point`; empty iff the point is valid.
    pub fn validate(&self, point: &MixedPoint) -> Vec<Violation> {
        let mut out = Vec::new();
        if point.x.len() != self.p() {
            out.push(Violation::QuantCount { expected: self.p(), got: point.x.len() });
        } else {
            for (i, (&x, q)) in point.x.iter().zip(&self.quantitative).enumerate() {
                if !x.is_finite() {
                    out.push(Violation::NotFinite { input: i + 1 });
                } else if x < q.lower {
                    out.push(Violation::BelowRange { input: i + 1, value: x, lower: q.lower });
                } else if x > q.upper {
                    out.push(Violation::AboveRange { input: i + 1, value: x, upper: q.upper });
                }
            }
        }
        if point.t.len() != self.q() {
            out.push(Violation::FactorCount { expected: self.q(), got: point.t.len() });
        } else {
            for (j, (&t, f)) in point.t.iter().zip(&self.qualitative).enumerate() {
                if t < 1 || t > f.m() {
                    out.push(Violation::LevelOutOfRange { factor: j + 1, level: t, m: f.m() });
                }
            }
        }
        out
    }

    pub fn check(&self, point: &MixedPoint) -> Result<()> {
        let v = self.validate(point);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPoint(v))
        }
    }

    /// Maps `x` affinely onto the unit cube; levels pass through unchanged.
    pub fn normalize(&self, point: &MixedPoint) -> Result<MixedPoint> {
        self.check(point)?;
        let x = point
            .x
            .iter()
            .zip(&self.quantitative)
            .map(|(&x, q)| (x - q.lower) / (q.upper - q.lower))
            .collect();
        Ok(MixedPoint { x, t: point.t.clone() })
    }

    /// Inverse of [`normalize`](Self::normalize).
    pub fn denormalize(&self, point: &MixedPoint) -> Result<MixedPoint> {
        self.unit_cube().check(point)?;
        let x = point
            .x
            .iter()
            .zip(&self.quantitative)
            .map(|(&u, q)| (q.lower + u * (q.upper - q.lower)).clamp(q.lower, q.upper))
            .collect();
        Ok(MixedPoint { x, t: point.t.clone() })
    }

    /// Column names: quantitative inputs followed by qualitative factors.
    pub fn column_names(&self) -> Vec<String> {
        self.quantitative
            .iter()
            .map(|q| q.name.clone())
            .chain(self.qualitative.iter().map(|f| f.name.clone()))
            .collect()
    }
}

/// A single constraint violation reported by [`InputSchema::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    QuantCount { expected: usize, got: usize },
    FactorCount { expected: usize, got: usize },
    NotFinite { input: usize },
    BelowRange { input: usize, value: f64, lower: f64 },
    AboveRange { input: usize, value: f64, upper: f64 },
    LevelOutOfRange { factor: usize, level: usize, m: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::QuantCount { expected, got } => {
                write!(f, "expected {expected} quantitative values, got {got}")
            }
            Violation::FactorCount { expected, got } => {
                write!(f, "expected {expected} qualitative levels, got {got}")
            }
            Violation::NotFinite { input } => write!(f, "input {input} is not finite"),
            Violation::BelowRange { input, value, lower } => {
                write!(f, "input {input} below range ({value} < {lower})")
            }
            Violation::AboveRange { input, value, upper } => {
                write!(f, "input {input} above range ({value} > {upper})")
            }
            Violation::LevelOutOfRange { factor, level, m } => {
                write!(f, "factor {factor} level out of range ({level} not in 1..={m})")
            }
        }
    }
}

/// An input `w = (x, t)`; `t` holds 1-based level indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedPoint {
    pub x: Vec<f64>,
    pub t: Vec<usize>,
}

impl MixedPoint {
    pub fn new(x: Vec<f64>, t: Vec<usize>) -> Self {
        Self { x, t }
    }
}

/// `n >= 1` observed `(w, y)` pairs under one schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: InputSchema,
    points: Vec<MixedPoint>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(schema: InputSchema, points: Vec<MixedPoint>, y: Vec<f64>) -> Result<Self> {
        if points.len() != y.len() {
            return Err(Error::InvalidDataset(format!(
                "{} points but {} responses",
                points.len(),
                y.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        for (i, p) in points.iter().enumerate() {
            let v = schema.validate(p);
            if !v.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "point {}: {}",
                    i + 1,
                    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
                )));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("response {} is not finite", i + 1)));
        }
        Ok(Self { schema, points, y })
    }

    pub fn schema(&self) -> &InputSchema {
        &self.schema
    }

    pub fn points(&self) -> &[MixedPoint] {
        &self.points
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// The same data on the unit-cube schema.
    pub fn normalized(&self) -> Dataset {
        let points = self
            .points
            .iter()
            .map(|p| self.schema.normalize(p).expect("dataset points are validated on construction"))
            .collect();
        Dataset { schema: self.schema.unit_cube(), points, y: self.y.clone() }
    }
}
