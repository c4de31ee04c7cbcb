use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

/// One candidate value of a dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Real(r) => Some(*r),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_usize(&self) -> Option<usize> {
        match self {
            ParamValue::Int(i) => usize::try_from(*i).ok(),
            ParamValue::Real(r) if r.fract() == 0.0 && *r >= 0.0 => Some(*r as usize),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(r) => write!(f, "{r}"),
            ParamValue::Text(s) => write!(f, "{s}"),
        }
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Real(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

/// A named, ordered, finite set of candidate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<ParamValue>,
}

impl Dimension {
    pub fn new(name: impl Into<String>, values: Vec<ParamValue>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One value index per dimension, in dimension order.
pub type Assignment = Vec<usize>;

/// The Cartesian product of its dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpace {
    dimensions: Vec<Dimension>,
}

#[derive(Deserialize)]
struct SpaceFile {
    #[serde(rename = "dimension")]
    dimensions: Vec<Dimension>,
}

impl SearchSpace {
    /// Rejects empty spaces, empty dimensions, duplicate names and
    /// non-finite or repeated values.
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        if dimensions.is_empty() {
            return Err(Error::invalid("search space has no dimensions"));
        }
        let mut names = HashSet::new();
        for d in &dimensions {
            if !names.insert(d.name.as_str()) {
                return Err(Error::invalid(format!(
                    "dimension `{}` defined twice",
                    d.name
                )));
            }
            if d.values.is_empty() {
                return Err(Error::invalid(format!(
                    "dimension `{}` has no values",
                    d.name
                )));
            }
            if d.values
                .iter()
                .any(|v| matches!(v, ParamValue::Real(r) if !r.is_finite()))
            {
                return Err(Error::invalid(format!(
                    "dimension `{}` has a non-finite value",
                    d.name
                )));
            }
            for (i, v) in d.values.iter().enumerate() {
                if d.values[..i].contains(v) {
                    return Err(Error::invalid(format!(
                        "dimension `{}` repeats value {v}",
                        d.name
                    )));
                }
            }
        }
        Ok(Self { dimensions })
    }

    /// Parses a space file. TOML form:
    ///
    /// ```toml
    /// [[dimension]]
    /// name = "cic_size"
    /// values = [8, 16, 32]
    /// ```
    ///
    /// JSON form: `{"dimension": [{"name": "cic_size", "values": [8, 16, 32]}]}`.
    pub fn parse(text: &str) -> Result<Self> {
        let file: SpaceFile = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)
                .map_err(|e| Error::invalid(format!("search space JSON: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::invalid(format!("search space TOML: {e}")))?
        };
        Self::new(file.dimensions)
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    /// Number of points, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.dimensions
            .iter()
            .fold(1u128, |acc, d| acc.saturating_mul(d.len() as u128))
    }

    pub fn contains(&self, assignment: &[usize]) -> bool {
        assignment.len() == self.dimensions.len()
            && assignment
                .iter()
                .zip(&self.dimensions)
                .all(|(&i, d)| i < d.len())
    }

    pub fn sample_uniform(&self, rng: &mut RngState) -> Assignment {
        self.dimensions.iter().map(|d| rng.below(d.len())).collect()
    }

    /// The `index`-th point in row-major order (last dimension fastest).
    pub fn point(&self, mut index: u128) -> Assignment {
        let mut out = vec![0; self.dimensions.len()];
        for (slot, d) in out.iter_mut().zip(&self.dimensions).rev() {
            *slot = (index % d.len() as u128) as usize;
            index /= d.len() as u128;
        }
        out
    }

    /// Name → value view of an assignment.
    pub fn values(&self, assignment: &[usize]) -> BTreeMap<String, ParamValue> {
        self.dimensions
            .iter()
            .zip(assignment)
            .map(|(d, &i)| (d.name.clone(), d.values[i].clone()))
            .collect()
    }

    /// Inverse of [`SearchSpace::values`].
    pub fn indices(&self, values: &BTreeMap<String, ParamValue>) -> Result<Assignment> {
        if values.len() != self.dimensions.len() {
            return Err(Error::invalid(format!(
                "assignment has {} values, space has {} dimensions",
                values.len(),
                self.dimensions.len()
            )));
        }
        self.dimensions
            .iter()
            .map(|d| {
                let v = values
                    .get(&d.name)
                    .ok_or_else(|| Error::invalid(format!("assignment lacks `{}`", d.name)))?;
                d.values
                    .iter()
                    .position(|x| x == v || (x.as_f64().is_some() && x.as_f64() == v.as_f64()))
                    .ok_or_else(|| {
                        Error::invalid(format!("value {v} is not an option of `{}`", d.name))
                    })
            })
            .collect()
    }
}
