//! Explicit finite metric families, for checking pointwise infima on
//! distance tables that no tenant tree produces.
//!
//! ```json
//! {"points": ["x", "y", "z"],
//!  "metrics": [{"name": "d1", "distances": [{"a": "x", "b": "y", "d": 2}, ...]}]}
//! ```
//!
//! Distances may be JSON integers, JSON floats (taken at their exact binary
//! value) or `"p/q"` strings.

use std::collections::HashMap;
use std::str::FromStr;

use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};
use serde::Deserialize;

use crate::metric::DistanceMatrix;
use crate::scalar::Exact;

use super::snapshot::SnapshotError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    a: String,
    b: String,
    d: RawNumber,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    name: String,
    distances: Vec<RawPair>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    points: Vec<String>,
    metrics: Vec<RawMetric>,
}

/// Named complete distance tables over one point set.
#[derive(Debug, Clone)]
pub struct MetricFamily {
    pub points: Vec<String>,
    pub members: Vec<(String, DistanceMatrix<Exact>)>,
}

impl MetricFamily {
    /// Pointwise minimum over all members.
    pub fn infimum(&self) -> DistanceMatrix<Exact> {
        let n = self.points.len();
        DistanceMatrix::from_fn(n, |i, j| {
            self.members
                .iter()
                .map(|(_, m)| m.get(i, j))
                .min()
                .unwrap_or_else(Exact::zero)
        })
    }
}

fn to_exact(raw: &RawNumber) -> Result<Exact, String> {
    let value = match raw {
        RawNumber::Int(i) => Exact::from_integer(i128::from(*i)),
        RawNumber::Float(f) => {
            let big =
                BigRational::from_float(*f).ok_or_else(|| format!("non-finite distance {f}"))?;
            let (n, d) = (big.numer().to_i128(), big.denom().to_i128());
            match (n, d) {
                (Some(n), Some(d)) => Ratio::new(n, d),
                _ => return Err(format!("distance {f} out of range")),
            }
        }
        RawNumber::Text(s) => {
            Exact::from_str(s.trim()).map_err(|_| format!("bad distance literal `{s}`"))?
        }
    };
    if value < Exact::zero() {
        return Err(format!("negative distance {value}"));
    }
    Ok(value)
}

pub fn parse_metric_family(input: &[u8]) -> Result<MetricFamily, SnapshotError> {
    let raw: RawFamily = serde_json::from_slice(input)?;
    let invalid = SnapshotError::Invalid;

    let mut index = HashMap::new();
    for (i, p) in raw.points.iter().enumerate() {
        if index.insert(p.as_str(), i).is_some() {
            return Err(SnapshotError::DuplicateId(p.clone()));
        }
    }
    let n = raw.points.len();
    let mut members = Vec::new();
    for metric in &raw.metrics {
        if members.iter().any(|(name, _)| name == &metric.name) {
            return Err(SnapshotError::DuplicateId(metric.name.clone()));
        }
        let mut table: Vec<Option<Exact>> = vec![None; n * n];
        for pair in &metric.distances {
            let lookup = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| SnapshotError::UnknownReference {
                        what: "point",
                        id: id.to_string(),
                    })
            };
            let (i, j) = (lookup(&pair.a)?, lookup(&pair.b)?);
            if i == j {
                return Err(invalid(format!(
                    "{}: self-distance for `{}`",
                    metric.name, pair.a
                )));
            }
            let d = to_exact(&pair.d).map_err(|e| invalid(format!("{}: {e}", metric.name)))?;
            if d.is_zero() {
                return Err(invalid(format!(
                    "{}: zero distance between distinct points `{}` and `{}`",
                    metric.name, pair.a, pair.b
                )));
            }
            if table[i * n + j].is_some() {
                return Err(invalid(format!(
                    "{}: pair ({}, {}) given twice",
                    metric.name, pair.a, pair.b
                )));
            }
            table[i * n + j] = Some(d);
            table[j * n + i] = Some(d);
        }
        let matrix = DistanceMatrix::try_from_fn(n, |i, j| {
            if i == j {
                return Ok(Exact::zero());
            }
            table[i * n + j].ok_or_else(|| {
                invalid(format!(
                    "{}: missing distance for ({}, {})",
                    metric.name, raw.points[i], raw.points[j]
                ))
            })
        })?;
        members.push((metric.name.clone(), matrix));
    }
    if members.is_empty() {
        return Err(invalid("metric family has no members".into()));
    }
    Ok(MetricFamily {
        points: raw.points,
        members,
    })
}
