//! The blast-radius ultrametric over grants.
//!
//! `d(a, b) = impact(a, b) / 2^(2·D + 1)` where `D` is the canonical level of
//! the lowest common ancestor of the two scopes. Values are kept as integer
//! multiples of `2^-21`, so every comparison is exact.
//!
//! Over a point set the impact is taken once for the whole set (the largest
//! weight present), which makes the set a scaled tree ultrametric. A purely
//! pairwise impact is not ultrametric once read and write grants mix: with
//! `x` write on `s1`, `y` read on `s1` and `z` read on `s2`,
//! `d(x, z) = 1 > max(d(x, y), d(y, z)) = 1/2`. On two points both readings
//! agree, and so does the diameter of any set.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{HierarchyError, TenantTree, MAX_LEVEL};
use crate::scalar::{fixed6, render_exact};

/// Binary exponent of the distance unit: one unit is `2^-21`.
pub const DYADIC_EXP: u32 = 21;

/// Default cap on reported strong-triangle violations.
pub const DEFAULT_VIOLATION_LIMIT: usize = 100;

// Keeps `weight << 20` inside u64.
const MAX_WEIGHT: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessClass {
    Read,
    Write,
}

impl AccessClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessClass::Read => "read",
            AccessClass::Write => "write",
        }
    }
}

impl fmt::Display for AccessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One permission atom: an action of some access class on a scope node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Grant {
    pub action: String,
    pub access: AccessClass,
    pub scope: String,
}

impl Grant {
    pub fn new(action: impl Into<String>, access: AccessClass, scope: impl Into<String>) -> Self {
        Grant {
            action: action.into(),
            access,
            scope: scope.into(),
        }
    }

    pub fn read(action: impl Into<String>, scope: impl Into<String>) -> Self {
        Grant::new(action, AccessClass::Read, scope)
    }

    pub fn write(action: impl Into<String>, scope: impl Into<String>) -> Self {
        Grant::new(action, AccessClass::Write, scope)
    }
}

impl fmt::Display for Grant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] @ {}", self.action, self.access, self.scope)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("impact weights must satisfy 0 < read < write <= {MAX_WEIGHT} (got read={read}, write={write})")]
    InvalidWeights { read: u32, write: u32 },
    #[error("hierarchy `{hierarchy}`: {source}")]
    Hierarchy {
        hierarchy: String,
        #[source]
        source: HierarchyError,
    },
    #[error("alternate hierarchy `{0}` does not cover exactly the native node set")]
    NodeSetMismatch(String),
}

/// Per-access-class impact weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImpactModel {
    read: u32,
    write: u32,
}

impl Default for ImpactModel {
    fn default() -> Self {
        ImpactModel { read: 1, write: 2 }
    }
}

impl ImpactModel {
    pub fn new(read: u32, write: u32) -> Result<Self, MetricError> {
        if read == 0 || write <= read || write > MAX_WEIGHT {
            return Err(MetricError::InvalidWeights { read, write });
        }
        Ok(ImpactModel { read, write })
    }

    pub fn weight(&self, access: AccessClass) -> u32 {
        match access {
            AccessClass::Read => self.read,
            AccessClass::Write => self.write,
        }
    }

    pub fn is_default(&self) -> bool {
        *self == ImpactModel::default()
    }
}

/// Exact non-negative distance `units / 2^21`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DyadicDistance {
    units: u64,
}

impl DyadicDistance {
    pub const ZERO: DyadicDistance = DyadicDistance { units: 0 };
    pub const ONE: DyadicDistance = DyadicDistance {
        units: 1 << DYADIC_EXP,
    };

    pub fn from_units(units: u64) -> Self {
        DyadicDistance { units }
    }

    /// `impact / 2^(2·level + 1)`.
    pub fn from_parts(impact: u32, level: u8) -> Self {
        assert!(level <= MAX_LEVEL, "level {level} out of range");
        DyadicDistance {
            units: u64::from(impact) << (2 * (MAX_LEVEL - level) as u32),
        }
    }

    pub fn units(self) -> u64 {
        self.units
    }

    pub fn is_zero(self) -> bool {
        self.units == 0
    }

    pub fn to_big_rational(self) -> BigRational {
        BigRational::new(BigInt::from(self.units), BigInt::from(1u64 << DYADIC_EXP))
    }

    pub fn to_f64(self) -> f64 {
        self.units as f64 / (1u64 << DYADIC_EXP) as f64
    }

    /// Reduced fraction, e.g. `1/32768`.
    pub fn exact_string(self) -> String {
        render_exact(&self.to_big_rational())
    }
}

impl Add for DyadicDistance {
    type Output = DyadicDistance;

    fn add(self, rhs: Self) -> Self {
        DyadicDistance {
            units: self.units + rhs.units,
        }
    }
}

impl Zero for DyadicDistance {
    fn zero() -> Self {
        DyadicDistance::ZERO
    }

    fn is_zero(&self) -> bool {
        self.units == 0
    }
}

impl fmt::Display for DyadicDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fixed6(&self.to_big_rational()))
    }
}

pub fn pair_impact(a: &Grant, b: &Grant, model: &ImpactModel) -> u32 {
    model.weight(a.access).max(model.weight(b.access))
}

/// Largest weight among `grants`; the read weight for an empty set.
pub fn set_impact(grants: &[Grant], model: &ImpactModel) -> u32 {
    grants
        .iter()
        .map(|g| model.weight(g.access))
        .max()
        .unwrap_or_else(|| model.weight(AccessClass::Read))
}

fn scaled_distance(
    a: &Grant,
    b: &Grant,
    impact: u32,
    tree: &TenantTree,
) -> Result<DyadicDistance, HierarchyError> {
    let level = tree.lca_level(&a.scope, &b.scope)?;
    if a == b {
        return Ok(DyadicDistance::ZERO);
    }
    Ok(DyadicDistance::from_parts(impact, level))
}

/// Distance between two grants under a single hierarchy.
pub fn distance(
    a: &Grant,
    b: &Grant,
    tree: &TenantTree,
    model: &ImpactModel,
) -> Result<DyadicDistance, HierarchyError> {
    scaled_distance(a, b, pair_impact(a, b, model), tree)
}

/// The native tree plus named re-parented alternates over the same node set.
#[derive(Debug, Clone)]
pub struct HierarchyFamily {
    native: TenantTree,
    alternates: Vec<(String, TenantTree)>,
}

impl HierarchyFamily {
    pub fn new(
        native: TenantTree,
        alternates: Vec<(String, TenantTree)>,
    ) -> Result<Self, MetricError> {
        for (name, alt) in &alternates {
            let same = alt.len() == native.len() && native.nodes().all(|n| alt.contains(&n.id));
            if !same {
                return Err(MetricError::NodeSetMismatch(name.clone()));
            }
        }
        Ok(HierarchyFamily { native, alternates })
    }

    /// Builds alternates from parent-override maps applied to `native`.
    pub fn from_overrides(
        native: TenantTree,
        overrides: &BTreeMap<String, BTreeMap<String, String>>,
    ) -> Result<Self, MetricError> {
        let mut alternates = Vec::with_capacity(overrides.len());
        for (name, parents) in overrides {
            let alt = native
                .reparented(parents)
                .map_err(|source| MetricError::Hierarchy {
                    hierarchy: name.clone(),
                    source,
                })?;
            alternates.push((name.clone(), alt));
        }
        HierarchyFamily::new(native, alternates)
    }

    pub fn native(&self) -> &TenantTree {
        &self.native
    }

    pub fn alternates(&self) -> &[(String, TenantTree)] {
        &self.alternates
    }

    /// Native first (named `native`), then alternates in order.
    pub fn members(&self) -> impl Iterator<Item = (&str, &TenantTree)> {
        std::iter::once(("native", &self.native))
            .chain(self.alternates.iter().map(|(n, t)| (n.as_str(), t)))
    }
}

/// Pointwise minimum of the distance over every hierarchy of the family.
pub fn infimum_distance(
    a: &Grant,
    b: &Grant,
    family: &HierarchyFamily,
    model: &ImpactModel,
) -> Result<DyadicDistance, MetricError> {
    infimum_scaled(a, b, pair_impact(a, b, model), family)
}

fn infimum_scaled(
    a: &Grant,
    b: &Grant,
    impact: u32,
    family: &HierarchyFamily,
) -> Result<DyadicDistance, MetricError> {
    let mut best: Option<DyadicDistance> = None;
    for (name, tree) in family.members() {
        let d = scaled_distance(a, b, impact, tree).map_err(|source| MetricError::Hierarchy {
            hierarchy: name.to_string(),
            source,
        })?;
        best = Some(best.map_or(d, |b| b.min(d)));
    }
    Ok(best.expect("family has a native member"))
}

/// Dense symmetric matrix of pairwise values.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Copy> DistanceMatrix<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn try_from_fn<E>(
        n: usize,
        mut f: impl FnMut(usize, usize) -> Result<T, E>,
    ) -> Result<Self, E> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j)?);
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> DistanceMatrix<U> {
        DistanceMatrix {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Pairwise distances within a grant set under one hierarchy, using the
/// set's impact.
pub fn grant_distances(
    grants: &[Grant],
    tree: &TenantTree,
    model: &ImpactModel,
) -> Result<DistanceMatrix<DyadicDistance>, HierarchyError> {
    for g in grants {
        if !tree.contains(&g.scope) {
            return Err(HierarchyError::UnknownNode(g.scope.clone()));
        }
    }
    let impact = set_impact(grants, model);
    DistanceMatrix::try_from_fn(grants.len(), |i, j| {
        scaled_distance(&grants[i], &grants[j], impact, tree)
    })
}

/// Pairwise infimum distances within a grant set across a family.
pub fn infimum_distances(
    grants: &[Grant],
    family: &HierarchyFamily,
    model: &ImpactModel,
) -> Result<DistanceMatrix<DyadicDistance>, MetricError> {
    let impact = set_impact(grants, model);
    DistanceMatrix::try_from_fn(grants.len(), |i, j| {
        infimum_scaled(&grants[i], &grants[j], impact, family)
    })
}

/// A strong-triangle violation: `d(i, k) > max(d(i, j), d(j, k))`.
///
/// Since distances are symmetric, `(i, j, k)` and `(k, j, i)` are the same
/// violation; only the `i < k` orientation is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Exhaustive cubic scan for strong-triangle violations, stopping after
/// `limit` hits.
pub fn check_ultrametricity<T: Copy + PartialOrd>(
    dist: &DistanceMatrix<T>,
    limit: usize,
) -> Vec<Violation> {
    let n = dist.len();
    let mut out = Vec::new();
    for i in 0..n {
        for k in i + 1..n {
            let dik = dist.get(i, k);
            for j in 0..n {
                if j == i || j == k {
                    continue;
                }
                let (dij, djk) = (dist.get(i, j), dist.get(j, k));
                let bound = if dij >= djk { dij } else { djk };
                if dik > bound {
                    if out.len() == limit {
                        return out;
                    }
                    out.push(Violation { i, j, k });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_tree, HierarchyNode, NodeKind::*};

    fn tree() -> TenantTree {
        build_tree(&[
            HierarchyNode::root("root"),
            HierarchyNode::child("s1", Subscription, "root"),
            HierarchyNode::child("s2", Subscription, "root"),
            HierarchyNode::child("rg1", ResourceGroup, "s1"),
            HierarchyNode::child("rg2", ResourceGroup, "s1"),
            HierarchyNode::child("r1", Resource, "rg1"),
            HierarchyNode::child("r2", Resource, "rg2"),
            HierarchyNode::child("p1", ResourcePart, "r1"),
            HierarchyNode::child("p2", ResourcePart, "r1"),
        ])
        .unwrap()
    }

    #[test]
    fn impacts() {
        let m = ImpactModel::default();
        let r = Grant::read("ReadBlob", "s1");
        let w = Grant::write("WriteBlob", "s1");
        assert_eq!(pair_impact(&r, &r, &m), 1);
        assert_eq!(pair_impact(&r, &w, &m), 2);
        assert_eq!(pair_impact(&w, &w, &m), 2);
    }

    #[test]
    fn weights_validated() {
        assert!(ImpactModel::new(0, 2).is_err());
        assert!(ImpactModel::new(2, 2).is_err());
        assert!(ImpactModel::new(1, 3).is_ok());
    }

    #[test]
    fn distance_examples() {
        let t = tree();
        let m = ImpactModel::default();
        let g = Grant::read("ReadBlob", "r1");
        assert_eq!(distance(&g, &g, &t, &m).unwrap(), DyadicDistance::ZERO);

        let tenant = distance(
            &Grant::write("WriteBlob", "s1"),
            &Grant::write("WriteSecret", "s2"),
            &t,
            &m,
        )
        .unwrap();
        assert_eq!(tenant, DyadicDistance::ONE);
        assert_eq!(tenant.to_string(), "1.000000");

        let parts = distance(
            &Grant::read("ReadBlob", "p1"),
            &Grant::read("ReadBlob", "p2"),
            &t,
            &m,
        )
        .unwrap();
        assert_eq!(
            parts.to_big_rational(),
            BigRational::new(1.into(), (1i64 << 19).into())
        );
        assert_eq!(parts.exact_string(), "1/524288");
    }

    #[test]
    fn distinct_grants_on_one_scope_use_the_scope_level() {
        let t = tree();
        let m = ImpactModel::default();
        let d = distance(
            &Grant::read("ReadBlob", "p1"),
            &Grant::read("ListBlob", "p1"),
            &t,
            &m,
        )
        .unwrap();
        assert_eq!(d, DyadicDistance::from_parts(1, 10));
        assert_eq!(d.exact_string(), "1/2097152");
    }

    #[test]
    fn unknown_scope() {
        let t = tree();
        let m = ImpactModel::default();
        let err = distance(&Grant::read("a", "zz"), &Grant::read("a", "zz"), &t, &m);
        assert_eq!(err, Err(HierarchyError::UnknownNode("zz".into())));
    }

    #[test]
    fn infimum_examples() {
        let t = tree();
        let m = ImpactModel::default();
        let a = Grant::read("ReadBlob", "r1");
        let b = Grant::read("ReadBlob", "r2");

        let solo = HierarchyFamily::new(t.clone(), vec![]).unwrap();
        assert_eq!(
            infimum_distance(&a, &b, &solo, &m).unwrap(),
            distance(&a, &b, &t, &m).unwrap()
        );

        // Move r2 under rg1: the pair's LCA drops from the subscription to
        // the resource group.
        let mut ov = BTreeMap::new();
        ov.insert(
            "merged".to_string(),
            BTreeMap::from([("r2".to_string(), "rg1".to_string())]),
        );
        let fam = HierarchyFamily::from_overrides(t.clone(), &ov).unwrap();
        assert_eq!(
            distance(&a, &b, &t, &m).unwrap(),
            DyadicDistance::from_parts(1, 7)
        );
        assert_eq!(
            infimum_distance(&a, &b, &fam, &m).unwrap(),
            DyadicDistance::from_parts(1, 8)
        );
    }

    #[test]
    fn infimum_names_offending_hierarchy() {
        let t = tree();
        let fam = HierarchyFamily::new(t, vec![]).unwrap();
        let err = infimum_distance(
            &Grant::read("a", "nope"),
            &Grant::read("a", "s1"),
            &fam,
            &ImpactModel::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, MetricError::Hierarchy { ref hierarchy, .. } if hierarchy == "native")
        );
    }

    #[test]
    fn family_rejects_mismatched_node_sets() {
        let t = tree();
        let other = build_tree(&[HierarchyNode::root("root")]).unwrap();
        assert!(matches!(
            HierarchyFamily::new(t, vec![("x".into(), other)]),
            Err(MetricError::NodeSetMismatch(_))
        ));
    }

    #[test]
    fn pointwise_minimum_counterexample() {
        // x=0, y=1, z=2
        let d1 = [[0, 2, 2], [2, 0, 1], [2, 1, 0]];
        let d2 = [[0, 1, 2], [1, 0, 2], [2, 2, 0]];
        let m1 = DistanceMatrix::from_fn(3, |i, j| d1[i][j]);
        let m2 = DistanceMatrix::from_fn(3, |i, j| d2[i][j]);
        assert!(check_ultrametricity(&m1, 100).is_empty());
        assert!(check_ultrametricity(&m2, 100).is_empty());
        let d3 = DistanceMatrix::from_fn(3, |i, j| m1.get(i, j).min(m2.get(i, j)));
        assert_eq!((d3.get(0, 1), d3.get(1, 2), d3.get(0, 2)), (1, 1, 2));
        assert_eq!(
            check_ultrametricity(&d3, 100),
            vec![Violation { i: 0, j: 1, k: 2 }]
        );
    }

    #[test]
    fn violation_cap_and_small_sets() {
        let two = DistanceMatrix::from_fn(2, |i, j| if i == j { 0 } else { 5 });
        assert!(check_ultrametricity(&two, 100).is_empty());
        // Path metric on a line is far from ultrametric.
        let line = DistanceMatrix::from_fn(10, |i, j| (i as i64 - j as i64).abs());
        assert_eq!(check_ultrametricity(&line, 3).len(), 3);
    }

    #[test]
    fn pairwise_impact_is_not_ultrametric_on_mixed_sets() {
        let t = tree();
        let m = ImpactModel::default();
        let g = [
            Grant::write("WriteBlob", "s1"),
            Grant::read("ReadBlob", "s1"),
            Grant::read("ReadBlob", "s2"),
        ];
        let pairwise =
            DistanceMatrix::try_from_fn(3, |i, j| distance(&g[i], &g[j], &t, &m)).unwrap();
        assert_eq!(pairwise.get(0, 2), DyadicDistance::ONE);
        assert_eq!(
            check_ultrametricity(&pairwise, 100),
            vec![Violation { i: 0, j: 1, k: 2 }]
        );

        let set = grant_distances(&g, &t, &m).unwrap();
        assert!(check_ultrametricity(&set, 100).is_empty());
        assert_eq!(set.get(1, 2), DyadicDistance::ONE);
    }

    #[test]
    fn set_and_pair_rules_agree_on_pairs() {
        let t = tree();
        let m = ImpactModel::default();
        let a = Grant::read("ReadBlob", "p1");
        let b = Grant::write("WriteBlob", "r2");
        let set = grant_distances(&[a.clone(), b.clone()], &t, &m).unwrap();
        assert_eq!(set.get(0, 1), distance(&a, &b, &t, &m).unwrap());
        assert_eq!(set_impact(&[], &m), 1);
    }

    #[test]
    fn single_tree_is_ultrametric() {
        let t = tree();
        let m = ImpactModel::default();
        let grants: Vec<Grant> = t
            .nodes()
            .flat_map(|n| {
                [
                    Grant::read("ReadBlob", n.id.clone()),
                    Grant::write("WriteBlob", n.id.clone()),
                ]
            })
            .collect();
        let dm = grant_distances(&grants, &t, &m).unwrap();
        assert!(check_ultrametricity(&dm, 100).is_empty());
    }
}
