use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{HierarchyError, HierarchyNode, TenantTree};
use crate::metric::{AccessClass, Grant, HierarchyFamily, MetricError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedSchemaVersion(u32),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown {what} `{id}`")]
    UnknownReference { what: &'static str, id: String },
    #[error(transparent)]
    Hierarchy(#[from] MetricError),
    #[error("group membership cycle through `{0}`")]
    GroupCycle(String),
    #[error("unknown service principal `{0}`")]
    UnknownSpn(String),
    #[error("invalid document: {0}")]
    Invalid(String),
}

impl From<serde_json::Error> for SnapshotError {
    fn from(e: serde_json::Error) -> Self {
        SnapshotError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

fn native_err(source: HierarchyError) -> SnapshotError {
    match source {
        HierarchyError::DuplicateId(id) => SnapshotError::DuplicateId(id),
        source => SnapshotError::Hierarchy(MetricError::Hierarchy {
            hierarchy: "native".into(),
            source,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alternate {
    pub name: String,
    /// Parent overrides; nodes not listed keep their native parent.
    pub parents: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub id: String,
    #[serde(default)]
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub principal: String,
    pub action: String,
    pub access: AccessClass,
    pub scope: String,
}

impl Assignment {
    pub fn grant(&self) -> Grant {
        Grant::new(self.action.clone(), self.access, self.scope.clone())
    }
}

/// A tenant at rest: hierarchy, principals, groups and flattened data-action
/// assignments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenantSnapshot {
    pub version: u32,
    pub hierarchy: Vec<HierarchyNode>,
    #[serde(default)]
    pub alternates: Vec<Alternate>,
    #[serde(default)]
    pub groups: Vec<Group>,
    #[serde(default)]
    pub spns: Vec<String>,
    #[serde(default)]
    pub assignments: Vec<Assignment>,
}

/// Parses, validates and normalizes a snapshot document.
pub fn parse_snapshot(input: &[u8]) -> Result<TenantSnapshot, SnapshotError> {
    let snapshot: TenantSnapshot = serde_json::from_slice(input)?;
    snapshot.validated()
}

impl TenantSnapshot {
    /// Validates every cross-reference and returns the normalized form.
    pub fn validated(mut self) -> Result<Self, SnapshotError> {
        if self.version != SCHEMA_VERSION {
            return Err(SnapshotError::UnsupportedSchemaVersion(self.version));
        }
        self.normalize()?;
        self.family()?;

        let mut principals: HashMap<&str, bool> = HashMap::new();
        for spn in &self.spns {
            principals.insert(spn, false);
        }
        for g in &self.groups {
            if principals.insert(&g.id, true).is_some() {
                return Err(SnapshotError::DuplicateId(g.id.clone()));
            }
        }
        for g in &self.groups {
            for m in &g.members {
                if !principals.contains_key(m.as_str()) {
                    return Err(SnapshotError::UnknownReference {
                        what: "group member",
                        id: m.clone(),
                    });
                }
            }
        }
        let native = self.native_tree()?;
        for a in &self.assignments {
            if !principals.contains_key(a.principal.as_str()) {
                return Err(SnapshotError::UnknownReference {
                    what: "principal",
                    id: a.principal.clone(),
                });
            }
            if !native.contains(&a.scope) {
                return Err(SnapshotError::UnknownReference {
                    what: "scope",
                    id: a.scope.clone(),
                });
            }
        }
        check_group_cycles(&self.groups)?;
        Ok(self)
    }

    /// Sorts every list by id and drops exact duplicate assignments and
    /// members; duplicate ids are an error.
    fn normalize(&mut self) -> Result<(), SnapshotError> {
        fn sorted_unique<T, K: Ord + ToString>(
            items: &mut [T],
            key: impl Fn(&T) -> K,
        ) -> Result<(), SnapshotError> {
            items.sort_by_key(|x| key(x));
            for w in items.windows(2) {
                if key(&w[0]) == key(&w[1]) {
                    return Err(SnapshotError::DuplicateId(key(&w[0]).to_string()));
                }
            }
            Ok(())
        }
        sorted_unique(&mut self.hierarchy, |n| n.id.clone())?;
        sorted_unique(&mut self.alternates, |a| a.name.clone())?;
        sorted_unique(&mut self.groups, |g| g.id.clone())?;
        sorted_unique(&mut self.spns, |s| s.clone())?;
        for g in &mut self.groups {
            g.members.sort();
            g.members.dedup();
        }
        self.assignments.sort();
        self.assignments.dedup();
        Ok(())
    }

    pub fn native_tree(&self) -> Result<TenantTree, SnapshotError> {
        TenantTree::build(&self.hierarchy).map_err(native_err)
    }

    pub fn family(&self) -> Result<HierarchyFamily, SnapshotError> {
        let native = self.native_tree()?;
        let overrides: BTreeMap<String, BTreeMap<String, String>> = self
            .alternates
            .iter()
            .map(|a| (a.name.clone(), a.parents.clone()))
            .collect();
        Ok(HierarchyFamily::from_overrides(native, &overrides)?)
    }

    /// Canonical serialized form (pretty JSON, trailing newline).
    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }
}

fn check_group_cycles(groups: &[Group]) -> Result<(), SnapshotError> {
    let by_id: HashMap<&str, &Group> = groups.iter().map(|g| (g.id.as_str(), g)).collect();
    // 0 = unseen, 1 = on stack, 2 = done
    let mut state: HashMap<&str, u8> = HashMap::new();

    fn visit<'a>(
        id: &'a str,
        by_id: &HashMap<&'a str, &'a Group>,
        state: &mut HashMap<&'a str, u8>,
    ) -> Result<(), SnapshotError> {
        match state.get(id) {
            Some(1) => return Err(SnapshotError::GroupCycle(id.to_string())),
            Some(2) => return Ok(()),
            _ => {}
        }
        state.insert(id, 1);
        if let Some(g) = by_id.get(id) {
            for m in &g.members {
                if by_id.contains_key(m.as_str()) {
                    visit(m, by_id, state)?;
                }
            }
        }
        state.insert(id, 2);
        Ok(())
    }

    for g in groups {
        visit(&g.id, &by_id, &mut state)?;
    }
    Ok(())
}

/// Effective-grant lookup for every principal of a snapshot.
#[derive(Debug)]
pub struct GrantResolver<'a> {
    snapshot: &'a TenantSnapshot,
    // member -> groups that directly contain it
    parents: HashMap<&'a str, Vec<&'a str>>,
    direct: HashMap<&'a str, Vec<&'a Assignment>>,
}

impl<'a> GrantResolver<'a> {
    pub fn new(snapshot: &'a TenantSnapshot) -> Result<Self, SnapshotError> {
        check_group_cycles(&snapshot.groups)?;
        let mut parents: HashMap<&str, Vec<&str>> = HashMap::new();
        for g in &snapshot.groups {
            for m in &g.members {
                parents.entry(m.as_str()).or_default().push(g.id.as_str());
            }
        }
        let mut direct: HashMap<&str, Vec<&Assignment>> = HashMap::new();
        for a in &snapshot.assignments {
            direct.entry(a.principal.as_str()).or_default().push(a);
        }
        Ok(GrantResolver {
            snapshot,
            parents,
            direct,
        })
    }

    /// Direct grants plus those of every transitively enclosing group,
    /// deduplicated and sorted.
    pub fn resolve(&self, spn: &str) -> Result<Vec<Grant>, SnapshotError> {
        if self
            .snapshot
            .spns
            .binary_search_by(|s| s.as_str().cmp(spn))
            .is_err()
        {
            return Err(SnapshotError::UnknownSpn(spn.to_string()));
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut stack = vec![spn];
        let mut grants = BTreeSet::new();
        while let Some(p) = stack.pop() {
            if !seen.insert(p) {
                continue;
            }
            for a in self.direct.get(p).into_iter().flatten() {
                grants.insert(a.grant());
            }
            stack.extend(self.parents.get(p).into_iter().flatten().copied());
        }
        Ok(grants.into_iter().collect())
    }
}

/// One-shot form of [`GrantResolver::resolve`].
pub fn resolve_effective_grants(
    spn: &str,
    snapshot: &TenantSnapshot,
) -> Result<Vec<Grant>, SnapshotError> {
    GrantResolver::new(snapshot)?.resolve(spn)
}
