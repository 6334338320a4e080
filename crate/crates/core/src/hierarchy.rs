//! Rooted tenant tree: validation, canonical levels and LCA queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Deepest management-group nesting accepted by the platform.
pub const MAX_MG_DEPTH: u8 = 6;

/// Highest canonical level (resource parts).
pub const MAX_LEVEL: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    TenantRoot,
    ManagementGroup,
    Subscription,
    ResourceGroup,
    Resource,
    ResourcePart,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::TenantRoot,
        NodeKind::ManagementGroup,
        NodeKind::Subscription,
        NodeKind::ResourceGroup,
        NodeKind::Resource,
        NodeKind::ResourcePart,
    ];

    /// Whether a node of this kind may hang below a node of `parent` kind.
    pub fn accepts_parent(self, parent: Option<NodeKind>) -> bool {
        use NodeKind::*;
        match (self, parent) {
            (TenantRoot, None) => true,
            (TenantRoot, Some(_)) | (_, None) => false,
            (ManagementGroup | Subscription, Some(p)) => matches!(p, TenantRoot | ManagementGroup),
            (ResourceGroup, Some(p)) => p == Subscription,
            (Resource, Some(p)) => p == ResourceGroup,
            (ResourcePart, Some(p)) => p == Resource,
        }
    }

    /// Canonical level for every kind except management groups, whose level
    /// is their nesting depth.
    pub fn fixed_level(self) -> Option<u8> {
        match self {
            NodeKind::TenantRoot => Some(0),
            NodeKind::ManagementGroup => None,
            NodeKind::Subscription => Some(7),
            NodeKind::ResourceGroup => Some(8),
            NodeKind::Resource => Some(9),
            NodeKind::ResourcePart => Some(10),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::TenantRoot => "tenant_root",
            NodeKind::ManagementGroup => "management_group",
            NodeKind::Subscription => "subscription",
            NodeKind::ResourceGroup => "resource_group",
            NodeKind::Resource => "resource",
            NodeKind::ResourcePart => "resource_part",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

impl HierarchyNode {
    pub fn root(id: impl Into<String>) -> Self {
        HierarchyNode {
            id: id.into(),
            kind: NodeKind::TenantRoot,
            parent: None,
        }
    }

    pub fn child(id: impl Into<String>, kind: NodeKind, parent: impl Into<String>) -> Self {
        HierarchyNode {
            id: id.into(),
            kind,
            parent: Some(parent.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HierarchyError {
    #[error("hierarchy is empty")]
    Empty,
    #[error("no tenant root node")]
    MissingRoot,
    #[error("more than one root: {}", .0.join(", "))]
    MultipleRoots(Vec<String>),
    #[error("parent cycle through node `{0}`")]
    CycleDetected(String),
    #[error("node `{node}` references unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("node `{node}` ({kind}) cannot sit below {}", .parent.map(|k| k.to_string()).unwrap_or_else(|| "nothing".into()))]
    IllegalParentKind {
        node: String,
        kind: NodeKind,
        parent: Option<NodeKind>,
    },
    #[error("management group `{node}` is nested {depth} levels deep (max {MAX_MG_DEPTH})")]
    MgDepthExceeded { node: String, depth: usize },
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

/// Validated, immutable tenant tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TenantTree {
    // Indexed by position in id-sorted order.
    nodes: Vec<HierarchyNode>,
    index: BTreeMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    level: Vec<u8>,
    root: usize,
}

/// Validates `nodes` and assigns canonical levels.
pub fn build_tree(nodes: &[HierarchyNode]) -> Result<TenantTree, HierarchyError> {
    TenantTree::build(nodes)
}

impl TenantTree {
    pub fn build(nodes: &[HierarchyNode]) -> Result<Self, HierarchyError> {
        if nodes.is_empty() {
            return Err(HierarchyError::Empty);
        }
        let mut sorted: Vec<HierarchyNode> = nodes.to_vec();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));

        let mut index = BTreeMap::new();
        for (i, node) in sorted.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(HierarchyError::DuplicateId(node.id.clone()));
            }
        }

        let roots: Vec<&HierarchyNode> = sorted
            .iter()
            .filter(|n| n.kind == NodeKind::TenantRoot)
            .collect();
        let root = match roots.as_slice() {
            [] => return Err(HierarchyError::MissingRoot),
            [r] => index[&r.id],
            many => {
                return Err(HierarchyError::MultipleRoots(
                    many.iter().map(|n| n.id.clone()).collect(),
                ))
            }
        };

        let mut parent = vec![None; sorted.len()];
        for (i, node) in sorted.iter().enumerate() {
            let parent_kind = match &node.parent {
                None => None,
                Some(p) => {
                    let &pi = index.get(p).ok_or_else(|| HierarchyError::UnknownParent {
                        node: node.id.clone(),
                        parent: p.clone(),
                    })?;
                    parent[i] = Some(pi);
                    Some(sorted[pi].kind)
                }
            };
            if node.parent.is_none() && node.kind != NodeKind::TenantRoot {
                let orphans = sorted
                    .iter()
                    .filter(|n| n.parent.is_none())
                    .map(|n| n.id.clone())
                    .collect();
                return Err(HierarchyError::MultipleRoots(orphans));
            }
            if !node.kind.accepts_parent(parent_kind) {
                return Err(HierarchyError::IllegalParentKind {
                    node: node.id.clone(),
                    kind: node.kind,
                    parent: parent_kind,
                });
            }
        }

        // Every parent chain must terminate at the root; kind legality alone
        // still admits management-group loops.
        let n = sorted.len();
        let mut depth: Vec<Option<usize>> = vec![None; n];
        depth[root] = Some(0);
        for start in 0..n {
            let mut chain = Vec::new();
            let mut seen = BTreeSet::new();
            let mut cur = start;
            while depth[cur].is_none() {
                if !seen.insert(cur) {
                    return Err(HierarchyError::CycleDetected(sorted[cur].id.clone()));
                }
                chain.push(cur);
                match parent[cur] {
                    Some(p) => cur = p,
                    None => return Err(HierarchyError::CycleDetected(sorted[cur].id.clone())),
                }
            }
            let mut d = depth[cur].unwrap();
            for &c in chain.iter().rev() {
                d += 1;
                depth[c] = Some(d);
            }
        }
        let depth: Vec<usize> = depth.into_iter().map(|d| d.unwrap()).collect();

        let mut level = vec![0u8; n];
        for i in 0..n {
            level[i] = match sorted[i].kind.fixed_level() {
                Some(l) => l,
                None => {
                    let mut mg_depth = 0usize;
                    let mut cur = Some(i);
                    while let Some(c) = cur {
                        if sorted[c].kind == NodeKind::ManagementGroup {
                            mg_depth += 1;
                        }
                        cur = parent[c];
                    }
                    if mg_depth > MAX_MG_DEPTH as usize {
                        return Err(HierarchyError::MgDepthExceeded {
                            node: sorted[i].id.clone(),
                            depth: mg_depth,
                        });
                    }
                    mg_depth as u8
                }
            };
        }

        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                // ascending i == ascending id
                children[p].push(i);
            }
        }

        Ok(TenantTree {
            nodes: sorted,
            index,
            parent,
            children,
            depth,
            level,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_id(&self) -> &str {
        &self.nodes[self.root].id
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Option<&HierarchyNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &HierarchyNode> {
        self.nodes.iter()
    }

    pub fn children(&self, id: &str) -> Result<impl Iterator<Item = &str>, HierarchyError> {
        let i = self.idx(id)?;
        Ok(self.children[i].iter().map(|&c| self.nodes[c].id.as_str()))
    }

    pub fn parent(&self, id: &str) -> Result<Option<&str>, HierarchyError> {
        let i = self.idx(id)?;
        Ok(self.parent[i].map(|p| self.nodes[p].id.as_str()))
    }

    pub fn canonical_level(&self, id: &str) -> Result<u8, HierarchyError> {
        Ok(self.level[self.idx(id)?])
    }

    /// Structural depth (root = 0).
    pub fn depth(&self, id: &str) -> Result<usize, HierarchyError> {
        Ok(self.depth[self.idx(id)?])
    }

    pub fn lca(&self, a: &str, b: &str) -> Result<&str, HierarchyError> {
        let i = self.lca_index(self.idx(a)?, self.idx(b)?);
        Ok(&self.nodes[i].id)
    }

    /// Canonical level of the lowest common ancestor.
    pub fn lca_level(&self, a: &str, b: &str) -> Result<u8, HierarchyError> {
        let i = self.lca_index(self.idx(a)?, self.idx(b)?);
        Ok(self.level[i])
    }

    fn idx(&self, id: &str) -> Result<usize, HierarchyError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| HierarchyError::UnknownNode(id.to_string()))
    }

    fn lca_index(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    /// Same node set with some parents replaced; the result is validated
    /// independently.
    pub fn reparented(&self, overrides: &BTreeMap<String, String>) -> Result<Self, HierarchyError> {
        for id in overrides.keys() {
            self.idx(id)?;
        }
        let nodes: Vec<HierarchyNode> = self
            .nodes
            .iter()
            .map(|n| HierarchyNode {
                parent: overrides.get(&n.id).cloned().or_else(|| n.parent.clone()),
                ..n.clone()
            })
            .collect();
        TenantTree::build(&nodes)
    }
}
