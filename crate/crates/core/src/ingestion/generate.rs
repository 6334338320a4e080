//! Seeded synthetic tenants.
//!
//! Principals come in three archetypes, encoded in their ids:
//! `spn-tight-NNNN` hold several actions of one access class on a single
//! scope at subscription level or below; `spn-dispersed-NNNN` hold clusters
//! of grants inside distinct subscriptions; `spn-mixed-NNNN` hold grants on
//! arbitrary scopes.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::hierarchy::{HierarchyNode, NodeKind, TenantTree, MAX_MG_DEPTH};
use crate::metric::{AccessClass, Grant};

use super::snapshot::{Assignment, Group, TenantSnapshot, SCHEMA_VERSION};

pub const READ_ACTIONS: [&str; 8] = [
    "ReadBlob",
    "ListBlobs",
    "ReadSecret",
    "ReadQueueMessage",
    "ReadTableEntity",
    "ReadKey",
    "ReadFile",
    "ReadCertificate",
];

pub const WRITE_ACTIONS: [&str; 8] = [
    "WriteBlob",
    "DeleteBlob",
    "WriteSecret",
    "WriteQueueMessage",
    "WriteTableEntity",
    "RotateKey",
    "WriteFile",
    "ImportCertificate",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid generator config: {0}")]
pub struct InvalidConfig(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    Tight,
    Dispersed,
    Mixed,
}

impl Archetype {
    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Tight => "tight",
            Archetype::Dispersed => "dispersed",
            Archetype::Mixed => "mixed",
        }
    }

    /// Archetype encoded in a generated principal id.
    pub fn of_spn(id: &str) -> Option<Archetype> {
        [Archetype::Tight, Archetype::Dispersed, Archetype::Mixed]
            .into_iter()
            .find(|a| id.starts_with(&format!("spn-{}-", a.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub management_groups: usize,
    pub max_mg_depth: u8,
    pub subscriptions: usize,
    pub resource_groups_per_subscription: usize,
    pub resources_per_group: usize,
    pub parts_per_resource: usize,
    pub tight: usize,
    pub dispersed: usize,
    pub mixed: usize,
    /// Probability that a grant (or a tight principal) is write access.
    pub write_fraction: f64,
    /// Upper bound on actions per tight principal or per dispersed cluster.
    pub max_actions: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            management_groups: 8,
            max_mg_depth: 4,
            subscriptions: 8,
            resource_groups_per_subscription: 3,
            resources_per_group: 3,
            parts_per_resource: 2,
            tight: 5,
            dispersed: 5,
            mixed: 0,
            write_fraction: 0.3,
            max_actions: 4,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let bad = |m: &str| Err(InvalidConfig(m.to_string()));
        if self.max_mg_depth > MAX_MG_DEPTH {
            return bad("max_mg_depth exceeds 6");
        }
        if self.management_groups > 0 && self.max_mg_depth == 0 {
            return bad("management groups need max_mg_depth >= 1");
        }
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return bad("write_fraction must lie in [0, 1]");
        }
        if self.max_actions < 2 || self.max_actions > READ_ACTIONS.len() {
            return bad("max_actions must lie in 2..=8");
        }
        if self.tight > 0 && self.subscriptions == 0 {
            return bad("tight principals need at least one subscription");
        }
        if self.dispersed > 0
            && (self.subscriptions < 2
                || self.resource_groups_per_subscription == 0
                || self.resources_per_group == 0)
        {
            return bad("dispersed principals need two subscriptions with resources");
        }
        Ok(())
    }
}

/// Builds a deterministic tenant from `config`.
pub fn generate_synthetic_tenant(
    config: &GeneratorConfig,
) -> Result<TenantSnapshot, InvalidConfig> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut hierarchy = vec![HierarchyNode::root("root")];
    // (id, mg nesting depth)
    let mut containers: Vec<(String, u8)> = vec![("root".into(), 0)];
    for i in 0..config.management_groups {
        let open: Vec<&(String, u8)> = containers
            .iter()
            .filter(|(_, d)| *d < config.max_mg_depth)
            .collect();
        let (parent, depth) = (*open.choose(&mut rng).unwrap()).clone();
        let id = format!("mg-{:02}", i + 1);
        hierarchy.push(HierarchyNode::child(&id, NodeKind::ManagementGroup, parent));
        containers.push((id, depth + 1));
    }

    let mut subs: Vec<Vec<String>> = Vec::new(); // resources per subscription
    let mut scoped: Vec<String> = Vec::new(); // nodes at level >= 7
    for s in 0..config.subscriptions {
        let sub = format!("sub-{:02}", s + 1);
        let (parent, _) = containers.choose(&mut rng).unwrap();
        hierarchy.push(HierarchyNode::child(
            &sub,
            NodeKind::Subscription,
            parent.clone(),
        ));
        scoped.push(sub.clone());
        let mut resources = Vec::new();
        for g in 0..config.resource_groups_per_subscription {
            let rg = format!("{sub}/rg-{}", g + 1);
            hierarchy.push(HierarchyNode::child(&rg, NodeKind::ResourceGroup, &sub));
            scoped.push(rg.clone());
            for r in 0..config.resources_per_group {
                let res = format!("{rg}/res-{}", r + 1);
                hierarchy.push(HierarchyNode::child(&res, NodeKind::Resource, &rg));
                scoped.push(res.clone());
                for p in 0..config.parts_per_resource {
                    let part = format!("{res}/part-{}", p + 1);
                    hierarchy.push(HierarchyNode::child(&part, NodeKind::ResourcePart, &res));
                    scoped.push(part);
                }
                resources.push(res);
            }
        }
        subs.push(resources);
    }
    let all_nodes: Vec<String> = hierarchy.iter().map(|n| n.id.clone()).collect();

    let mut spns = Vec::new();
    let mut groups = Vec::new();
    let mut assignments = Vec::new();
    let assign = |out: &mut Vec<Assignment>, principal: &str, g: Grant| {
        out.push(Assignment {
            principal: principal.to_string(),
            action: g.action,
            access: g.access,
            scope: g.scope,
        })
    };

    for i in 0..config.tight {
        let spn = format!("spn-tight-{:04}", i + 1);
        let scope = scoped.choose(&mut rng).unwrap().clone();
        let access = pick_access(&mut rng, config.write_fraction);
        let k = rng.random_range(2..=config.max_actions);
        for action in actions(&mut rng, access, k) {
            assign(
                &mut assignments,
                &spn,
                Grant::new(action, access, scope.clone()),
            );
        }
        spns.push(spn);
    }

    for i in 0..config.dispersed {
        let spn = format!("spn-dispersed-{:04}", i + 1);
        let clusters = rng.random_range(2..=subs.len().min(3));
        let chosen: Vec<&Vec<String>> = subs.choose_multiple(&mut rng, clusters).collect();
        let group = format!("grp-{spn}");
        let mut via_group = false;
        for (c, resources) in chosen.into_iter().enumerate() {
            let resource = resources.choose(&mut rng).unwrap();
            let parts: Vec<&String> = scoped
                .iter()
                .filter(|id| id.starts_with(&format!("{resource}/part-")))
                .collect();
            let k = rng.random_range(2..=config.max_actions);
            let access = pick_access(&mut rng, config.write_fraction);
            // Later clusters arrive through group membership.
            let principal = if c == 0 { spn.as_str() } else { group.as_str() };
            via_group |= c > 0;
            for action in actions(&mut rng, access, k) {
                let scope = match parts.choose(&mut rng) {
                    Some(p) if rng.random_bool(0.5) => (*p).clone(),
                    _ => resource.clone(),
                };
                assign(
                    &mut assignments,
                    principal,
                    Grant::new(action, access, scope),
                );
            }
        }
        if via_group {
            groups.push(Group {
                id: group,
                members: vec![spn.clone()],
            });
        }
        spns.push(spn);
    }

    for i in 0..config.mixed {
        let spn = format!("spn-mixed-{:04}", i + 1);
        let k = rng.random_range(1..=config.max_actions + 2);
        for _ in 0..k {
            let access = pick_access(&mut rng, config.write_fraction);
            let action = *vocabulary(access).choose(&mut rng).unwrap();
            let scope = all_nodes.choose(&mut rng).unwrap().clone();
            assign(&mut assignments, &spn, Grant::new(action, access, scope));
        }
        spns.push(spn);
    }

    let snapshot = TenantSnapshot {
        version: SCHEMA_VERSION,
        hierarchy,
        alternates: Vec::new(),
        groups,
        spns,
        assignments,
    };
    Ok(snapshot
        .validated()
        .expect("generator produces valid snapshots"))
}

fn pick_access<R: Rng>(rng: &mut R, write_fraction: f64) -> AccessClass {
    if rng.random_bool(write_fraction) {
        AccessClass::Write
    } else {
        AccessClass::Read
    }
}

fn vocabulary(access: AccessClass) -> &'static [&'static str] {
    match access {
        AccessClass::Read => &READ_ACTIONS,
        AccessClass::Write => &WRITE_ACTIONS,
    }
}

fn actions<R: Rng>(rng: &mut R, access: AccessClass, k: usize) -> Vec<&'static str> {
    let mut v: Vec<&str> = vocabulary(access)
        .choose_multiple(rng, k)
        .copied()
        .collect();
    v.shuffle(rng);
    v
}

/// Random legal tree of exactly `nodes` nodes (at least one).
pub fn random_tree<R: Rng>(rng: &mut R, nodes: usize) -> TenantTree {
    let mut out = vec![HierarchyNode::root("n0")];
    let mut mg_depth = vec![0u8];
    while out.len() < nodes.max(1) {
        let p = rng.random_range(0..out.len());
        let kind = match out[p].kind {
            NodeKind::TenantRoot | NodeKind::ManagementGroup => {
                if mg_depth[p] < MAX_MG_DEPTH && rng.random_bool(0.5) {
                    NodeKind::ManagementGroup
                } else {
                    NodeKind::Subscription
                }
            }
            NodeKind::Subscription => NodeKind::ResourceGroup,
            NodeKind::ResourceGroup => NodeKind::Resource,
            NodeKind::Resource => NodeKind::ResourcePart,
            NodeKind::ResourcePart => continue,
        };
        let depth = mg_depth[p] + u8::from(kind == NodeKind::ManagementGroup);
        let id = format!("n{}", out.len());
        out.push(HierarchyNode::child(id, kind, out[p].id.clone()));
        mg_depth.push(depth);
    }
    TenantTree::build(&out).expect("random tree is legal")
}

/// `n` distinct random grants on `tree`.
///
/// # Panics
/// If `n` exceeds the number of distinct grants the tree admits.
pub fn random_grants<R: Rng>(rng: &mut R, tree: &TenantTree, n: usize) -> Vec<Grant> {
    let ids: Vec<&str> = tree.nodes().map(|n| n.id.as_str()).collect();
    let capacity = ids.len() * (READ_ACTIONS.len() + WRITE_ACTIONS.len());
    assert!(
        n <= capacity,
        "{n} grants requested, tree admits {capacity}"
    );
    let mut out: Vec<Grant> = Vec::with_capacity(n);
    while out.len() < n {
        let access = pick_access(rng, 0.5);
        let g = Grant::new(
            *vocabulary(access).choose(rng).unwrap(),
            access,
            *ids.choose(rng).unwrap(),
        );
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = GeneratorConfig::default();
        assert!(c.validate().is_ok());
        c.max_mg_depth = 7;
        assert!(c.validate().is_err());
        let c = GeneratorConfig {
            subscriptions: 1,
            ..GeneratorConfig::default()
        };
        assert!(c.validate().is_err());
        let c = GeneratorConfig {
            max_actions: 1,
            ..GeneratorConfig::default()
        };
        assert!(generate_synthetic_tenant(&c).is_err());
    }

    #[test]
    fn seed_determinism() {
        let c = GeneratorConfig::default();
        let a = generate_synthetic_tenant(&c).unwrap().to_document();
        let b = generate_synthetic_tenant(&c).unwrap().to_document();
        assert_eq!(a, b);
        let other = GeneratorConfig { seed: 1, ..c };
        assert_ne!(a, generate_synthetic_tenant(&other).unwrap().to_document());
    }

    #[test]
    fn archetype_ids() {
        assert_eq!(Archetype::of_spn("spn-tight-0001"), Some(Archetype::Tight));
        assert_eq!(
            Archetype::of_spn("spn-dispersed-0003"),
            Some(Archetype::Dispersed)
        );
        assert_eq!(Archetype::of_spn("alice"), None);
    }

    #[test]
    fn random_tree_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 10, 40] {
            assert_eq!(random_tree(&mut rng, n).len(), n);
        }
    }
}
