//! Snapshot documents, group expansion and synthetic tenants.

pub mod generate;
pub mod metric_doc;
pub mod snapshot;

pub use generate::{generate_synthetic_tenant, Archetype, GeneratorConfig, InvalidConfig};
pub use metric_doc::{parse_metric_family, MetricFamily};
pub use snapshot::{
    parse_snapshot, resolve_effective_grants, Alternate, Assignment, GrantResolver, Group,
    SnapshotError, TenantSnapshot, SCHEMA_VERSION,
};

/// Input accepted by family checks.
#[derive(Debug, Clone)]
pub enum FamilyDocument {
    Snapshot(TenantSnapshot),
    Metrics(MetricFamily),
}

/// Dispatches on the top-level `metrics` key.
pub fn parse_family_document(input: &[u8]) -> Result<FamilyDocument, SnapshotError> {
    let value: serde_json::Value = serde_json::from_slice(input)?;
    if value.get("metrics").is_some() {
        Ok(FamilyDocument::Metrics(parse_metric_family(input)?))
    } else {
        Ok(FamilyDocument::Snapshot(parse_snapshot(input)?))
    }
}
