//! Blast-radius ultrametric and TSP data perimeter for cloud service
//! principals.
//!
//! A principal's grants are points in an ultrametric space induced by the
//! tenant's resource hierarchy. The diameter of that point set is its blast
//! radius; the length of a shortest closed tour through it is its data
//! perimeter. Principals are banded by radius and ranked within a band by
//! perimeter.
//!
//! Tour and ratio computations are generic over [`Scalar`]; [`Exact`] is the
//! reduced rational used for reporting, `f64` the quick alternative.

pub mod hierarchy;
pub mod ingestion;
pub mod metric;
pub mod perimeter;
pub mod ranking;
pub mod scalar;

pub use hierarchy::{build_tree, HierarchyError, HierarchyNode, NodeKind, TenantTree};
pub use metric::{
    check_ultrametricity, distance, grant_distances, infimum_distance, infimum_distances,
    pair_impact, set_impact, AccessClass, DistanceMatrix, DyadicDistance, Grant, HierarchyFamily,
    ImpactModel, MetricError, Violation,
};
pub use perimeter::{
    blast_radius, brute_force_tour, is_ultracycle, mean_distance, nn_tour, perimeter, spread_ratio,
    PerimeterError, PrincipalRisk, Tour,
};
pub use ranking::{
    band_of, band_report, enumerate_bands, rank_spns, Band, BandReport, BandReportRow,
    RankingError, Regime,
};
pub use scalar::{Exact, Scalar};

pub type ExactRisk = PrincipalRisk<Exact>;
pub type FloatRisk = PrincipalRisk<f64>;
pub type ExactTour = Tour<Exact>;
pub type FloatTour = Tour<f64>;

/// Assesses one principal of a snapshot under the native hierarchy.
pub fn assess_spn<S: Scalar>(
    spn: &str,
    resolver: &ingestion::GrantResolver<'_>,
    tree: &TenantTree,
    model: &ImpactModel,
) -> Result<PrincipalRisk<S>, ingestion::SnapshotError> {
    let grants = resolver.resolve(spn)?;
    let dist = grant_distances(&grants, tree, model).map_err(|source| {
        ingestion::SnapshotError::Hierarchy(MetricError::Hierarchy {
            hierarchy: "native".into(),
            source,
        })
    })?;
    Ok(PrincipalRisk::assess(spn, &dist))
}
