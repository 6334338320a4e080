//! Blast-radius bands, two-key ranking and per-band spread-ratio reports.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::hierarchy::MAX_LEVEL;
use crate::metric::{AccessClass, DyadicDistance, ImpactModel, DYADIC_EXP};
use crate::perimeter::PrincipalRisk;
use crate::scalar::{big_mean, fixed6, render_exact, Scalar};

/// Number of distinct band values: 11 levels × 2 access classes.
pub const BAND_COUNT: usize = 22;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankingError {
    #[error("impact weights produce {0} distinct band values instead of {BAND_COUNT}")]
    NonCanonicalWeights(usize),
    #[error("radius {0} matches no band")]
    UnbandableRadius(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Regime {
    Tight,
    Dispersed,
}

impl Regime {
    /// Tight iff `value < 10^-4`, compared exactly.
    pub fn of(value: DyadicDistance) -> Regime {
        if u128::from(value.units()) * 10_000 < 1u128 << DYADIC_EXP {
            Regime::Tight
        } else {
            Regime::Dispersed
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Tight => "Tight",
            Regime::Dispersed => "Dispersed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Band {
    pub value: DyadicDistance,
    pub level: u8,
    pub access: AccessClass,
}

impl Band {
    /// Canonical label such as `mg3/write` or `resource_group/read`.
    pub fn label(&self) -> String {
        let scope = match self.level {
            0 => "tenant".to_string(),
            l @ 1..=6 => format!("mg{l}"),
            7 => "subscription".to_string(),
            8 => "resource_group".to_string(),
            9 => "resource".to_string(),
            _ => "resource_part".to_string(),
        };
        format!("{scope}/{}", self.access)
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.value)
    }
}

/// All band values in strictly decreasing order.
pub fn enumerate_bands(model: &ImpactModel) -> Result<Vec<Band>, RankingError> {
    let mut bands: Vec<Band> = (0..=MAX_LEVEL)
        .flat_map(|level| {
            [AccessClass::Write, AccessClass::Read].map(|access| Band {
                value: DyadicDistance::from_parts(model.weight(access), level),
                level,
                access,
            })
        })
        .collect();
    bands.sort_by_key(|b| std::cmp::Reverse(b.value));
    let mut distinct = bands.iter().map(|b| b.value).collect::<Vec<_>>();
    distinct.dedup();
    if distinct.len() != BAND_COUNT {
        return Err(RankingError::NonCanonicalWeights(distinct.len()));
    }
    Ok(bands)
}

/// The band with exactly this radius; `None` for zero.
pub fn band_of(radius: DyadicDistance, bands: &[Band]) -> Result<Option<Band>, RankingError> {
    if radius.is_zero() {
        return Ok(None);
    }
    bands
        .iter()
        .find(|b| b.value == radius)
        .copied()
        .map(Some)
        .ok_or_else(|| RankingError::UnbandableRadius(radius.exact_string()))
}

fn risk_order<S: Scalar>(a: &PrincipalRisk<S>, b: &PrincipalRisk<S>) -> Ordering {
    b.blast_radius
        .cmp(&a.blast_radius)
        .then_with(|| b.perimeter.total_cmp(&a.perimeter))
        .then_with(|| a.spn.cmp(&b.spn))
}

/// Radius descending, then perimeter descending, then id ascending.
pub fn rank_spns<S: Scalar>(mut risks: Vec<PrincipalRisk<S>>) -> Vec<PrincipalRisk<S>> {
    risks.sort_by(risk_order);
    risks
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandReportRow {
    pub label: String,
    pub band: Band,
    pub spn_count: usize,
    pub avg_spread_ratio: BigRational,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BandReport {
    pub rows: Vec<BandReportRow>,
    /// Principals with zero radius, kept out of the bands.
    pub no_permissions: usize,
}

/// Groups principals by band and averages their spread ratios.
///
/// Rows come in descending band value. With `anonymize`, rows are shuffled
/// by a `seed`-determined permutation and relabelled `I, II, …` in that
/// order.
pub fn band_report<S: Scalar>(
    risks: &[PrincipalRisk<S>],
    model: &ImpactModel,
    anonymize: bool,
    seed: u64,
) -> Result<BandReport, RankingError> {
    let bands = enumerate_bands(model)?;
    let mut members: Vec<Vec<S>> = vec![Vec::new(); bands.len()];
    let mut no_permissions = 0;
    for risk in risks {
        match band_of(risk.blast_radius, &bands)? {
            None => no_permissions += 1,
            Some(band) => {
                let slot = bands.iter().position(|b| *b == band).unwrap();
                members[slot].push(risk.spread_ratio);
            }
        }
    }

    let mut rows: Vec<BandReportRow> = bands
        .iter()
        .zip(&members)
        .filter(|(_, m)| !m.is_empty())
        .map(|(band, m)| BandReportRow {
            label: band.label(),
            band: *band,
            spn_count: m.len(),
            avg_spread_ratio: big_mean(m).unwrap(),
            regime: band.regime(),
        })
        .collect();

    if anonymize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rows.shuffle(&mut rng);
        for (i, row) in rows.iter_mut().enumerate() {
            row.label = roman(i + 1);
        }
    }
    Ok(BandReport {
        rows,
        no_permissions,
    })
}

impl BandReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,spn_count,avg_spread_ratio,regime\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.label,
                r.spn_count,
                fixed6(&r.avg_spread_ratio),
                r.regime
            ));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "bands": self.rows.iter().map(|r| json!({
                "band": r.label,
                "spn_count": r.spn_count,
                "avg_spread_ratio": fixed6(&r.avg_spread_ratio),
                "avg_spread_ratio_exact": render_exact(&r.avg_spread_ratio),
                "regime": r.regime.to_string(),
            })).collect::<Vec<_>>(),
            "no_permissions": self.no_permissions,
        })
    }

    /// Whether a row's average is at least `num/den`, compared exactly.
    pub fn row_at_least(row: &BandReportRow, num: i64, den: i64) -> bool {
        row.avg_spread_ratio >= BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}

/// Upper-case Roman numeral for `n >= 1`.
pub fn roman(mut n: usize) -> String {
    const TABLE: [(usize, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for &(v, s) in &TABLE {
        while n >= v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}
