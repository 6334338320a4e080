//! Per-principal geometry: blast radius, nearest-neighbour tours, the
//! exhaustive tour oracle, mean distance and spread ratio.
//!
//! Tour routines only need an ordered additive monoid, so they run on raw
//! [`DyadicDistance`] values as well as on any [`Scalar`]. Quantities that
//! divide (mean, ratio) require a [`Scalar`].

use num_traits::Zero;
use thiserror::Error;

use crate::metric::{DistanceMatrix, DyadicDistance};
use crate::scalar::Scalar;

/// Largest instance the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerimeterError {
    #[error("no points to tour")]
    EmptyInput,
    #[error("start index {start} out of range for {n} points")]
    InvalidStart { start: usize, n: usize },
    #[error("{n} points exceed the exhaustive oracle limit of {BRUTE_FORCE_MAX}")]
    TooLarge { n: usize },
    #[error("mean distance needs at least two points (got {n})")]
    Undefined { n: usize },
}

/// A closed tour: `order` starts and ends at the same index.
#[derive(Debug, Clone, PartialEq)]
pub struct Tour<T> {
    pub order: Vec<usize>,
    pub length: T,
}

impl<T> Tour<T> {
    /// Consecutive `(from, to)` pairs including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.order.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Diameter of the point set; zero when fewer than two points.
pub fn blast_radius<T: Copy + PartialOrd + Zero>(dist: &DistanceMatrix<T>) -> T {
    let mut best = T::zero();
    for i in 0..dist.len() {
        for j in i + 1..dist.len() {
            let d = dist.get(i, j);
            if d > best {
                best = d;
            }
        }
    }
    best
}

/// Greedy nearest-neighbour tour from `start`, ties to the lowest index.
pub fn nn_tour<T: Copy + PartialOrd + Zero>(
    dist: &DistanceMatrix<T>,
    start: usize,
) -> Result<Tour<T>, PerimeterError> {
    let n = dist.len();
    if n == 0 {
        return Err(PerimeterError::EmptyInput);
    }
    if start >= n {
        return Err(PerimeterError::InvalidStart { start, n });
    }

    let mut order = Vec::with_capacity(n + 1);
    order.push(start);
    let mut unvisited: Vec<usize> = (0..n).filter(|&i| i != start).collect();
    while !unvisited.is_empty() {
        let current = *order.last().unwrap();
        let mut best = 0;
        for (pos, &cand) in unvisited.iter().enumerate().skip(1) {
            // strict: keeps the lowest index on ties (unvisited stays sorted)
            if dist.get(current, cand) < dist.get(current, unvisited[best]) {
                best = pos;
            }
        }
        order.push(unvisited.remove(best));
    }
    order.push(start);

    let mut length = T::zero();
    for w in order.windows(2) {
        length = length + dist.get(w[0], w[1]);
    }
    Ok(Tour { order, length })
}

/// Exact minimum closed-tour length by enumerating every ordering with the
/// first point fixed.
pub fn brute_force_tour<T: Copy + PartialOrd + Zero>(
    dist: &DistanceMatrix<T>,
) -> Result<T, PerimeterError> {
    let n = dist.len();
    if n == 0 {
        return Err(PerimeterError::EmptyInput);
    }
    if n > BRUTE_FORCE_MAX {
        return Err(PerimeterError::TooLarge { n });
    }
    if n == 1 {
        return Ok(dist.get(0, 0));
    }

    fn walk<T: Copy + PartialOrd + Zero>(
        dist: &DistanceMatrix<T>,
        last: usize,
        visited: u32,
        depth: usize,
        acc: T,
        best: &mut Option<T>,
    ) {
        let n = dist.len();
        if depth == n {
            let total = acc + dist.get(last, 0);
            if best.is_none_or(|b| total < b) {
                *best = Some(total);
            }
            return;
        }
        for next in 1..n {
            if visited & (1 << next) == 0 {
                walk(
                    dist,
                    next,
                    visited | (1 << next),
                    depth + 1,
                    acc + dist.get(last, next),
                    best,
                );
            }
        }
    }

    let mut best = None;
    walk(dist, 0, 1, 1, T::zero(), &mut best);
    Ok(best.expect("at least one ordering"))
}

/// Data perimeter: zero for fewer than two points, otherwise the
/// nearest-neighbour tour length from index 0.
pub fn perimeter<T: Copy + PartialOrd + Zero>(dist: &DistanceMatrix<T>) -> T {
    if dist.len() < 2 {
        return T::zero();
    }
    nn_tour(dist, 0).expect("non-empty").length
}

/// Mean over unordered distinct pairs.
pub fn mean_distance<S: Scalar>(dist: &DistanceMatrix<S>) -> Result<S, PerimeterError> {
    let n = dist.len();
    if n < 2 {
        return Err(PerimeterError::Undefined { n });
    }
    let mut sum = S::zero();
    for i in 0..n {
        for j in i + 1..n {
            sum = sum + dist.get(i, j);
        }
    }
    Ok(sum / S::from_count(n * (n - 1) / 2))
}

/// `perimeter / (n · mean)`, or one when the mean is undefined or zero.
pub fn spread_ratio<S: Scalar>(n: usize, perimeter: S, mean: Option<S>) -> S {
    match mean {
        Some(mu) if n >= 2 && mu > S::zero() => perimeter / (S::from_count(n) * mu),
        _ => S::one(),
    }
}

/// The common pairwise distance when every pair is equidistant and positive.
pub fn is_ultracycle<T: Copy + PartialOrd + Zero>(dist: &DistanceMatrix<T>) -> Option<T> {
    let n = dist.len();
    if n < 2 {
        return None;
    }
    let xi = dist.get(0, 1);
    if xi.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return None;
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist.get(i, j) != xi {
                return None;
            }
        }
    }
    Some(xi)
}

/// Risk record for one principal.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalRisk<S> {
    pub spn: String,
    pub n: usize,
    pub blast_radius: DyadicDistance,
    pub perimeter: S,
    /// Absent when fewer than two grants.
    pub mean_distance: Option<S>,
    pub spread_ratio: S,
    pub ultracycle: Option<DyadicDistance>,
}

impl<S: Scalar> PrincipalRisk<S> {
    /// Computes every metric from the principal's pairwise distances.
    pub fn assess(spn: impl Into<String>, dist: &DistanceMatrix<DyadicDistance>) -> Self {
        let n = dist.len();
        let blast = blast_radius(dist);
        let ultracycle = is_ultracycle(dist);
        let scaled = dist.map(S::from_dyadic);
        let perimeter = perimeter(&scaled);
        let mean = mean_distance(&scaled).ok();
        PrincipalRisk {
            spn: spn.into(),
            n,
            blast_radius: blast,
            perimeter,
            mean_distance: mean,
            spread_ratio: spread_ratio(n, perimeter, mean),
            ultracycle,
        }
    }

    pub fn mean_or_zero(&self) -> S {
        self.mean_distance.unwrap_or_else(S::zero)
    }

    /// Checks the record's internal relations; returns a description of the
    /// first broken one.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.perimeter < S::zero() {
            return Err(format!("{}: negative perimeter", self.spn));
        }
        if self.spread_ratio.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(format!(
                "{}: spread ratio {} not positive",
                self.spn, self.spread_ratio
            ));
        }
        if S::is_exact() && self.spread_ratio > S::one() {
            return Err(format!(
                "{}: spread ratio {} exceeds 1",
                self.spn, self.spread_ratio
            ));
        }
        if self.n <= 1 && !self.blast_radius.is_zero() {
            return Err(format!("{}: singleton with nonzero radius", self.spn));
        }
        if let Some(xi) = self.ultracycle {
            if S::is_exact() && self.perimeter != S::from_count(self.n) * S::from_dyadic(xi) {
                return Err(format!("{}: ultracycle perimeter is not n·ξ", self.spn));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;
    use num_rational::Ratio;
    use num_traits::One;

    fn ex(n: i128, d: i128) -> Exact {
        Ratio::new(n, d)
    }

    fn uniform(n: usize, xi: Exact) -> DistanceMatrix<Exact> {
        DistanceMatrix::from_fn(n, |i, j| if i == j { Exact::zero() } else { xi })
    }

    #[test]
    fn singleton_tour() {
        let m = uniform(1, ex(1, 8));
        let t = nn_tour(&m, 0).unwrap();
        assert_eq!(t.order, vec![0, 0]);
        assert_eq!(t.length, Exact::zero());
        assert_eq!(brute_force_tour(&m).unwrap(), Exact::zero());
    }

    #[test]
    fn pair_tour() {
        let m = uniform(2, ex(3, 16));
        let t = nn_tour(&m, 0).unwrap();
        assert_eq!(t.order, vec![0, 1, 0]);
        assert_eq!(t.length, ex(3, 8));
        assert_eq!(perimeter(&m), ex(3, 8));
    }

    #[test]
    fn ultracycle_tours() {
        let xi = ex(1, 128);
        let m3 = uniform(3, xi);
        assert_eq!(nn_tour(&m3, 0).unwrap().length, xi * 3);
        let m5 = uniform(5, xi);
        assert_eq!(brute_force_tour(&m5).unwrap(), ex(5, 128));
        assert_eq!(perimeter(&m5), ex(5, 128));
        assert_eq!(is_ultracycle(&m5), Some(xi));
        assert_eq!(
            spread_ratio(5, perimeter(&m5), mean_distance(&m5).ok()),
            Exact::one()
        );
    }

    #[test]
    fn three_points_have_one_cycle() {
        let d = [[0, 3, 5], [3, 0, 7], [5, 7, 0]];
        let m = DistanceMatrix::from_fn(3, |i, j| d[i][j]);
        assert_eq!(brute_force_tour(&m).unwrap(), 15);
    }

    #[test]
    fn nn_ties_go_to_lowest_index() {
        let m = uniform(4, ex(1, 2));
        assert_eq!(nn_tour(&m, 2).unwrap().order, vec![2, 0, 1, 3, 2]);
    }

    #[test]
    fn errors() {
        let empty: DistanceMatrix<Exact> = DistanceMatrix::from_fn(0, |_, _| Exact::zero());
        assert_eq!(nn_tour(&empty, 0), Err(PerimeterError::EmptyInput));
        assert_eq!(brute_force_tour(&empty), Err(PerimeterError::EmptyInput));
        assert_eq!(perimeter(&empty), Exact::zero());
        let m = uniform(3, ex(1, 2));
        assert_eq!(
            nn_tour(&m, 3),
            Err(PerimeterError::InvalidStart { start: 3, n: 3 })
        );
        let big = uniform(10, ex(1, 2));
        assert_eq!(
            brute_force_tour(&big),
            Err(PerimeterError::TooLarge { n: 10 })
        );
        assert_eq!(
            mean_distance(&uniform(1, ex(1, 2))),
            Err(PerimeterError::Undefined { n: 1 })
        );
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_distance(&uniform(4, ex(1, 32))).unwrap(), ex(1, 32));
        assert_eq!(mean_distance(&uniform(2, ex(5, 32))).unwrap(), ex(5, 32));
        let d = [[0, 1, 4], [1, 0, 1], [4, 1, 0]];
        let m = DistanceMatrix::from_fn(3, |i, j| ex(d[i][j], 8));
        assert_eq!(mean_distance(&m).unwrap(), ex(1, 4));
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(spread_ratio::<Exact>(1, Exact::zero(), None), Exact::one());
        assert_eq!(spread_ratio::<Exact>(0, Exact::zero(), None), Exact::one());
        assert_eq!(
            spread_ratio(3, Exact::zero(), Some(Exact::zero())),
            Exact::one()
        );
    }

    #[test]
    fn two_cluster_ratio_matches_oracle() {
        // Clusters {0,1,2} and {3,4,5}: 2^-17 inside, 2^-3 across.
        let intra = ex(1, 1 << 17);
        let inter = ex(1, 1 << 3);
        let m = DistanceMatrix::from_fn(6, |i, j| {
            if i == j {
                Exact::zero()
            } else if (i < 3) == (j < 3) {
                intra
            } else {
                inter
            }
        });
        let oracle = brute_force_tour(&m).unwrap();
        assert_eq!(oracle, intra * 4 + inter * 2);
        assert_eq!(perimeter(&m), oracle);
        let ratio = spread_ratio(6, oracle, mean_distance(&m).ok());
        assert_eq!(ratio, ex(13655, 24577));
        assert!(ratio < Exact::one());
    }

    #[test]
    fn ultracycle_detection() {
        assert_eq!(is_ultracycle(&uniform(1, ex(1, 2))), None);
        assert_eq!(is_ultracycle(&uniform(3, Exact::zero())), None);
        let d = [[0, 1, 4], [1, 0, 4], [4, 4, 0]];
        assert_eq!(
            is_ultracycle(&DistanceMatrix::from_fn(3, |i, j| d[i][j])),
            None
        );
    }

    #[test]
    fn float_scalar_agrees_on_dyadic_inputs() {
        let m = DistanceMatrix::from_fn(4, |i, j| {
            if i == j {
                DyadicDistance::ZERO
            } else if i / 2 == j / 2 {
                DyadicDistance::from_parts(1, 9)
            } else {
                DyadicDistance::from_parts(2, 3)
            }
        });
        let exact: PrincipalRisk<Exact> = PrincipalRisk::assess("x", &m);
        let float: PrincipalRisk<f64> = PrincipalRisk::assess("x", &m);
        assert_eq!(exact.perimeter.to_f64(), float.perimeter);
        assert!((exact.spread_ratio.to_f64() - float.spread_ratio).abs() < 1e-12);
        exact.check_invariants().unwrap();
    }
}
