//! Generalized distances and set distances.
//!
//! [`classify_distance`] checks the identity, symmetry, triangle and
//! k-triangle conditions on a finite sample. A passing flag means the
//! condition was not falsified on that sample; it says nothing about points
//! outside it.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

/// Default absolute slack used when comparing sums of distances.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("sample is empty")]
    EmptySample,
    #[error("point set is empty")]
    EmptySet,
    #[error("tolerance must be non-negative, got {0}")]
    NegativeTolerance(f64),
    #[error("distance between sample points {i} and {j} is {value}, expected a finite non-negative value")]
    InvalidValue { i: usize, j: usize, value: f64 },
}

/// The kind of generalized distance a function claims to be.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceKind {
    General,
    Pseudometric,
    Semimetric,
    Metric,
    QuasiMetric,
    WeakQuasiMetric { k: f64 },
}

/// A distance function σ with σ(a, a) = 0.
pub trait Distance: Send + Sync + fmt::Debug {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;

    fn kind(&self) -> DistanceKind {
        DistanceKind::General
    }

    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Distance for Euclidean {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    fn kind(&self) -> DistanceKind {
        DistanceKind::Metric
    }

    fn name(&self) -> &str {
        "euclidean"
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Manhattan;

impl Distance for Manhattan {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    fn kind(&self) -> DistanceKind {
        DistanceKind::Metric
    }

    fn name(&self) -> &str {
        "manhattan"
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Chebyshev;

impl Distance for Chebyshev {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn kind(&self) -> DistanceKind {
        DistanceKind::Metric
    }

    fn name(&self) -> &str {
        "chebyshev"
    }
}

/// Squared Euclidean distance: symmetric and identity-preserving, but not a metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredEuclidean;

impl Distance for SquaredEuclidean {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    fn kind(&self) -> DistanceKind {
        DistanceKind::Semimetric
    }

    fn name(&self) -> &str {
        "squared_euclidean"
    }
}

type DistanceFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Wraps a closure as a [`Distance`] with a declared kind.
#[derive(Clone)]
pub struct FnDistance {
    name: String,
    kind: DistanceKind,
    f: DistanceFn,
}

impl FnDistance {
    pub fn new<F>(name: impl Into<String>, kind: DistanceKind, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnDistance")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .finish()
    }
}

impl Distance for FnDistance {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.f)(a, b)
    }

    fn kind(&self) -> DistanceKind {
        self.kind
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Looks up a built-in distance by name.
pub fn builtin(name: &str) -> Option<Arc<dyn Distance>> {
    match name {
        "euclidean" => Some(Arc::new(Euclidean)),
        "manhattan" => Some(Arc::new(Manhattan)),
        "chebyshev" => Some(Arc::new(Chebyshev)),
        "squared_euclidean" | "squared" => Some(Arc::new(SquaredEuclidean)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricAxiom {
    Identity,
    PseudoIdentity,
    Symmetry,
    Triangle,
    KTriangle,
}

/// Sample indices falsifying one axiom. Triangle witnesses are `(a, b, c)`
/// with σ(a, b) > σ(a, c) + σ(c, b).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub axiom: MetricAxiom,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KTriangle {
    pub holds: bool,
    /// The constant tested, or the largest constant consistent with the
    /// sample. `None` means unbounded (no pair at positive distance).
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub identity: bool,
    pub symmetry: bool,
    pub triangle: bool,
    pub k_triangle: KTriangle,
    pub pseudo_identity: bool,
    /// First counterexample per failed axiom, in the order identity,
    /// pseudo-identity, symmetry, triangle, k-triangle.
    pub witnesses: Vec<Witness>,
}

impl AxiomReport {
    /// The first counterexample found, if any.
    pub fn witness(&self) -> Option<&Witness> {
        self.witnesses.first()
    }

    pub fn witness_for(&self, axiom: MetricAxiom) -> Option<&Witness> {
        self.witnesses.iter().find(|w| w.axiom == axiom)
    }
}

fn distance_matrix(
    dist: &dyn Distance,
    sample: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, MetricError> {
    let m = sample.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let v = dist.eval(&sample[i], &sample[j]);
            if !v.is_finite() || v < 0.0 {
                return Err(MetricError::InvalidValue { i, j, value: v });
            }
            out[i][j] = v;
        }
    }
    Ok(out)
}

/// Checks the distance conditions on every pair and triple of `sample`.
///
/// Enumeration is lexicographic in sample indices, so the reported
/// witnesses do not depend on evaluation order.
pub fn classify_distance(
    dist: &dyn Distance,
    sample: &[Vec<f64>],
    tol: f64,
) -> Result<AxiomReport, MetricError> {
    if sample.is_empty() {
        return Err(MetricError::EmptySample);
    }
    if tol < 0.0 || tol.is_nan() {
        return Err(MetricError::NegativeTolerance(tol));
    }
    let sigma = distance_matrix(dist, sample)?;
    let m = sample.len();
    let pairs = || (0..m).flat_map(move |i| (0..m).map(move |j| (i, j)));
    let triples = || {
        (0..m).flat_map(move |a| (0..m).flat_map(move |b| (0..m).map(move |c| (a, b, c))))
    };

    let mut witnesses = Vec::new();

    let identity_fail = pairs().find(|&(i, j)| (sigma[i][j] == 0.0) != (sample[i] == sample[j]));
    if let Some((i, j)) = identity_fail {
        witnesses.push(Witness { axiom: MetricAxiom::Identity, indices: vec![i, j] });
    }

    let pseudo_fail = pairs().find(|&(i, j)| sigma[i][j] == 0.0 && sample[i] != sample[j]);
    if let Some((i, j)) = pseudo_fail {
        witnesses.push(Witness { axiom: MetricAxiom::PseudoIdentity, indices: vec![i, j] });
    }

    let symmetry_fail = pairs().find(|&(i, j)| (sigma[i][j] - sigma[j][i]).abs() > tol);
    if let Some((i, j)) = symmetry_fail {
        witnesses.push(Witness { axiom: MetricAxiom::Symmetry, indices: vec![i, j] });
    }

    let triangle_fail =
        triples().find(|&(a, b, c)| sigma[a][b] > sigma[a][c] + sigma[c][b] + tol);
    if let Some((a, b, c)) = triangle_fail {
        witnesses.push(Witness { axiom: MetricAxiom::Triangle, indices: vec![a, b, c] });
    }

    let k_triangle = match dist.kind() {
        DistanceKind::WeakQuasiMetric { k } => {
            let fail = triples()
                .find(|&(a, b, c)| k * sigma[a][b] > sigma[a][c] + sigma[c][b] + tol);
            if let Some((a, b, c)) = fail {
                witnesses.push(Witness { axiom: MetricAxiom::KTriangle, indices: vec![a, b, c] });
            }
            KTriangle { holds: fail.is_none(), k: Some(k) }
        }
        _ => {
            // Largest k with k·σ(a,b) ≤ σ(a,c) + σ(c,b) + tol on every triple.
            let mut best: Option<(f64, (usize, usize, usize))> = None;
            for (a, b, c) in triples() {
                if sigma[a][b] > 0.0 {
                    let ratio = (sigma[a][c] + sigma[c][b] + tol) / sigma[a][b];
                    if best.is_none_or(|(r, _)| ratio < r) {
                        best = Some((ratio, (a, b, c)));
                    }
                }
            }
            match best {
                None => KTriangle { holds: true, k: None },
                Some((k, (a, b, c))) => {
                    let holds = k > 0.0;
                    if !holds {
                        witnesses
                            .push(Witness { axiom: MetricAxiom::KTriangle, indices: vec![a, b, c] });
                    }
                    KTriangle { holds, k: Some(k) }
                }
            }
        }
    };

    Ok(AxiomReport {
        identity: identity_fail.is_none(),
        symmetry: symmetry_fail.is_none(),
        triangle: triangle_fail.is_none(),
        k_triangle,
        pseudo_identity: pseudo_fail.is_none(),
        witnesses,
    })
}

/// Distance from `x` to the finite set `set`: the minimum of σ(x, a) over `a` in `set`.
pub fn point_set_distance(
    dist: &dyn Distance,
    x: &[f64],
    set: &[Vec<f64>],
) -> Result<f64, MetricError> {
    set.iter()
        .map(|a| dist.eval(x, a))
        .reduce(f64::min)
        .ok_or(MetricError::EmptySet)
}

/// Hausdorff distance between two finite sets.
///
/// The second directed term measures from `h` towards each point of `f`,
/// i.e. `inf_{a in h} σ(a, x)`, which matters only for asymmetric σ.
pub fn hausdorff_distance(
    dist: &dyn Distance,
    h: &[Vec<f64>],
    f: &[Vec<f64>],
) -> Result<f64, MetricError> {
    if h.is_empty() || f.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let forward = h
        .iter()
        .map(|x| point_set_distance(dist, x, f))
        .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))?;
    let backward = f
        .iter()
        .map(|x| h.iter().map(|a| dist.eval(a, x)).fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    Ok(forward.max(backward))
}

/// Infimal distance: the smallest σ(a, b) over `a` in `h`, `b` in `f`.
pub fn infimal_distance(
    dist: &dyn Distance,
    h: &[Vec<f64>],
    f: &[Vec<f64>],
) -> Result<f64, MetricError> {
    if h.is_empty() || f.is_empty() {
        return Err(MetricError::EmptySet);
    }
    Ok(h.iter()
        .flat_map(|a| f.iter().map(move |b| dist.eval(a, b)))
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn euclidean_line_is_metric() {
        let r = classify_distance(&Euclidean, &line(&[0.0, 1.0, 2.0]), DEFAULT_TOL).unwrap();
        assert!(r.identity && r.symmetry && r.triangle && r.pseudo_identity);
        assert!(r.k_triangle.holds);
        assert!(r.witnesses.is_empty());
    }

    #[test]
    fn squared_difference_breaks_triangle() {
        let r = classify_distance(&SquaredEuclidean, &line(&[0.0, 1.0, 2.0]), DEFAULT_TOL).unwrap();
        assert!(!r.triangle);
        assert!(r.symmetry && r.identity);
        assert_eq!(r.witness_for(MetricAxiom::Triangle).unwrap().indices, vec![0, 2, 1]);
        // (1 + 1 + tol) / 4 is the tightest ratio on this sample.
        let k = r.k_triangle.k.unwrap();
        assert!((k - (2.0 + DEFAULT_TOL) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn one_sided_difference_is_asymmetric() {
        let d = FnDistance::new("pos", DistanceKind::General, |a, b| (a[0] - b[0]).max(0.0));
        let r = classify_distance(&d, &line(&[0.0, 1.0]), DEFAULT_TOL).unwrap();
        assert!(!r.symmetry);
        assert_eq!(r.witness_for(MetricAxiom::Symmetry).unwrap().indices, vec![0, 1]);
    }

    #[test]
    fn declared_weak_quasi_metric_tests_its_constant() {
        let d = FnDistance::new("sq", DistanceKind::WeakQuasiMetric { k: 0.5 }, |a, b| {
            (a[0] - b[0]).powi(2)
        });
        let r = classify_distance(&d, &line(&[0.0, 1.0, 2.0]), DEFAULT_TOL).unwrap();
        assert_eq!(r.k_triangle, KTriangle { holds: true, k: Some(0.5) });
        let d = FnDistance::new("sq", DistanceKind::WeakQuasiMetric { k: 0.9 }, |a, b| {
            (a[0] - b[0]).powi(2)
        });
        let r = classify_distance(&d, &line(&[0.0, 1.0, 2.0]), DEFAULT_TOL).unwrap();
        assert!(!r.k_triangle.holds);
    }

    #[test]
    fn errors() {
        assert_eq!(classify_distance(&Euclidean, &[], 0.0), Err(MetricError::EmptySample));
        let bad = FnDistance::new("nan", DistanceKind::General, |a, b| {
            if a == b { 0.0 } else { f64::NAN }
        });
        let err = classify_distance(&bad, &line(&[0.0, 1.0]), 0.0).unwrap_err();
        assert!(matches!(err, MetricError::InvalidValue { i: 0, j: 1, .. }));
        assert_eq!(point_set_distance(&Euclidean, &[0.0], &[]), Err(MetricError::EmptySet));
        assert_eq!(hausdorff_distance(&Euclidean, &[], &line(&[1.0])), Err(MetricError::EmptySet));
        assert_eq!(infimal_distance(&Euclidean, &line(&[1.0]), &[]), Err(MetricError::EmptySet));
    }

    #[test]
    fn point_set_examples() {
        assert_eq!(point_set_distance(&Euclidean, &[0.0], &line(&[1.0, 2.0, 3.0])).unwrap(), 1.0);
        assert_eq!(point_set_distance(&Euclidean, &[2.0], &line(&[1.0, 2.0, 3.0])).unwrap(), 0.0);
        let h = vec![vec![3.0, 4.0], vec![6.0, 8.0]];
        assert_eq!(point_set_distance(&Euclidean, &[0.0, 0.0], &h).unwrap(), 5.0);
    }

    #[test]
    fn set_distance_examples() {
        let a = line(&[0.0, 1.0]);
        assert_eq!(hausdorff_distance(&Euclidean, &a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&Euclidean, &line(&[0.0]), &line(&[3.0])).unwrap(), 3.0);
        // sup-inf from {0,1} to {1,2} is 1 (point 0), and from {1,2} back is 1 (point 2).
        assert_eq!(hausdorff_distance(&Euclidean, &a, &line(&[1.0, 2.0])).unwrap(), 1.0);
        assert_eq!(infimal_distance(&Euclidean, &a, &line(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(infimal_distance(&Euclidean, &line(&[0.0]), &line(&[3.0])).unwrap(), 3.0);
        // pairs: |0-4|, |0-7|, |10-4|, |10-7| -> min 3
        assert_eq!(
            infimal_distance(&Euclidean, &line(&[0.0, 10.0]), &line(&[4.0, 7.0])).unwrap(),
            3.0
        );
    }

    fn points(dim: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-50.0..50.0f64, dim), 1..max)
    }

    proptest! {
        #[test]
        fn euclidean_never_falsified(sample in points(3, 9)) {
            let r = classify_distance(&Euclidean, &sample, DEFAULT_TOL).unwrap();
            prop_assert!(r.identity && r.symmetry && r.triangle && r.pseudo_identity);
            prop_assert!(r.k_triangle.holds);
            prop_assert!(r.k_triangle.k.is_none_or(|k| k >= 1.0));
        }

        #[test]
        fn identity_implies_pseudo_identity(sample in points(2, 7), p in 1.0..3.0f64) {
            let d = FnDistance::new("p", DistanceKind::General, move |a, b| {
                a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum()
            });
            let r = classify_distance(&d, &sample, DEFAULT_TOL).unwrap();
            prop_assert!(!r.identity || r.pseudo_identity);
            prop_assert!(!r.triangle || r.k_triangle.k.is_none_or(|k| k >= 1.0));
        }

        #[test]
        fn hausdorff_dominates_infimal(h in points(2, 6), f in points(2, 6)) {
            let hd = hausdorff_distance(&Euclidean, &h, &f).unwrap();
            let id = infimal_distance(&Euclidean, &h, &f).unwrap();
            prop_assert!(hd >= id);
            prop_assert_eq!(hd, hausdorff_distance(&Euclidean, &f, &h).unwrap());
            prop_assert_eq!(id, infimal_distance(&Euclidean, &f, &h).unwrap());
        }
    }
}
