//! Partial linear operations on closed balls.
//!
//! On an ambient ball `B` (a ball of the whole vector space) the sum
//! `αa ⊕ βb` is defined when `αa + βb` lands back in `B`. On a cautious
//! ball, the trace of `B` on a finite point set `V`, the sum `αa ⩔ βb`
//! additionally needs `αa`, `βb` and the sum itself to be members.
//! [`verify_laws`] enumerates all member and scalar tuples and reports the
//! first counterexample for each law.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{Distance, Euclidean};

pub const LAW_TOL: f64 = 1e-9;
pub const DEFAULT_GRID: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("point {0:?} lies outside the ball")]
    OutsideBall(Vec<f64>),
    #[error("point {0:?} is not a member of the cautious ball")]
    NotMember(Vec<f64>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("radius must be finite and nonnegative, got {0}")]
    Radius(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "tag", content = "value", rename_all = "snake_case")]
pub enum PartialValue {
    Defined(Vec<f64>),
    Undefined,
}

impl PartialValue {
    pub fn is_defined(&self) -> bool {
        matches!(self, PartialValue::Defined(_))
    }

    pub fn as_defined(&self) -> Option<&[f64]> {
        match self {
            PartialValue::Defined(v) => Some(v),
            PartialValue::Undefined => None,
        }
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Holds unless both sides are defined and differ.
pub fn weak_equal(t1: &PartialValue, t2: &PartialValue, tol: f64) -> bool {
    match (t1, t2) {
        (PartialValue::Defined(a), PartialValue::Defined(b)) => close(a, b, tol),
        _ => true,
    }
}

/// Holds when both sides are undefined or both are defined and equal.
pub fn weak_star_equal(t1: &PartialValue, t2: &PartialValue, tol: f64) -> bool {
    match (t1, t2) {
        (PartialValue::Defined(a), PartialValue::Defined(b)) => close(a, b, tol),
        (PartialValue::Undefined, PartialValue::Undefined) => true,
        _ => false,
    }
}

fn lin(alpha: f64, a: &[f64], beta: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect()
}

fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

#[derive(Debug, Clone)]
pub struct AmbientBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub distance: Arc<dyn Distance>,
}

impl AmbientBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self, AlgebraError> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(AlgebraError::Radius(radius));
        }
        Ok(Self { center, radius, distance: Arc::new(Euclidean) })
    }

    pub fn with_distance(mut self, distance: Arc<dyn Distance>) -> Self {
        self.distance = distance;
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.distance.eval(x, &self.center) <= self.radius
    }

    fn require(&self, x: &[f64]) -> Result<(), AlgebraError> {
        if x.len() != self.dim() {
            return Err(AlgebraError::Dimension { expected: self.dim(), got: x.len() });
        }
        if !self.contains(x) {
            return Err(AlgebraError::OutsideBall(x.to_vec()));
        }
        Ok(())
    }

    fn keep(&self, v: Vec<f64>) -> PartialValue {
        if self.contains(&v) {
            PartialValue::Defined(v)
        } else {
            PartialValue::Undefined
        }
    }
}

/// The points of `V` inside an ambient ball.
#[derive(Debug, Clone)]
pub struct CautiousBall {
    pub ambient: AmbientBall,
    pub v: Vec<Vec<f64>>,
    /// Indices into `v`, ascending.
    pub members: Vec<usize>,
}

impl CautiousBall {
    pub fn new(ambient: AmbientBall, v: Vec<Vec<f64>>) -> Result<Self, AlgebraError> {
        if let Some(p) = v.iter().find(|p| p.len() != ambient.dim()) {
            return Err(AlgebraError::Dimension { expected: ambient.dim(), got: p.len() });
        }
        let members = (0..v.len()).filter(|&i| ambient.contains(&v[i])).collect();
        Ok(Self { ambient, v, members })
    }

    pub fn member_points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.members.iter().map(|&i| self.v[i].as_slice())
    }

    /// Membership by exact coordinate identity with a point of `V`.
    pub fn member_index(&self, x: &[f64]) -> Option<usize> {
        self.members.iter().copied().find(|&i| self.v[i] == x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.member_index(x).is_some()
    }

    fn require(&self, x: &[f64]) -> Result<(), AlgebraError> {
        if x.len() != self.ambient.dim() {
            return Err(AlgebraError::Dimension { expected: self.ambient.dim(), got: x.len() });
        }
        if !self.contains(x) {
            return Err(AlgebraError::NotMember(x.to_vec()));
        }
        Ok(())
    }
}

pub fn oplus(b: &AmbientBall, alpha: f64, x: &[f64], beta: f64, y: &[f64]) -> Result<PartialValue, AlgebraError> {
    b.require(x)?;
    b.require(y)?;
    Ok(b.keep(lin(alpha, x, beta, y)))
}

pub fn ovee(b: &CautiousBall, alpha: f64, x: &[f64], beta: f64, y: &[f64]) -> Result<PartialValue, AlgebraError> {
    b.require(x)?;
    b.require(y)?;
    let ax = scale(alpha, x);
    let by = scale(beta, y);
    let sum = lin(alpha, x, beta, y);
    if b.contains(&ax) && b.contains(&by) && b.contains(&sum) {
        Ok(PartialValue::Defined(sum))
    } else {
        Ok(PartialValue::Undefined)
    }
}

/// Scalar multiple inside one of the two kinds of ball.
pub trait PartialSpace {
    fn scalar_mul(&self, alpha: f64, x: &[f64]) -> Result<PartialValue, AlgebraError>;
    fn combine(&self, alpha: f64, x: &[f64], beta: f64, y: &[f64]) -> Result<PartialValue, AlgebraError>;
    fn holds(&self, x: &[f64]) -> bool;
}

impl PartialSpace for AmbientBall {
    fn scalar_mul(&self, alpha: f64, x: &[f64]) -> Result<PartialValue, AlgebraError> {
        self.require(x)?;
        Ok(self.keep(scale(alpha, x)))
    }

    fn combine(&self, alpha: f64, x: &[f64], beta: f64, y: &[f64]) -> Result<PartialValue, AlgebraError> {
        oplus(self, alpha, x, beta, y)
    }

    fn holds(&self, x: &[f64]) -> bool {
        self.contains(x)
    }
}

impl PartialSpace for CautiousBall {
    fn scalar_mul(&self, alpha: f64, x: &[f64]) -> Result<PartialValue, AlgebraError> {
        self.require(x)?;
        let v = scale(alpha, x);
        Ok(if self.contains(&v) { PartialValue::Defined(v) } else { PartialValue::Undefined })
    }

    fn combine(&self, alpha: f64, x: &[f64], beta: f64, y: &[f64]) -> Result<PartialValue, AlgebraError> {
        ovee(self, alpha, x, beta, y)
    }

    fn holds(&self, x: &[f64]) -> bool {
        self.contains(x)
    }
}

pub fn scalar_mul<S: PartialSpace>(b: &S, alpha: f64, x: &[f64]) -> Result<PartialValue, AlgebraError> {
    b.scalar_mul(alpha, x)
}

// Composite terms. Defined values always lie in the ball that produced
// them, so applying an operation to them cannot hit a domain error.
fn sum_term<S: PartialSpace>(s: &S, x: &PartialValue, y: &PartialValue) -> PartialValue {
    match (x, y) {
        (PartialValue::Defined(a), PartialValue::Defined(b)) => {
            s.combine(1.0, a, 1.0, b).unwrap_or(PartialValue::Undefined)
        }
        _ => PartialValue::Undefined,
    }
}

fn scale_term<S: PartialSpace>(s: &S, alpha: f64, x: &PartialValue) -> PartialValue {
    match x {
        PartialValue::Defined(a) => s.scalar_mul(alpha, a).unwrap_or(PartialValue::Undefined),
        PartialValue::Undefined => PartialValue::Undefined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    WeakStarComm,
    WeakAssoc,
    WeakScal1,
    WeakStarScal2,
    WeakStarZero,
    Inverse,
}

pub const LAWS: [Law; 6] = [
    Law::WeakStarComm,
    Law::WeakAssoc,
    Law::WeakScal1,
    Law::WeakStarScal2,
    Law::WeakStarZero,
    Law::Inverse,
];

/// One enumerated instance: member indices into `V` and the scalars used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub points: Vec<usize>,
    pub scalars: Vec<f64>,
    pub lhs: PartialValue,
    pub rhs: PartialValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawResult {
    pub law: Law,
    pub holds: bool,
    /// Instances enumerated.
    pub checked: usize,
    /// Instances where the law said something (both sides defined, or the
    /// premise of the implication held).
    pub defined: usize,
    pub counterexample: Option<Instance>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallLaws {
    pub laws: Vec<LawResult>,
    /// `a ⊕ (b ⊕ c)` defined while `a ⊕ b` is not.
    pub strong_assoc_gap: Option<Instance>,
}

impl BallLaws {
    pub fn all_hold(&self) -> bool {
        self.laws.iter().all(|l| l.holds)
    }

    pub fn get(&self, law: Law) -> &LawResult {
        self.laws.iter().find(|l| l.law == law).expect("every law is checked")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainReport {
    pub contained: bool,
    pub checked: usize,
    /// Tuple in dom(⩔) but not in dom(⊕).
    pub violation: Option<Instance>,
    /// Tuple in dom(⊕) but not in dom(⩔).
    pub properness_witness: Option<Instance>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawReport {
    pub grid: Vec<f64>,
    pub members: usize,
    pub ambient: BallLaws,
    pub cautious: BallLaws,
    pub domain: DomainReport,
}

impl LawReport {
    pub fn all_hold(&self) -> bool {
        self.ambient.all_hold() && self.cautious.all_hold() && self.domain.contained
    }
}

struct Tally {
    law: Law,
    checked: usize,
    defined: usize,
    counterexample: Option<Instance>,
}

impl Tally {
    fn new(law: Law) -> Self {
        Self { law, checked: 0, defined: 0, counterexample: None }
    }

    fn record(&mut self, defined: bool, ok: bool, instance: impl FnOnce() -> Instance) {
        self.checked += 1;
        if defined {
            self.defined += 1;
        }
        if !ok && self.counterexample.is_none() {
            self.counterexample = Some(instance());
        }
    }

    fn finish(self) -> LawResult {
        LawResult {
            law: self.law,
            holds: self.counterexample.is_none(),
            checked: self.checked,
            defined: self.defined,
            counterexample: self.counterexample,
        }
    }
}

fn inst(points: &[usize], scalars: &[f64], lhs: &PartialValue, rhs: &PartialValue) -> Instance {
    Instance { points: points.to_vec(), scalars: scalars.to_vec(), lhs: lhs.clone(), rhs: rhs.clone() }
}

fn def(x: &[f64]) -> PartialValue {
    PartialValue::Defined(x.to_vec())
}

fn check_ball<S: PartialSpace>(s: &S, pts: &[(usize, &[f64])], grid: &[f64], tol: f64) -> BallLaws {
    let dim = pts.first().map_or(0, |p| p.1.len());
    let zero = vec![0.0; dim];
    let zero_in = !pts.is_empty() && s.holds(&zero);

    let mut comm = Tally::new(Law::WeakStarComm);
    let mut assoc = Tally::new(Law::WeakAssoc);
    let mut scal1 = Tally::new(Law::WeakScal1);
    let mut scal2 = Tally::new(Law::WeakStarScal2);
    let mut zero_law = Tally::new(Law::WeakStarZero);
    let mut inverse = Tally::new(Law::Inverse);
    let mut gap = None;

    for &(ia, a) in pts {
        let av = def(a);
        for &(ib, b) in pts {
            let bv = def(b);
            let ab = sum_term(s, &av, &bv);
            let ba = sum_term(s, &bv, &av);
            comm.record(ab.is_defined() && ba.is_defined(), weak_star_equal(&ab, &ba, tol), || {
                inst(&[ia, ib], &[], &ab, &ba)
            });
            for &(ic, c) in pts {
                let cv = def(c);
                let bc = sum_term(s, &bv, &cv);
                let lhs = sum_term(s, &av, &bc);
                let rhs = sum_term(s, &ab, &cv);
                assoc.record(lhs.is_defined() && rhs.is_defined(), weak_equal(&lhs, &rhs, tol), || {
                    inst(&[ia, ib, ic], &[], &lhs, &rhs)
                });
                if gap.is_none() && lhs.is_defined() && !ab.is_defined() {
                    gap = Some(inst(&[ia, ib, ic], &[], &lhs, &ab));
                }
                // premise: a ⊕ b = 0 = a ⊕ c
                let ac = sum_term(s, &av, &cv);
                let premise = ab.as_defined().is_some_and(|v| close(v, &zero, tol))
                    && ac.as_defined().is_some_and(|v| close(v, &zero, tol));
                inverse.record(premise, !premise || close(b, c, tol), || inst(&[ia, ib, ic], &[], &ab, &ac));
            }
        }
        if zero_in {
            let zv = def(&zero);
            let lhs = sum_term(s, &av, &zv);
            let rhs = sum_term(s, &zv, &av);
            zero_law.record(lhs.is_defined() && rhs.is_defined(), weak_star_equal(&lhs, &rhs, tol), || {
                inst(&[ia], &[], &lhs, &rhs)
            });
        }
        for &alpha in grid {
            for &beta in grid {
                let lhs = scale_term(s, alpha, &scale_term(s, beta, &av));
                let rhs = scale_term(s, alpha * beta, &av);
                scal1.record(lhs.is_defined() && rhs.is_defined(), weak_equal(&lhs, &rhs, tol), || {
                    inst(&[ia], &[alpha, beta], &lhs, &rhs)
                });
                let lhs = s.combine(alpha, a, beta, a).unwrap_or(PartialValue::Undefined);
                let rhs = scale_term(s, alpha + beta, &av);
                scal2.record(lhs.is_defined() && rhs.is_defined(), weak_star_equal(&lhs, &rhs, tol), || {
                    inst(&[ia], &[alpha, beta], &lhs, &rhs)
                });
            }
        }
    }

    BallLaws {
        laws: vec![
            comm.finish(),
            assoc.finish(),
            scal1.finish(),
            scal2.finish(),
            zero_law.finish(),
            inverse.finish(),
        ],
        strong_assoc_gap: gap,
    }
}

fn check_domain(ambient: &AmbientBall, cautious: &CautiousBall, pts: &[(usize, &[f64])], grid: &[f64]) -> DomainReport {
    let mut report = DomainReport { contained: true, checked: 0, violation: None, properness_witness: None };
    for &alpha in grid {
        for &(ia, a) in pts {
            for &beta in grid {
                for &(ib, b) in pts {
                    let wide = oplus(ambient, alpha, a, beta, b).unwrap_or(PartialValue::Undefined);
                    let narrow = ovee(cautious, alpha, a, beta, b).unwrap_or(PartialValue::Undefined);
                    report.checked += 1;
                    if narrow.is_defined() && !wide.is_defined() && report.violation.is_none() {
                        report.contained = false;
                        report.violation = Some(inst(&[ia, ib], &[alpha, beta], &narrow, &wide));
                    }
                    if wide.is_defined() && !narrow.is_defined() && report.properness_witness.is_none() {
                        report.properness_witness = Some(inst(&[ia, ib], &[alpha, beta], &wide, &narrow));
                    }
                }
            }
        }
    }
    report
}

/// Exhaustively checks the weak laws on both balls over the members of
/// `cautious` and every scalar pair from `grid`. Counterexamples are the
/// first in lexicographic tuple order.
pub fn verify_laws(ambient: &AmbientBall, cautious: &CautiousBall, grid: &[f64]) -> LawReport {
    let pts: Vec<(usize, &[f64])> = cautious.members.iter().map(|&i| (i, cautious.v[i].as_slice())).collect();
    // the ambient operation needs its inputs inside the ambient ball
    let ambient_pts: Vec<(usize, &[f64])> = pts.iter().copied().filter(|p| ambient.contains(p.1)).collect();
    LawReport {
        grid: grid.to_vec(),
        members: pts.len(),
        ambient: check_ball(ambient, &ambient_pts, grid, LAW_TOL),
        cautious: check_ball(cautious, &pts, grid, LAW_TOL),
        domain: check_domain(ambient, cautious, &ambient_pts, grid),
    }
}
