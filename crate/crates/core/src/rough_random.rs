//! Approximation spaces and clean rough random functions.
//!
//! An [`ApproxSpace`] is a pair of lower and upper maps on subsets of a
//! finite universe. Spaces over at most [`EXHAUSTIVE_LIMIT`] elements are
//! checked over the whole powerset; larger ones are checked on seeded
//! random samples and the report says so.
//!
//! The ξ maps send an approximation to a rough object. Where the defining
//! condition leaves a choice of witness, the smallest subset wins:
//! fewest elements first, then lexicographic order.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ball_kmeans::{self, BkmConfig, BkmError, IterationRecord, Observer};
use crate::dataset::Dataset;
use crate::subset::{powerset, Subset};

pub const EXHAUSTIVE_LIMIT: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoughError {
    #[error("blocks do not form a partition of {0} elements")]
    NotPartition(usize),
    #[error("universe of {n} elements exceeds the enumeration limit of {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("second argument must be non-empty")]
    EmptyReference,
    #[error(transparent)]
    Bkm(#[from] BkmError),
}

type SetMap = Arc<dyn Fn(&Subset) -> Subset + Send + Sync>;

#[derive(Clone)]
pub struct ApproxSpace {
    n: usize,
    lower: SetMap,
    upper: SetMap,
    blocks: Option<Vec<Subset>>,
}

impl fmt::Debug for ApproxSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ApproxSpace").field("n", &self.n).field("blocks", &self.blocks).finish()
    }
}

impl ApproxSpace {
    pub fn new<L, U>(n: usize, lower: L, upper: U) -> Self
    where
        L: Fn(&Subset) -> Subset + Send + Sync + 'static,
        U: Fn(&Subset) -> Subset + Send + Sync + 'static,
    {
        Self { n, lower: Arc::new(lower), upper: Arc::new(upper), blocks: None }
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn lower(&self, x: &Subset) -> Subset {
        (self.lower)(x)
    }

    pub fn upper(&self, x: &Subset) -> Subset {
        (self.upper)(x)
    }

    /// Partition blocks, for spaces built by [`pawlak`].
    pub fn blocks(&self) -> Option<&[Subset]> {
        self.blocks.as_deref()
    }

    fn exhaustible(&self) -> Result<(), RoughError> {
        if self.n > EXHAUSTIVE_LIMIT {
            return Err(RoughError::TooLarge { n: self.n, limit: EXHAUSTIVE_LIMIT });
        }
        Ok(())
    }
}

/// The classical space of a partition: `x^l` is the union of blocks
/// inside `x`, `x^u` the union of blocks meeting `x`.
pub fn pawlak(n: usize, blocks: &[Subset]) -> Result<ApproxSpace, RoughError> {
    let mut seen = Subset::empty(n);
    for b in blocks {
        if b.universe() != n || b.is_empty() || b.intersects(&seen) {
            return Err(RoughError::NotPartition(n));
        }
        seen = seen.union(b);
    }
    if seen.len() != n {
        return Err(RoughError::NotPartition(n));
    }
    let lb = blocks.to_vec();
    let ub = blocks.to_vec();
    let lower = move |x: &Subset| lb.iter().filter(|b| b.is_subset(x)).fold(Subset::empty(n), |a, b| a.union(b));
    let upper = move |x: &Subset| ub.iter().filter(|b| b.intersects(x)).fold(Subset::empty(n), |a, b| a.union(b));
    let mut space = ApproxSpace::new(n, lower, upper);
    space.blocks = Some(blocks.to_vec());
    Ok(space)
}

/// Blocks of a cluster assignment, empty clusters dropped.
pub fn partition_of(assignments: &[usize]) -> Vec<Subset> {
    let n = assignments.len();
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut blocks = vec![Subset::empty(n); k];
    for (i, &c) in assignments.iter().enumerate() {
        blocks[c].insert(i);
    }
    blocks.retain(|b| !b.is_empty());
    blocks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproxAxiom {
    IntCl,
    LId,
    LMo,
    UMo,
    LBot,
    UTop,
}

pub const APPROX_AXIOMS: [ApproxAxiom; 6] = [
    ApproxAxiom::IntCl,
    ApproxAxiom::LId,
    ApproxAxiom::LMo,
    ApproxAxiom::UMo,
    ApproxAxiom::LBot,
    ApproxAxiom::UTop,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxAxiomResult {
    pub axiom: ApproxAxiom,
    pub holds: bool,
    pub witness: Option<Vec<Subset>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    /// Checked on random samples instead of the whole powerset.
    pub sampled: bool,
    pub results: Vec<ApproxAxiomResult>,
}

impl ApproxReport {
    pub fn all_hold(&self) -> bool {
        self.results.iter().all(|r| r.holds)
    }

    pub fn get(&self, axiom: ApproxAxiom) -> &ApproxAxiomResult {
        self.results.iter().find(|r| r.axiom == axiom).expect("all axioms are reported")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { samples: 2000, seed: 0 }
    }
}

fn random_subset(n: usize, rng: &mut ChaCha8Rng) -> Subset {
    Subset::from_indices(n, (0..n).filter(|_| rng.random_bool(0.5)))
}

/// Verifies the six approximation axioms, exhaustively when the universe is small.
pub fn check_approx_axioms(space: &ApproxSpace) -> ApproxReport {
    check_approx_axioms_with(space, &SampleOptions::default())
}

pub fn check_approx_axioms_with(space: &ApproxSpace, opts: &SampleOptions) -> ApproxReport {
    let n = space.n;
    let sampled = n > EXHAUSTIVE_LIMIT;
    let singles: Vec<Subset>;
    let pairs: Vec<(Subset, Subset)>;
    if sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        singles = (0..opts.samples).map(|_| random_subset(n, &mut rng)).collect();
        pairs = (0..opts.samples)
            .map(|_| {
                let a = random_subset(n, &mut rng);
                let b = a.union(&random_subset(n, &mut rng));
                (a, b)
            })
            .collect();
    } else {
        singles = powerset(n).collect();
        // every a ⊆ b, by submask enumeration of b
        pairs = singles
            .iter()
            .flat_map(|b| {
                let bm = b.to_mask();
                let mut sub = bm;
                let mut out = Vec::new();
                loop {
                    out.push((Subset::from_mask(n, sub), b.clone()));
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & bm;
                }
                out.reverse();
                out
            })
            .collect();
    }
    let lowers: Vec<Subset> = singles.iter().map(|x| space.lower(x)).collect();

    let single_check = |fails: &dyn Fn(usize) -> bool| {
        (0..singles.len()).find(|&i| fails(i)).map(|i| vec![singles[i].clone()])
    };
    let int_cl = single_check(&|i| !lowers[i].is_subset(&space.upper(&singles[i])));
    let l_id = single_check(&|i| !space.lower(&lowers[i]).is_subset(&lowers[i]));
    let l_mo = pairs
        .iter()
        .find(|(a, b)| !space.lower(a).is_subset(&space.lower(b)))
        .map(|(a, b)| vec![a.clone(), b.clone()]);
    let u_mo = pairs
        .iter()
        .find(|(a, b)| !space.upper(a).is_subset(&space.upper(b)))
        .map(|(a, b)| vec![a.clone(), b.clone()]);
    let empty = Subset::empty(n);
    let full = Subset::full(n);
    let l_bot = (!space.lower(&empty).is_empty()).then(|| vec![empty.clone()]);
    let u_top = (space.upper(&full) != full).then(|| vec![full.clone()]);

    let results = [
        (ApproxAxiom::IntCl, int_cl),
        (ApproxAxiom::LId, l_id),
        (ApproxAxiom::LMo, l_mo),
        (ApproxAxiom::UMo, u_mo),
        (ApproxAxiom::LBot, l_bot),
        (ApproxAxiom::UTop, u_top),
    ]
    .into_iter()
    .map(|(axiom, witness)| ApproxAxiomResult { axiom, holds: witness.is_none(), witness })
    .collect();
    ApproxReport { sampled, results }
}

/// Extra properties of partition spaces: `a^l ⊆ a ⊆ a^u`, `a^ll = a^l`, `a^uu = a^u`.
/// Returns the first subset violating one of them.
pub fn check_pawlak_properties(space: &ApproxSpace) -> Result<Option<Subset>, RoughError> {
    space.exhaustible()?;
    Ok(powerset(space.n).find(|a| {
        let (l, u) = (space.lower(a), space.upper(a));
        !(l.is_subset(a) && a.is_subset(&u) && space.lower(&l) == l && space.upper(&u) == u)
    }))
}

/// Unions of the given blocks, in lexicographic order.
fn block_unions(n: usize, blocks: &[Subset]) -> Result<Vec<Subset>, RoughError> {
    if blocks.len() > 20 {
        return Err(RoughError::TooLarge { n: blocks.len(), limit: 20 });
    }
    let mut out: BTreeSet<Subset> = BTreeSet::new();
    for mask in 0u64..(1 << blocks.len()) {
        let u = (0..blocks.len())
            .filter(|b| mask >> b & 1 == 1)
            .fold(Subset::empty(n), |acc, b| acc.union(&blocks[b]));
        out.insert(u);
    }
    Ok(out.into_iter().collect())
}

/// Every lower or upper approximation of some subset, in lexicographic order.
pub fn approximation_set(space: &ApproxSpace) -> Result<Vec<Subset>, RoughError> {
    if space.n > EXHAUSTIVE_LIMIT {
        if let Some(blocks) = &space.blocks {
            return block_unions(space.n, blocks);
        }
    }
    space.exhaustible()?;
    let mut out = BTreeSet::new();
    for a in powerset(space.n) {
        out.insert(space.lower(&a));
        out.insert(space.upper(&a));
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RoughPair {
    pub lower: Subset,
    pub upper: Subset,
}

/// All pairs `(a^l, a^u)`.
pub fn e1(space: &ApproxSpace) -> Result<Vec<RoughPair>, RoughError> {
    space.exhaustible()?;
    let set: BTreeSet<RoughPair> = powerset(space.n)
        .map(|a| RoughPair { lower: space.lower(&a), upper: space.upper(&a) })
        .collect();
    Ok(set.into_iter().collect())
}

/// Subsets that are neither a lower nor an upper approximation.
pub fn f_objects(space: &ApproxSpace) -> Result<Vec<Subset>, RoughError> {
    let approx: BTreeSet<Subset> = approximation_set(space)?.into_iter().collect();
    let mut out: Vec<Subset> = powerset(space.n).filter(|a| !approx.contains(a)).collect();
    out.sort();
    Ok(out)
}

/// Subsets fixed by the upper approximation.
pub fn e2(space: &ApproxSpace) -> Result<Vec<Subset>, RoughError> {
    space.exhaustible()?;
    let mut out: Vec<Subset> = powerset(space.n).filter(|b| &space.upper(b) == b).collect();
    out.sort();
    Ok(out)
}

/// `|b \ a| / |b|`.
pub fn xi5(a: &Subset, b: &Subset) -> Result<f64, RoughError> {
    if b.is_empty() {
        return Err(RoughError::EmptyReference);
    }
    Ok(b.difference(a).len() as f64 / b.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrrfKind {
    /// Partial map from approximations to rough objects.
    Type1,
    /// Total map from approximations and reference sets to reals.
    Type2,
    /// Total map from approximations to objects.
    Type3,
    /// Partial map from operators and subsets to rough objects.
    TypeH,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CrrfKey {
    Set(Subset),
    SetPair(Subset, Subset),
    Operator(usize, Subset),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CrrfValue {
    Pair(RoughPair),
    Real(f64),
    Set(Subset),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrrfEntry {
    pub key: CrrfKey,
    pub value: CrrfValue,
}

/// A tabulated rough random function with its declared domain and codomain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrrfWrapper {
    pub kind: CrrfKind,
    pub name: String,
    pub domain: Vec<CrrfKey>,
    /// `None` means the reals.
    pub codomain: Option<Vec<CrrfValue>>,
    /// Sorted by key.
    pub entries: Vec<CrrfEntry>,
}

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
pub enum CrrfViolation {
    #[error("key {0:?} has the wrong shape for this kind")]
    KeyShape(CrrfKey),
    #[error("key {0:?} is outside the declared domain")]
    OutsideDomain(CrrfKey),
    #[error("value at {0:?} is outside the declared codomain")]
    OutsideCodomain(CrrfKey),
    #[error("total map is undefined at {0:?}")]
    Missing(CrrfKey),
    #[error("key {0:?} appears twice")]
    Duplicate(CrrfKey),
}

impl CrrfWrapper {
    pub fn new(
        kind: CrrfKind,
        name: &str,
        domain: Vec<CrrfKey>,
        codomain: Option<Vec<CrrfValue>>,
        mut entries: Vec<CrrfEntry>,
    ) -> Self {
        entries.sort_by(|a, b| a.key.cmp(&b.key));
        Self { kind, name: name.to_string(), domain, codomain, entries }
    }

    pub fn get(&self, key: &CrrfKey) -> Option<&CrrfValue> {
        self.entries.binary_search_by(|e| e.key.cmp(key)).ok().map(|i| &self.entries[i].value)
    }

    pub fn is_total(&self) -> bool {
        self.domain.iter().all(|k| self.get(k).is_some())
    }

    /// Checks the key shape, domain, codomain and totality rules of the kind.
    pub fn validate(&self) -> Result<(), CrrfViolation> {
        let domain: BTreeSet<&CrrfKey> = self.domain.iter().collect();
        for w in self.entries.windows(2) {
            if w[0].key == w[1].key {
                return Err(CrrfViolation::Duplicate(w[0].key.clone()));
            }
        }
        for e in &self.entries {
            let shape_ok = matches!(
                (self.kind, &e.key, &e.value),
                (CrrfKind::Type1, CrrfKey::Set(_), CrrfValue::Pair(_))
                    | (CrrfKind::Type2, CrrfKey::SetPair(..), CrrfValue::Real(_))
                    | (CrrfKind::Type3, CrrfKey::Set(_), _)
                    | (CrrfKind::TypeH, CrrfKey::Operator(..), CrrfValue::Pair(_))
            );
            if !shape_ok {
                return Err(CrrfViolation::KeyShape(e.key.clone()));
            }
            if !domain.contains(&e.key) {
                return Err(CrrfViolation::OutsideDomain(e.key.clone()));
            }
            let in_codomain = match (&self.codomain, &e.value) {
                (None, CrrfValue::Real(x)) => x.is_finite(),
                (None, _) => false,
                (Some(cod), v) => cod.contains(v),
            };
            if !in_codomain {
                return Err(CrrfViolation::OutsideCodomain(e.key.clone()));
            }
        }
        if matches!(self.kind, CrrfKind::Type2 | CrrfKind::Type3) {
            if let Some(k) = self.domain.iter().find(|k| self.get(k).is_none()) {
                return Err(CrrfViolation::Missing(k.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum XiConstraint {
    None,
    /// Only inclusion-minimal candidate pairs are eligible.
    MinimalCover,
}

fn minimal_pairs(cands: Vec<RoughPair>) -> Vec<RoughPair> {
    let below = |p: &RoughPair, q: &RoughPair| p != q && p.lower.is_subset(&q.lower) && p.upper.is_subset(&q.upper);
    cands.iter().filter(|q| !cands.iter().any(|p| below(p, q))).cloned().collect()
}

/// Value of ξ1, ξ2 or ξ3 at `a`. ξ1 keeps `a` as the lower part, ξ2 as the
/// upper part, ξ3 as either. The witness is the smallest subset `b`
/// (by size, then lexicographically) realising a candidate pair.
pub fn xi_value(space: &ApproxSpace, variant: u8, constraint: XiConstraint, a: &Subset) -> Result<Option<RoughPair>, RoughError> {
    space.exhaustible()?;
    let mut cands: Vec<(Subset, RoughPair)> = Vec::new();
    for b in powerset(space.n) {
        let pair = RoughPair { lower: space.lower(&b), upper: space.upper(&b) };
        let ok = match variant {
            1 => &pair.lower == a,
            2 => &pair.upper == a,
            _ => &pair.lower == a || &pair.upper == a,
        };
        if ok {
            cands.push((b, pair));
        }
    }
    cands.sort_by(|x, y| x.0.len().cmp(&y.0.len()).then_with(|| x.0.cmp(&y.0)));
    let chosen = match constraint {
        XiConstraint::None => cands.into_iter().next().map(|c| c.1),
        XiConstraint::MinimalCover => {
            let pairs: Vec<RoughPair> = cands.iter().map(|c| c.1.clone()).collect();
            let minimal = minimal_pairs(pairs);
            cands.into_iter().map(|c| c.1).find(|p| minimal.contains(p))
        }
    };
    Ok(chosen)
}

/// Tabulates ξ1, ξ2 or ξ3 over the approximation set as a type-1 wrapper
/// with codomain E1.
pub fn xi_functions(space: &ApproxSpace, variant: u8, constraint: XiConstraint) -> Result<CrrfWrapper, RoughError> {
    assert!((1..=3).contains(&variant), "ξ variants are 1, 2 and 3");
    let approx = approximation_set(space)?;
    let codomain = e1(space)?.into_iter().map(CrrfValue::Pair).collect();
    let mut entries = Vec::new();
    for a in &approx {
        if let Some(p) = xi_value(space, variant, constraint, a)? {
            entries.push(CrrfEntry { key: CrrfKey::Set(a.clone()), value: CrrfValue::Pair(p) });
        }
    }
    let domain = approx.into_iter().map(CrrfKey::Set).collect();
    Ok(CrrfWrapper::new(CrrfKind::Type1, &format!("xi{variant}"), domain, Some(codomain), entries))
}

/// ξ5 over approximations and the non-empty sets of `references`, as a type-2 wrapper.
pub fn xi5_wrapper(space: &ApproxSpace, references: &[Subset]) -> Result<CrrfWrapper, RoughError> {
    let approx = approximation_set(space)?;
    let mut domain = Vec::new();
    let mut entries = Vec::new();
    for a in &approx {
        for b in references.iter().filter(|b| !b.is_empty()) {
            let key = CrrfKey::SetPair(a.clone(), b.clone());
            entries.push(CrrfEntry { key: key.clone(), value: CrrfValue::Real(xi5(a, b)?) });
            domain.push(key);
        }
    }
    Ok(CrrfWrapper::new(CrrfKind::Type2, "xi5", domain, None, entries))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub partition: Vec<Subset>,
    pub approximations: usize,
    pub axioms: ApproxReport,
    /// Sends each union of current blocks to the union of the same
    /// clusters after the update.
    pub update: CrrfWrapper,
    pub fixed_point: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crrf3Trace {
    pub formalization: String,
    pub entries: Vec<TraceEntry>,
}

#[derive(Default)]
struct Steps(Vec<(Vec<usize>, Vec<usize>)>);

impl Observer for Steps {
    fn on_iteration(&mut self, r: &IterationRecord<'_>) {
        self.0.push((r.before.to_vec(), r.after.to_vec()));
    }
}

fn cluster_union(n: usize, assignments: &[usize], clusters: &BTreeSet<usize>) -> Subset {
    Subset::from_indices(n, (0..n).filter(|&i| clusters.contains(&assignments[i])))
}

/// One candidate reading of a ball k-means run as a sequence of type-3
/// maps: each iteration's partition induces a classical space, and the
/// update sends its approximations to the matching unions of next clusters.
pub fn bkm_crrf3_trace(ds: &Dataset, cfg: &BkmConfig) -> Result<Crrf3Trace, RoughError> {
    if cfg.k > 20 {
        return Err(RoughError::TooLarge { n: cfg.k, limit: 20 });
    }
    let mut steps = Steps::default();
    ball_kmeans::run_observed(ds, cfg, &mut steps)?;
    let n = ds.len();
    let mut entries = Vec::new();
    for (t, (before, after)) in steps.0.iter().enumerate() {
        let partition = partition_of(before);
        let space = pawlak(n, &partition)?;
        let k = cfg.k;
        let mut domain = Vec::new();
        let mut mapped = Vec::new();
        let mut codomain = Vec::new();
        let mut fixed_point = true;
        for mask in 0u64..(1 << k) {
            let ids: BTreeSet<usize> = (0..k).filter(|c| mask >> c & 1 == 1).collect();
            let from = cluster_union(n, before, &ids);
            let to = cluster_union(n, after, &ids);
            fixed_point &= from == to;
            domain.push(CrrfKey::Set(from.clone()));
            codomain.push(CrrfValue::Set(to.clone()));
            mapped.push(CrrfEntry { key: CrrfKey::Set(from), value: CrrfValue::Set(to) });
        }
        entries.push(TraceEntry {
            iteration: t + 1,
            approximations: domain.len(),
            axioms: check_approx_axioms(&space),
            update: CrrfWrapper::new(CrrfKind::Type3, "bkm-update", domain, Some(codomain), mapped),
            partition,
            fixed_point,
        });
    }
    Ok(Crrf3Trace { formalization: "candidate formalization: per-iteration Pawlak spaces".into(), entries })
}
