//! Purity-driven granular balls.
//!
//! A granular ball is a member set with its mean as centre and the mean
//! member distance as radius. Generation starts from the ball over the
//! whole dataset and splits impure balls with ball k-means until every
//! ball is pure enough or can no longer be split. Split children are
//! checked as major/minor balls: their member sets cover the parent and
//! are pairwise disjoint.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ball_kmeans::{self, BkmConfig, BkmError, Init};
use crate::dataset::{mean_of, LabeledDataset};
use crate::metrics::{Distance, Euclidean};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GbError {
    #[error("a granular ball needs at least one member")]
    EmptyBall,
    #[error("dataset has no labelled points")]
    NoLabels,
    #[error("no ball carries a majority label")]
    NoLabeledBalls,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Split(#[from] BkmError),
}

#[derive(Clone)]
pub struct GbConfig {
    pub purity_threshold: f64,
    pub min_points: usize,
    pub split_k: usize,
    pub max_depth: usize,
    pub overlap_resolution: bool,
    pub seed: u64,
    pub init: Init,
    pub max_iter: usize,
    pub distance: Arc<dyn Distance>,
}

impl Default for GbConfig {
    fn default() -> Self {
        Self {
            purity_threshold: 0.95,
            min_points: 2,
            split_k: 2,
            max_depth: 16,
            overlap_resolution: false,
            seed: 0,
            init: Init::PlusPlus,
            max_iter: 200,
            distance: Arc::new(Euclidean),
        }
    }
}

impl std::fmt::Debug for GbConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GbConfig")
            .field("purity_threshold", &self.purity_threshold)
            .field("min_points", &self.min_points)
            .field("split_k", &self.split_k)
            .field("max_depth", &self.max_depth)
            .field("overlap_resolution", &self.overlap_resolution)
            .field("seed", &self.seed)
            .field("init", &self.init)
            .field("distance", &self.distance.name())
            .finish()
    }
}

impl GbConfig {
    pub fn validate(&self) -> Result<(), GbError> {
        if !(self.purity_threshold > 0.0 && self.purity_threshold <= 1.0) {
            return Err(GbError::Config(format!(
                "purity threshold {} outside (0, 1]",
                self.purity_threshold
            )));
        }
        if self.min_points == 0 {
            return Err(GbError::Config("min_points must be positive".into()));
        }
        if self.split_k < 2 {
            return Err(GbError::Config("split_k must be at least 2".into()));
        }
        if self.max_depth == 0 {
            return Err(GbError::Config("max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GranularBall {
    pub center: Vec<f64>,
    /// Mean member distance to the centre.
    pub radius: f64,
    /// Member indices, ascending.
    pub members: Vec<usize>,
    pub purity: Option<f64>,
    pub majority_label: Option<i64>,
}

/// Builds the ball over `members`.
pub fn make_ball(
    ds: &LabeledDataset,
    members: &[usize],
    dist: &dyn Distance,
) -> Result<GranularBall, GbError> {
    let mut members = members.to_vec();
    members.sort_unstable();
    members.dedup();
    let pts = &ds.points;
    let center = mean_of(pts.dim(), members.iter().map(|&i| pts.point(i))).ok_or(GbError::EmptyBall)?;
    let radius = members.iter().map(|&i| dist.eval(pts.point(i), &center)).sum::<f64>()
        / members.len() as f64;
    let (purity, majority_label) = purity_of(ds, &members);
    Ok(GranularBall { center, radius, members, purity, majority_label })
}

/// Majority ratio and label over the labelled members; ties pick the smallest label.
fn purity_of(ds: &LabeledDataset, members: &[usize]) -> (Option<f64>, Option<i64>) {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &i in members {
        if let Some(l) = ds.labels[i] {
            *counts.entry(l).or_default() += 1;
        }
    }
    let labeled: usize = counts.values().sum();
    // max_by_key keeps the last maximum, so iterate in reverse label order.
    match counts.iter().rev().max_by_key(|(_, &c)| c) {
        None => (None, None),
        Some((&label, &c)) => (Some(c as f64 / labeled as f64), Some(label)),
    }
}

/// Fraction of the majority label among the ball's labelled members.
pub fn purity(ball: &GranularBall, ds: &LabeledDataset) -> Option<f64> {
    purity_of(ds, &ball.members).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Pure,
    MinPoints,
    DepthCap,
    SplitRefused,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitOutcome {
    Children(Vec<GranularBall>),
    /// Fewer members than requested parts.
    Refused { members: usize, k: usize },
}

fn split_seed(base: u64, ball: &GranularBall) -> u64 {
    let first = ball.members.first().copied().unwrap_or(0) as u64;
    let len = ball.members.len() as u64;
    base ^ first.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ len.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Splits `ball` into `k` children by running ball k-means on its members.
pub fn split(
    ds: &LabeledDataset,
    ball: &GranularBall,
    k: usize,
    cfg: &GbConfig,
) -> Result<SplitOutcome, GbError> {
    if ball.members.len() < k {
        return Ok(SplitOutcome::Refused { members: ball.members.len(), k });
    }
    let sub = ds.points.subset(&ball.members).map_err(|_| GbError::EmptyBall)?;
    let bkm = BkmConfig::new(k)
        .with_seed(split_seed(cfg.seed, ball))
        .with_init(cfg.init)
        .with_max_iter(cfg.max_iter)
        .with_distance(cfg.distance.clone());
    let (clustering, _) = ball_kmeans::run(&sub, &bkm)?;
    let children = clustering
        .partition()
        .into_iter()
        .map(|part| {
            let members: Vec<usize> = part.into_iter().map(|local| ball.members[local]).collect();
            make_ball(ds, &members, &*cfg.distance)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SplitOutcome::Children(children))
}

/// `true` iff the minor member sets are pairwise disjoint and their union
/// is exactly the major member set.
pub fn check_major_minor(major: &[usize], minors: &[Vec<usize>]) -> bool {
    let mut seen = BTreeSet::new();
    for minor in minors {
        for &x in minor {
            if !seen.insert(x) {
                return false;
            }
        }
    }
    let major: BTreeSet<usize> = major.iter().copied().collect();
    seen == major
}

/// Majority labels differ and the balls overlap under their mean radii.
/// Balls without a majority label never overlap heterogeneously.
pub fn heterogeneous_overlap(a: &GranularBall, b: &GranularBall, dist: &dyn Distance) -> bool {
    match (a.majority_label, b.majority_label) {
        (Some(la), Some(lb)) => la != lb && dist.eval(&a.center, &b.center) < a.radius + b.radius,
        _ => {
            log::warn!("overlap test on a ball without a majority label");
            false
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalBall {
    pub id: usize,
    pub depth: usize,
    pub stop: StopReason,
    #[serde(flatten)]
    pub ball: GranularBall,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRecord {
    pub depth: usize,
    pub parent: Vec<usize>,
    pub children: Vec<Vec<usize>>,
    pub major_minor: bool,
    /// The split was forced by a heterogeneous overlap.
    pub overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GbReport {
    pub balls: Vec<FinalBall>,
    pub splits: Vec<SplitRecord>,
    /// Ball id pairs that still overlap heterogeneously.
    pub unresolved_overlaps: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct Node {
    ball: GranularBall,
    depth: usize,
    stop: StopReason,
}

fn stop_reason(ball: &GranularBall, depth: usize, cfg: &GbConfig) -> Option<StopReason> {
    if ball.purity.is_some_and(|p| p >= cfg.purity_threshold) {
        Some(StopReason::Pure)
    } else if ball.members.len() <= cfg.min_points {
        Some(StopReason::MinPoints)
    } else if depth >= cfg.max_depth {
        Some(StopReason::DepthCap)
    } else if ball.members.len() < cfg.split_k {
        Some(StopReason::SplitRefused)
    } else {
        None
    }
}

fn record_split(
    splits: &mut Vec<SplitRecord>,
    parent: &GranularBall,
    children: &[GranularBall],
    depth: usize,
    overlap: bool,
) {
    let child_sets: Vec<Vec<usize>> = children.iter().map(|c| c.members.clone()).collect();
    splits.push(SplitRecord {
        depth,
        parent: parent.members.clone(),
        major_minor: check_major_minor(&parent.members, &child_sets),
        children: child_sets,
        overlap,
    });
}

/// Refines `start` until every ball meets the stopping predicate.
fn refine(
    ds: &LabeledDataset,
    start: Vec<(GranularBall, usize)>,
    cfg: &GbConfig,
    splits: &mut Vec<SplitRecord>,
) -> Result<Vec<Node>, GbError> {
    let mut queue: VecDeque<(GranularBall, usize)> = start.into();
    let mut done = Vec::new();
    while let Some((ball, depth)) = queue.pop_front() {
        if let Some(stop) = stop_reason(&ball, depth, cfg) {
            done.push(Node { ball, depth, stop });
            continue;
        }
        match split(ds, &ball, cfg.split_k, cfg)? {
            SplitOutcome::Refused { .. } => {
                done.push(Node { ball, depth, stop: StopReason::SplitRefused })
            }
            SplitOutcome::Children(children) => {
                record_split(splits, &ball, &children, depth, false);
                queue.extend(children.into_iter().map(|c| (c, depth + 1)));
            }
        }
    }
    Ok(done)
}

fn sort_nodes(nodes: &mut [Node]) {
    nodes.sort_by_key(|n| n.ball.members.first().copied());
}

fn finalize(nodes: Vec<Node>, unresolved: Vec<(usize, usize)>, splits: Vec<SplitRecord>) -> GbReport {
    let balls = nodes
        .into_iter()
        .enumerate()
        .map(|(id, n)| FinalBall { id, depth: n.depth, stop: n.stop, ball: n.ball })
        .collect();
    GbReport { balls, splits, unresolved_overlaps: unresolved }
}

/// Generates granular balls for a (partly) labelled dataset.
pub fn generate(ds: &LabeledDataset, cfg: &GbConfig) -> Result<GbReport, GbError> {
    cfg.validate()?;
    if !ds.has_labels() {
        return Err(GbError::NoLabels);
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    let root = make_ball(ds, &all, &*cfg.distance)?;
    let mut splits = Vec::new();
    let mut nodes = refine(ds, vec![(root, 0)], cfg, &mut splits)?;
    sort_nodes(&mut nodes);
    let unresolved = if cfg.overlap_resolution {
        resolve_nodes(ds, &mut nodes, cfg, &mut splits)?
    } else {
        Vec::new()
    };
    Ok(finalize(nodes, unresolved, splits))
}

fn splittable(n: &Node, cfg: &GbConfig) -> bool {
    n.ball.members.len() > cfg.min_points
        && n.depth < cfg.max_depth
        && n.ball.members.len() >= cfg.split_k
}

fn resolve_nodes(
    ds: &LabeledDataset,
    nodes: &mut Vec<Node>,
    cfg: &GbConfig,
    splits: &mut Vec<SplitRecord>,
) -> Result<Vec<(usize, usize)>, GbError> {
    let dist = &*cfg.distance;
    let key = |n: &Node| n.ball.members[0];
    // Pairs known to be unsplittable, keyed by each ball's smallest member.
    let mut stuck: BTreeSet<(usize, usize)> = BTreeSet::new();
    loop {
        let mut target = None;
        'scan: for a in 0..nodes.len() {
            for b in a + 1..nodes.len() {
                let pair = (key(&nodes[a]), key(&nodes[b]));
                if stuck.contains(&pair) || !heterogeneous_overlap(&nodes[a].ball, &nodes[b].ball, dist) {
                    continue;
                }
                let (big, small) = if nodes[b].ball.members.len() > nodes[a].ball.members.len() {
                    (b, a)
                } else {
                    (a, b)
                };
                if let Some(&pick) = [big, small].iter().find(|&&i| splittable(&nodes[i], cfg)) {
                    target = Some(pick);
                    break 'scan;
                }
                stuck.insert(pair);
            }
        }
        let Some(t) = target else { break };
        let node = nodes.remove(t);
        match split(ds, &node.ball, cfg.split_k, cfg)? {
            SplitOutcome::Refused { .. } => {
                nodes.push(Node { stop: StopReason::SplitRefused, ..node });
            }
            SplitOutcome::Children(children) => {
                record_split(splits, &node.ball, &children, node.depth, true);
                let start = children.into_iter().map(|c| (c, node.depth + 1)).collect();
                nodes.extend(refine(ds, start, cfg, splits)?);
            }
        }
        sort_nodes(nodes);
    }

    let mut unresolved = Vec::new();
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            if heterogeneous_overlap(&nodes[a].ball, &nodes[b].ball, dist) {
                unresolved.push((a, b));
            }
        }
    }
    Ok(unresolved)
}

/// Splits heterogeneously overlapping balls until no resolvable overlap
/// remains. Returns the refined set and the ball id pairs that could not
/// be separated.
pub fn resolve_overlaps(
    ds: &LabeledDataset,
    balls: Vec<FinalBall>,
    cfg: &GbConfig,
) -> Result<GbReport, GbError> {
    cfg.validate()?;
    let mut nodes: Vec<Node> = balls
        .into_iter()
        .map(|b| Node { ball: b.ball, depth: b.depth, stop: b.stop })
        .collect();
    sort_nodes(&mut nodes);
    let mut splits = Vec::new();
    let unresolved = resolve_nodes(ds, &mut nodes, cfg, &mut splits)?;
    Ok(finalize(nodes, unresolved, splits))
}

/// Label of the ball minimising `σ(x, c) - r`; ties go to the smaller
/// radius, then the lower id. Balls without a majority label are skipped.
pub fn classify(balls: &[FinalBall], x: &[f64], dist: &dyn Distance) -> Result<i64, GbError> {
    balls
        .iter()
        .filter_map(|b| b.ball.majority_label.map(|l| (b, l)))
        .min_by(|(a, _), (b, _)| {
            let sa = dist.eval(x, &a.ball.center) - a.ball.radius;
            let sb = dist.eval(x, &b.ball.center) - b.ball.radius;
            sa.total_cmp(&sb)
                .then(a.ball.radius.total_cmp(&b.ball.radius))
                .then(a.id.cmp(&b.id))
        })
        .map(|(_, l)| l)
        .ok_or(GbError::NoLabeledBalls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn labeled(xs: &[f64], labels: &[Option<i64>]) -> LabeledDataset {
        let ds = Dataset::new(xs.iter().map(|&x| vec![x]).collect()).unwrap();
        LabeledDataset::new(ds, labels.to_vec()).unwrap()
    }

    #[test]
    fn make_ball_examples() {
        let ds = labeled(&[0.0, 2.0], &[Some(1), Some(1)]);
        let b = make_ball(&ds, &[0], &Euclidean).unwrap();
        assert_eq!((b.center.clone(), b.radius, b.purity), (vec![0.0], 0.0, Some(1.0)));
        let b = make_ball(&ds, &[0, 1], &Euclidean).unwrap();
        assert_eq!((b.center.clone(), b.radius, b.purity), (vec![1.0], 1.0, Some(1.0)));
        assert_eq!(make_ball(&ds, &[], &Euclidean), Err(GbError::EmptyBall));

        let ds = labeled(&[0.0; 6], &[Some(0), Some(0), Some(0), Some(0), Some(1), Some(1)]);
        let b = make_ball(&ds, &[0, 1, 2, 3, 4, 5], &Euclidean).unwrap();
        assert!((b.purity.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.majority_label, Some(0));
    }

    #[test]
    fn purity_examples() {
        let ds = labeled(&[0.0, 1.0, 2.0, 3.0], &[Some(7), Some(7), Some(7), Some(8)]);
        let b = make_ball(&ds, &[0, 1, 2, 3], &Euclidean).unwrap();
        assert_eq!(purity(&b, &ds), Some(0.75));
        let b = make_ball(&ds, &[0, 1], &Euclidean).unwrap();
        assert_eq!(purity(&b, &ds), Some(1.0));
        let ds = labeled(&[0.0, 1.0], &[None, None]);
        let b = make_ball(&ds, &[0, 1], &Euclidean).unwrap();
        assert_eq!(purity(&b, &ds), None);
        assert_eq!(b.majority_label, None);
        // unlabeled members do not count
        let ds = labeled(&[0.0, 1.0, 2.0], &[Some(3), None, None]);
        assert_eq!(make_ball(&ds, &[0, 1, 2], &Euclidean).unwrap().purity, Some(1.0));
        // majority ties pick the smaller label
        let ds = labeled(&[0.0, 1.0], &[Some(5), Some(2)]);
        assert_eq!(make_ball(&ds, &[0, 1], &Euclidean).unwrap().majority_label, Some(2));
    }

    #[test]
    fn split_examples() {
        let ds = labeled(&[0.0, 0.0, 0.0, 9.0, 9.0, 9.0], &[Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)]);
        let root = make_ball(&ds, &[0, 1, 2, 3, 4, 5], &Euclidean).unwrap();
        let SplitOutcome::Children(ch) = split(&ds, &root, 2, &GbConfig::default()).unwrap() else {
            panic!("split refused")
        };
        let mut sets: Vec<Vec<usize>> = ch.iter().map(|c| c.members.clone()).collect();
        sets.sort();
        assert_eq!(sets, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert!(ch.iter().all(|c| c.purity == Some(1.0)));
        assert!(check_major_minor(&root.members, &sets));

        let one = make_ball(&ds, &[4], &Euclidean).unwrap();
        assert_eq!(
            split(&ds, &one, 2, &GbConfig::default()).unwrap(),
            SplitOutcome::Refused { members: 1, k: 2 }
        );
    }

    #[test]
    fn major_minor_examples() {
        assert!(check_major_minor(&[1, 2, 3], &[vec![1], vec![2, 3]]));
        assert!(!check_major_minor(&[1, 2, 3], &[vec![1, 2], vec![2, 3]]));
        assert!(!check_major_minor(&[1, 2, 3], &[vec![1], vec![2]]));
        assert!(!check_major_minor(&[1, 2], &[vec![1], vec![2, 3]]));
    }

    fn gb(center: f64, radius: f64, label: Option<i64>) -> GranularBall {
        GranularBall { center: vec![center], radius, members: vec![0], purity: Some(1.0), majority_label: label }
    }

    #[test]
    fn overlap_examples() {
        assert!(!heterogeneous_overlap(&gb(0.0, 2.0, Some(1)), &gb(1.0, 2.0, Some(1)), &Euclidean));
        assert!(!heterogeneous_overlap(&gb(0.0, 2.0, Some(1)), &gb(5.0, 2.0, Some(2)), &Euclidean));
        assert!(heterogeneous_overlap(&gb(0.0, 2.0, Some(1)), &gb(3.0, 2.0, Some(2)), &Euclidean));
        assert!(!heterogeneous_overlap(&gb(0.0, 2.0, None), &gb(3.0, 2.0, Some(2)), &Euclidean));
    }

    #[test]
    fn classify_examples() {
        let fb = |id, c, r, l| FinalBall { id, depth: 0, stop: StopReason::Pure, ball: gb(c, r, Some(l)) };
        let balls = vec![fb(0, 0.0, 1.0, 10), fb(1, 10.0, 1.0, 20)];
        assert_eq!(classify(&balls, &[10.0], &Euclidean).unwrap(), 20);
        // equidistant from both centres: the wider ball has the smaller σ − r
        let balls = vec![fb(0, 0.0, 1.0, 10), fb(1, 10.0, 3.0, 20)];
        assert_eq!(classify(&balls, &[5.0], &Euclidean).unwrap(), 20);
        // same σ − r: smaller radius wins
        let balls = vec![fb(0, 0.0, 1.0, 10), fb(1, 8.0, 3.0, 20)];
        assert_eq!(classify(&balls, &[3.0], &Euclidean).unwrap(), 10);
        assert_eq!(classify(&[], &[0.0], &Euclidean), Err(GbError::NoLabeledBalls));
    }

    #[test]
    fn single_class_is_one_ball() {
        let ds = labeled(&[0.0, 1.0, 5.0, 7.0], &[Some(4); 4]);
        let r = generate(&ds, &GbConfig::default()).unwrap();
        assert_eq!(r.balls.len(), 1);
        assert_eq!(r.balls[0].stop, StopReason::Pure);
        assert_eq!(r.balls[0].ball.purity, Some(1.0));
        assert!(r.splits.is_empty());
    }

    #[test]
    fn duplicated_conflicting_points_bottom_out() {
        let xs = [1.0, 1.0, 1.0, 1.0, 5.0, 5.0];
        let labels = [Some(0), Some(1), Some(0), Some(1), Some(0), Some(0)];
        let ds = labeled(&xs, &labels);
        let cfg = GbConfig { purity_threshold: 1.0, min_points: 1, ..GbConfig::default() };
        let r = generate(&ds, &cfg).unwrap();
        let impure: Vec<&FinalBall> = r.balls.iter().filter(|b| b.ball.purity < Some(1.0)).collect();
        assert!(impure.is_empty(), "min_points 1 isolates every point");
        let cfg = GbConfig { purity_threshold: 1.0, min_points: 2, ..GbConfig::default() };
        let r = generate(&ds, &cfg).unwrap();
        let impure: Vec<&FinalBall> = r.balls.iter().filter(|b| b.ball.purity < Some(1.0)).collect();
        assert!(!impure.is_empty());
        assert!(impure.iter().all(|b| b.stop == StopReason::MinPoints));
    }

    #[test]
    fn config_validation() {
        let bad = GbConfig { purity_threshold: 0.0, ..GbConfig::default() };
        assert!(matches!(bad.validate(), Err(GbError::Config(_))));
        let bad = GbConfig { split_k: 1, ..GbConfig::default() };
        assert!(bad.validate().is_err());
        let ds = labeled(&[0.0, 1.0], &[None, None]);
        assert_eq!(generate(&ds, &GbConfig::default()), Err(GbError::NoLabels));
    }
}
