//! Exact accelerated k-means with clusters modelled as balls.
//!
//! Each iteration recomputes cluster means, takes the largest member
//! distance as the ball radius, and links cluster `j` to cluster `i` when
//! `σ(c_i, c_j) < 2 r_i`. Points inside half the distance to the nearest
//! neighbour centre are stable and keep their cluster without further
//! work. The remaining points fall into annuli bounded by half the sorted
//! neighbour-centre distances; a point in the `m`-th annulus is compared
//! against its own centre and the `m` closest neighbour centres only.
//! Centre-to-centre distances are skipped when a lower bound carried over
//! from the previous iteration, shrunk by both centre shifts, already
//! rules the pair out.
//!
//! Reassignment keeps a point in its cluster unless another centre is
//! strictly closer; among strictly closer centres the lowest index wins.
//! [`lloyd_run`] applies the same rule to all `k` centres, so the two runs
//! produce the same partition at every iteration.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{mean_of, Dataset};
use crate::metrics::{Distance, Euclidean};

/// Points per rayon task during reassignment.
const PAR_CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BkmError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of points n = {n}")]
    TooManyClusters { k: usize, n: usize },
    #[error("max_iter must be at least 1")]
    ZeroMaxIter,
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Random split of the indices into `k` non-empty parts.
    RandomPartition,
    /// k-means++ seeding followed by nearest-seed assignment.
    PlusPlus,
}

#[derive(Clone)]
pub struct BkmConfig {
    pub k: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub init: Init,
    pub distance: Arc<dyn Distance>,
}

impl BkmConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iter: 200,
            seed: 0,
            init: Init::RandomPartition,
            distance: Arc::new(Euclidean),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_distance(mut self, distance: Arc<dyn Distance>) -> Self {
        self.distance = distance;
        self
    }

    pub fn validate(&self, n: usize) -> Result<(), BkmError> {
        if self.k == 0 {
            return Err(BkmError::ZeroK);
        }
        if self.k > n {
            return Err(BkmError::TooManyClusters { k: self.k, n });
        }
        if self.max_iter == 0 {
            return Err(BkmError::ZeroMaxIter);
        }
        Ok(())
    }
}

impl fmt::Debug for BkmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BkmConfig")
            .field("k", &self.k)
            .field("max_iter", &self.max_iter)
            .field("seed", &self.seed)
            .field("init", &self.init)
            .field("distance", &self.distance.name())
            .finish()
    }
}

/// A neighbouring cluster and the distance between the two centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Neighbor {
    pub index: usize,
    pub center_distance: f64,
}

/// One cluster viewed as a ball at a fixed iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallCluster {
    pub center: Vec<f64>,
    /// Largest member distance to the centre.
    pub radius: f64,
    /// Member indices, ascending.
    pub members: Vec<usize>,
    /// Neighbours sorted by centre distance, then index.
    pub neighbors: Vec<Neighbor>,
    /// Half the distance to the nearest neighbour centre; `None` when the
    /// cluster has no neighbours, in which case every member is stable.
    pub stable_radius: Option<f64>,
    /// Annulus boundaries `σ(c, c_(m)) / 2`, ascending.
    pub annuli: Vec<f64>,
}

impl BallCluster {
    /// Builds a ball with no neighbour information yet.
    pub fn new(center: Vec<f64>, radius: f64, members: Vec<usize>) -> Self {
        Self {
            center,
            radius,
            members,
            neighbors: Vec::new(),
            stable_radius: None,
            annuli: Vec::new(),
        }
    }

    /// Installs a neighbour list, sorting it and deriving the stable radius and annuli.
    pub fn set_neighbors(&mut self, mut neighbors: Vec<Neighbor>) {
        sort_neighbors(&mut neighbors);
        self.stable_radius = stable_radius(&neighbors);
        self.annuli = annular_boundaries(&neighbors);
        self.neighbors = neighbors;
    }

    pub fn region_of(&self, distance_to_center: f64) -> Region {
        region_of(distance_to_center, &self.annuli)
    }
}

/// Where a member sits inside its ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Stable,
    /// The `m`-th annulus (1-based); candidates are the `m` closest neighbours.
    Annulus(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Move {
    pub point: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub iterations: usize,
    /// Distance evaluations during iterations; seeding is excluded.
    pub distance_computations: u64,
    pub distance_computations_per_iter: Vec<u64>,
    pub points_moved_per_iter: Vec<usize>,
    pub prunings_fired: u64,
    /// Points reassigned to refill clusters left empty.
    pub empty_cluster_repairs: usize,
    /// Cluster-iterations in which a cluster had no neighbours (whole ball stable).
    pub isolated_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Member index sets, one per cluster, each ascending.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        members_of(&self.assignments, self.k())
    }
}

/// Points equidistant from their own centre and at least one other centre.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tie {
    pub point: usize,
    pub clusters: Vec<usize>,
}

/// Everything one iteration produced, handed to an [`Observer`].
pub struct IterationRecord<'a> {
    pub iteration: usize,
    /// Assignment the iteration started from.
    pub before: &'a [usize],
    /// Assignment after reassignment, before empty-cluster repair.
    pub reassigned: &'a [usize],
    /// Assignment after repair.
    pub after: &'a [usize],
    pub centers: &'a [Vec<f64>],
    pub ball: Option<BallDetail<'a>>,
}

pub struct BallDetail<'a> {
    pub clusters: &'a [BallCluster],
    pub own_distances: &'a [f64],
    pub regions: &'a [Region],
    /// Ordered pairs `(i, j)` whose centre distance was skipped.
    pub prunings: &'a [(usize, usize)],
    pub moves: &'a [Move],
}

pub trait Observer {
    fn on_iteration(&mut self, record: &IterationRecord<'_>);
}

struct Silent;

impl Observer for Silent {
    fn on_iteration(&mut self, _: &IterationRecord<'_>) {}
}

/// Forms the initial partition: `k` non-empty, disjoint, covering index sets.
pub fn init_clusters(ds: &Dataset, cfg: &BkmConfig) -> Result<Vec<Vec<usize>>, BkmError> {
    cfg.validate(ds.len())?;
    Ok(members_of(&init_assignment(ds, cfg), cfg.k))
}

fn init_assignment(ds: &Dataset, cfg: &BkmConfig) -> Vec<usize> {
    let n = ds.len();
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.init {
        Init::RandomPartition => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut assign = vec![0; n];
            for (pos, &p) in order.iter().enumerate() {
                assign[p] = if pos < k { pos } else { rng.random_range(0..k) };
            }
            assign
        }
        Init::PlusPlus => {
            let dist = &*cfg.distance;
            let mut seeds = vec![rng.random_range(0..n)];
            let mut weight: Vec<f64> =
                (0..n).map(|x| dist.eval(ds.point(x), ds.point(seeds[0])).powi(2)).collect();
            while seeds.len() < k {
                let total: f64 = weight.iter().sum();
                let next = if total > 0.0 {
                    let target = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = None;
                    for (x, &w) in weight.iter().enumerate() {
                        if w > 0.0 {
                            acc += w;
                            pick = Some(x);
                            if acc > target {
                                break;
                            }
                        }
                    }
                    pick.expect("positive total weight")
                } else {
                    (0..n).find(|x| !seeds.contains(x)).expect("k <= n")
                };
                seeds.push(next);
                for (x, w) in weight.iter_mut().enumerate() {
                    *w = w.min(dist.eval(ds.point(x), ds.point(next)).powi(2));
                }
            }
            let mut assign: Vec<usize> = (0..n)
                .map(|x| {
                    let mut best = 0;
                    let mut best_d = dist.eval(ds.point(x), ds.point(seeds[0]));
                    for (c, &s) in seeds.iter().enumerate().skip(1) {
                        let d = dist.eval(ds.point(x), ds.point(s));
                        if d < best_d {
                            best = c;
                            best_d = d;
                        }
                    }
                    best
                })
                .collect();
            for (c, &s) in seeds.iter().enumerate() {
                assign[s] = c;
            }
            assign
        }
    }
}

/// Member lists (ascending) for an assignment vector.
pub fn members_of(assign: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (x, &c) in assign.iter().enumerate() {
        members[c].push(x);
    }
    members
}

/// Coordinate-wise mean of the member points.
pub fn compute_center(ds: &Dataset, members: &[usize]) -> Option<Vec<f64>> {
    mean_of(ds.dim(), members.iter().map(|&i| ds.point(i)))
}

/// Largest member distance to `center`; `None` for an empty member set.
pub fn compute_radius(
    ds: &Dataset,
    members: &[usize],
    center: &[f64],
    dist: &dyn Distance,
) -> Option<f64> {
    members
        .iter()
        .map(|&i| dist.eval(ds.point(i), center))
        .reduce(f64::max)
}

/// `true` when cluster `j` is a neighbour of a cluster with the given radius.
pub fn is_neighbor(center_distance: f64, radius: f64) -> bool {
    center_distance < 2.0 * radius
}

fn sort_neighbors(neighbors: &mut [Neighbor]) {
    neighbors.sort_by(|a, b| {
        a.center_distance
            .total_cmp(&b.center_distance)
            .then(a.index.cmp(&b.index))
    });
}

/// Neighbours of cluster `i` by direct evaluation of every centre distance.
pub fn neighbors(clusters: &[BallCluster], i: usize, dist: &dyn Distance) -> Vec<Neighbor> {
    let ci = &clusters[i];
    let mut out: Vec<Neighbor> = clusters
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .filter_map(|(j, cj)| {
            let d = dist.eval(&ci.center, &cj.center);
            is_neighbor(d, ci.radius).then_some(Neighbor { index: j, center_distance: d })
        })
        .collect();
    sort_neighbors(&mut out);
    out
}

/// Stable radius from a neighbour list: half the smallest centre distance.
pub fn stable_radius(neighbors: &[Neighbor]) -> Option<f64> {
    neighbors
        .iter()
        .map(|n| n.center_distance)
        .reduce(f64::min)
        .map(|d| 0.5 * d)
}

/// Stable radius of cluster `i` from its installed neighbour list.
pub fn stable_region(clusters: &[BallCluster], i: usize) -> Option<f64> {
    stable_radius(&clusters[i].neighbors)
}

/// Annulus boundaries from a sorted neighbour list.
pub fn annular_boundaries(sorted: &[Neighbor]) -> Vec<f64> {
    sorted.iter().map(|n| 0.5 * n.center_distance).collect()
}

/// Region for a member at `distance_to_center`: stable up to the first
/// boundary (inclusive), then annulus `m` for `b_m < d <= b_{m+1}`.
pub fn region_of(distance_to_center: f64, boundaries: &[f64]) -> Region {
    let m = boundaries.partition_point(|&b| b < distance_to_center);
    if m == 0 {
        Region::Stable
    } else {
        Region::Annulus(m)
    }
}

/// Members of one cluster split into the stable region and the annuli.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnularRegions {
    pub boundaries: Vec<f64>,
    pub stable: Vec<usize>,
    /// `annuli[m - 1]` holds the members of annulus `m`.
    pub annuli: Vec<Vec<usize>>,
}

pub fn annular_regions(
    ds: &Dataset,
    clusters: &[BallCluster],
    i: usize,
    dist: &dyn Distance,
) -> AnnularRegions {
    let c = &clusters[i];
    let mut out = AnnularRegions {
        boundaries: c.annuli.clone(),
        stable: Vec::new(),
        annuli: vec![Vec::new(); c.annuli.len()],
    };
    for &x in &c.members {
        match c.region_of(dist.eval(ds.point(x), &c.center)) {
            Region::Stable => out.stable.push(x),
            Region::Annulus(m) => out.annuli[m - 1].push(x),
        }
    }
    out
}

/// Skips the centre distance `σ(c_i, c_j)` when the previous centre
/// distance (or any lower bound of it) is at least `2 r_i + δ_i + δ_j`.
/// A `true` result means `j` cannot be a neighbour of `i` this iteration.
pub fn prune_neighbor_check(
    previous_center_distance: f64,
    radius_i: f64,
    shift_i: f64,
    shift_j: f64,
) -> bool {
    previous_center_distance >= 2.0 * radius_i + shift_i + shift_j
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reassignment {
    pub assignment: Vec<usize>,
    pub regions: Vec<Region>,
    pub moves: Vec<Move>,
    pub distance_computations: u64,
}

/// Reassigns every point using only the candidates its region allows.
///
/// `own_distances[x]` must hold σ(x, c) for the centre of the cluster
/// containing `x`. Stable points are not touched. A point in annulus `m`
/// is compared against its own centre and the first `m` neighbours.
pub fn reassign(
    ds: &Dataset,
    clusters: &[BallCluster],
    own_distances: &[f64],
    dist: &dyn Distance,
) -> Reassignment {
    let n = ds.len();
    let mut owner = vec![0usize; n];
    for (c, cl) in clusters.iter().enumerate() {
        for &x in &cl.members {
            owner[x] = c;
        }
    }
    let decide = |x: usize| -> (usize, Region, u64) {
        let cur = owner[x];
        let cl = &clusters[cur];
        let d_own = own_distances[x];
        match cl.region_of(d_own) {
            Region::Stable => (cur, Region::Stable, 0),
            Region::Annulus(m) => {
                let mut candidates: Vec<usize> = cl.neighbors[..m].iter().map(|n| n.index).collect();
                candidates.sort_unstable();
                let mut best = cur;
                let mut best_d = d_own;
                for &j in &candidates {
                    let d = dist.eval(ds.point(x), &clusters[j].center);
                    if d < best_d {
                        best = j;
                        best_d = d;
                    }
                }
                (best, Region::Annulus(m), m as u64)
            }
        }
    };
    let decisions: Vec<(usize, Region, u64)> = (0..n)
        .into_par_iter()
        .with_min_len(PAR_CHUNK)
        .map(decide)
        .collect();

    let mut out = Reassignment {
        assignment: Vec::with_capacity(n),
        regions: Vec::with_capacity(n),
        moves: Vec::new(),
        distance_computations: 0,
    };
    for (x, (to, region, count)) in decisions.into_iter().enumerate() {
        if to != owner[x] {
            out.moves.push(Move { point: x, from: owner[x], to });
        }
        out.assignment.push(to);
        out.regions.push(region);
        out.distance_computations += count;
    }
    out
}

/// Lloyd's decision for one point: stay unless another centre is strictly
/// closer, lowest index among the strictly closest. Costs `k` evaluations.
pub fn lloyd_decision(
    point: &[f64],
    current: usize,
    centers: &[Vec<f64>],
    dist: &dyn Distance,
) -> usize {
    let mut best = current;
    let mut best_d = dist.eval(point, &centers[current]);
    for (j, c) in centers.iter().enumerate() {
        if j == current {
            continue;
        }
        let d = dist.eval(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Refills empty clusters: each empty cluster (ascending) adopts the point
/// of the currently largest cluster that is farthest from that cluster's
/// centre. Ties go to the lowest cluster index, then the lowest point index.
fn repair_empty(
    ds: &Dataset,
    assign: &mut [usize],
    centers: &[Vec<f64>],
    dist: &dyn Distance,
) -> (Vec<Move>, u64) {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for &c in assign.iter() {
        sizes[c] += 1;
    }
    let mut repairs = Vec::new();
    let mut count = 0;
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
        let mut far: Option<(usize, f64)> = None;
        for (x, _) in assign.iter().enumerate().filter(|&(_, &c)| c == largest) {
            let d = dist.eval(ds.point(x), &centers[largest]);
            count += 1;
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((x, d));
            }
        }
        let (x, _) = far.expect("largest cluster is non-empty");
        assign[x] = empty;
        sizes[largest] -= 1;
        sizes[empty] += 1;
        repairs.push(Move { point: x, from: largest, to: empty });
    }
    (repairs, count)
}

fn centers_of(ds: &Dataset, members: &[Vec<usize>]) -> Result<Vec<Vec<f64>>, BkmError> {
    members
        .iter()
        .enumerate()
        .map(|(i, m)| compute_center(ds, m).ok_or(BkmError::EmptyCluster(i)))
        .collect()
}

fn finish(
    ds: &Dataset,
    assignments: Vec<usize>,
    k: usize,
    iterations: usize,
    converged: bool,
    dist: &dyn Distance,
) -> Result<Clustering, BkmError> {
    let members = members_of(&assignments, k);
    let centers = centers_of(ds, &members)?;
    let radii = members
        .iter()
        .zip(&centers)
        .map(|(m, c)| compute_radius(ds, m, c, dist).unwrap_or(0.0))
        .collect();
    Ok(Clustering { assignments, centers, radii, iterations, converged })
}

/// Centre distances carried between iterations: exact values where they
/// were computed, otherwise lower bounds shrunk by the centre shifts.
struct CenterBounds {
    centers: Vec<Vec<f64>>,
    bound: Vec<Vec<f64>>,
    exact: Vec<Vec<bool>>,
}

/// Runs ball k-means until an iteration moves no point or `max_iter` is reached.
pub fn run(ds: &Dataset, cfg: &BkmConfig) -> Result<(Clustering, RunStats), BkmError> {
    run_observed(ds, cfg, &mut Silent)
}

pub fn run_observed(
    ds: &Dataset,
    cfg: &BkmConfig,
    observer: &mut dyn Observer,
) -> Result<(Clustering, RunStats), BkmError> {
    cfg.validate(ds.len())?;
    let n = ds.len();
    let k = cfg.k;
    let dist = &*cfg.distance;
    let mut assign = init_assignment(ds, cfg);
    let mut stats = RunStats::default();
    let mut carried: Option<CenterBounds> = None;
    let mut changed = vec![true; k];
    let mut own = vec![0.0f64; n];
    let mut converged = false;

    for iteration in 1..=cfg.max_iter {
        stats.iterations = iteration;
        let mut evals = 0u64;
        let members = members_of(&assign, k);
        let centers = centers_of(ds, &members)?;

        // Unchanged clusters keep bit-identical centres: zero shift, and their
        // cached member distances stay valid. Other shifts are computed only
        // when a pruning test needs them.
        let mut shifts: Vec<Option<f64>> =
            changed.iter().map(|&c| if c && carried.is_some() { None } else { Some(0.0) }).collect();

        let mut radii = vec![0.0f64; k];
        for i in 0..k {
            if changed[i] {
                for &x in &members[i] {
                    own[x] = dist.eval(ds.point(x), &centers[i]);
                }
                evals += members[i].len() as u64;
            }
            radii[i] = members[i].iter().map(|&x| own[x]).fold(0.0, f64::max);
        }

        let mut current: Vec<Vec<Option<f64>>> = vec![vec![None; k]; k];
        let mut prunings = Vec::new();
        let mut neighbor_lists = vec![Vec::new(); k];
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let d = match (current[i][j], &carried) {
                    (Some(d), _) => Some(d),
                    (None, Some(prev)) if prev.exact[i][j] && !changed[i] && !changed[j] => {
                        let d = prev.bound[i][j];
                        current[i][j] = Some(d);
                        current[j][i] = Some(d);
                        Some(d)
                    }
                    (None, carried) => {
                        let pruned = match carried {
                            Some(prev) if prev.bound[i][j] >= 2.0 * radii[i] => {
                                for c in [i, j] {
                                    if shifts[c].is_none() {
                                        evals += 1;
                                        shifts[c] = Some(dist.eval(&centers[c], &prev.centers[c]));
                                    }
                                }
                                prune_neighbor_check(
                                    prev.bound[i][j],
                                    radii[i],
                                    shifts[i].unwrap(),
                                    shifts[j].unwrap(),
                                )
                            }
                            _ => false,
                        };
                        if pruned {
                            prunings.push((i, j));
                            None
                        } else {
                            evals += 1;
                            let d = dist.eval(&centers[i], &centers[j]);
                            current[i][j] = Some(d);
                            current[j][i] = Some(d);
                            Some(d)
                        }
                    }
                };
                if let Some(d) = d {
                    if is_neighbor(d, radii[i]) {
                        neighbor_lists[i].push(Neighbor { index: j, center_distance: d });
                    }
                }
            }
        }
        stats.prunings_fired += prunings.len() as u64;

        let clusters: Vec<BallCluster> = neighbor_lists
            .into_iter()
            .enumerate()
            .map(|(i, nb)| {
                let mut c = BallCluster::new(centers[i].clone(), radii[i], members[i].clone());
                c.set_neighbors(nb);
                c
            })
            .collect();
        stats.isolated_clusters += clusters.iter().filter(|c| c.neighbors.is_empty()).count();

        let re = reassign(ds, &clusters, &own, dist);
        evals += re.distance_computations;
        let reassigned = re.assignment.clone();
        let mut next = re.assignment;
        let (repairs, repair_evals) = repair_empty(ds, &mut next, &centers, dist);
        evals += repair_evals;
        stats.empty_cluster_repairs += repairs.len();

        observer.on_iteration(&IterationRecord {
            iteration,
            before: &assign,
            reassigned: &reassigned,
            after: &next,
            centers: &centers,
            ball: Some(BallDetail {
                clusters: &clusters,
                own_distances: &own,
                regions: &re.regions,
                prunings: &prunings,
                moves: &re.moves,
            }),
        });

        let moved = assign.iter().zip(&next).filter(|(a, b)| a != b).count();
        stats.points_moved_per_iter.push(moved);
        stats.distance_computations_per_iter.push(evals);
        stats.distance_computations += evals;

        let mut next_changed = vec![false; k];
        for (a, b) in assign.iter().zip(&next) {
            if a != b {
                next_changed[*a] = true;
                next_changed[*b] = true;
            }
        }

        let mut bound = vec![vec![0.0; k]; k];
        let mut exact = vec![vec![false; k]; k];
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                match current[i][j] {
                    Some(d) => {
                        bound[i][j] = d;
                        exact[i][j] = true;
                    }
                    None => {
                        let prev = carried.as_ref().expect("pruning requires history");
                        let (si, sj) = (shifts[i].unwrap(), shifts[j].unwrap());
                        bound[i][j] = (prev.bound[i][j] - si - sj).max(0.0);
                        exact[i][j] = prev.exact[i][j] && !changed[i] && !changed[j];
                    }
                }
            }
        }
        carried = Some(CenterBounds { centers: centers.clone(), bound, exact });
        changed = next_changed;
        assign = next;

        if moved == 0 {
            converged = true;
            let clustering = Clustering {
                assignments: assign,
                centers,
                radii,
                iterations: iteration,
                converged,
            };
            return Ok((clustering, stats));
        }
    }

    let clustering = finish(ds, assign, k, stats.iterations, converged, dist)?;
    Ok((clustering, stats))
}

/// Textbook Lloyd iteration with the same seeding, tie rule and repair as [`run`].
pub fn lloyd_run(ds: &Dataset, cfg: &BkmConfig) -> Result<(Clustering, RunStats), BkmError> {
    lloyd_run_observed(ds, cfg, &mut Silent)
}

pub fn lloyd_run_observed(
    ds: &Dataset,
    cfg: &BkmConfig,
    observer: &mut dyn Observer,
) -> Result<(Clustering, RunStats), BkmError> {
    cfg.validate(ds.len())?;
    let n = ds.len();
    let k = cfg.k;
    let dist = &*cfg.distance;
    let mut assign = init_assignment(ds, cfg);
    let mut stats = RunStats::default();

    for iteration in 1..=cfg.max_iter {
        stats.iterations = iteration;
        let members = members_of(&assign, k);
        let centers = centers_of(ds, &members)?;
        let reassigned: Vec<usize> = (0..n)
            .into_par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|x| lloyd_decision(ds.point(x), assign[x], &centers, dist))
            .collect();
        let mut evals = (n * k) as u64;
        let mut next = reassigned.clone();
        let (repairs, repair_evals) = repair_empty(ds, &mut next, &centers, dist);
        evals += repair_evals;
        stats.empty_cluster_repairs += repairs.len();

        observer.on_iteration(&IterationRecord {
            iteration,
            before: &assign,
            reassigned: &reassigned,
            after: &next,
            centers: &centers,
            ball: None,
        });

        let moved = assign.iter().zip(&next).filter(|(a, b)| a != b).count();
        stats.points_moved_per_iter.push(moved);
        stats.distance_computations_per_iter.push(evals);
        stats.distance_computations += evals;
        assign = next;
        if moved == 0 {
            let radii = members
                .iter()
                .zip(&centers)
                .map(|(m, c)| compute_radius(ds, m, c, dist).unwrap_or(0.0))
                .collect();
            let clustering = Clustering {
                assignments: assign,
                centers,
                radii,
                iterations: iteration,
                converged: true,
            };
            return Ok((clustering, stats));
        }
    }
    let clustering = finish(ds, assign, k, stats.iterations, false, dist)?;
    Ok((clustering, stats))
}

/// Points whose own-centre distance is matched exactly by another centre.
/// The hard partition resolves these to the incumbent or lowest index;
/// this report recovers the soft assignment.
pub fn tie_report(ds: &Dataset, clustering: &Clustering, dist: &dyn Distance) -> Vec<Tie> {
    let mut ties = Vec::new();
    for (x, &own) in clustering.assignments.iter().enumerate() {
        let d_own = dist.eval(ds.point(x), &clustering.centers[own]);
        let others: Vec<usize> = clustering
            .centers
            .iter()
            .enumerate()
            .filter(|&(j, c)| j != own && dist.eval(ds.point(x), c) == d_own)
            .map(|(j, _)| j)
            .collect();
        if !others.is_empty() {
            let mut clusters = vec![own];
            clusters.extend(others);
            clusters.sort_unstable();
            ties.push(Tie { point: x, clusters });
        }
    }
    ties
}

/// Sum of squared member distances to their centres.
pub fn within_cluster_ss(ds: &Dataset, assign: &[usize], centers: &[Vec<f64>], dist: &dyn Distance) -> f64 {
    assign
        .iter()
        .enumerate()
        .map(|(x, &c)| dist.eval(ds.point(x), &centers[c]).powi(2))
        .sum()
}

/// A violated guarantee found by [`Auditor`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A stable point whose brute-force nearest centre is another cluster.
    StablePointWouldMove { iteration: usize, point: usize, from: usize, to: usize },
    /// A point moved to a cluster outside its source's neighbour list.
    MoveOutsideNeighbors { iteration: usize, point: usize, from: usize, to: usize },
    /// The brute-force target lies outside the annulus candidate set.
    TargetOutsideCandidates { iteration: usize, point: usize, annulus: usize, target: usize },
    /// A skipped centre distance that was actually below `2 r_i`.
    UnsoundPruning { iteration: usize, i: usize, j: usize, distance: f64, radius: f64 },
    /// Reassignment disagreed with a full argmin over all centres.
    NotExact { iteration: usize, point: usize, got: usize, expected: usize },
    /// A member's region does not match its distance, or regions do not cover the members.
    RegionMismatch { iteration: usize, point: usize },
}

/// Re-checks every iteration of a ball k-means run by brute force.
pub struct Auditor<'a> {
    ds: &'a Dataset,
    dist: &'a dyn Distance,
    pub violations: Vec<Violation>,
    pub prunings_checked: u64,
    pub stable_points_checked: u64,
    pub moves_checked: u64,
    /// Assignment after each iteration, for comparing runs.
    pub trajectory: Vec<Vec<usize>>,
}

impl<'a> Auditor<'a> {
    pub fn new(ds: &'a Dataset, dist: &'a dyn Distance) -> Self {
        Self {
            ds,
            dist,
            violations: Vec::new(),
            prunings_checked: 0,
            stable_points_checked: 0,
            moves_checked: 0,
            trajectory: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Observer for Auditor<'_> {
    fn on_iteration(&mut self, r: &IterationRecord<'_>) {
        self.trajectory.push(r.after.to_vec());
        let it = r.iteration;
        let expected: Vec<usize> = (0..self.ds.len())
            .map(|x| lloyd_decision(self.ds.point(x), r.before[x], r.centers, self.dist))
            .collect();
        for (x, (&got, &want)) in r.reassigned.iter().zip(&expected).enumerate() {
            if got != want {
                self.violations.push(Violation::NotExact { iteration: it, point: x, got, expected: want });
            }
        }
        let Some(ball) = &r.ball else { return };

        for &(i, j) in ball.prunings {
            self.prunings_checked += 1;
            let d = self.dist.eval(&ball.clusters[i].center, &ball.clusters[j].center);
            if d < 2.0 * ball.clusters[i].radius {
                self.violations.push(Violation::UnsoundPruning {
                    iteration: it,
                    i,
                    j,
                    distance: d,
                    radius: ball.clusters[i].radius,
                });
            }
        }

        for (c, cl) in ball.clusters.iter().enumerate() {
            for &x in &cl.members {
                let d = self.dist.eval(self.ds.point(x), &cl.center);
                if d != ball.own_distances[x] || cl.region_of(d) != ball.regions[x] {
                    self.violations.push(Violation::RegionMismatch { iteration: it, point: x });
                }
                match ball.regions[x] {
                    Region::Stable => {
                        self.stable_points_checked += 1;
                        if expected[x] != c {
                            self.violations.push(Violation::StablePointWouldMove {
                                iteration: it,
                                point: x,
                                from: c,
                                to: expected[x],
                            });
                        }
                    }
                    Region::Annulus(m) => {
                        let ok = expected[x] == c
                            || cl.neighbors[..m].iter().any(|n| n.index == expected[x]);
                        if !ok {
                            self.violations.push(Violation::TargetOutsideCandidates {
                                iteration: it,
                                point: x,
                                annulus: m,
                                target: expected[x],
                            });
                        }
                    }
                }
            }
        }
        let covered: usize = ball.clusters.iter().map(|c| c.members.len()).sum();
        if covered != self.ds.len() {
            self.violations.push(Violation::RegionMismatch { iteration: it, point: usize::MAX });
        }

        for mv in ball.moves {
            self.moves_checked += 1;
            if !ball.clusters[mv.from].neighbors.iter().any(|n| n.index == mv.to) {
                self.violations.push(Violation::MoveOutsideNeighbors {
                    iteration: it,
                    point: mv.point,
                    from: mv.from,
                    to: mv.to,
                });
            }
        }
    }
}

/// Records the assignment after every iteration.
#[derive(Debug, Default)]
pub struct Trajectory(pub Vec<Vec<usize>>);

impl Observer for Trajectory {
    fn on_iteration(&mut self, r: &IterationRecord<'_>) {
        self.0.push(r.after.to_vec());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    fn ball(center: f64, radius: f64) -> BallCluster {
        BallCluster::new(vec![center], radius, vec![])
    }

    #[test]
    fn init_examples() {
        let ds = line(&[0.0, 1.0, 2.0, 3.0]);
        for seed in 0..5 {
            let mut parts = init_clusters(&ds, &BkmConfig::new(4).with_seed(seed)).unwrap();
            parts.sort();
            assert_eq!(parts, vec![vec![0], vec![1], vec![2], vec![3]]);
        }
        let ds6 = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let cfg = BkmConfig::new(2).with_seed(7);
        let a = init_clusters(&ds6, &cfg).unwrap();
        assert_eq!(a, init_clusters(&ds6, &cfg).unwrap());
        assert!(a.iter().all(|p| !p.is_empty()));
        assert_eq!(a.iter().map(Vec::len).sum::<usize>(), 6);
        assert_eq!(
            init_clusters(&line(&[0.0, 1.0, 2.0]), &BkmConfig::new(5)),
            Err(BkmError::TooManyClusters { k: 5, n: 3 })
        );
    }

    #[test]
    fn plus_plus_covers_with_duplicates() {
        let ds = line(&[1.0, 1.0, 1.0, 1.0]);
        let parts = init_clusters(&ds, &BkmConfig::new(3).with_init(Init::PlusPlus)).unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts.iter().all(|p| !p.is_empty()));
    }

    #[test]
    fn center_and_radius_examples() {
        let ds = Dataset::new(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 1.0], vec![3.0, 5.0], vec![5.0, 3.0]])
            .unwrap();
        assert_eq!(compute_center(&ds, &[0, 1]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(compute_center(&ds, &[3]).unwrap(), vec![3.0, 5.0]);
        assert_eq!(compute_center(&ds, &[2, 3, 4]).unwrap(), vec![3.0, 3.0]);
        assert_eq!(compute_center(&ds, &[]), None);
        assert_eq!(compute_radius(&ds, &[3], &[3.0, 5.0], &Euclidean), Some(0.0));
        assert_eq!(compute_radius(&ds, &[0, 1], &[1.0, 0.0], &Euclidean), Some(1.0));
    }

    #[test]
    fn neighbor_examples() {
        let cs = vec![ball(0.0, 2.0), ball(3.0, 1.0)];
        assert_eq!(neighbors(&cs, 0, &Euclidean).iter().map(|n| n.index).collect::<Vec<_>>(), vec![1]);
        let cs = vec![ball(0.0, 2.0), ball(5.0, 1.0)];
        assert!(neighbors(&cs, 0, &Euclidean).is_empty());
        let cs = vec![ball(0.0, 0.0), ball(0.0, 1.0)];
        assert!(neighbors(&cs, 0, &Euclidean).is_empty());
    }

    #[test]
    fn stable_region_examples() {
        let n = |index, d| Neighbor { index, center_distance: d };
        assert_eq!(stable_radius(&[n(1, 3.0)]), Some(1.5));
        assert_eq!(stable_radius(&[]), None);
        assert_eq!(stable_radius(&[n(2, 4.0), n(1, 3.0)]), Some(1.5));
        let mut cs = vec![ball(0.0, 5.0), ball(3.0, 1.0), ball(4.0, 1.0)];
        let nb = neighbors(&cs, 0, &Euclidean);
        cs[0].set_neighbors(nb);
        assert_eq!(stable_region(&cs, 0), Some(1.5));
    }

    #[test]
    fn annulus_examples() {
        let n = |index, d| Neighbor { index, center_distance: d };
        let mut c = BallCluster::new(vec![0.0], 2.0, vec![]);
        c.set_neighbors(vec![n(1, 3.0)]);
        assert_eq!(c.region_of(1.0), Region::Stable);
        assert_eq!(c.region_of(1.5), Region::Stable);
        assert_eq!(c.region_of(1.7), Region::Annulus(1));
        assert_eq!(c.region_of(2.0), Region::Annulus(1));

        c.set_neighbors(vec![n(3, 4.0), n(1, 2.0), n(2, 3.0)]);
        assert_eq!(c.annuli, vec![1.0, 1.5, 2.0]);
        assert_eq!(c.region_of(1.4), Region::Annulus(1));
        // boundaries 1.0 < 1.4 <= 1.5 -> the annulus between b_1 and b_2
        assert_eq!(region_of(1.4, &[1.0, 1.5, 2.0]), Region::Annulus(1));
        assert_eq!(region_of(1.6, &[1.0, 1.5, 2.0]), Region::Annulus(2));
        assert_eq!(region_of(2.5, &[1.0, 1.5, 2.0]), Region::Annulus(3));
    }

    #[test]
    fn annular_regions_partition_members() {
        let ds = line(&[0.0, 1.0, 1.6, 2.0, 3.0]);
        let mut cs = vec![
            BallCluster::new(vec![0.0], 2.0, vec![0, 1, 2, 3]),
            BallCluster::new(vec![3.0], 0.0, vec![4]),
        ];
        let nb = neighbors(&cs, 0, &Euclidean);
        cs[0].set_neighbors(nb);
        let ar = annular_regions(&ds, &cs, 0, &Euclidean);
        assert_eq!(ar.stable, vec![0, 1]);
        assert_eq!(ar.annuli, vec![vec![2, 3]]);
    }

    #[test]
    fn prune_examples() {
        assert!(prune_neighbor_check(10.0, 2.0, 0.0, 0.0));
        assert!(prune_neighbor_check(4.0, 2.0, 0.0, 0.0));
        assert!(!prune_neighbor_check(3.9, 2.0, 0.0, 0.0));
        assert!(!prune_neighbor_check(10.0, 2.0, 3.0, 3.5));
    }

    #[test]
    fn reassign_examples() {
        // Two far clusters: no neighbours, everything stable.
        let ds = line(&[0.0, 1.0, 10.0, 11.0]);
        let mut cs = vec![
            BallCluster::new(vec![0.5], 0.5, vec![0, 1]),
            BallCluster::new(vec![10.5], 0.5, vec![2, 3]),
        ];
        for i in 0..2 {
            let nb = neighbors(&cs, i, &Euclidean);
            cs[i].set_neighbors(nb);
        }
        let own = vec![0.5; 4];
        let r = reassign(&ds, &cs, &own, &Euclidean);
        assert!(r.moves.is_empty());
        assert_eq!(r.distance_computations, 0);

        // Point 2 at 4.0 belongs to cluster 0 (centre 2) but is nearer centre 5.
        let ds = line(&[0.0, 2.0, 4.0, 5.0]);
        let mut cs = vec![
            BallCluster::new(vec![2.0], 2.0, vec![0, 1, 2]),
            BallCluster::new(vec![5.0], 0.0, vec![3]),
        ];
        for i in 0..2 {
            let nb = neighbors(&cs, i, &Euclidean);
            cs[i].set_neighbors(nb);
        }
        let own = vec![2.0, 0.0, 2.0, 0.0];
        let r = reassign(&ds, &cs, &own, &Euclidean);
        assert_eq!(r.moves, vec![Move { point: 2, from: 0, to: 1 }]);
        assert_eq!(r.regions[2], Region::Annulus(1));
    }

    #[test]
    fn single_cluster_converges_immediately() {
        let ds = line(&[0.0, 1.0, 5.0]);
        let (c, s) = run(&ds, &BkmConfig::new(1)).unwrap();
        assert_eq!(c.assignments, vec![0, 0, 0]);
        assert_eq!(c.iterations, 1);
        assert!(c.converged);
        assert_eq!(s.isolated_clusters, 1);
        let (l, _) = lloyd_run(&ds, &BkmConfig::new(1)).unwrap();
        assert_eq!(l.assignments, vec![0, 0, 0]);
    }

    #[test]
    fn duplicate_points_match_lloyd() {
        let ds = line(&[1.0, 1.0, 1.0, 4.0, 4.0, 9.0]);
        for seed in 0..20 {
            let cfg = BkmConfig::new(4).with_seed(seed);
            let (b, _) = run(&ds, &cfg).unwrap();
            let (l, _) = lloyd_run(&ds, &cfg).unwrap();
            assert_eq!(b.assignments, l.assignments, "seed {seed}");
        }
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let ds = line(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0, 13.0]);
        let mut any = false;
        for seed in 0..10 {
            let (c, s) = run(&ds, &BkmConfig::new(2).with_seed(seed).with_max_iter(1)).unwrap();
            assert_eq!(s.iterations, 1);
            if s.points_moved_per_iter[0] > 0 {
                assert!(!c.converged);
                any = true;
            }
        }
        assert!(any);
    }

    #[test]
    fn ties_are_reported() {
        let ds = line(&[0.0, 1.0, 2.0]);
        let c = Clustering {
            assignments: vec![0, 0, 1],
            centers: vec![vec![0.0], vec![2.0]],
            radii: vec![1.0, 0.0],
            iterations: 1,
            converged: true,
        };
        assert_eq!(tie_report(&ds, &c, &Euclidean), vec![Tie { point: 1, clusters: vec![0, 1] }]);
    }
}
