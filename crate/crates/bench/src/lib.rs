//! Synthetic fixtures shared by the benchmarks and the acceptance suite.

use granule_core::existential::{build_set_hgos, Axiom, FinitePartialSystem};
use granule_core::{Dataset, LabeledDataset, Subset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `clusters` isotropic Gaussian blobs of `per_cluster` points in `dim`
/// dimensions. Centres are `spacing` apart on the first axis and random on the others.
pub fn blobs(clusters: usize, per_cluster: usize, dim: usize, spacing: f64, seed: u64) -> Dataset {
    labeled_blobs(clusters, per_cluster, dim, spacing, seed).points
}

/// [`blobs`] with each point labelled by its blob.
pub fn labeled_blobs(clusters: usize, per_cluster: usize, dim: usize, spacing: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|c| {
            (0..dim)
                .map(|a| if a == 0 { c as f64 * spacing } else { rng.random_range(-spacing..spacing) })
                .collect()
        })
        .collect();
    let mut points = Vec::with_capacity(clusters * per_cluster);
    let mut labels = Vec::with_capacity(clusters * per_cluster);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            points.push(c.iter().map(|&m| m + noise.sample(&mut rng)).collect::<Vec<f64>>());
            labels.push(Some(label as i64));
        }
    }
    LabeledDataset::new(Dataset::new(points).expect("finite blobs"), labels).expect("one label per point")
}

/// Uniform points in the unit cube.
pub fn uniform(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::new((0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect())
        .expect("finite points")
}

/// Random Gaussian mixture with `n` in 50..=500, `d` in 2..=8 and a
/// suggested `k` in 2..=10, all drawn from `seed`.
pub fn random_instance(seed: u64) -> (Dataset, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(50..=500);
    let d = rng.random_range(2..=8);
    let k = rng.random_range(2..=10);
    let blobs = rng.random_range(1..=10);
    let sd = rng.random_range(0.5..3.0);
    let centers: Vec<Vec<f64>> =
        (0..blobs).map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
    let noise = Normal::new(0.0, sd).expect("positive sd");
    let points = (0..n)
        .map(|i| centers[i % blobs].iter().map(|m| m + noise.sample(&mut rng)).collect())
        .collect();
    (Dataset::new(points).expect("finite points"), k)
}

pub struct BenchInstance {
    pub name: String,
    pub data: Dataset,
    pub k: usize,
    /// Well-separated blobs with `k` equal to the number of blobs.
    pub separated: bool,
}

/// Fixed instances for comparing distance counts.
pub fn benchmark_suite() -> Vec<BenchInstance> {
    let mut out = Vec::new();
    for k in [5usize, 8, 10, 16] {
        for d in [2usize, 4, 8] {
            out.push(BenchInstance {
                name: format!("blobs k={k} d={d}"),
                data: blobs(k, 100, d, 10.0, (k * 31 + d) as u64),
                k,
                separated: true,
            });
        }
    }
    for k in [4usize, 8, 16] {
        for d in [2usize, 4] {
            out.push(BenchInstance {
                name: format!("uniform k={k} d={d}"),
                data: uniform(2000, d, (k * 7 + d) as u64),
                k,
                separated: false,
            });
        }
    }
    for k in [3usize, 6] {
        out.push(BenchInstance {
            name: format!("overlapping k={k} d=3"),
            data: blobs(k, 200, 3, 2.0, k as u64),
            k,
            separated: false,
        });
    }
    out
}

/// Set system of the two-atom partition of `{0, 1}`. Element index is the
/// bitmask, so 1 and 2 are the atoms and 3 the top.
fn two_atoms() -> FinitePartialSystem {
    let blocks = [Subset::from_indices(2, [0]), Subset::from_indices(2, [1])];
    build_set_hgos(2, &blocks).expect("covering partition").0
}

/// Hand-made systems, each breaking exactly one axiom of the full suite.
pub fn violating_fixtures() -> Vec<(Axiom, &'static str, FinitePartialSystem)> {
    let mut out = Vec::new();

    let mut s = two_atoms();
    s.parthood[1][0] = true;
    out.push((Axiom::PT2, "an atom and the bottom are parts of each other", s));

    let mut s = two_atoms();
    s.order[0][0] = false;
    out.push((Axiom::G5, "order irreflexive at the bottom", s));

    let mut s = two_atoms();
    s.lower[1] = 3;
    out.push((Axiom::UL1Lower, "an atom's lower approximation is the top", s));

    let mut s = two_atoms();
    s.lower[1] = 0;
    out.push((Axiom::LS, "an atom's lower approximation drops the atom", s));

    let mut s = two_atoms();
    s.granule[2] = false;
    out.push((Axiom::WRA, "one block missing from the granulation", s));

    let mut s = two_atoms();
    s.granule[3] = true;
    out.push((Axiom::FU, "the top is a granule, so nothing properly contains it", s));

    out
}
