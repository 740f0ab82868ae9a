//! The `granule` command line: clustering, benchmarking and the finite
//! checkers, all reporting JSON.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use granule_core::ball_algebra::{self, AmbientBall, CautiousBall};
use granule_core::ball_kmeans::{self, within_cluster_ss};
use granule_core::existential::{self, AxiomSuite};
use granule_core::granular_ball::{self, GbConfig};
use granule_core::metrics::{self, classify_distance, DistanceKind};
use granule_core::rough_random::{self, XiConstraint};
use granule_core::{BkmConfig, Distance, Init, LabeledDataset, Subset};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub mod input;

use input::{load_csv, parse_partition, parse_vector, LabelColumn};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;
pub const EXIT_EXACTNESS: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "granule", version, about = "Ball k-means, granular balls and granular-computing checkers")]
pub struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ball k-means.
    Cluster(ClusterArgs),
    /// Plain Lloyd iterations with the same seeding.
    Lloyd(ClusterArgs),
    /// Ball k-means against Lloyd: distance counts and partition equality.
    Bench(BenchArgs),
    /// Granular-ball generation on labelled data.
    Gb(GbArgs),
    /// Checks the distance axioms on a sample.
    VerifyMetric(MetricArgs),
    /// Checks the weak laws of the partial ball operations.
    VerifyAlgebra(AlgebraArgs),
    /// Checks a granular operator space against an axiom suite.
    VerifyAxioms(AxiomsArgs),
    /// Approximation-space and rough-random-function demo.
    CrrfDemo(CrrfArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Random,
    Plusplus,
}

impl From<InitArg> for Init {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Random => Init::RandomPartition,
            InitArg::Plusplus => Init::PlusPlus,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// CSV of numeric features.
    pub input: PathBuf,
    /// Label column, by header name or zero-based index.
    #[arg(long)]
    pub labels: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-iter", default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub cluster: ClusterArgs,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Include wall-clock times, which makes the report non-reproducible.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GbArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.95)]
    pub purity: f64,
    #[arg(long = "min-points", default_value_t = 2)]
    pub min_points: usize,
    #[arg(long = "split-k", default_value_t = 2)]
    pub split_k: usize,
    #[arg(long = "max-depth", default_value_t = 16)]
    pub max_depth: usize,
    /// Split heterogeneously overlapping balls after generation.
    #[arg(long)]
    pub overlap: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Plusplus)]
    pub init: InitArg,
    /// Held-out labelled CSV (same label column) for accuracy.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MetricArgs {
    /// CSV sample of points.
    pub input: PathBuf,
    /// Column to ignore, by header name or zero-based index.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    #[arg(long, default_value_t = metrics::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AlgebraArgs {
    /// Ball centre, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub center: String,
    #[arg(long)]
    pub radius: f64,
    /// CSV of the finite point set V. Defaults to the centre and the
    /// half and full radius offsets along each axis.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Scalar grid, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AxiomsArgs {
    /// System file in the tabular text format.
    #[arg(long, conflicts_with = "partition")]
    pub system: Option<PathBuf>,
    /// Build a set system from blocks such as `0,1|2`.
    #[arg(long, requires = "n")]
    pub partition: Option<String>,
    /// Universe size for `--partition`.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value = "ggs")]
    pub suite: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CrrfArgs {
    /// Partition blocks such as `0,1|2`, over `--n` elements.
    #[arg(long, requires = "n", conflicts_with = "input")]
    pub partition: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// CSV to cluster; the trace follows a ball k-means run.
    #[arg(long, requires = "k")]
    pub input: Option<PathBuf>,
    /// Column of `--input` to ignore, by header name or zero-based index.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-iter", default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
}

/// Everything that determines a report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 over the input files, in argument order.
    pub input_digest: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub manifest: RunManifest,
    pub passed: bool,
    pub result: serde_json::Value,
}

#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "input error: {e:#}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
}

fn input_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Input(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn bkm_err(e: granule_core::BkmError) -> CliError {
    use granule_core::BkmError::*;
    match e {
        ZeroK | TooManyClusters { .. } | ZeroMaxIter => input_err(e),
        EmptyCluster(_) => runtime_err(e),
    }
}

fn digest(paths: &[&Path]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display())).map_err(input_err)?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn manifest<T: Serialize>(command: &str, paths: &[&Path], seed: Option<u64>, config: &T) -> Result<RunManifest, CliError> {
    Ok(RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        input_digest: digest(paths)?,
        seed,
        config: serde_json::to_value(config).map_err(runtime_err)?,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(runtime_err)
}

fn distance(name: &str) -> Result<Arc<dyn Distance>, CliError> {
    metrics::builtin(name).ok_or_else(|| input_err(anyhow!("unknown distance `{name}`")))
}

fn load(data: &DataArgs) -> Result<LabeledDataset, CliError> {
    load_csv(&data.input, data.labels.as_deref().map(LabelColumn::parse).as_ref()).map_err(input_err)
}

fn bkm_config(a: &ClusterArgs) -> Result<BkmConfig, CliError> {
    Ok(BkmConfig::new(a.k)
        .with_seed(a.seed)
        .with_max_iter(a.max_iter)
        .with_init(a.init.into())
        .with_distance(distance(&a.distance)?))
}

#[derive(Serialize)]
struct ClusterResult<'a> {
    clustering: &'a granule_core::Clustering,
    stats: &'a granule_core::RunStats,
    within_cluster_ss: f64,
}

fn cluster(a: &ClusterArgs, lloyd: bool) -> Result<Outcome, CliError> {
    let ds = load(&a.data)?;
    let cfg = bkm_config(a)?;
    let (c, stats) = if lloyd {
        ball_kmeans::lloyd_run(&ds.points, &cfg)
    } else {
        ball_kmeans::run(&ds.points, &cfg)
    }
    .map_err(bkm_err)?;
    let wss = within_cluster_ss(&ds.points, &c.assignments, &c.centers, &*cfg.distance);
    let command = if lloyd { "lloyd" } else { "cluster" };
    let report = Report {
        manifest: manifest(command, &[&a.data.input], Some(a.seed), a)?,
        passed: true,
        result: to_json(&ClusterResult { clustering: &c, stats: &stats, within_cluster_ss: wss })?,
    };
    Ok(Outcome { report, exit_code: EXIT_OK })
}

#[derive(Serialize)]
struct Counts {
    iterations: usize,
    converged: bool,
    distance_computations: u64,
    distance_computations_per_iter: Vec<u64>,
    prunings_fired: u64,
    empty_cluster_repairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<f64>,
}

#[derive(Serialize)]
struct BenchRun {
    repeat: usize,
    bkm: Counts,
    lloyd: Counts,
    partitions_equal: bool,
    bkm_to_lloyd: f64,
}

fn counts(c: &granule_core::Clustering, s: &granule_core::RunStats, wall: Option<f64>) -> Counts {
    Counts {
        iterations: s.iterations,
        converged: c.converged,
        distance_computations: s.distance_computations,
        distance_computations_per_iter: s.distance_computations_per_iter.clone(),
        prunings_fired: s.prunings_fired,
        empty_cluster_repairs: s.empty_cluster_repairs,
        wall_ms: wall,
    }
}

fn bench(a: &BenchArgs) -> Result<Outcome, CliError> {
    if a.repeats == 0 {
        return Err(input_err(anyhow!("--repeats must be at least 1")));
    }
    let ds = load(&a.cluster.data)?;
    let cfg = bkm_config(&a.cluster)?;
    let mut runs = Vec::new();
    let mut exact = true;
    for repeat in 0..a.repeats {
        let t0 = Instant::now();
        let (bc, bs) = ball_kmeans::run(&ds.points, &cfg).map_err(bkm_err)?;
        let bt = t0.elapsed().as_secs_f64() * 1e3;
        let t0 = Instant::now();
        let (lc, ls) = ball_kmeans::lloyd_run(&ds.points, &cfg).map_err(bkm_err)?;
        let lt = t0.elapsed().as_secs_f64() * 1e3;
        let equal = bc.partition() == lc.partition();
        exact &= equal;
        runs.push(BenchRun {
            repeat,
            partitions_equal: equal,
            bkm_to_lloyd: bs.distance_computations as f64 / ls.distance_computations.max(1) as f64,
            bkm: counts(&bc, &bs, a.timing.then_some(bt)),
            lloyd: counts(&lc, &ls, a.timing.then_some(lt)),
        });
    }
    let report = Report {
        manifest: manifest("bench", &[&a.cluster.data.input], Some(a.cluster.seed), a)?,
        passed: exact,
        result: to_json(&runs)?,
    };
    Ok(Outcome { report, exit_code: if exact { EXIT_OK } else { EXIT_EXACTNESS } })
}

#[derive(Serialize)]
struct GbResult {
    report: granular_ball::GbReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_accuracy: Option<f64>,
}

fn gb(a: &GbArgs) -> Result<Outcome, CliError> {
    if a.data.labels.is_none() {
        return Err(input_err(anyhow!("gb needs --labels")));
    }
    let ds = load(&a.data)?;
    let cfg = GbConfig {
        purity_threshold: a.purity,
        min_points: a.min_points,
        split_k: a.split_k,
        max_depth: a.max_depth,
        overlap_resolution: a.overlap,
        seed: a.seed,
        init: a.init.into(),
        ..GbConfig::default()
    };
    cfg.validate().map_err(input_err)?;
    let report = granular_ball::generate(&ds, &cfg).map_err(runtime_err)?;
    let mut paths: Vec<&Path> = vec![&a.data.input];
    let test_accuracy = match &a.test {
        None => None,
        Some(path) => {
            paths.push(path);
            let test = load_csv(path, a.data.labels.as_deref().map(LabelColumn::parse).as_ref()).map_err(input_err)?;
            let mut right = 0usize;
            let mut total = 0usize;
            for i in 0..test.len() {
                if let Some(truth) = test.labels[i] {
                    let got = granular_ball::classify(&report.balls, test.points.point(i), &*cfg.distance)
                        .map_err(runtime_err)?;
                    total += 1;
                    right += usize::from(got == truth);
                }
            }
            Some(if total == 0 { 0.0 } else { right as f64 / total as f64 })
        }
    };
    let report = Report {
        manifest: manifest("gb", &paths, Some(a.seed), a)?,
        passed: true,
        result: to_json(&GbResult { report, test_accuracy })?,
    };
    Ok(Outcome { report, exit_code: EXIT_OK })
}

#[derive(Serialize)]
struct MetricResult {
    distance: String,
    declared: DistanceKind,
    consistent_with_declared: bool,
    report: metrics::AxiomReport,
}

fn declared_ok(kind: DistanceKind, r: &metrics::AxiomReport) -> bool {
    match kind {
        DistanceKind::General => true,
        DistanceKind::Pseudometric => r.pseudo_identity && r.symmetry && r.triangle,
        DistanceKind::Semimetric => r.identity && r.symmetry,
        DistanceKind::Metric => r.identity && r.symmetry && r.triangle,
        DistanceKind::QuasiMetric => r.identity && r.triangle,
        DistanceKind::WeakQuasiMetric { .. } => r.identity && r.k_triangle.holds,
    }
}

fn verify_metric(a: &MetricArgs) -> Result<Outcome, CliError> {
    let ds = load_csv(&a.input, a.labels.as_deref().map(LabelColumn::parse).as_ref()).map_err(input_err)?;
    let dist = distance(&a.distance)?;
    let report = classify_distance(&*dist, ds.points.points(), a.tol).map_err(input_err)?;
    let ok = declared_ok(dist.kind(), &report);
    let result = MetricResult {
        distance: dist.name().to_string(),
        declared: dist.kind(),
        consistent_with_declared: ok,
        report,
    };
    let report = Report {
        manifest: manifest("verify-metric", &[&a.input], None, a)?,
        passed: ok,
        result: to_json(&result)?,
    };
    Ok(Outcome { report, exit_code: if ok { EXIT_OK } else { EXIT_VERIFY_FAILED } })
}

fn default_points(center: &[f64], radius: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![center.to_vec()];
    for axis in 0..center.len() {
        for s in [-1.0, -0.5, 0.5, 1.0] {
            let mut p = center.to_vec();
            p[axis] += s * radius;
            pts.push(p);
        }
    }
    let zero = vec![0.0; center.len()];
    if !pts.contains(&zero) {
        pts.push(zero);
    }
    pts
}

fn verify_algebra(a: &AlgebraArgs) -> Result<Outcome, CliError> {
    let center = parse_vector(&a.center).map_err(input_err)?;
    let ambient = AmbientBall::new(center.clone(), a.radius).map_err(input_err)?;
    let mut paths: Vec<&Path> = Vec::new();
    let v = match &a.points {
        Some(p) => {
            paths.push(p);
            load_csv(p, None).map_err(input_err)?.points.points().to_vec()
        }
        None => default_points(&center, a.radius),
    };
    let grid = match &a.grid {
        Some(g) => parse_vector(g).map_err(input_err)?,
        None => ball_algebra::DEFAULT_GRID.to_vec(),
    };
    let cautious = CautiousBall::new(ambient.clone(), v).map_err(input_err)?;
    let laws = ball_algebra::verify_laws(&ambient, &cautious, &grid);
    let ok = laws.all_hold();
    let report = Report {
        manifest: manifest("verify-algebra", &paths, None, a)?,
        passed: ok,
        result: to_json(&laws)?,
    };
    Ok(Outcome { report, exit_code: if ok { EXIT_OK } else { EXIT_VERIFY_FAILED } })
}

fn verify_axioms(a: &AxiomsArgs) -> Result<Outcome, CliError> {
    let suite = AxiomSuite::by_name(&a.suite).ok_or_else(|| {
        input_err(anyhow!("unknown suite `{}` (mash, ggs, pre-ggs, pre-star-ggs)", a.suite))
    })?;
    let mut paths: Vec<&Path> = Vec::new();
    let sys = match (&a.system, &a.partition) {
        (Some(path), _) => {
            paths.push(path);
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(input_err)?;
            existential::parse_system(&text).map_err(input_err)?
        }
        (None, Some(blocks_text)) => {
            let n = a.n.expect("clap enforces --n");
            let blocks = parse_partition(blocks_text, n).map_err(input_err)?;
            existential::build_set_hgos(n, &blocks).map_err(input_err)?.0
        }
        (None, None) => return Err(input_err(anyhow!("give --system or --partition"))),
    };
    let report = existential::check_mash(&sys, &suite).map_err(input_err)?;
    let ok = report.all_hold();
    let report = Report {
        manifest: manifest("verify-axioms", &paths, None, a)?,
        passed: ok,
        result: to_json(&report)?,
    };
    Ok(Outcome { report, exit_code: if ok { EXIT_OK } else { EXIT_VERIFY_FAILED } })
}

#[derive(Serialize)]
struct WrapperSummary {
    name: String,
    defined: usize,
    domain: usize,
    valid: bool,
    violation: Option<String>,
    wrapper: rough_random::CrrfWrapper,
}

#[derive(Serialize)]
struct PartitionDemo {
    blocks: Vec<Subset>,
    axioms: rough_random::ApproxReport,
    pawlak_violation: Option<Subset>,
    approximations: Vec<Subset>,
    e1: Vec<rough_random::RoughPair>,
    xi: Vec<WrapperSummary>,
}

fn summarize(w: rough_random::CrrfWrapper) -> WrapperSummary {
    let violation = w.validate().err().map(|e| e.to_string());
    WrapperSummary {
        name: w.name.clone(),
        defined: w.entries.len(),
        domain: w.domain.len(),
        valid: violation.is_none(),
        violation,
        wrapper: w,
    }
}

fn crrf_demo(a: &CrrfArgs) -> Result<Outcome, CliError> {
    if let Some(blocks_text) = &a.partition {
        let n = a.n.expect("clap enforces --n");
        let blocks = parse_partition(blocks_text, n).map_err(input_err)?;
        let space = rough_random::pawlak(n, &blocks).map_err(input_err)?;
        let axioms = rough_random::check_approx_axioms(&space);
        let approximations = rough_random::approximation_set(&space).map_err(input_err)?;
        let mut xi = Vec::new();
        for variant in 1..=3 {
            xi.push(summarize(rough_random::xi_functions(&space, variant, XiConstraint::None).map_err(runtime_err)?));
        }
        xi.push(summarize(rough_random::xi5_wrapper(&space, &blocks).map_err(runtime_err)?));
        let demo = PartitionDemo {
            pawlak_violation: rough_random::check_pawlak_properties(&space).map_err(runtime_err)?,
            e1: rough_random::e1(&space).map_err(runtime_err)?,
            blocks,
            axioms,
            approximations,
            xi,
        };
        let ok = demo.axioms.all_hold() && demo.xi.iter().all(|w| w.valid);
        let report = Report { manifest: manifest("crrf-demo", &[], None, a)?, passed: ok, result: to_json(&demo)? };
        return Ok(Outcome { report, exit_code: if ok { EXIT_OK } else { EXIT_VERIFY_FAILED } });
    }
    let Some(path) = &a.input else {
        return Err(input_err(anyhow!("give --partition or --input")));
    };
    let ds = load_csv(path, a.labels.as_deref().map(LabelColumn::parse).as_ref()).map_err(input_err)?;
    let cfg = BkmConfig::new(a.k.expect("clap enforces --k"))
        .with_seed(a.seed)
        .with_max_iter(a.max_iter)
        .with_init(a.init.into());
    let trace = rough_random::bkm_crrf3_trace(&ds.points, &cfg).map_err(|e| match e {
        rough_random::RoughError::Bkm(b) => bkm_err(b),
        other => input_err(other),
    })?;
    let ok = trace.entries.iter().all(|e| e.axioms.all_hold() && e.update.validate().is_ok())
        && trace.entries.last().is_some_and(|e| e.fixed_point);
    let report = Report { manifest: manifest("crrf-demo", &[path], Some(a.seed), a)?, passed: ok, result: to_json(&trace)? };
    Ok(Outcome { report, exit_code: if ok { EXIT_OK } else { EXIT_VERIFY_FAILED } })
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Cluster(a) => cluster(a, false),
        Command::Lloyd(a) => cluster(a, true),
        Command::Bench(a) => bench(a),
        Command::Gb(a) => gb(a),
        Command::VerifyMetric(a) => verify_metric(a),
        Command::VerifyAlgebra(a) => verify_algebra(a),
        Command::VerifyAxioms(a) => verify_axioms(a),
        Command::CrrfDemo(a) => crrf_demo(a),
    }
}

/// Pretty JSON with a trailing newline.
pub fn render(report: &Report) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(report).map_err(runtime_err)?;
    s.push('\n');
    Ok(s)
}

/// Applies `GRANULE_THREADS` to the global rayon pool.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("GRANULE_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| anyhow!("GRANULE_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        bail!("GRANULE_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}
