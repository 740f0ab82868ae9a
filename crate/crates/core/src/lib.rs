//! Ball k-means clustering, granular-ball classification, generalized
//! distances, and finite checkers for partial algebras on balls, granular
//! operator spaces and rough approximation spaces.

pub mod ball_algebra;
pub mod ball_kmeans;
pub mod dataset;
pub mod existential;
pub mod granular_ball;
pub mod metrics;
pub mod rough_random;
pub mod subset;

pub use ball_kmeans::{BkmConfig, BkmError, Clustering, Init, RunStats};
pub use dataset::{Dataset, DatasetError, LabeledDataset};
pub use metrics::{Distance, DistanceKind, Euclidean};
pub use subset::Subset;
