//! Novel class discovery: clustering of unknown samples into provisional
//! classes, with automatic cluster-count selection and the assignment
//! solver used to score clusterings against ground truth.

mod discover;
mod hungarian;
mod kmeans;

pub use discover::{
    default_k_max, discover, discover_or_singleton, discover_with, estimate_k, estimate_k_with, silhouette,
    silhouette_with, Discovery,
};
pub use hungarian::hungarian;
pub use kmeans::{inertia_of, kmeans, kmeans_with, ClusterResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
