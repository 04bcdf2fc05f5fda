//! Dimensionality reduction and clustering for the cluster-and-probe pipeline.

mod kmeans;
mod tsne;

pub use kmeans::{kmeans, KmeansConfig, KmeansResult};
pub use tsne::{conditional_probabilities, embedding_csv, joint_probabilities, tsne_embed, tsne_run, TsneConfig, TsneResult, PERPLEXITY_TOL};
