//! Knowledge-graph initialized factorization machines.
//!
//! The crate trains an order-2 factorization machine whose latent factors are
//! bound one-to-one to explicit knowledge-graph features `(predicate, object)`.
//! Item rows of the trained factor matrix are then used for cosine Item-kNN
//! recommendation, and their alignment with the original features is measured
//! with Semantic Accuracy and Robustness.
//!
//! The pipeline, bottom-up:
//!
//! - [`ingest`]: interaction logs and item triples from flat files, feature
//!   selection (categorical / ontological / factual) and missing-value filtering.
//! - [`profiles`]: normalized TF-IDF item vectors and averaged user profiles.
//! - [`fm`]: factorization machine scoring and feature-aligned initialization.
//! - [`bpr`]: pairwise ranking SGD over sampled `(user, positive, negative)` triples.
//! - [`knn`]: cosine neighbor index and the normalized neighbor-overlap score.
//! - [`baselines`] and [`registry`]: comparison systems behind a common trait.
//! - [`eval`]: hold-out splits, Precision@N and nDCG@N.
//! - [`interpret`]: Semantic Accuracy, Robustness and explanation reports.
//! - [`persist`] and [`pipeline`]: model files and the end-to-end commands.

pub mod baselines;
pub mod bpr;
pub mod config;
pub mod error;
pub mod eval;
pub mod fm;
pub mod ingest;
pub mod interpret;
pub mod knn;
pub mod model;
pub mod persist;
pub mod pipeline;
pub mod profiles;
pub mod registry;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use fm::FmParams;
pub use model::{Dataset, Feature, FeatureRow, FeatureSet, IdMap, Interaction, SparseVector};
