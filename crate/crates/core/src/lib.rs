//! Decentralized expert-system toolkit for early-stage Alzheimer's prediction.
//!
//! - [`data`]: labeled datasets, CSV ingestion, splitting, synthetic cohorts
//! - [`graph`]: connectivity matrices to degree-centrality features
//! - [`ml`]: scaler, PCA, logistic regression, random forest, metrics
//! - [`featsel`]: sequential forward selection and the accuracy-vs-k curve
//! - [`anomaly`]: isolation-forest tabular gate, reconstruction image gate, certificates
//! - [`ledger`]: append-only hash-chained submission ledger
//! - [`fednet`]: multi-institution federation simulator

pub mod anomaly;
pub mod canonical;
pub mod clock;
pub mod data;
pub mod featsel;
pub mod fednet;
pub mod graph;
pub mod ledger;
pub mod linalg;
pub mod ml;
pub mod rng;
