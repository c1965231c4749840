//! Labeled datasets: types, CSV ingestion, splitting and the synthetic cohort generator.

mod csv_io;
mod split;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

pub use csv_io::{load_dataset_csv, read_dataset_csv, write_dataset_csv};
pub(crate) use csv_io::parse_finite as parse_finite_cell;
pub use split::{split_by_labels, train_test_split, train_test_split_indices};
pub use synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: unknown label `{value}` (expected CN, SMC or MCI)")]
    UnknownLabel { row: usize, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("class {label} has {count} sample(s); stratified splitting needs at least 2")]
    ClassTooSmall { label: Label, count: usize },
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
}

/// Diagnostic class. Integer codes are stable: CN=0, SMC=1, MCI=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Cn = 0,
    Smc = 1,
    Mci = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Cn, Label::Smc, Label::Mci];
    pub const COUNT: usize = 3;

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Label> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Cn => "CN",
            Label::Smc => "SMC",
            Label::Mci => "MCI",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CN" => Ok(Label::Cn),
            "SMC" => Ok(Label::Smc),
            "MCI" => Ok(Label::Mci),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

// Labels travel as their names in JSON; integer codes are also accepted on input.
impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Code(u64),
        }
        match Repr::deserialize(d)? {
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Code(c) => Label::from_code(c as usize)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown label code {c}"))),
        }
    }
}

/// Feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<Label>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<Label>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if features.rows() != labels.len() {
            return Err(DataError::Invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if features.cols() != feature_names.len() {
            return Err(DataError::Invalid(format!(
                "{} feature columns but {} names",
                features.cols(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(DataError::Invalid(format!("duplicate feature name `{dup}`")));
        }
        if !features.is_finite() {
            return Err(DataError::Invalid("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    /// Default feature names `f0, f1, ...`.
    pub fn default_names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Label codes as class indices for the learners.
    pub fn label_codes(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.code()).collect()
    }

    pub fn class_counts(&self) -> [usize; Label::COUNT] {
        let mut counts = [0; Label::COUNT];
        for l in &self.labels {
            counts[l.code()] += 1;
        }
        counts
    }

    /// Fraction of samples in the most frequent class.
    pub fn majority_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        *self.class_counts().iter().max().unwrap() as f64 / self.n_samples() as f64
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_columns(idx),
            labels: self.labels.clone(),
            feature_names: idx.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }

    /// Appends the rows of `other`, which must share the feature schema.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset, DataError> {
        if self.feature_names != other.feature_names {
            return Err(DataError::Invalid("feature schema mismatch".into()));
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            features: self.features.vstack(&other.features),
            labels,
            feature_names: self.feature_names.clone(),
        })
    }
}
