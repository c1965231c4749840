//! Sequential forward selection around the logistic classifier, and the
//! accuracy-vs-k curve that trains the random forest on each selected prefix.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{train_test_split, train_test_split_indices, DataError, Dataset, Label};
use crate::linalg::Matrix;
use crate::ml::{
    accuracy, fit_logistic_model, fit_random_forest, fit_scaler, ForestParams, LogisticHyper, MlError,
};

#[derive(Debug, Error)]
pub enum FeatSelError {
    #[error("k = {k} outside 1..={n_features}")]
    KOutOfRange { k: usize, n_features: usize },
    #[error("no k values requested")]
    NoKValues,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Validation protocol inside SFS: one holdout carved from the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoldoutProtocol {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for HoldoutProtocol {
    fn default() -> Self {
        Self {
            fraction: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfsResult {
    /// Feature indices in the order they were added.
    pub selected: Vec<usize>,
    /// Validation accuracy right after each addition.
    pub accuracy_trace: Vec<f64>,
    pub k: usize,
}

/// Standardized fit/validation split reused by every candidate evaluation.
///
/// Standardization statistics are per column, so scaling all columns once is
/// identical to re-scaling the selected subset on every fit.
struct Holdout {
    x_fit: Matrix,
    y_fit: Vec<usize>,
    x_val: Matrix,
    y_val: Vec<usize>,
}

impl Holdout {
    fn new(train: &Dataset, protocol: HoldoutProtocol) -> Result<Self, FeatSelError> {
        let stratify = train.class_counts().iter().all(|&c| c != 1);
        let (fit_idx, val_idx) =
            train_test_split_indices(train, protocol.fraction, protocol.seed, stratify)?;
        let fit = train.select_rows(&fit_idx);
        let val = train.select_rows(&val_idx);
        let scaler = fit_scaler(fit.features());
        Ok(Self {
            x_fit: scaler.transform(fit.features()),
            y_fit: fit.label_codes(),
            x_val: scaler.transform(val.features()),
            y_val: val.label_codes(),
        })
    }

    fn score(&self, columns: &[usize], hyper: LogisticHyper) -> Result<f64, MlError> {
        let model = fit_logistic_model(
            &self.x_fit.select_columns(columns),
            &self.y_fit,
            Label::COUNT,
            hyper,
        )?;
        let pred = model.predict(&self.x_val.select_columns(columns));
        Ok(accuracy(&pred, &self.y_val))
    }
}

/// Greedy forward selection of `k` features by holdout accuracy of a freshly
/// trained logistic model; ties go to the lowest feature index.
pub fn sfs_select(
    train: &Dataset,
    k: usize,
    protocol: HoldoutProtocol,
    hyper: LogisticHyper,
) -> Result<SfsResult, FeatSelError> {
    let d = train.n_features();
    if k == 0 || k > d {
        return Err(FeatSelError::KOutOfRange { k, n_features: d });
    }
    let holdout = Holdout::new(train, protocol)?;
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);
    let mut used = vec![false; d];
    for _ in 0..k {
        let candidates: Vec<usize> = (0..d).filter(|&f| !used[f]).collect();
        let scores = candidates
            .par_iter()
            .map(|&f| {
                let mut cols = selected.clone();
                cols.push(f);
                holdout.score(&cols, hyper)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        used[candidates[best]] = true;
        selected.push(candidates[best]);
        trace.push(scores[best]);
    }
    Ok(SfsResult {
        selected,
        accuracy_trace: trace,
        k,
    })
}

/// Holdout accuracy of one feature subset under the SFS protocol.
pub fn subset_accuracy(
    train: &Dataset,
    columns: &[usize],
    protocol: HoldoutProtocol,
    hyper: LogisticHyper,
) -> Result<f64, FeatSelError> {
    Ok(Holdout::new(train, protocol)?.score(columns, hyper)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveConfig {
    pub test_fraction: f64,
    pub split_seed: u64,
    pub holdout: HoldoutProtocol,
    pub logistic: LogisticHyper,
    pub forest: ForestParams,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.25,
            split_seed: 0,
            holdout: HoldoutProtocol::default(),
            logistic: LogisticHyper::default(),
            forest: ForestParams::default(),
        }
    }
}

impl CurveConfig {
    /// Derives every seed from one experiment seed.
    pub fn seeded(seed: u64) -> Self {
        let d = Self::default();
        Self {
            split_seed: seed,
            holdout: HoldoutProtocol {
                seed: seed.wrapping_add(1),
                ..d.holdout
            },
            forest: d.forest.with_seed(seed.wrapping_add(2)),
            ..d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub points: Vec<CurvePoint>,
    /// Greedy selection order up to the largest requested k.
    pub selection: SfsResult,
}

/// For each k: select k features by SFS on the training split, train the
/// forest on those columns, and record its test accuracy.
///
/// SFS is greedy and deterministic, so the selection for k is the length-k
/// prefix of the selection for the largest k; it is run once.
pub fn accuracy_curve(
    ds: &Dataset,
    k_values: &[usize],
    config: &CurveConfig,
) -> Result<CurveReport, FeatSelError> {
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let &k_max = ks.last().ok_or(FeatSelError::NoKValues)?;
    let d = ds.n_features();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > d) {
        return Err(FeatSelError::KOutOfRange { k: bad, n_features: d });
    }

    let (train, test) = train_test_split(ds, config.test_fraction, config.split_seed, true)?;
    let scaler = fit_scaler(train.features());
    let x_train = scaler.transform(train.features());
    let x_test = scaler.transform(test.features());
    let y_train = train.label_codes();
    let y_test = test.label_codes();

    let selection = sfs_select(&train, k_max, config.holdout, config.logistic)?;
    let points = ks
        .iter()
        .map(|&k| {
            let cols = &selection.selected[..k];
            let forest =
                fit_random_forest(&x_train.select_columns(cols), &y_train, Label::COUNT, config.forest)?;
            let pred = forest.predict(&x_test.select_columns(cols));
            Ok(CurvePoint {
                k,
                accuracy: accuracy(&pred, &y_test),
            })
        })
        .collect::<Result<Vec<_>, FeatSelError>>()?;
    Ok(CurveReport { points, selection })
}

/// Writes `k,accuracy` rows sorted by k.
pub fn emit_curve_csv(points: &[CurvePoint], mut out: impl Write) -> std::io::Result<()> {
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.k);
    out.write_all(b"k,accuracy\n")?;
    for p in sorted {
        writeln!(out, "{},{}", p.k, p.accuracy)?;
    }
    Ok(())
}
