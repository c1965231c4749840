//! In-process simulation of K institutions: partition, train locally,
//! aggregate, and compare single-institution, multi-institution and
//! all-data accuracy.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{train_test_split, DataError, Dataset, Label};
use crate::linalg::Matrix;
use crate::ml::{accuracy, argmax, evaluate, fit_random_forest, ForestParams, Metrics, MlError, RandomForestModel};
use crate::rng::{derive_seed, keyed_rng};

const KEY_SPLIT: u64 = 0xFED0_0001;
const KEY_PARTITION: u64 = 0xFED0_0002;
const KEY_NODE_MODEL: u64 = 0xFED0_0003;
const KEY_BOUND: u64 = 0xFED0_0004;
const KEY_LOCAL_SPLIT: u64 = 0xFED0_0005;

#[derive(Debug, Error)]
pub enum FedError {
    #[error("institution count must be at least 1")]
    NoInstitutions,
    #[error("{k} institutions but only {n} samples")]
    TooManyInstitutions { k: usize, n: usize },
    #[error("label-skew concentration must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("no models to aggregate")]
    NoModels,
    #[error("models disagree on feature count")]
    InconsistentModels,
    #[error("institution {0} has no samples")]
    EmptyShard(usize),
    #[error("new samples have {found} features, federation uses {expected}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("assignment targets institution {node} of {k}")]
    BadAssignment { node: usize, k: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    /// Per-node class proportions drawn from a symmetric Dirichlet(alpha).
    LabelSkewed { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Plurality vote of the institutions' forests on the global test set.
    VoteEnsemble,
    /// Each institution scored on its own held-out slice; correct counts summed.
    LocalEval,
}

impl AggregationMode {
    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::VoteEnsemble => "vote_ensemble",
            AggregationMode::LocalEval => "local_eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub k: usize,
    pub partition_mode: PartitionMode,
    pub aggregation_mode: AggregationMode,
    pub seed: u64,
    pub forest: ForestParams,
    /// Stratified global test fraction carved before partitioning.
    pub test_fraction: f64,
    /// Per-node holdout fraction used by `local_eval`.
    pub local_holdout_fraction: f64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            k: 5,
            partition_mode: PartitionMode::Iid,
            aggregation_mode: AggregationMode::VoteEnsemble,
            seed: 0,
            forest: ForestParams::default(),
            test_fraction: 0.25,
            local_holdout_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Institution {
    pub node_id: usize,
    pub local_data: Dataset,
    pub local_model: Option<RandomForestModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub institutions: Vec<Institution>,
    /// Samples left over so every shard has the same size; always `< k`.
    pub dropped_samples: usize,
    /// Row indices (into the partitioned dataset) of each shard.
    pub memberships: Vec<Vec<usize>>,
}

/// Splits `ds` into `k` disjoint shards of `floor(n / k)` rows.
pub fn partition_dataset(
    ds: &Dataset,
    k: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<Partition, FedError> {
    let n = ds.n_samples();
    if k == 0 {
        return Err(FedError::NoInstitutions);
    }
    if k > n {
        return Err(FedError::TooManyInstitutions { k, n });
    }
    let shard = n / k;
    let mut rng = keyed_rng(seed, &[KEY_PARTITION]);
    let memberships: Vec<Vec<usize>> = match mode {
        PartitionMode::Iid => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.chunks(shard).take(k).map(<[usize]>::to_vec).collect()
        }
        PartitionMode::LabelSkewed { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(FedError::BadAlpha(alpha));
            }
            let gamma = Gamma::new(alpha, 1.0).map_err(|_| FedError::BadAlpha(alpha))?;
            let mut pools: Vec<Vec<usize>> = vec![Vec::new(); Label::COUNT];
            for (i, l) in ds.labels().iter().enumerate() {
                pools[l.code()].push(i);
            }
            pools.iter_mut().for_each(|p| p.shuffle(&mut rng));
            let mut out = Vec::with_capacity(k);
            for _ in 0..k {
                let mut w: Vec<f64> = (0..Label::COUNT).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= total.max(f64::MIN_POSITIVE));
                let mut members = Vec::with_capacity(shard);
                for _ in 0..shard {
                    // renormalize over classes that still have samples
                    let mass: f64 = (0..Label::COUNT).filter(|&c| !pools[c].is_empty()).map(|c| w[c]).sum();
                    let class = if mass > 0.0 {
                        let mut u = rng.random::<f64>() * mass;
                        let mut pick = None;
                        for c in (0..Label::COUNT).filter(|&c| !pools[c].is_empty()) {
                            pick = Some(c);
                            if u < w[c] {
                                break;
                            }
                            u -= w[c];
                        }
                        pick.expect("some pool is non-empty")
                    } else {
                        (0..Label::COUNT).find(|&c| !pools[c].is_empty()).expect("k * shard <= n")
                    };
                    members.push(pools[class].pop().expect("pool checked non-empty"));
                }
                members.sort_unstable();
                out.push(members);
            }
            out
        }
    };
    let institutions = memberships
        .iter()
        .enumerate()
        .map(|(node_id, m)| Institution {
            node_id,
            local_data: ds.select_rows(m),
            local_model: None,
        })
        .collect();
    Ok(Partition {
        institutions,
        dropped_samples: n - shard * k,
        memberships,
    })
}

/// Seed of institution `node_id`'s forest under a federation seed.
pub fn node_model_seed(seed: u64, node_id: usize) -> u64 {
    derive_seed(seed, &[KEY_NODE_MODEL, node_id as u64])
}

/// Trains a forest on the institution's shard only.
pub fn train_local(inst: &Institution, params: ForestParams, seed: u64) -> Result<RandomForestModel, FedError> {
    if inst.local_data.is_empty() {
        return Err(FedError::EmptyShard(inst.node_id));
    }
    Ok(fit_random_forest(
        inst.local_data.features(),
        &inst.local_data.label_codes(),
        Label::COUNT,
        params.with_seed(seed),
    )?)
}

/// One vote per institution; ties go to the lowest class index.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteEnsemble {
    pub models: Vec<RandomForestModel>,
}

impl VoteEnsemble {
    pub fn new(models: Vec<RandomForestModel>) -> Result<Self, FedError> {
        let first = models.first().ok_or(FedError::NoModels)?;
        if models.iter().any(|m| m.n_features != first.n_features || m.n_classes != first.n_classes) {
            return Err(FedError::InconsistentModels);
        }
        Ok(Self { models })
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut votes = vec![0.0; self.models[0].n_classes];
        for m in &self.models {
            votes[m.predict_row(row)] += 1.0;
        }
        argmax(&votes)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Per-node correct and evaluated counts on local holdouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEvalOutcome {
    pub correct: Vec<usize>,
    pub evaluated: Vec<usize>,
}

impl LocalEvalOutcome {
    /// `sum(correct) / sum(evaluated)`.
    pub fn accuracy(&self) -> f64 {
        let total: usize = self.evaluated.iter().sum();
        if total == 0 {
            0.0
        } else {
            self.correct.iter().sum::<usize>() as f64 / total as f64
        }
    }
}

pub enum Aggregate {
    Ensemble(VoteEnsemble),
    /// No merged predictor; evaluate each model on its own holdout.
    LocalEval(Vec<RandomForestModel>),
}

pub fn aggregate(models: Vec<RandomForestModel>, mode: AggregationMode) -> Result<Aggregate, FedError> {
    let ensemble = VoteEnsemble::new(models)?;
    Ok(match mode {
        AggregationMode::VoteEnsemble => Aggregate::Ensemble(ensemble),
        AggregationMode::LocalEval => Aggregate::LocalEval(ensemble.models),
    })
}

impl Aggregate {
    /// Local-eval counts; `holdouts[i]` is scored by model `i`.
    pub fn evaluate_local(&self, holdouts: &[Dataset]) -> Option<LocalEvalOutcome> {
        let Aggregate::LocalEval(models) = self else {
            return None;
        };
        let (correct, evaluated) = models
            .iter()
            .zip(holdouts)
            .map(|(m, h)| {
                let pred = m.predict(h.features());
                let hits = pred.iter().zip(h.label_codes()).filter(|(p, t)| **p == *t).count();
                (hits, h.n_samples())
            })
            .unzip();
        Some(LocalEvalOutcome { correct, evaluated })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationResult {
    pub aggregation_mode: AggregationMode,
    pub k: usize,
    pub p_centralized: f64,
    pub p_decentralized: f64,
    pub p_bound: f64,
    /// Each institution's model on the global test set.
    pub per_node_accuracy: Vec<f64>,
    pub per_node_metrics: Vec<Metrics>,
    pub dropped_samples: usize,
    pub shard_size: usize,
    pub n_test: usize,
    /// Present in `local_eval` mode.
    pub local_eval: Option<LocalEvalOutcome>,
    pub inequality_report: String,
}

/// Describes the observed ordering of the three accuracies.
pub fn inequality_report(p_centralized: f64, p_decentralized: f64, p_bound: f64) -> String {
    let mut q = [
        ("P_bound", p_bound),
        ("P_decentralized", p_decentralized),
        ("P_centralized", p_centralized),
    ];
    q.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = format!("{} = {:.4}", q[0].0, q[0].1);
    for w in q.windows(2) {
        let rel = if w[0].1 == w[1].1 { "=" } else { ">" };
        out.push_str(&format!(" {rel} {} = {:.4}", w[1].0, w[1].1));
    }
    out
}

/// A running federation: global split, shards, and their trained models.
#[derive(Debug, Clone)]
pub struct Federation {
    pub config: FederationConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub institutions: Vec<Institution>,
    pub dropped_samples: usize,
    bound_model: RandomForestModel,
}

impl Federation {
    pub fn new(ds: &Dataset, config: FederationConfig) -> Result<Self, FedError> {
        let split_seed = derive_seed(config.seed, &[KEY_SPLIT]);
        let (train, test) = train_test_split(ds, config.test_fraction, split_seed, true)?;
        let part = partition_dataset(&train, config.k, config.partition_mode, config.seed)?;
        let mut fed = Federation {
            config,
            bound_model: Self::fit_bound(&train, &config)?,
            train,
            test,
            institutions: part.institutions,
            dropped_samples: part.dropped_samples,
        };
        fed.retrain((0..config.k).collect())?;
        Ok(fed)
    }

    fn fit_bound(train: &Dataset, config: &FederationConfig) -> Result<RandomForestModel, FedError> {
        let params = config.forest.with_seed(derive_seed(config.seed, &[KEY_BOUND]));
        Ok(fit_random_forest(train.features(), &train.label_codes(), Label::COUNT, params)?)
    }

    fn retrain(&mut self, nodes: Vec<usize>) -> Result<(), FedError> {
        let (params, seed) = (self.config.forest, self.config.seed);
        let models = nodes
            .par_iter()
            .map(|&i| train_local(&self.institutions[i], params, node_model_seed(seed, i)))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, m) in nodes.into_iter().zip(models) {
            self.institutions[i].local_model = Some(m);
        }
        Ok(())
    }

    fn models(&self) -> Vec<RandomForestModel> {
        self.institutions
            .iter()
            .map(|i| i.local_model.clone().expect("models trained at construction"))
            .collect()
    }

    /// Comparison under the configured aggregation mode.
    pub fn result(&self) -> Result<FederationResult, FedError> {
        self.result_for(self.config.aggregation_mode)
    }

    pub fn result_for(&self, mode: AggregationMode) -> Result<FederationResult, FedError> {
        let x_test = self.test.features();
        let y_test = self.test.label_codes();
        let models = self.models();
        let per_node_metrics = models
            .iter()
            .map(|m| evaluate(&m.predict(x_test), &y_test, Label::COUNT))
            .collect::<Result<Vec<_>, _>>()?;
        let per_node_accuracy: Vec<f64> = per_node_metrics.iter().map(|m| m.accuracy).collect();
        let p_centralized = per_node_accuracy.iter().sum::<f64>() / per_node_accuracy.len() as f64;
        let p_bound = accuracy(&self.bound_model.predict(x_test), &y_test);

        let (p_decentralized, local_eval) = match mode {
            AggregationMode::VoteEnsemble => {
                let Aggregate::Ensemble(e) = aggregate(models, mode)? else {
                    unreachable!("vote mode yields an ensemble")
                };
                (accuracy(&e.predict(x_test), &y_test), None)
            }
            AggregationMode::LocalEval => {
                let outcome = self.local_eval()?;
                (outcome.accuracy(), Some(outcome))
            }
        };
        Ok(FederationResult {
            aggregation_mode: mode,
            k: self.config.k,
            p_centralized,
            p_decentralized,
            p_bound,
            per_node_accuracy,
            per_node_metrics,
            dropped_samples: self.dropped_samples,
            shard_size: self.institutions.first().map_or(0, |i| i.local_data.n_samples()),
            n_test: self.test.n_samples(),
            local_eval,
            inequality_report: inequality_report(p_centralized, p_decentralized, p_bound),
        })
    }

    /// Each node retrains on a local-train split and is scored on its local holdout.
    fn local_eval(&self) -> Result<LocalEvalOutcome, FedError> {
        let cfg = &self.config;
        let splits = self
            .institutions
            .par_iter()
            .map(|inst| {
                let d = &inst.local_data;
                let stratify = d.class_counts().iter().all(|&c| c != 1);
                let seed = derive_seed(cfg.seed, &[KEY_LOCAL_SPLIT, inst.node_id as u64]);
                let (fit, hold) = train_test_split(d, cfg.local_holdout_fraction, seed, stratify)?;
                let local = Institution {
                    node_id: inst.node_id,
                    local_data: fit,
                    local_model: None,
                };
                let model = train_local(&local, cfg.forest, node_model_seed(cfg.seed, inst.node_id))?;
                Ok((model, hold))
            })
            .collect::<Result<Vec<_>, FedError>>()?;
        let (models, holdouts): (Vec<_>, Vec<_>) = splits.into_iter().unzip();
        Ok(aggregate(models, AggregationMode::LocalEval)?
            .evaluate_local(&holdouts)
            .expect("local mode"))
    }

    /// Appends new labeled rows to their assigned institutions and retrains
    /// only those institutions (forests have no incremental update), plus the
    /// all-data bound model when anything was added.
    pub fn incorporate_new_data(
        &mut self,
        new: &Dataset,
        assignment: &Assignment,
    ) -> Result<FederationResult, FedError> {
        if new.is_empty() {
            return self.result();
        }
        if new.n_features() != self.train.n_features() {
            return Err(FedError::SchemaMismatch {
                expected: self.train.n_features(),
                found: new.n_features(),
            });
        }
        let k = self.institutions.len();
        let targets: Vec<usize> = (0..new.n_samples()).map(|i| assignment.node_for(i, k)).collect();
        if let Some(&node) = targets.iter().find(|&&t| t >= k) {
            return Err(FedError::BadAssignment { node, k });
        }
        let mut touched = Vec::new();
        for node in 0..k {
            let rows: Vec<usize> = (0..new.n_samples()).filter(|&i| targets[i] == node).collect();
            if rows.is_empty() {
                continue;
            }
            let inst = &mut self.institutions[node];
            inst.local_data = inst.local_data.concat(&new.select_rows(&rows))?;
            touched.push(node);
        }
        self.retrain(touched)?;
        self.train = self.train.concat(new)?;
        self.bound_model = Self::fit_bound(&self.train, &self.config)?;
        self.result()
    }
}

/// Which institution receives each new sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    RoundRobin,
    AllTo(usize),
    /// Explicit node per new row.
    PerRow(Vec<usize>),
}

impl Assignment {
    fn node_for(&self, row: usize, k: usize) -> usize {
        match self {
            Assignment::RoundRobin => row % k,
            Assignment::AllTo(n) => *n,
            Assignment::PerRow(v) => v.get(row).copied().unwrap_or(usize::MAX),
        }
    }
}

/// Builds the federation and reports the configured comparison.
pub fn run_comparison(ds: &Dataset, config: &FederationConfig) -> Result<FederationResult, FedError> {
    Federation::new(ds, *config)?.result()
}

/// One row per result: `mode,k,p_centralized,p_decentralized,p_bound,dropped_samples,n_test`.
pub fn write_comparison_csv(results: &[FederationResult], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "mode,k,p_centralized,p_decentralized,p_bound,dropped_samples,n_test")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.aggregation_mode.name(),
            r.k,
            r.p_centralized,
            r.p_decentralized,
            r.p_bound,
            r.dropped_samples,
            r.n_test
        )?;
    }
    Ok(())
}
