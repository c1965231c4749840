use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::image::ImageVerdict;
use super::tabular::AnomalyReport;
use crate::canonical::to_canonical_json;
use crate::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyType {
    IncorrectData,
    BadImage,
    None,
}

/// Record of an off-chain data-quality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmartCertificate {
    pub anomaly_type: AnomalyType,
    /// Unix seconds, always positive.
    pub timestamp: u64,
    pub metadata: BTreeMap<String, Value>,
    pub notes: String,
}

impl SmartCertificate {
    /// Sorted-key compact JSON; stable across serialize/deserialize cycles.
    pub fn canonical_json(&self) -> String {
        to_canonical_json(self).expect("certificate values are finite")
    }
}

/// Outcome of one gate, ready to be certified.
#[derive(Debug, Clone, PartialEq)]
pub enum GateResult {
    Tabular { report: AnomalyReport, threshold: f64 },
    Image(ImageVerdict),
}

impl GateResult {
    fn flagged(&self) -> bool {
        match self {
            GateResult::Tabular { report, .. } => report.flagged,
            GateResult::Image(v) => v.flagged,
        }
    }

    fn kind(&self) -> AnomalyType {
        match self {
            GateResult::Tabular { .. } => AnomalyType::IncorrectData,
            GateResult::Image(_) => AnomalyType::BadImage,
        }
    }

    fn prefix(&self) -> &'static str {
        match self {
            GateResult::Tabular { .. } => "tabular",
            GateResult::Image(_) => "image",
        }
    }

    fn metadata(&self) -> Vec<(&'static str, Value)> {
        match self {
            GateResult::Tabular { report, threshold } => vec![
                ("detector", json!("isolation_forest")),
                ("score", json!(report.score)),
                ("threshold", json!(threshold)),
                ("sample_index", json!(report.sample_index)),
            ],
            GateResult::Image(v) => vec![
                ("detector", json!("pca_reconstruction")),
                ("score", json!(v.mse)),
                ("threshold", json!(v.threshold)),
            ],
        }
    }

    fn note(&self) -> String {
        match self {
            GateResult::Tabular { report, threshold } if report.flagged => format!(
                "decision value {} below threshold {threshold}",
                report.score
            ),
            GateResult::Tabular { report, threshold } => format!(
                "decision value {} at or above threshold {threshold}",
                report.score
            ),
            GateResult::Image(v) if v.flagged => {
                format!("reconstruction mse {} above threshold {}", v.mse, v.threshold)
            }
            GateResult::Image(v) => {
                format!("reconstruction mse {} within threshold {}", v.mse, v.threshold)
            }
        }
    }
}

/// Certificate for a single gate outcome.
pub fn certify(result: &GateResult, clock: &dyn Clock) -> SmartCertificate {
    let metadata = result
        .metadata()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    SmartCertificate {
        anomaly_type: if result.flagged() { result.kind() } else { AnomalyType::None },
        timestamp: clock.now().max(1),
        metadata,
        notes: result.note(),
    }
}

/// Certificate covering several gates. Metadata keys are prefixed with the
/// gate name; a flagged tabular result takes precedence over a flagged image.
pub fn certify_all(results: &[GateResult], clock: &dyn Clock) -> SmartCertificate {
    let mut metadata = BTreeMap::new();
    for r in results {
        for (k, v) in r.metadata() {
            metadata.insert(format!("{}.{k}", r.prefix()), v);
        }
    }
    let flagged_of = |t: AnomalyType| results.iter().any(|r| r.flagged() && r.kind() == t);
    let anomaly_type = if flagged_of(AnomalyType::IncorrectData) {
        AnomalyType::IncorrectData
    } else if flagged_of(AnomalyType::BadImage) {
        AnomalyType::BadImage
    } else {
        AnomalyType::None
    };
    SmartCertificate {
        anomaly_type,
        timestamp: clock.now().max(1),
        metadata,
        notes: results.iter().map(GateResult::note).collect::<Vec<_>>().join("; "),
    }
}
