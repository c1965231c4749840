use serde::{Deserialize, Serialize};

use super::MlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Samples of this class in the truth.
    pub support: usize,
    /// True when the class appears in neither truth nor predictions; its scores are then 0.
    pub absent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion-matrix metrics; precision/recall with a zero denominator are 0.
pub fn evaluate(predictions: &[usize], truth: &[usize], n_classes: usize) -> Result<Metrics, MlError> {
    if predictions.len() != truth.len() {
        return Err(MlError::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    if let Some(&bad) = predictions.iter().chain(truth).find(|&&c| c >= n_classes) {
        return Err(MlError::BadClass { class: bad, n_classes });
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                absent: support == 0 && predicted == 0,
            }
        })
        .collect();
    let k = n_classes.max(1) as f64;
    let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    Ok(Metrics {
        accuracy: ratio(trace, truth.len()),
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        per_class,
        confusion,
    })
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> f64 {
    ratio(
        predictions.iter().zip(truth).filter(|(p, t)| p == t).count(),
        truth.len(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0];
        let m = evaluate(&y, &y, 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.per_class.iter().all(|c| c.f1 == 1.0));
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn hand_confusion_matrix() {
        // truth [A,A,B,B], pred [A,B,A,B]
        let m = evaluate(&[0, 1, 0, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.per_class[0].precision, 0.5);
        assert_eq!(m.per_class[0].recall, 0.5);
        assert_eq!(m.confusion, vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn absent_class_is_flagged_zero() {
        let m = evaluate(&[0, 1], &[0, 1], 3).unwrap();
        let mci = &m.per_class[2];
        assert!(mci.absent);
        assert_eq!((mci.precision, mci.recall, mci.f1), (0.0, 0.0, 0.0));
        assert!(!m.per_class[0].absent);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            evaluate(&[0], &[0, 1], 2),
            Err(MlError::LengthMismatch { .. })
        ));
    }
}
