use serde::{Deserialize, Serialize};

use super::{argmax, MlError};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticHyper {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 500,
            l2: 1e-4,
        }
    }
}

/// Multinomial softmax regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `n_classes x n_features`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub hyper: LogisticHyper,
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    /// Regularized training cross-entropy before each update, then after the last one.
    pub loss_trace: Vec<f64>,
}

/// Full-batch gradient descent from zero initialization on mean
/// cross-entropy plus `l2 / 2 * |W|^2` (bias unpenalized).
pub fn fit_logistic(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    hyper: LogisticHyper,
) -> Result<LogisticFit, MlError> {
    fit(x, y, n_classes, hyper, true)
}

/// Same model as [`fit_logistic`] without evaluating the loss trace.
pub fn fit_logistic_model(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    hyper: LogisticHyper,
) -> Result<LogisticModel, MlError> {
    fit(x, y, n_classes, hyper, false).map(|f| f.model)
}

fn fit(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    hyper: LogisticHyper,
    record: bool,
) -> Result<LogisticFit, MlError> {
    if x.rows() != y.len() {
        return Err(MlError::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(MlError::BadClass { class: bad, n_classes });
    }
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(MlError::SingleClass);
    }

    let (w, b, loss_trace) = match n_classes {
        2 => descend::<2>(x, y, hyper, record),
        3 => descend::<3>(x, y, hyper, record),
        _ => descend_dyn(x, y, n_classes, hyper, record),
    };
    Ok(LogisticFit {
        model: LogisticModel {
            weights: w,
            bias: b,
            hyper,
        },
        loss_trace,
    })
}

/// Gradient descent with the class count fixed at compile time; arithmetic
/// matches [`descend_dyn`] operation for operation.
fn descend<const K: usize>(
    x: &Matrix,
    y: &[usize],
    hyper: LogisticHyper,
    record: bool,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut w = vec![[0.0f64; K]; d];
    let mut b = [0.0f64; K];
    let mut gw = vec![[0.0f64; K]; d];
    let mut trace = Vec::with_capacity(hyper.iterations + 1);
    let inv_n = 1.0 / n as f64;

    for step in 0..=hyper.iterations {
        let compute_grad = step < hyper.iterations;
        gw.iter_mut().for_each(|g| *g = [0.0; K]);
        let mut gb = [0.0f64; K];
        let mut loss = 0.0;
        for (row, &yi) in x.iter_rows().zip(y) {
            let mut p = b;
            for (&v, wj) in row.iter().zip(&w) {
                for c in 0..K {
                    p[c] += wj[c] * v;
                }
            }
            softmax_in_place(&mut p);
            if record {
                loss -= p[yi].max(f64::MIN_POSITIVE).ln();
            }
            if compute_grad {
                p[yi] -= 1.0;
                for c in 0..K {
                    gb[c] += p[c];
                }
                for (&v, gj) in row.iter().zip(gw.iter_mut()) {
                    for c in 0..K {
                        gj[c] += p[c] * v;
                    }
                }
            }
        }
        if record {
            let penalty: f64 = w.iter().flatten().map(|v| v * v).sum::<f64>() * hyper.l2 * 0.5;
            trace.push(loss * inv_n + penalty);
        }
        if !compute_grad {
            break;
        }
        for c in 0..K {
            b[c] -= hyper.learning_rate * gb[c] * inv_n;
        }
        for (wj, gj) in w.iter_mut().zip(&gw) {
            for c in 0..K {
                wj[c] -= hyper.learning_rate * (gj[c] * inv_n + hyper.l2 * wj[c]);
            }
        }
    }
    let flat: Vec<f64> = w.into_iter().flatten().collect();
    (Matrix::from_vec(d, K, flat).transpose(), b.to_vec(), trace)
}

fn descend_dyn(
    x: &Matrix,
    y: &[usize],
    k: usize,
    hyper: LogisticHyper,
    record: bool,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    // feature-major: wt[j * k + c]
    let mut wt = vec![0.0; d * k];
    let mut b = vec![0.0; k];
    let mut gwt = vec![0.0; d * k];
    let mut gb = vec![0.0; k];
    let mut p = vec![0.0; k];
    let mut trace = Vec::with_capacity(hyper.iterations + 1);
    let inv_n = 1.0 / n as f64;

    for step in 0..=hyper.iterations {
        let compute_grad = step < hyper.iterations;
        gwt.iter_mut().for_each(|g| *g = 0.0);
        gb.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (row, &yi) in x.iter_rows().zip(y) {
            p.copy_from_slice(&b);
            for (&v, wj) in row.iter().zip(wt.chunks_exact(k)) {
                p.iter_mut().zip(wj).for_each(|(z, w)| *z += w * v);
            }
            softmax_in_place(&mut p);
            if record {
                loss -= p[yi].max(f64::MIN_POSITIVE).ln();
            }
            if compute_grad {
                p[yi] -= 1.0;
                gb.iter_mut().zip(&p).for_each(|(g, r)| *g += r);
                for (&v, gj) in row.iter().zip(gwt.chunks_exact_mut(k)) {
                    gj.iter_mut().zip(&p).for_each(|(g, r)| *g += r * v);
                }
            }
        }
        if record {
            let penalty: f64 = wt.iter().map(|v| v * v).sum::<f64>() * hyper.l2 * 0.5;
            trace.push(loss * inv_n + penalty);
        }
        if !compute_grad {
            break;
        }
        for c in 0..k {
            b[c] -= hyper.learning_rate * gb[c] * inv_n;
        }
        for (wv, g) in wt.iter_mut().zip(&gwt) {
            *wv -= hyper.learning_rate * (g * inv_n + hyper.l2 * *wv);
        }
    }
    (Matrix::from_vec(d, k, wt).transpose(), b, trace)
}

fn softmax_into(w: &Matrix, b: &[f64], row: &[f64], out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = b[c] + dot(w.row(c), row);
    }
    softmax_in_place(out);
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for o in z.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    z.iter_mut().for_each(|o| *o /= sum);
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes()];
        softmax_into(&self.weights, &self.bias, row, &mut p);
        p
    }

    /// Highest-logit class; lowest class index wins ties.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let logits: Vec<f64> = (0..self.n_classes())
            .map(|c| self.bias[c] + dot(self.weights.row(c), row))
            .collect();
        argmax(&logits)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}
