use serde::{Deserialize, Serialize};

use super::MlError;
use crate::linalg::{dot, normalize_sign, symmetric_eigen, Matrix};

/// Top-`k` principal axes of the centered data (population covariance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `k x n_features`, orthonormal rows.
    pub components: Matrix,
    pub center: Vec<f64>,
    /// Non-increasing, one per component.
    pub explained_variance: Vec<f64>,
    /// Sum of all per-feature variances.
    pub total_variance: f64,
}

/// Fits PCA by eigendecomposition of the covariance, or of the Gram matrix
/// when there are fewer samples than features. Zero-variance directions of
/// the Gram route are completed to an orthonormal set.
pub fn fit_pca(x: &Matrix, k: usize) -> Result<PcaModel, MlError> {
    let (n, d) = (x.rows(), x.cols());
    if k == 0 || k > n.min(d) {
        return Err(MlError::ComponentsOutOfRange {
            k,
            max: n.min(d),
        });
    }
    let nf = n as f64;
    let mut center = vec![0.0; d];
    for row in x.iter_rows() {
        center.iter_mut().zip(row).for_each(|(c, v)| *c += v);
    }
    center.iter_mut().for_each(|c| *c /= nf);
    let mut xc = x.clone();
    for i in 0..n {
        xc.row_mut(i).iter_mut().zip(&center).for_each(|(v, c)| *v -= c);
    }
    let total_variance = xc.as_slice().iter().map(|v| v * v).sum::<f64>() / nf;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    if d <= n {
        let cov = xc.transpose().matmul(&xc);
        let cov = Matrix::from_vec(d, d, cov.as_slice().iter().map(|v| v / nf).collect());
        let (vals, vecs) = symmetric_eigen(&cov);
        for r in 0..k {
            rows.push(vecs.row(r).to_vec());
            explained.push(vals[r].max(0.0));
        }
    } else {
        let gram = xc.matmul(&xc.transpose());
        let gram = Matrix::from_vec(n, n, gram.as_slice().iter().map(|v| v / nf).collect());
        let (vals, u) = symmetric_eigen(&gram);
        let tol = 1e-12 * vals.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        for r in 0..k {
            if vals[r] <= tol {
                break;
            }
            // v = Xc^T u
            let mut v = vec![0.0; d];
            for (i, row) in xc.iter_rows().enumerate() {
                let ui = u[(r, i)];
                v.iter_mut().zip(row).for_each(|(a, b)| *a += ui * b);
            }
            if let Some(v) = orthonormalize(v, &rows) {
                rows.push(v);
                explained.push(vals[r]);
            } else {
                break;
            }
        }
        let mut basis = 0;
        while rows.len() < k && basis < d {
            let mut e = vec![0.0; d];
            e[basis] = 1.0;
            basis += 1;
            if let Some(v) = orthonormalize(e, &rows) {
                rows.push(v);
                explained.push(0.0);
            }
        }
    }
    for r in &mut rows {
        normalize_sign(r);
    }
    Ok(PcaModel {
        components: Matrix::from_rows(&rows).expect("equal-length components"),
        center,
        explained_variance: explained,
        total_variance,
    })
}

/// Gram-Schmidt against `basis` (applied twice); `None` if `v` is (numerically) in their span.
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let norm0 = dot(&v, &v).sqrt();
    if norm0 == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(a, bb)| *a -= p * bb);
        }
    }
    let norm = dot(&v, &v).sqrt();
    if norm <= 1e-8 * norm0 {
        return None;
    }
    v.iter_mut().for_each(|a| *a /= norm);
    Some(v)
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn n_features(&self) -> usize {
        self.center.len()
    }

    pub fn project_row(&self, row: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = row.iter().zip(&self.center).map(|(v, c)| v - c).collect();
        self.components
            .iter_rows()
            .map(|comp| dot(comp, &centered))
            .collect()
    }

    pub fn project(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.n_features(), "PCA feature count mismatch");
        let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| self.project_row(r)).collect();
        Matrix::from_vec(
            x.rows(),
            self.n_components(),
            rows.into_iter().flatten().collect(),
        )
    }

    pub fn reconstruct_row(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.center.clone();
        for (s, comp) in scores.iter().zip(self.components.iter_rows()) {
            out.iter_mut().zip(comp).for_each(|(o, c)| *o += s * c);
        }
        out
    }

    pub fn reconstruct(&self, scores: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = scores.iter_rows().map(|s| self.reconstruct_row(s)).collect();
        Matrix::from_vec(scores.rows(), self.n_features(), rows.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn assert_orthonormal(m: &PcaModel) {
        let g = m.components.matmul(&m.components.transpose());
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - e).abs() < 1e-9, "gram[{i},{j}] = {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn full_rank_reconstruction_is_identity() {
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.3, 2.0],
            vec![4.0, -2.0, 1.0],
            vec![0.0, 1.0, -3.0],
            vec![2.5, 2.5, 2.5],
        ])
        .unwrap();
        let m = fit_pca(&x, 3).unwrap();
        assert_orthonormal(&m);
        assert!(max_abs_diff(&x, &m.reconstruct(&m.project(&x))) < 1e-9);
    }

    #[test]
    fn wide_data_uses_gram_route() {
        // 3 samples, 5 features: rank of centered data is 2, third axis is completed
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0, 2.0, -1.0, 0.5],
            vec![0.0, 1.0, 1.0, 3.0, -0.5],
            vec![2.0, 2.0, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        let m = fit_pca(&x, 3).unwrap();
        assert_orthonormal(&m);
        assert_eq!(m.explained_variance[2], 0.0);
        assert!(max_abs_diff(&x, &m.reconstruct(&m.project(&x))) < 1e-9);
        // leading eigenvalues agree with the 5x5 covariance
        let center = [1.0, 1.0, 1.0, 1.0, 1.0 / 3.0];
        let mut cov = Matrix::zeros(5, 5);
        for row in x.iter_rows() {
            for a in 0..5 {
                for b in 0..5 {
                    cov[(a, b)] += (row[a] - center[a]) * (row[b] - center[b]) / 3.0;
                }
            }
        }
        let (vals, _) = symmetric_eigen(&cov);
        for (a, b) in m.explained_variance.iter().zip(&vals[..2]) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn line_data_single_component() {
        let x = Matrix::from_rows(
            &(0..20).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect::<Vec<_>>(),
        )
        .unwrap();
        let m = fit_pca(&x, 1).unwrap();
        assert!(m.explained_variance[0] / m.total_variance >= 0.999);
    }

    #[test]
    fn rectangle_by_hand() {
        // points (+-2, +-1): covariance diag(4, 1)
        let x = Matrix::from_rows(&[
            vec![2.0, 1.0],
            vec![2.0, -1.0],
            vec![-2.0, 1.0],
            vec![-2.0, -1.0],
        ])
        .unwrap();
        let full = fit_pca(&x, 2).unwrap();
        assert!((full.explained_variance[0] - 4.0).abs() < 1e-12);
        assert!((full.explained_variance[1] - 1.0).abs() < 1e-12);
        assert!(max_abs_diff(&x, &full.reconstruct(&full.project(&x))) < 1e-12);

        let one = fit_pca(&x, 1).unwrap();
        assert_eq!(one.components.row(0), &[1.0, 0.0]);
        let rec = one.reconstruct(&one.project(&x));
        for i in 0..4 {
            let err: f64 = x.row(i).iter().zip(rec.row(i)).map(|(a, b)| (a - b).powi(2)).sum();
            assert!((err - 1.0).abs() < 1e-12, "point {i}: {err}");
        }
    }

    #[test]
    fn square_ties_keep_first_axis() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
        ])
        .unwrap();
        let one = fit_pca(&x, 1).unwrap();
        let rec = one.reconstruct(&one.project(&x));
        for i in 0..4 {
            let err: f64 = x.row(i).iter().zip(rec.row(i)).map(|(a, b)| (a - b).powi(2)).sum();
            assert!((err - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn k_out_of_range() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(fit_pca(&x, 0).is_err());
        assert!(fit_pca(&x, 3).is_err());
    }

    proptest! {
        #[test]
        fn pca_invariants(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 4), 2..12),
            k in 1usize..=4,
        ) {
            let x = Matrix::from_rows(&rows).unwrap();
            let k = k.min(x.rows()).min(4);
            let m = fit_pca(&x, k).unwrap();
            let g = m.components.matmul(&m.components.transpose());
            for i in 0..k {
                for j in 0..k {
                    let e = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((g[(i, j)] - e).abs() < 1e-9);
                }
            }
            prop_assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1] - 1e-12));
            prop_assert!(m.explained_variance.iter().sum::<f64>() <= m.total_variance + 1e-9);
        }
    }
}
