use ndarray::{Array1, Array2, ArrayView2};

use super::{check_k, kmeans_fit, ClusterAlgorithm, ClusterAssignment, DEFAULT_N_INIT};
use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, pairwise_sq_dists, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE};

#[derive(Debug, Clone)]
pub struct SpectralFit {
    pub assignment: ClusterAssignment,
    /// All eigenvalues of the normalized Laplacian, ascending.
    pub eigenvalues: Array1<f64>,
    /// Row-normalized bottom-k eigenvectors, `n × k`.
    pub embedding: Array2<f64>,
}

/// `W_ij = exp(−γ‖x_i − x_j‖²)` off the diagonal, zero on it.
pub fn rbf_affinity(x: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let mut w = pairwise_sq_dists(x).mapv(|d| (-gamma * d).exp());
    w.diag_mut().fill(0.0);
    w
}

pub fn spectral(x: ArrayView2<f64>, k: usize, seed: u64, gamma: Option<f64>) -> Result<ClusterAssignment> {
    Ok(spectral_fit(x, k, seed, gamma)?.assignment)
}

/// Normalized spectral clustering. `gamma` defaults to `1 / p`.
pub fn spectral_fit(x: ArrayView2<f64>, k: usize, seed: u64, gamma: Option<f64>) -> Result<SpectralFit> {
    let (n, p) = x.dim();
    check_k(n, k)?;
    let gamma = gamma.unwrap_or(1.0 / p.max(1) as f64);
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    let w = rbf_affinity(x, gamma);
    let degree: Vec<f64> = w.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(i) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Numerical(format!(
            "sample {i} has zero affinity to every other sample; try a smaller gamma than {gamma}"
        )));
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut lap = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = -inv_sqrt[i] * w[[i, j]] * inv_sqrt[j];
            lap[[i, j]] = if i == j { 1.0 + v } else { v };
        }
    }
    let eig = jacobi_eigen(lap.view(), JACOBI_TOLERANCE, JACOBI_MAX_SWEEPS)?;
    let mut emb = eig.vectors.slice(ndarray::s![.., 0..k]).to_owned();
    for mut row in emb.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let fit = kmeans_fit(emb.view(), k, seed, 300, DEFAULT_N_INIT)?;
    Ok(SpectralFit {
        assignment: ClusterAssignment {
            algorithm: ClusterAlgorithm::Spectral,
            ..fit.assignment
        },
        eigenvalues: eig.values,
        embedding: emb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_blocks_split_perfectly() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.0, 5.0], [5.1, 5.0]];
        let fit = spectral_fit(x.view(), 2, 1, Some(1.0)).unwrap();
        let l = &fit.assignment.labels;
        assert!(l[0] == l[1] && l[1] == l[2]);
        assert!(l[3] == l[4] && l[4] == l[5]);
        assert_ne!(l[0], l[3]);
        for v in fit.eigenvalues.iter() {
            assert!(*v > -1e-9 && *v < 2.0 + 1e-9);
        }
        for r in fit.embedding.rows() {
            assert!((r.dot(&r).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_point_is_reported() {
        let x = array![[0.0], [0.1], [1e6]];
        let err = spectral(x.view(), 2, 0, Some(1.0)).unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }
}
