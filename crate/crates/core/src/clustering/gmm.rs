use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2};

use super::{canonicalize, check_k, kmeans_fit, ClusterAlgorithm, ClusterAssignment};
use crate::error::{Error, Result};

pub const COVARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariance {
    Diagonal,
    Full,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub assignment: ClusterAssignment,
    /// `n × k`, columns in canonical label order.
    pub responsibilities: Array2<f64>,
    pub weights: Array1<f64>,
    pub means: Array2<f64>,
    /// One `p × p` matrix per component (diagonal ones stored densely).
    pub covariances: Vec<Array2<f64>>,
    /// Log-likelihood after every E-step.
    pub loglik_history: Vec<f64>,
}

enum Component {
    Diag { mean: Array1<f64>, var: Array1<f64> },
    Full { mean: Array1<f64>, chol: Array2<f64>, cov: Array2<f64> },
}

impl Component {
    fn log_density(&self, x: &[f64]) -> f64 {
        let p = x.len() as f64;
        match self {
            Component::Diag { mean, var } => {
                let mut s = 0.0;
                for ((xv, m), v) in x.iter().zip(mean.iter()).zip(var.iter()) {
                    let d = xv - m;
                    s += (2.0 * PI * v).ln() + d * d / v;
                }
                -0.5 * s
            }
            Component::Full { mean, chol, .. } => {
                // forward-solve L y = x − μ
                let n = mean.len();
                let mut y = vec![0.0; n];
                for i in 0..n {
                    let mut acc = x[i] - mean[i];
                    for j in 0..i {
                        acc -= chol[[i, j]] * y[j];
                    }
                    y[i] = acc / chol[[i, i]];
                }
                let maha: f64 = y.iter().map(|v| v * v).sum();
                let logdet: f64 = 2.0 * (0..n).map(|i| chol[[i, i]].ln()).sum::<f64>();
                -0.5 * (p * (2.0 * PI).ln() + logdet + maha)
            }
        }
    }

    fn dense_cov(&self) -> Array2<f64> {
        match self {
            Component::Diag { var, .. } => Array2::from_diag(var),
            Component::Full { cov, .. } => cov.clone(),
        }
    }

    fn mean(&self) -> &Array1<f64> {
        match self {
            Component::Diag { mean, .. } | Component::Full { mean, .. } => mean,
        }
    }
}

fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

fn m_step(
    x: ArrayView2<f64>,
    resp: &Array2<f64>,
    cov: Covariance,
    prev: Option<&[Component]>,
) -> Result<(Array1<f64>, Vec<Component>)> {
    let (n, p) = x.dim();
    let k = resp.ncols();
    let mut weights = Array1::zeros(k);
    let mut comps = Vec::with_capacity(k);
    for c in 0..k {
        let r = resp.column(c);
        let nk: f64 = r.sum();
        weights[c] = nk / n as f64;
        if nk < 1e-300 {
            // a vanished component keeps its previous parameters at weight 0
            let old = prev
                .map(|p| match &p[c] {
                    Component::Diag { mean, var } => Component::Diag { mean: mean.clone(), var: var.clone() },
                    Component::Full { mean, chol, cov } => Component::Full {
                        mean: mean.clone(),
                        chol: chol.clone(),
                        cov: cov.clone(),
                    },
                })
                .ok_or_else(|| Error::Numerical(format!("component {c} starts empty")))?;
            comps.push(old);
            continue;
        }
        let mut mean = Array1::zeros(p);
        for (i, row) in x.rows().into_iter().enumerate() {
            mean.scaled_add(r[i], &row);
        }
        mean /= nk;
        match cov {
            Covariance::Diagonal => {
                let mut var = Array1::zeros(p);
                for (i, row) in x.rows().into_iter().enumerate() {
                    for j in 0..p {
                        let d = row[j] - mean[j];
                        var[j] += r[i] * d * d;
                    }
                }
                var.mapv_inplace(|v: f64| (v / nk).max(COVARIANCE_FLOOR));
                comps.push(Component::Diag { mean, var });
            }
            Covariance::Full => {
                let mut s = Array2::zeros((p, p));
                for (i, row) in x.rows().into_iter().enumerate() {
                    let d = &row - &mean;
                    for a in 0..p {
                        for b in 0..=a {
                            s[[a, b]] += r[i] * d[a] * d[b];
                        }
                    }
                }
                for a in 0..p {
                    for b in 0..=a {
                        let v = s[[a, b]] / nk;
                        s[[a, b]] = v;
                        s[[b, a]] = v;
                    }
                    s[[a, a]] += COVARIANCE_FLOOR;
                }
                let chol = cholesky(&s).ok_or_else(|| {
                    Error::Numerical(format!("covariance of component {c} is singular after flooring"))
                })?;
                comps.push(Component::Full { mean, chol, cov: s });
            }
        }
    }
    Ok((weights, comps))
}

/// EM for a Gaussian mixture initialized from K-means. Stops when the
/// log-likelihood gain falls below `1e-10·max(1, |ll|)` or after `max_iter`
/// E-steps.
pub fn gmm_em(
    x: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    covariance: Covariance,
) -> Result<GmmFit> {
    let n = x.nrows();
    check_k(n, k)?;
    let x = x.as_standard_layout();
    let x = x.view();
    let init = kmeans_fit(x, k, seed, 300, super::DEFAULT_N_INIT)?;
    let mut resp = Array2::zeros((n, k));
    for (i, &l) in init.assignment.labels.iter().enumerate() {
        resp[[i, l]] = 1.0;
    }
    let (mut weights, mut comps) = m_step(x, &resp, covariance, None)?;
    let mut history = Vec::new();
    let mut logp = vec![0.0; k];
    for it in 0..max_iter.max(1) {
        let mut ll = 0.0;
        for (i, row) in x.rows().into_iter().enumerate() {
            let xr = row.as_slice().expect("standard layout");
            for c in 0..k {
                logp[c] = weights[c].ln() + comps[c].log_density(xr);
            }
            let mx = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + logp.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            ll += lse;
            for c in 0..k {
                resp[[i, c]] = (logp[c] - lse).exp();
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("log-likelihood is {ll} at iteration {it}")));
        }
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| ll - prev < 1e-10 * prev.abs().max(1.0));
        history.push(ll);
        if converged || it + 1 == max_iter.max(1) {
            break;
        }
        (weights, comps) = m_step(x, &resp, covariance, Some(&comps))?;
    }

    let raw: Vec<usize> = resp
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for c in 1..k {
                if r[c] > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let (labels, map) = canonicalize(&raw, k);
    let mut inv = vec![0; k];
    for (old, &new) in map.iter().enumerate() {
        inv[new] = old;
    }
    let p = x.ncols();
    let mut ordered_resp = Array2::zeros((n, k));
    let mut means = Array2::zeros((k, p));
    let mut ordered_w = Array1::zeros(k);
    let mut covs = Vec::with_capacity(k);
    for new in 0..k {
        let old = inv[new];
        ordered_resp.column_mut(new).assign(&resp.column(old));
        means.row_mut(new).assign(comps[old].mean());
        ordered_w[new] = weights[old];
        covs.push(comps[old].dense_cov());
    }
    Ok(GmmFit {
        assignment: ClusterAssignment {
            labels,
            k,
            algorithm: ClusterAlgorithm::Gmm,
            seed,
            objective: *history.last().expect("one E-step"),
        },
        responsibilities: ordered_resp,
        weights: ordered_w,
        means,
        covariances: covs,
        loglik_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::column_moments;
    use ndarray::array;

    #[test]
    fn single_component_is_sample_moments() {
        let x = array![[1.0, 0.0], [2.0, 4.0], [4.0, 2.0], [5.0, 6.0]];
        let fit = gmm_em(x.view(), 1, 0, 50, Covariance::Diagonal).unwrap();
        let (mean, var) = column_moments(x.view());
        for j in 0..2 {
            assert!((fit.means[[0, j]] - mean[j]).abs() < 1e-12);
            assert!((fit.covariances[0][[j, j]] - var[j]).abs() < 1e-12);
        }
        assert!((fit.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_covariance_single_component() {
        let x = array![[1.0, 0.0], [2.0, 4.0], [4.0, 2.0], [5.0, 7.0]];
        let fit = gmm_em(x.view(), 1, 0, 50, Covariance::Full).unwrap();
        // population covariance of the two columns
        let (mean, _) = column_moments(x.view());
        let cxy: f64 = x.rows().into_iter().map(|r| (r[0] - mean[0]) * (r[1] - mean[1])).sum::<f64>() / 4.0;
        assert!((fit.covariances[0][[0, 1]] - cxy).abs() < 1e-12);
    }

    #[test]
    fn responsibilities_rows_sum_to_one() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 31 + j * 17) % 13) as f64 / 3.0);
        let fit = gmm_em(x.view(), 3, 4, 100, Covariance::Diagonal).unwrap();
        for r in fit.responsibilities.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        for w in fit.loglik_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-8);
        }
    }

    #[test]
    fn constant_data_is_floored() {
        let x = Array2::from_elem((5, 2), 3.0);
        let fit = gmm_em(x.view(), 1, 0, 10, Covariance::Diagonal).unwrap();
        assert_eq!(fit.covariances[0][[0, 0]], COVARIANCE_FLOOR);
    }
}
