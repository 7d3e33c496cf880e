use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{Projection, ProjectionMethod};
use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE};

#[derive(Debug, Clone)]
pub struct PcaFit {
    pub projection: Projection,
    /// `n_components × p`, orthonormal rows.
    pub components: Array2<f64>,
    pub mean: Array1<f64>,
}

impl PcaFit {
    /// Maps coordinates back to the input space.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.projection.coords.dot(&self.components) + &self.mean
    }
}

/// Principal components of the population covariance. Each component is
/// signed so that its largest-magnitude coordinate is positive.
pub fn pca(x: ArrayView2<f64>, n_components: usize) -> Result<PcaFit> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::invalid("pca needs at least two samples"));
    }
    if n_components == 0 || n_components > n.min(p) {
        return Err(Error::invalid(format!(
            "n_components = {n_components} must be in [1, {}]",
            n.min(p)
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let xc = &x - &mean;
    let nf = n as f64;

    let (values, mut comps) = if p <= n {
        let cov = xc.t().dot(&xc) / nf;
        let e = jacobi_eigen(cov.view(), JACOBI_TOLERANCE, JACOBI_MAX_SWEEPS)?;
        let mut vals = Vec::with_capacity(n_components);
        let mut comps = Array2::zeros((n_components, p));
        for c in 0..n_components {
            let src = p - 1 - c;
            vals.push(e.values[src].max(0.0));
            comps.row_mut(c).assign(&e.vectors.column(src));
        }
        (vals, comps)
    } else {
        // p > n: eigen-decompose the n × n Gram matrix instead
        let gram = xc.dot(&xc.t()) / nf;
        let e = jacobi_eigen(gram.view(), JACOBI_TOLERANCE, JACOBI_MAX_SWEEPS)?;
        let top = e.values[n - 1].max(0.0);
        let mut vals = Vec::with_capacity(n_components);
        let mut comps = Array2::<f64>::zeros((n_components, p));
        for c in 0..n_components {
            let src = n - 1 - c;
            let lambda = e.values[src].max(0.0);
            vals.push(lambda);
            if lambda > 1e-12 * top.max(f64::MIN_POSITIVE) {
                let v = xc.t().dot(&e.vectors.column(src)) / (nf * lambda).sqrt();
                comps.row_mut(c).assign(&v);
            } else {
                complete_basis(&mut comps, c);
            }
        }
        (vals, comps)
    };

    for mut row in comps.rows_mut() {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        if row[best] < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    let coords = xc.dot(&comps.t());
    Ok(PcaFit {
        projection: Projection {
            coords,
            method: ProjectionMethod::Pca,
            explained_variance: Some(values),
        },
        components: comps,
        mean,
    })
}

/// Fills row `c` with a unit vector orthogonal to rows `0..c`.
fn complete_basis(comps: &mut Array2<f64>, c: usize) {
    let p = comps.ncols();
    for axis in 0..p {
        let mut v = Array1::zeros(p);
        v[axis] = 1.0;
        for r in 0..c {
            let proj = comps.row(r).dot(&v);
            v.scaled_add(-proj, &comps.row(r));
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            comps.row_mut(c).assign(&(v / norm));
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn axis_aligned_points() {
        let x = array![[-2.0, 0.0], [0.0, 0.0], [1.0, 0.0], [5.0, 0.0]];
        let fit = pca(x.view(), 2).unwrap();
        assert!((fit.components[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(fit.components[[0, 1]].abs() < 1e-12);
        let ev = fit.projection.explained_variance.unwrap();
        assert!(ev[1].abs() < 1e-12);
    }

    #[test]
    fn wide_matrix_uses_gram_route() {
        let x = Array2::from_shape_fn((4, 7), |(i, j)| ((i * 5 + j * 3) % 7) as f64 + 0.1 * (i * j) as f64);
        let fit = pca(x.view(), 4).unwrap();
        let recon = fit.reconstruct();
        for (a, b) in recon.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let gram = fit.components.dot(&fit.components.t());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-8, "{gram}");
            }
        }
    }

    #[test]
    fn component_count_checked() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert!(pca(x.view(), 3).is_err());
        assert!(pca(x.slice(ndarray::s![0..1, ..]), 1).is_err());
    }
}
