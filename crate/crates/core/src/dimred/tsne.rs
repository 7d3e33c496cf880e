use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{Projection, ProjectionMethod};
use crate::error::{Error, Result};
use crate::linalg::pairwise_sq_dists;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            seed: 0,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneFit {
    pub projection: Projection,
    /// Bandwidth σ_i per point.
    pub sigmas: Vec<f64>,
    /// Perplexity actually reached per point.
    pub perplexities: Vec<f64>,
    /// `(iteration, KL(P‖Q))` every 50 iterations and at the end.
    pub kl_history: Vec<(usize, f64)>,
}

const SIGMA_MIN: f64 = 1e-20;
const SIGMA_MAX: f64 = 1e20;
const MAX_BISECTIONS: usize = 200;
const ENTROPY_TOL: f64 = 1e-5;

/// Row `i` of the conditional distribution `p_{j|i}` for bandwidth σ, and
/// its Shannon entropy (nats).
fn conditional_row(d2: &[f64], i: usize, sigma: f64, out: &mut [f64]) -> f64 {
    let beta = 1.0 / (2.0 * sigma * sigma);
    let dmin = d2
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, o)) in d2.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *o = 0.0;
            continue;
        }
        let shifted = d - dmin;
        let v = (-beta * shifted).exp();
        *o = v;
        sum += v;
        weighted += v * shifted;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Conditional probabilities `p_{j|i}` (rows sum to one) with σ_i found by
/// bisection on log σ so the row entropy matches `ln(perplexity)`.
pub fn conditional_probabilities(x: ArrayView2<f64>, perplexity: f64) -> Result<(Array2<f64>, Vec<f64>, Vec<f64>)> {
    let n = x.nrows();
    check_perplexity(n, perplexity)?;
    let d2 = pairwise_sq_dists(x);
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    let mut sigmas = vec![0.0; n];
    let mut perps = vec![0.0; n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let di = d2.row(i).to_vec();
        let (mut lo, mut hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
        let mut sigma = 1.0f64;
        let mut h = conditional_row(&di, i, sigma, &mut row);
        for _ in 0..MAX_BISECTIONS {
            if (h - target).abs() < ENTROPY_TOL {
                break;
            }
            // entropy grows with σ
            if h > target {
                hi = sigma.ln();
            } else {
                lo = sigma.ln();
            }
            sigma = (0.5 * (lo + hi)).exp();
            h = conditional_row(&di, i, sigma, &mut row);
        }
        sigmas[i] = sigma;
        perps[i] = h.exp();
        p.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
    }
    Ok((p, sigmas, perps))
}

/// `P_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(cond: &Array2<f64>) -> Array2<f64> {
    let n = cond.nrows() as f64;
    (cond + &cond.t()) / (2.0 * n)
}

/// KL(P‖Q) for the Student-t affinities of `y`.
pub fn kl_divergence(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = y.nrows();
    let mut num = Array2::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2);
            let v = 1.0 / (1.0 + d);
            num[[i, j]] = v;
            num[[j, i]] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[[i, j]];
            if i != j && pij > 0.0 {
                let q = (num[[i, j]] / z).max(1e-300);
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

fn check_perplexity(n: usize, perplexity: f64) -> Result<()> {
    let upper = (n as f64 - 1.0) / 3.0;
    if !(perplexity > 1.0 && perplexity < upper) {
        return Err(Error::invalid(format!(
            "perplexity {perplexity} must lie in (1, {upper:.3}) for {n} points"
        )));
    }
    Ok(())
}

/// Exact t-SNE into two dimensions: early exaggeration, momentum switch,
/// per-coordinate adaptive gains.
pub fn tsne(x: ArrayView2<f64>, cfg: &TsneConfig) -> Result<TsneFit> {
    let n = x.nrows();
    let (cond, sigmas, perps) = conditional_probabilities(x, cfg.perplexity)?;
    let p = joint_probabilities(&cond).mapv(|v| v.max(1e-300));
    let mut rng = seeded(cfg.seed);
    let mut y = Array2::from_shape_fn((n, 2), |_| 1e-4 * rng.sample::<f64, _>(StandardNormal));
    let mut velocity = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut num = Array2::<f64>::zeros((n, n));
    let mut grad = Array2::<f64>::zeros((n, 2));
    let mut history = Vec::new();

    for it in 0..cfg.iterations {
        let exag = if it < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let momentum = if it < cfg.exaggeration_iters {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2);
                let v = 1.0 / (1.0 + d);
                num[[i, j]] = v;
                num[[j, i]] = v;
                z += 2.0 * v;
            }
        }
        grad.fill(0.0);
        for i in 0..n {
            let (mut g0, mut g1) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (exag * p[[i, j]] - num[[i, j]] / z) * num[[i, j]];
                g0 += w * (y[[i, 0]] - y[[j, 0]]);
                g1 += w * (y[[i, 1]] - y[[j, 1]]);
            }
            grad[[i, 0]] = 4.0 * g0;
            grad[[i, 1]] = 4.0 * g1;
        }
        for ((g, gain), v) in grad.iter().zip(gains.iter_mut()).zip(velocity.iter()) {
            *gain = if (*g > 0.0) != (*v > 0.0) {
                *gain + 0.2
            } else {
                (*gain * 0.8).max(0.01)
            };
        }
        for ((v, g), gain) in velocity.iter_mut().zip(grad.iter()).zip(gains.iter()) {
            *v = momentum * *v - cfg.learning_rate * gain * g;
        }
        y += &velocity;
        let mean = y.mean_axis(ndarray::Axis(0)).expect("n > 0");
        y -= &mean;

        if (it + 1) % 50 == 0 || it + 1 == cfg.iterations {
            history.push((it + 1, kl_divergence(&p, &y)));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("t-SNE produced non-finite coordinates".into()));
    }
    Ok(TsneFit {
        projection: Projection {
            coords: y,
            method: ProjectionMethod::Tsne,
            explained_variance: None,
        },
        sigmas,
        perplexities: perps,
        kl_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize) -> Array2<f64> {
        let mut rng = seeded(2);
        Array2::from_shape_fn((n, 4), |(i, _)| (i % 3) as f64 * 6.0 + rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn perplexity_bounds() {
        let x = blobs(31);
        assert!(conditional_probabilities(x.view(), 1.0).is_err());
        assert!(conditional_probabilities(x.view(), 10.0).is_err());
        assert!(conditional_probabilities(x.view(), 9.9).is_ok());
    }

    #[test]
    fn probabilities_normalized_and_calibrated() {
        let x = blobs(60);
        let (cond, _, perps) = conditional_probabilities(x.view(), 10.0).unwrap();
        for r in cond.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-9);
        }
        for p in perps {
            assert!((p - 10.0).abs() < 1e-3, "{p}");
        }
        let joint = joint_probabilities(&cond);
        assert!((joint.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_per_seed() {
        let x = blobs(30);
        let cfg = TsneConfig {
            perplexity: 5.0,
            iterations: 100,
            seed: 4,
            ..Default::default()
        };
        let a = tsne(x.view(), &cfg).unwrap();
        let b = tsne(x.view(), &cfg).unwrap();
        assert_eq!(a.projection.coords, b.projection.coords);
    }
}
