use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use super::{canonicalize, check_k, ClusterAlgorithm, ClusterAssignment};
use crate::error::Result;
use crate::linalg::sq_dist;
use crate::rng::{seeded, stage_seed, Rng};

pub const DEFAULT_N_INIT: usize = 10;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// Centroids in canonical label order.
    pub centroids: Array2<f64>,
    /// Inertia after every assignment step, then the inertia of the final
    /// means.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

/// K-means++ seeding and Lloyd iterations, best of `DEFAULT_N_INIT`
/// restarts.
pub fn kmeans(x: ArrayView2<f64>, k: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment> {
    Ok(kmeans_fit(x, k, seed, max_iter, DEFAULT_N_INIT)?.assignment)
}

/// Best (lowest inertia, earliest on ties) of `n_init` seeded runs.
pub fn kmeans_fit(
    x: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    n_init: usize,
) -> Result<KMeansFit> {
    let mut best: Option<KMeansFit> = None;
    for run in 0..n_init.max(1) {
        let fit = kmeans_single(x, k, stage_seed(seed, run as u64), max_iter)?;
        if best
            .as_ref()
            .is_none_or(|b| fit.assignment.objective < b.assignment.objective)
        {
            best = Some(fit);
        }
    }
    let mut best = best.expect("at least one run");
    best.assignment.seed = seed;
    Ok(best)
}

fn plus_plus(x: ArrayView2<f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(x.row(i).as_slice().unwrap(), centroids.row(0).as_slice().unwrap()))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            let v = sq_dist(x.row(i).as_slice().unwrap(), centroids.row(c).as_slice().unwrap());
            if v < *d {
                *d = v;
            }
        }
    }
    centroids
}

fn nearest(row: &[f64], centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(row, cen.as_slice().unwrap());
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn update_means(x: ArrayView2<f64>, labels: &[usize], k: usize, centroids: &mut Array2<f64>) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        let mut s = sums.row_mut(l);
        s += &x.row(i);
    }
    for c in 0..k {
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
    counts
}

/// One K-means run from a single k-means++ seeding.
pub fn kmeans_single(x: ArrayView2<f64>, k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    let n = x.nrows();
    check_k(n, k)?;
    let x = x.as_standard_layout();
    let x = x.view();
    let mut rng = seeded(seed);
    let mut centroids = plus_plus(x, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(x.row(i).as_slice().unwrap(), &centroids);
            if labels[i] != c {
                changed = true;
                labels[i] = c;
            }
            dists[i] = d;
            inertia += d;
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut counts = update_means(x, &labels, k, &mut centroids);
        // an emptied cluster takes the point farthest from its own centroid
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .map(|i| {
                    let d = sq_dist(x.row(i).as_slice().unwrap(), centroids.row(labels[i]).as_slice().unwrap());
                    (i, d)
                })
                .fold((usize::MAX, -1.0), |best, (i, d)| if d > best.1 { (i, d) } else { best });
            let Some(i) = Some(far.0).filter(|&i| i != usize::MAX) else { break };
            labels[i] = empty;
            counts = update_means(x, &labels, k, &mut centroids);
            centroids.row_mut(empty).assign(&x.row(i));
        }
    }
    let inertia: f64 = (0..n)
        .map(|i| sq_dist(x.row(i).as_slice().unwrap(), centroids.row(labels[i]).as_slice().unwrap()))
        .sum();
    history.push(inertia);

    let (canon, map) = canonicalize(&labels, k);
    let mut ordered = Array2::zeros(centroids.dim());
    for (old, &new) in map.iter().enumerate() {
        ordered.row_mut(new).assign(&centroids.row(old));
    }
    Ok(KMeansFit {
        assignment: ClusterAssignment {
            labels: canon,
            k,
            algorithm: ClusterAlgorithm::Kmeans,
            seed,
            objective: inertia,
        },
        centroids: ordered,
        inertia_history: history,
        iterations,
    })
}
