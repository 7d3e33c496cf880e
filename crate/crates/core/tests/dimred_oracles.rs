use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;
use subtype_core::dimred::{pca, tsne, TsneConfig};
use subtype_core::rng::seeded;

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

#[test]
fn pca_matches_dense_eigen_oracle() {
    let x = random(6, 4, 1);
    let fit = pca(x.view(), 2).unwrap();
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let c = &x - &mean;
    let cov = c.t().dot(&c) / 6.0;
    let eig = DMatrix::from_fn(4, 4, |i, j| cov[[i, j]]).symmetric_eigen();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (k, &idx) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        // largest-magnitude coordinate positive
        let big = v.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if big < 0.0 {
            v.iter_mut().for_each(|e| *e = -*e);
        }
        for i in 0..6 {
            let coord: f64 = (0..4).map(|j| c[[i, j]] * v[j]).sum();
            assert!((fit.projection.coords[[i, k]] - coord).abs() < 1e-8);
        }
        let ev = fit.projection.explained_variance.as_ref().unwrap()[k];
        assert!((ev - eig.eigenvalues[idx]).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn full_rank_pca_reconstructs(seed in 0u64..1000, n in 3usize..9, p in 2usize..6) {
        let x = random(n, p, seed);
        let fit = pca(x.view(), n.min(p)).unwrap();
        let back = fit.reconstruct();
        for (a, b) in back.iter().zip(x.iter()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        let ev = fit.projection.explained_variance.clone().unwrap();
        for w in ev.windows(2) {
            prop_assert!(w[0] + 1e-12 >= w[1]);
        }
    }

    #[test]
    fn pca_is_translation_invariant(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let x = random(8, 3, seed);
        let moved = x.mapv(|v| v + shift);
        let a = pca(x.view(), 2).unwrap();
        let b = pca(moved.view(), 2).unwrap();
        for (u, v) in a.projection.coords.iter().zip(b.projection.coords.iter()) {
            prop_assert!((u - v).abs() < 1e-8);
        }
    }
}

fn clustered(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded(seed);
    Array2::from_shape_fn((n, 5), |(i, j)| {
        (if (i % 3) == j { 8.0 } else { 0.0 }) + rng.sample::<f64, _>(StandardNormal)
    })
}

#[test]
fn tsne_keeps_duplicates_together() {
    let mut x = clustered(60, 4);
    let first = x.row(0).to_owned();
    x.row_mut(1).assign(&first);
    let cfg = TsneConfig {
        perplexity: 10.0,
        iterations: 500,
        seed: 2,
        ..Default::default()
    };
    let fit = tsne(x.view(), &cfg).unwrap();
    let y = &fit.projection.coords;
    let d = |i: usize, j: usize| ((y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2)).sqrt();
    let mut all: Vec<f64> = Vec::new();
    for i in 0..60 {
        for j in (i + 1)..60 {
            all.push(d(i, j));
        }
    }
    all.sort_by(f64::total_cmp);
    let q05 = all[(0.05 * all.len() as f64) as usize];
    assert!(d(0, 1) < q05, "{} vs {q05}", d(0, 1));
}

#[test]
fn tsne_calibration_and_kl_monotone_after_exaggeration() {
    // at n below about 100 the fixed step of 200 overshoots and KL oscillates
    let x = clustered(300, 6);
    let cfg = TsneConfig {
        perplexity: 15.0,
        iterations: 1000,
        seed: 1,
        ..Default::default()
    };
    let fit = tsne(x.view(), &cfg).unwrap();
    for p in &fit.perplexities {
        assert!((p - 15.0).abs() < 1e-3);
    }
    let after: Vec<f64> = fit
        .kl_history
        .iter()
        .filter(|(it, _)| *it > cfg.exaggeration_iters)
        .map(|(_, kl)| *kl)
        .collect();
    for w in after.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{:?}", fit.kl_history);
    }
    assert!(fit.projection.coords.iter().all(|v| v.is_finite()));
}
