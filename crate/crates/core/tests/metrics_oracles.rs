//! Brute-force re-implementations of the partition scores.

use std::collections::BTreeMap;

use ndarray::Array2;
use proptest::prelude::*;
use subtype_core::clustmetrics::{adjusted_rand, nmi, purity, silhouette};

fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1.0;
    }
    -counts.values().map(|c| c / n * (c / n).ln()).sum::<f64>()
}

fn oracle_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let px = a.iter().filter(|&&v| v == x).count() as f64 / n;
        let py = b.iter().filter(|&&v| v == y).count() as f64 / n;
        mi += c / n * ((c / n) / (px * py)).ln();
    }
    let (ha, hb) = (entropy(a), entropy(b));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    mi / (0.5 * (ha + hb))
}

fn oracle_purity(pred: &[usize], truth: &[usize]) -> f64 {
    let clusters: Vec<usize> = {
        let mut c = pred.to_vec();
        c.sort();
        c.dedup();
        c
    };
    let mut total = 0;
    for c in clusters {
        let mut best = 0;
        for &t in truth {
            let count = pred.iter().zip(truth).filter(|(&p, &tt)| p == c && tt == t).count();
            best = best.max(count);
        }
        total += best;
    }
    total as f64 / pred.len() as f64
}

/// Pair counting over all `n(n−1)/2` pairs.
fn oracle_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            pairs += 1.0;
            if sa && sb {
                both += 1.0;
            }
            if sa {
                only_a += 1.0;
            }
            if sb {
                only_b += 1.0;
            }
        }
    }
    let expected = only_a * only_b / pairs;
    let max = 0.5 * (only_a + only_b);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

fn oracle_silhouette(x: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    let n = x.nrows();
    let dist = |i: usize, j: usize| -> f64 {
        x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    (0..n)
        .map(|i| {
            let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if own.is_empty() {
                return 0.0;
            }
            let a = own.iter().map(|&j| dist(i, j)).sum::<f64>() / own.len() as f64;
            let mut b = f64::INFINITY;
            let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
            others.sort();
            others.dedup();
            for c in others {
                let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                let d = members.iter().map(|&j| dist(i, j)).sum::<f64>() / members.len() as f64;
                b = b.min(d);
            }
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect()
}

fn labeling() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..=12).prop_flat_map(|n| {
        (
            proptest::collection::vec(0usize..4, n),
            proptest::collection::vec(0usize..4, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scores_match_brute_force((a, b) in labeling()) {
        prop_assert!((nmi(&a, &b).unwrap() - oracle_nmi(&a, &b)).abs() < 1e-10);
        prop_assert!((purity(&a, &b).unwrap() - oracle_purity(&a, &b)).abs() < 1e-10);
        prop_assert!((adjusted_rand(&a, &b).unwrap() - oracle_ari(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn silhouette_matches_brute_force(
        (labels, coords) in (3usize..=12).prop_flat_map(|n| (
            proptest::collection::vec(0usize..3, n),
            proptest::collection::vec(-3.0f64..3.0, n * 2),
        ))
    ) {
        let mut labels = labels;
        labels[0] = 0;
        labels[1] = 1;
        let x = Array2::from_shape_vec((labels.len(), 2), coords).unwrap();
        let (mean, per) = silhouette(x.view(), &labels).unwrap();
        let oracle = oracle_silhouette(&x, &labels);
        for (s, o) in per.iter().zip(&oracle) {
            prop_assert!((s - o).abs() < 1e-10);
        }
        prop_assert!((mean - per.iter().sum::<f64>() / per.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_permutation_invariant((a, b) in labeling(), shift in 1usize..4) {
        let perm = |l: &Vec<usize>| l.iter().map(|&v| (v + shift) % 4).collect::<Vec<_>>();
        prop_assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((adjusted_rand(&a, &b).unwrap() - adjusted_rand(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&perm(&a), &b).unwrap() - nmi(&a, &b).unwrap()).abs() < 1e-12);
        prop_assert!((adjusted_rand(&a, &perm(&b)).unwrap() - adjusted_rand(&a, &b).unwrap()).abs() < 1e-12);
        prop_assert!((purity(&perm(&a), &perm(&b)).unwrap() - purity(&a, &b).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn singletons_have_unit_purity_and_zero_silhouette() {
    let labels: Vec<usize> = (0..6).collect();
    let truth = vec![0, 0, 1, 1, 2, 2];
    assert_eq!(purity(&labels, &truth).unwrap(), 1.0);
    let x = Array2::from_shape_fn((6, 2), |(i, j)| (i * 3 + j) as f64);
    let (mean, per) = silhouette(x.view(), &labels).unwrap();
    assert_eq!(mean, 0.0);
    assert!(per.iter().all(|&s| s == 0.0));
}

#[test]
fn worked_nmi_case() {
    let a = [0, 0, 1, 2];
    let b = [0, 0, 1, 1];
    assert!((nmi(&a, &b).unwrap() - oracle_nmi(&a, &b)).abs() < 1e-12);
}
