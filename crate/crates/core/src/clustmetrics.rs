//! Agreement and cohesion scores for partitions.
//!
//! All entropies use the natural logarithm. NMI normalizes mutual
//! information by the arithmetic mean of the two entropies.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAlgorithm;
use crate::error::{Error, Result};

/// Cross-tabulation of two labelings over the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    /// `counts[r][c]`: samples in row class `r` and column class `c`.
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut keys = labels.to_vec();
    keys.sort_unstable();
    keys.dedup();
    let ids = labels
        .iter()
        .map(|l| keys.binary_search(l).expect("present"))
        .collect();
    (ids, keys.len())
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::invalid(format!(
                "label vectors differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let (ra, r) = dense_ids(a);
        let (cb, c) = dense_ids(b);
        let mut counts = vec![vec![0usize; c]; r];
        for (&i, &j) in ra.iter().zip(&cb) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|row| row.iter().sum()).collect();
        let col_sums = (0..c).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: a.len(),
        })
    }
}

fn entropy(sums: &[usize], n: usize) -> f64 {
    let n = n as f64;
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information in `[0, 1]`.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::invalid("nmi of empty labelings"));
    }
    let t = ContingencyTable::new(a, b)?;
    let n = t.n as f64;
    let ha = entropy(&t.row_sums, t.n);
    let hb = entropy(&t.col_sums, t.n);
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    let denom = 0.5 * (ha + hb);
    if denom == 0.0 {
        // both labelings put everything in one cluster
        return Ok(1.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Fraction of samples that belong to the majority truth class of their
/// predicted cluster.
pub fn purity(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::invalid("purity of empty labelings"));
    }
    let t = ContingencyTable::new(predicted, truth)?;
    let hits: usize = t.counts.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / t.n as f64)
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Returns 1 when both partitions are trivial in the
/// same way (the index is 0/0 there).
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    if t.n < 2 {
        return Ok(1.0);
    }
    let index: f64 = t.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let sa: f64 = t.row_sums.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = t.col_sums.iter().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(t.n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Mean silhouette and per-sample scores under Euclidean distance.
/// Samples in singleton clusters score 0, as do samples with `a = b = 0`.
pub fn silhouette(x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} samples", labels.len())));
    }
    let (ids, k) = dense_ids(labels);
    if k < 2 {
        return Err(Error::invalid("silhouette needs at least two clusters"));
    }
    let mut size = vec![0usize; k];
    for &c in &ids {
        size[c] += 1;
    }
    let mut scores = vec![0.0; n];
    let mut sums = vec![0.0; k];
    for i in 0..n {
        if size[ids[i]] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        let xi = x.row(i);
        for j in 0..n {
            if i != j {
                let d: f64 = xi
                    .iter()
                    .zip(x.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sums[ids[j]] += d;
            }
        }
        let own = ids[i];
        let a = sums[own] / (size[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && size[c] > 0)
            .map(|c| sums[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        scores[i] = if m > 0.0 { (b - a) / m } else { 0.0 };
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    Ok((mean, scores))
}

/// Flat metrics record written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmi: Option<f64>,
    pub purity: Option<f64>,
    pub silhouette: Option<f64>,
    pub ari: Option<f64>,
    pub k: usize,
    pub algorithm: ClusterAlgorithm,
    pub seed: u64,
}

impl MetricsReport {
    /// Scores `predicted` on `x`, and against `truth` when given.
    pub fn compute(
        x: ArrayView2<f64>,
        predicted: &[usize],
        truth: Option<&[usize]>,
        k: usize,
        algorithm: ClusterAlgorithm,
        seed: u64,
    ) -> Result<Self> {
        let sil = match silhouette(x, predicted) {
            Ok((m, _)) => Some(m),
            Err(Error::InvalidArgument(_)) if dense_ids(predicted).1 < 2 => None,
            Err(e) => return Err(e),
        };
        let (nmi_v, pur, ari) = match truth {
            Some(t) => (
                Some(nmi(predicted, t)?),
                Some(purity(predicted, t)?),
                Some(adjusted_rand(predicted, t)?),
            ),
            None => (None, None, None),
        };
        Ok(Self {
            nmi: nmi_v,
            purity: pur,
            silhouette: sil,
            ari,
            k,
            algorithm,
            seed,
        })
    }
}

/// Maps arbitrary string labels to dense integer ids in sorted order.
pub fn encode_labels<S: AsRef<str>>(labels: &[S]) -> (Vec<usize>, Vec<String>) {
    let mut names: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
    names.sort();
    names.dedup();
    let ids = labels
        .iter()
        .map(|s| names.binary_search_by(|n| n.as_str().cmp(s.as_ref())).expect("present"))
        .collect();
    (ids, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn nmi_identical_and_independent() {
        assert!((nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmi(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap().abs() < 1e-15);
        assert_eq!(nmi(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(nmi(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn nmi_worked_case() {
        // A = [0,0,1,2], B = [0,0,1,1]
        // H(A) = -(½ln½ + 2·¼ln¼) = 1.5 ln 2, H(B) = ln 2, I = H(B) = ln 2
        let want = (2.0f64.ln()) / (0.5 * (1.5 * 2.0f64.ln() + 2.0f64.ln()));
        assert!((nmi(&[0, 0, 1, 2], &[0, 0, 1, 1]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn purity_cases() {
        assert_eq!(purity(&[0, 0, 1, 1], &[5, 5, 7, 7]).unwrap(), 1.0);
        // clusters {a,a,b} and {b,b,a}
        let p = purity(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 0]).unwrap();
        assert!((p - 4.0 / 6.0).abs() < 1e-15);
        assert!((purity(&[0; 6], &[0, 1, 2, 0, 1, 2]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn silhouette_cases() {
        let x = array![[0.0], [0.0], [1.0], [1.0]];
        let (m, s) = silhouette(x.view(), &[0, 0, 1, 1]).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(s, vec![1.0; 4]);
        let same = array![[2.0], [2.0], [2.0]];
        assert_eq!(silhouette(same.view(), &[0, 0, 1]).unwrap().0, 0.0);
        assert!(silhouette(x.view(), &[0, 0, 0, 0]).is_err());
        let (m, s) = silhouette(x.view(), &[0, 1, 2, 3]).unwrap();
        assert_eq!(m, 0.0);
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ari_cases() {
        assert_eq!(adjusted_rand(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!((adjusted_rand(&[0, 0, 1, 2], &[2, 2, 0, 1]).unwrap() - 1.0).abs() < 1e-15);
        assert!(adjusted_rand(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn string_labels_encode_sorted() {
        let (ids, names) = encode_labels(&["LumB", "Basal", "LumB", "Her2"]);
        assert_eq!(names, vec!["Basal", "Her2", "LumB"]);
        assert_eq!(ids, vec![2, 0, 2, 1]);
    }

    #[test]
    fn report_without_truth() {
        let x = array![[0.0], [0.1], [5.0], [5.1]];
        let r = MetricsReport::compute(x.view(), &[0, 0, 1, 1], None, 2, ClusterAlgorithm::Kmeans, 3).unwrap();
        assert!(r.nmi.is_none());
        assert!(r.silhouette.unwrap() > 0.9);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"algorithm\":\"kmeans\""));
    }
}
