//! Partitioning of sample rows (K-means, Gaussian mixtures, spectral) and
//! agglomerative clustering of feature columns.

mod gmm;
mod hierarchical;
mod kmeans;
mod spectral;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv;

pub use gmm::{gmm_em, Covariance, GmmFit, COVARIANCE_FLOOR};
pub use hierarchical::{
    agglomerate, correlation_distance, cut_at_height, cut_dendrogram, hierarchical_corr,
    Dendrogram, Linkage, Merge,
};
pub use kmeans::{kmeans, kmeans_fit, kmeans_single, KMeansFit, DEFAULT_N_INIT};
pub use spectral::{rbf_affinity, spectral, spectral_fit, SpectralFit};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterAlgorithm {
    Kmeans,
    Gmm,
    Spectral,
    Hierarchical,
}

impl fmt::Display for ClusterAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterAlgorithm::Kmeans => "kmeans",
            ClusterAlgorithm::Gmm => "gmm",
            ClusterAlgorithm::Spectral => "spectral",
            ClusterAlgorithm::Hierarchical => "hierarchical",
        })
    }
}

impl std::str::FromStr for ClusterAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Self::Kmeans),
            "gmm" => Ok(Self::Gmm),
            "spectral" => Ok(Self::Spectral),
            "hierarchical" => Ok(Self::Hierarchical),
            other => Err(Error::invalid(format!("unknown clustering algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub algorithm: ClusterAlgorithm,
    pub seed: u64,
    /// Inertia for K-means and spectral (of the embedding), final
    /// log-likelihood for GMM.
    pub objective: f64,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn save(&self, path: &Path, sample_ids: &[String]) -> Result<()> {
        if sample_ids.len() != self.labels.len() {
            return Err(Error::invalid("sample id count differs from label count"));
        }
        let rows = sample_ids
            .iter()
            .zip(&self.labels)
            .map(|(id, l)| vec![id.clone(), l.to_string()]);
        tsv::write_table(path, &["sample_id", "cluster"], rows)
    }
}

/// Relabels so that cluster 0 is the largest; equal sizes keep the order of
/// first appearance. Returns the new labels and the old → new map.
pub fn canonicalize(labels: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut size = vec![0usize; k];
    let mut first = vec![usize::MAX; k];
    for (i, &l) in labels.iter().enumerate() {
        size[l] += 1;
        first[l] = first[l].min(i);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| size[b].cmp(&size[a]).then(first[a].cmp(&first[b])).then(a.cmp(&b)));
    let mut map = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        map[old] = new;
    }
    (labels.iter().map(|&l| map[l]).collect(), map)
}

/// Reads a `sample_id, cluster` table, keyed by sample id.
pub fn load_assignment(path: &Path) -> Result<BTreeMap<String, usize>> {
    let table = tsv::read_table(path)?;
    let mut out = BTreeMap::new();
    for (line, fields) in table.rows {
        if fields.len() < 2 {
            return Err(Error::Parse {
                line,
                message: "expected sample_id and cluster".into(),
            });
        }
        let c = fields[1].parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("bad cluster id '{}'", fields[1]),
        })?;
        out.insert(fields[0].clone(), c);
    }
    Ok(out)
}

pub(crate) fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in [1, {n}]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_by_size() {
        let (l, map) = canonicalize(&[2, 2, 0, 1, 1, 1], 3);
        assert_eq!(l, vec![1, 1, 2, 0, 0, 0]);
        assert_eq!(map, vec![2, 0, 1]);
        let (l, _) = canonicalize(&[1, 0, 1, 0], 2);
        assert_eq!(l, vec![0, 1, 0, 1]);
    }
}
