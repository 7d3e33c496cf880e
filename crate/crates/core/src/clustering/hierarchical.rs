use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
    Complete,
}

/// One agglomeration step. Leaves are nodes `0..n`; merge `t` creates node
/// `n + t`. `a < b` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
    /// Leaves in plotting order (depth-first, `a` before `b`).
    pub leaf_order: Vec<usize>,
}

/// `1 − |pearson(f_i, f_j)|` between the columns of `f`.
pub fn correlation_distance(f: ArrayView2<f64>, names: Option<&[String]>) -> Result<Array2<f64>> {
    let (n, m) = f.dim();
    if m < 2 {
        return Err(Error::invalid("need at least two features"));
    }
    let mut centered = f.to_owned();
    let mut norms = vec![0.0; m];
    for (j, mut col) in centered.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|v| v - mean);
        let ss = col.dot(&col);
        let scale = mean.abs().max(1.0);
        if !(ss.sqrt() > 1e-12 * scale * (n as f64).sqrt()) {
            let name = names.map_or_else(|| format!("#{j}"), |ns| ns[j].clone());
            return Err(Error::validation(format!("feature '{name}' is constant")));
        }
        norms[j] = ss.sqrt();
    }
    let mut d = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let r = centered.column(i).dot(&centered.column(j)) / (norms[i] * norms[j]);
            let v = (1.0 - r.abs().min(1.0)).max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Agglomerative clustering of the columns of `f` by absolute correlation.
pub fn hierarchical_corr(f: ArrayView2<f64>, names: Option<&[String]>, linkage: Linkage) -> Result<Dendrogram> {
    let d = correlation_distance(f, names)?;
    agglomerate(&d, linkage)
}

/// Generic agglomeration over a symmetric distance matrix with
/// Lance–Williams updates. The closest pair merges first; ties go to the
/// lexicographically smallest node pair.
pub fn agglomerate(dist: &Array2<f64>, linkage: Linkage) -> Result<Dendrogram> {
    let n = dist.nrows();
    if n < 2 || dist.ncols() != n {
        return Err(Error::invalid("agglomerate needs a square matrix of at least 2 items"));
    }
    // slot s holds node `ids[s]` while `alive[s]`
    let mut d = dist.clone();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);
    for t in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let (lo, hi) = (ids[i].min(ids[j]), ids[i].max(ids[j]));
                let cand = (d[[i, j]], lo, hi, i, j);
                let better = match best {
                    None => true,
                    Some(b) => cand.0 < b.0 || (cand.0 == b.0 && (cand.1, cand.2) < (b.1, b.2)),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (h, lo, hi, i, j) = best.expect("two live clusters");
        let (si, sj) = (sizes[i] as f64, sizes[j] as f64);
        for k in 0..n {
            if !alive[k] || k == i || k == j {
                continue;
            }
            let v = match linkage {
                Linkage::Average => (si * d[[k, i]] + sj * d[[k, j]]) / (si + sj),
                Linkage::Complete => d[[k, i]].max(d[[k, j]]),
            };
            d[[k, i]] = v;
            d[[i, k]] = v;
        }
        alive[j] = false;
        sizes[i] += sizes[j];
        ids[i] = n + t;
        merges.push(Merge {
            a: lo,
            b: hi,
            height: h,
            size: sizes[i],
        });
    }
    let leaf_order = leaf_order(n, &merges);
    Ok(Dendrogram {
        n_leaves: n,
        merges,
        leaf_order,
    })
}

fn leaf_order(n: usize, merges: &[Merge]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut stack = vec![n + merges.len() - 1];
    while let Some(node) = stack.pop() {
        if node < n {
            out.push(node);
        } else {
            let m = merges[node - n];
            stack.push(m.b);
            stack.push(m.a);
        }
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn groups_after(d: &Dendrogram, n_merges: usize) -> Vec<usize> {
    let n = d.n_leaves;
    let total = n + d.merges.len();
    let mut parent: Vec<usize> = (0..total).collect();
    for (t, m) in d.merges.iter().take(n_merges).enumerate() {
        let node = n + t;
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = node;
        parent[rb] = node;
    }
    let mut label_of_root = std::collections::HashMap::new();
    (0..n)
        .map(|leaf| {
            let r = find(&mut parent, leaf);
            let next = label_of_root.len();
            *label_of_root.entry(r).or_insert(next)
        })
        .collect()
}

/// Group label per leaf after undoing the `n_groups − 1` highest merges.
/// Labels are numbered by first appearance in leaf index order.
pub fn cut_dendrogram(d: &Dendrogram, n_groups: usize) -> Result<Vec<usize>> {
    if n_groups == 0 || n_groups > d.n_leaves {
        return Err(Error::invalid(format!(
            "n_groups = {n_groups} must be in [1, {}]",
            d.n_leaves
        )));
    }
    Ok(groups_after(d, d.n_leaves - n_groups))
}

/// Group label per leaf keeping only merges at or below `height`. Requires
/// non-decreasing merge heights.
pub fn cut_at_height(d: &Dendrogram, height: f64) -> Vec<usize> {
    let k = d.merges.iter().take_while(|m| m.height <= height).count();
    groups_after(d, k)
}

impl Dendrogram {
    pub fn save(&self, path: &Path) -> Result<()> {
        let rows = self.merges.iter().enumerate().map(|(t, m)| {
            vec![
                (self.n_leaves + t).to_string(),
                m.a.to_string(),
                m.b.to_string(),
                m.height.to_string(),
                m.size.to_string(),
            ]
        });
        tsv::write_table(path, &["node", "a", "b", "height", "size"], rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_and_negated_features_merge_first() {
        let f = array![
            [1.0, 1.0, -1.0, 0.3],
            [2.0, 2.0, -2.0, -0.2],
            [3.0, 3.0, -3.0, 0.9],
            [5.0, 5.0, -5.0, 0.1]
        ];
        let d = correlation_distance(f.view(), None).unwrap();
        assert!(d[[0, 1]].abs() < 1e-12);
        assert!(d[[0, 2]].abs() < 1e-12);
        for i in 0..4 {
            assert_eq!(d[[i, i]], 0.0);
            for j in 0..4 {
                assert_eq!(d[[i, j]], d[[j, i]]);
            }
        }
        let dend = hierarchical_corr(f.view(), None, Linkage::Average).unwrap();
        assert_eq!(dend.merges[0].height, d[[0, 1]].min(d[[0, 2]]).min(d[[1, 2]]));
        assert!(dend.merges[0].a < 3 && dend.merges[0].b < 3);
        assert_eq!(dend.merges.len(), 3);
        assert_eq!(dend.merges.last().unwrap().size, 4);
        let mut order = dend.leaf_order.clone();
        order.sort();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn constant_feature_named() {
        let f = array![[1.0, 2.0], [1.0, 3.0]];
        let names = vec!["flat".to_string(), "ok".to_string()];
        let err = correlation_distance(f.view(), Some(&names)).unwrap_err();
        assert!(err.to_string().contains("'flat'"));
    }

    #[test]
    fn cut_extremes() {
        let d = array![[0.0, 1.0, 4.0], [1.0, 0.0, 2.0], [4.0, 2.0, 0.0]];
        let dend = agglomerate(&d, Linkage::Complete).unwrap();
        assert_eq!(cut_dendrogram(&dend, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(cut_dendrogram(&dend, 1).unwrap(), vec![0, 0, 0]);
        assert_eq!(cut_dendrogram(&dend, 2).unwrap(), vec![0, 0, 1]);
        assert_eq!(cut_at_height(&dend, 1.5), vec![0, 0, 1]);
        assert!(cut_dendrogram(&dend, 0).is_err());
        assert_eq!(dend.merges[1].height, 4.0);
    }
}
