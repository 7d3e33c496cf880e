use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use crate::datamatrix::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::tsv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegStatus {
    Up,
    Down,
    Ns,
}

impl fmt::Display for DegStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DegStatus::Up => "up",
            DegStatus::Down => "down",
            DegStatus::Ns => "ns",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegResult {
    pub feature_id: String,
    pub log2_fold_change: f64,
    pub t_statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub q_value: f64,
    pub status: DegStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegThresholds {
    /// Status needs `|log2FC| > lfc`.
    pub lfc: f64,
    /// Status needs `q < q`.
    pub q: f64,
}

impl Default for DegThresholds {
    fn default() -> Self {
        Self { lfc: 1.0, q: 0.05 }
    }
}

impl DegThresholds {
    /// Stricter preset: any fold change with `q < 0.01`.
    pub fn strict() -> Self {
        Self { lfc: 0.0, q: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test, two-sided. Both samples need
/// at least two values.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(format!(
            "Welch test needs at least 2 values per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let diff = ma - mb;
    if se2 == 0.0 {
        // both groups constant
        let (t, p) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return Ok(WelchTest { t, df: na + nb - 2.0, p });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchTest {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// Benjamini–Hochberg adjusted p-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        // rounding can put p·m/rank a hair below p
        q[i] = running.min(1.0).max(p[i]);
    }
    q
}

/// Per-feature Welch test of `in_group` samples against the rest. Values
/// are taken as log2 expression, so the fold change is a mean difference.
/// Missing values are skipped per feature.
pub fn deg(x: &ExpressionMatrix, in_group: &[bool], thresholds: DegThresholds) -> Result<Vec<DegResult>> {
    if in_group.len() != x.n_samples() {
        return Err(Error::invalid(format!(
            "group mask has {} entries for {} samples",
            in_group.len(),
            x.n_samples()
        )));
    }
    let n_in = in_group.iter().filter(|&&b| b).count();
    let n_out = in_group.len() - n_in;
    if n_in < 2 || n_out < 2 {
        return Err(Error::invalid(format!(
            "each group needs at least 2 samples, got {n_in} in and {n_out} out"
        )));
    }
    let mut tests = Vec::with_capacity(x.n_features());
    let mut lfcs = Vec::with_capacity(x.n_features());
    for (f, col) in x.values.columns().into_iter().enumerate() {
        let mut a = Vec::with_capacity(n_in);
        let mut b = Vec::with_capacity(n_out);
        for (&v, &inside) in col.iter().zip(in_group) {
            if v.is_nan() {
                continue;
            }
            if inside {
                a.push(v);
            } else {
                b.push(v);
            }
        }
        let test = welch_t_test(&a, &b).map_err(|e| {
            Error::invalid(format!("feature '{}': {e}", x.feature_ids[f]))
        })?;
        lfcs.push(a.iter().sum::<f64>() / a.len() as f64 - b.iter().sum::<f64>() / b.len() as f64);
        tests.push(test);
    }
    let p: Vec<f64> = tests.iter().map(|t| t.p).collect();
    let q = benjamini_hochberg(&p);
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(f, t)| {
            let lfc = lfcs[f];
            let status = if q[f] < thresholds.q && lfc > thresholds.lfc {
                DegStatus::Up
            } else if q[f] < thresholds.q && lfc < -thresholds.lfc {
                DegStatus::Down
            } else {
                DegStatus::Ns
            };
            DegResult {
                feature_id: x.feature_ids[f].clone(),
                log2_fold_change: lfc,
                t_statistic: t.t,
                df: t.df,
                p_value: t.p,
                q_value: q[f],
                status,
            }
        })
        .collect())
}

/// Volcano table: `feature_id, log2fc, p, q, status`.
pub fn save_volcano(path: &Path, results: &[DegResult]) -> Result<()> {
    let rows = results.iter().map(|r| {
        vec![
            r.feature_id.clone(),
            r.log2_fold_change.to_string(),
            r.p_value.to_string(),
            r.q_value.to_string(),
            r.status.to_string(),
        ]
    });
    tsv::write_table(path, &["feature_id", "log2fc", "p", "q", "status"], rows)
}
