//! Expression matrices and the preprocessing chain
//! raw counts → FPKM → log2(x + 1) → feature filtering → imputation → z-score.
//!
//! Missing cells are stored as `NaN`. In files they are written as an empty
//! field or the literal `NA`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Raw,
    Fpkm,
    Log,
    Zscored,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Raw => "raw",
            Stage::Fpkm => "fpkm",
            Stage::Log => "log",
            Stage::Zscored => "zscored",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    SamplesRows,
    FeaturesRows,
}

/// Samples × features table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub values: Array2<f64>,
    pub sample_ids: Vec<String>,
    pub feature_ids: Vec<String>,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub sample_id: String,
    pub label: Option<String>,
    pub survival_time: Option<f64>,
    pub event: Option<bool>,
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::validation(format!("duplicate {what} id '{id}'")));
        }
    }
    Ok(())
}

fn parse_cell(s: &str, line: usize) -> Result<f64> {
    if s.is_empty() || s == "NA" {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: '{s}'"),
    })
}

impl ExpressionMatrix {
    pub fn new(
        values: Array2<f64>,
        sample_ids: Vec<String>,
        feature_ids: Vec<String>,
        stage: Stage,
    ) -> Result<Self> {
        if values.nrows() != sample_ids.len() || values.ncols() != feature_ids.len() {
            return Err(Error::validation(format!(
                "matrix is {}x{} but has {} sample ids and {} feature ids",
                values.nrows(),
                values.ncols(),
                sample_ids.len(),
                feature_ids.len()
            )));
        }
        check_unique(&sample_ids, "sample")?;
        check_unique(&feature_ids, "feature")?;
        Ok(Self {
            values,
            sample_ids,
            feature_ids,
            stage,
        })
    }

    /// Builds a matrix with generated ids `s0..`, `f0..`.
    pub fn from_values(values: Array2<f64>, stage: Stage) -> Self {
        let sample_ids = (0..values.nrows()).map(|i| format!("s{i}")).collect();
        let feature_ids = (0..values.ncols()).map(|j| format!("f{j}")).collect();
        Self {
            values,
            sample_ids,
            feature_ids,
            stage,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Loads a delimited table; the first column holds ids and the header
    /// row names the other axis.
    pub fn load(path: &Path, orientation: Orientation) -> Result<Self> {
        let table = tsv::read_table(path)?;
        if table.header.len() < 2 {
            return Err(Error::Parse {
                line: 1,
                message: "header needs an id column and at least one data column".into(),
            });
        }
        let col_ids: Vec<String> = table.header[1..].to_vec();
        let mut row_ids = Vec::with_capacity(table.rows.len());
        let mut values = Array2::zeros((table.rows.len(), col_ids.len()));
        for (i, (line, fields)) in table.rows.iter().enumerate() {
            row_ids.push(fields[0].clone());
            for (j, cell) in fields[1..].iter().enumerate() {
                values[[i, j]] = parse_cell(cell, *line)?;
            }
        }
        match orientation {
            Orientation::SamplesRows => Self::new(values, row_ids, col_ids, Stage::Raw),
            Orientation::FeaturesRows => {
                Self::new(values.t().to_owned(), col_ids, row_ids, Stage::Raw)
            }
        }
    }

    /// Writes samples as rows; missing cells become `NA`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = vec!["sample_id".to_string()];
        header.extend(self.feature_ids.iter().cloned());
        let rows = self.values.rows().into_iter().zip(&self.sample_ids).map(|(r, id)| {
            let mut v = vec![id.clone()];
            v.extend(r.iter().map(|x| {
                if x.is_nan() {
                    "NA".to_string()
                } else {
                    x.to_string()
                }
            }));
            v
        });
        tsv::write_table(path, &header, rows)
    }

    /// Keeps the rows whose ids are listed, in the listed order.
    pub fn select_samples(&self, ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let rows: Vec<usize> = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::validation(format!("unknown sample id '{id}'")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            values: self.values.select(Axis(0), &rows),
            sample_ids: ids.to_vec(),
            feature_ids: self.feature_ids.clone(),
            stage: self.stage,
        })
    }
}

/// FPKM = count · 10⁹ / (library size · feature length).
pub fn rsem_to_fpkm(
    counts: &ExpressionMatrix,
    feature_lengths: &[f64],
    library_sizes: &[f64],
) -> Result<ExpressionMatrix> {
    if feature_lengths.len() != counts.n_features() {
        return Err(Error::validation(format!(
            "{} feature lengths for {} features",
            feature_lengths.len(),
            counts.n_features()
        )));
    }
    if library_sizes.len() != counts.n_samples() {
        return Err(Error::validation(format!(
            "{} library sizes for {} samples",
            library_sizes.len(),
            counts.n_samples()
        )));
    }
    if let Some(j) = feature_lengths.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::validation(format!(
            "feature '{}' has nonpositive length {}",
            counts.feature_ids[j], feature_lengths[j]
        )));
    }
    if let Some(i) = library_sizes.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::validation(format!(
            "sample '{}' has nonpositive library size {}",
            counts.sample_ids[i], library_sizes[i]
        )));
    }
    let mut values = counts.values.clone();
    for ((i, j), v) in values.indexed_iter_mut() {
        *v = *v * 1e9 / (library_sizes[i] * feature_lengths[j]);
    }
    Ok(ExpressionMatrix {
        values,
        stage: Stage::Fpkm,
        ..counts.clone()
    })
}

/// log2(x + 1), cellwise. Missing cells stay missing.
pub fn log_transform(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if let Some(((i, j), v)) = m.values.indexed_iter().find(|(_, v)| **v < 0.0) {
        return Err(Error::validation(format!(
            "negative value {v} at sample '{}', feature '{}'",
            m.sample_ids[i], m.feature_ids[j]
        )));
    }
    Ok(ExpressionMatrix {
        values: m.values.mapv(|v| (v + 1.0).log2()),
        stage: Stage::Log,
        ..m.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterThresholds {
    pub zero_fraction: f64,
    pub na_fraction: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            zero_fraction: 0.10,
            na_fraction: 0.10,
        }
    }
}

/// Drops features whose zero fraction or missing fraction is strictly above
/// its threshold. Returns the filtered matrix and the removed ids in order.
pub fn filter_features(
    m: &ExpressionMatrix,
    thresholds: FilterThresholds,
) -> Result<(ExpressionMatrix, Vec<String>)> {
    for (name, t) in [
        ("zero_fraction", thresholds.zero_fraction),
        ("na_fraction", thresholds.na_fraction),
    ] {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::invalid(format!("{name} threshold {t} not in (0, 1]")));
        }
    }
    let n = m.n_samples() as f64;
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for (j, col) in m.values.columns().into_iter().enumerate() {
        let zeros = col.iter().filter(|v| **v == 0.0).count() as f64;
        let missing = col.iter().filter(|v| v.is_nan()).count() as f64;
        if zeros / n > thresholds.zero_fraction || missing / n > thresholds.na_fraction {
            removed.push(m.feature_ids[j].clone());
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(Error::validation("every feature was removed by filtering"));
    }
    let out = ExpressionMatrix {
        values: m.values.select(Axis(1), &keep),
        sample_ids: m.sample_ids.clone(),
        feature_ids: keep.iter().map(|&j| m.feature_ids[j].clone()).collect(),
        stage: m.stage,
    };
    Ok((out, removed))
}

pub const DEFAULT_IMPUTE_K: usize = 10;

/// k-nearest-neighbor mean imputation. Distances are root-mean-square
/// differences over the features both samples observe; candidates for a
/// missing cell are the samples that observe that feature.
pub fn impute_missing(m: &ExpressionMatrix, k: usize) -> Result<ExpressionMatrix> {
    let n = m.n_samples();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "impute k must be in [1, {}), got {k}",
            n
        )));
    }
    for (j, col) in m.values.columns().into_iter().enumerate() {
        if col.iter().all(|v| v.is_nan()) {
            return Err(Error::validation(format!(
                "feature '{}' is missing in every sample",
                m.feature_ids[j]
            )));
        }
    }
    let x = &m.values;
    let mut out = x.clone();
    let mut dist_cache: Vec<Option<Vec<f64>>> = vec![None; n];
    for i in 0..n {
        let missing: Vec<usize> = (0..m.n_features()).filter(|&j| x[[i, j]].is_nan()).collect();
        if missing.is_empty() {
            continue;
        }
        let dists = dist_cache[i].get_or_insert_with(|| {
            (0..n)
                .map(|o| {
                    if o == i {
                        return f64::INFINITY;
                    }
                    let (mut s, mut c) = (0.0, 0usize);
                    for (a, b) in x.row(i).iter().zip(x.row(o).iter()) {
                        if !a.is_nan() && !b.is_nan() {
                            s += (a - b) * (a - b);
                            c += 1;
                        }
                    }
                    if c == 0 {
                        f64::MAX
                    } else {
                        (s / c as f64).sqrt()
                    }
                })
                .collect()
        });
        for j in missing {
            let mut cands: Vec<usize> = (0..n)
                .filter(|&o| o != i && !x[[o, j]].is_nan())
                .collect();
            cands.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
            cands.truncate(k);
            let mean = cands.iter().map(|&o| x[[o, j]]).sum::<f64>() / cands.len() as f64;
            out[[i, j]] = mean;
        }
    }
    Ok(ExpressionMatrix {
        values: out,
        ..m.clone()
    })
}

/// Per-feature standardization with the population standard deviation.
/// Constant features map to zero.
pub fn zscore(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if m.has_missing() {
        return Err(Error::validation("zscore needs a matrix without missing values"));
    }
    let n = m.n_samples() as f64;
    let mut values = m.values.clone();
    for mut col in values.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= 1e-12 * mean.abs().max(1.0) {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - mean) / sd);
        }
    }
    Ok(ExpressionMatrix {
        values,
        stage: Stage::Zscored,
        ..m.clone()
    })
}

/// Reads `sample_id,label,survival_time,event`. Only `sample_id` is
/// required; empty or `NA` fields are absent.
pub fn load_sample_meta(path: &Path) -> Result<Vec<SampleMeta>> {
    let table = tsv::read_table(path)?;
    let col = |name: &str| table.header.iter().position(|h| h == name);
    let id_col = col("sample_id").ok_or(Error::Parse {
        line: 1,
        message: "metadata header lacks 'sample_id'".into(),
    })?;
    let (label_col, time_col, event_col) = (col("label"), col("survival_time"), col("event"));
    let present = |fields: &[String], c: Option<usize>| -> Option<String> {
        c.map(|c| fields[c].clone())
            .filter(|s| !s.is_empty() && s != "NA")
    };
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let survival_time = match present(fields, time_col) {
            Some(s) => {
                let t: f64 = s.parse().map_err(|_| Error::Parse {
                    line: *line,
                    message: format!("bad survival_time '{s}'"),
                })?;
                if !(t >= 0.0) {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!("negative survival_time {t}"),
                    });
                }
                Some(t)
            }
            None => None,
        };
        let event = match present(fields, event_col).as_deref() {
            Some("1") => Some(true),
            Some("0") => Some(false),
            Some(other) => {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("event must be 0 or 1, got '{other}'"),
                })
            }
            None => None,
        };
        if survival_time.is_some() != event.is_some() {
            return Err(Error::Parse {
                line: *line,
                message: "survival_time and event must be given together".into(),
            });
        }
        out.push(SampleMeta {
            sample_id: fields[id_col].clone(),
            label: present(fields, label_col),
            survival_time,
            event,
        });
    }
    let ids: Vec<String> = out.iter().map(|m| m.sample_id.clone()).collect();
    check_unique(&ids, "sample")?;
    Ok(out)
}

pub fn save_sample_meta(path: &Path, meta: &[SampleMeta]) -> Result<()> {
    let rows = meta.iter().map(|m| {
        vec![
            m.sample_id.clone(),
            m.label.clone().unwrap_or_else(|| "NA".into()),
            m.survival_time.map_or("NA".into(), |t| t.to_string()),
            m.event.map_or("NA".into(), |e| if e { "1".into() } else { "0".into() }),
        ]
    });
    tsv::write_table(path, &["sample_id", "label", "survival_time", "event"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::path::PathBuf;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("datamatrix-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn mat(values: Array2<f64>) -> ExpressionMatrix {
        ExpressionMatrix::from_values(values, Stage::Raw)
    }

    #[test]
    fn load_samples_rows() {
        let p = tmp("a.tsv");
        std::fs::write(&p, "id\tg1\tg2\ns1\t1\t2\ns2\t3\t4\ns3\t5\tNA\n").unwrap();
        let m = ExpressionMatrix::load(&p, Orientation::SamplesRows).unwrap();
        assert_eq!(m.values.dim(), (3, 2));
        assert_eq!(m.sample_ids, vec!["s1", "s2", "s3"]);
        assert_eq!(m.feature_ids, vec!["g1", "g2"]);
        assert_eq!(m.values[[1, 1]], 4.0);
        assert!(m.values[[2, 1]].is_nan());
        assert_eq!(m.stage, Stage::Raw);
    }

    #[test]
    fn load_features_rows_transposes() {
        let p = tmp("b.csv");
        std::fs::write(&p, "gene,s1,s2,s3\ng1,1,2,3\ng2,4,5,\n").unwrap();
        let m = ExpressionMatrix::load(&p, Orientation::FeaturesRows).unwrap();
        assert_eq!(m.values.dim(), (3, 2));
        assert_eq!(m.sample_ids, vec!["s1", "s2", "s3"]);
        assert_eq!(m.values[[2, 0]], 3.0);
        assert!(m.values[[2, 1]].is_nan());
    }

    #[test]
    fn duplicate_sample_id_is_named() {
        let p = tmp("dup.tsv");
        std::fs::write(&p, "id\tg1\ns1\t1\ns1\t2\n").unwrap();
        let err = ExpressionMatrix::load(&p, Orientation::SamplesRows).unwrap_err();
        assert!(err.to_string().contains("'s1'"), "{err}");
    }

    #[test]
    fn save_load_round_trip() {
        let p = tmp("rt.tsv");
        let m = ExpressionMatrix::new(
            array![[0.1, f64::NAN], [1e-300, -2.5]],
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            Stage::Raw,
        )
        .unwrap();
        m.save(&p).unwrap();
        let back = ExpressionMatrix::load(&p, Orientation::SamplesRows).unwrap();
        assert_eq!(back.sample_ids, m.sample_ids);
        for (a, b) in back.values.iter().zip(m.values.iter()) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn fpkm_arithmetic() {
        let m = mat(array![[10.0, 0.0], [1.0, 4.0]]);
        let out = rsem_to_fpkm(&m, &[1e3, 1.0], &[1e6, 1e9]).unwrap();
        assert_eq!(out.values[[0, 0]], 10.0);
        assert_eq!(out.values[[0, 1]], 0.0);
        assert_eq!(out.values[[1, 1]], 4.0);
        assert_eq!(out.stage, Stage::Fpkm);
        let single = rsem_to_fpkm(&mat(array![[1.0]]), &[1.0], &[1e9]).unwrap();
        assert_eq!(single.values[[0, 0]], 1.0);
    }

    #[test]
    fn fpkm_rejects_nonpositive_sizes() {
        let m = mat(array![[1.0]]);
        assert!(rsem_to_fpkm(&m, &[0.0], &[1.0]).is_err());
        assert!(rsem_to_fpkm(&m, &[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn log_values() {
        let out = log_transform(&mat(array![[0.0, 1.0, 3.0]])).unwrap();
        assert_eq!(out.values.row(0).to_vec(), vec![0.0, 1.0, 2.0]);
        assert!(log_transform(&mat(array![[-1.0]])).is_err());
    }

    #[test]
    fn filter_boundaries() {
        // 20 samples: column 0 has 3 zeros (15%), column 1 none, column 2 exactly 2 (10%)
        let mut v = Array2::from_elem((20, 3), 1.0);
        for i in 0..3 {
            v[[i, 0]] = 0.0;
        }
        v[[5, 2]] = 0.0;
        v[[6, 2]] = 0.0;
        let (out, removed) = filter_features(&mat(v), FilterThresholds::default()).unwrap();
        assert_eq!(removed, vec!["f0"]);
        assert_eq!(out.feature_ids, vec!["f1", "f2"]);
    }

    #[test]
    fn filter_missing_and_all_removed() {
        let mut v = Array2::from_elem((4, 2), 1.0);
        v[[0, 1]] = f64::NAN;
        let (out, removed) = filter_features(&mat(v), FilterThresholds::default()).unwrap();
        assert_eq!(removed, vec!["f1"]);
        assert_eq!(out.n_features(), 1);
        let zeros = Array2::zeros((4, 2));
        assert!(filter_features(&mat(zeros), FilterThresholds::default()).is_err());
        assert!(filter_features(
            &mat(array![[1.0]]),
            FilterThresholds {
                zero_fraction: 0.0,
                na_fraction: 0.1
            }
        )
        .is_err());
    }

    #[test]
    fn impute_identity_without_missing() {
        let m = mat(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(impute_missing(&m, 2).unwrap().values, m.values);
    }

    #[test]
    fn impute_all_others_mean() {
        let m = mat(array![[1.0, 2.0], [3.0, f64::NAN], [5.0, 6.0], [0.0, 10.0]]);
        let out = impute_missing(&m, 3).unwrap();
        assert_eq!(out.values[[1, 1]], 6.0);
        assert_eq!(out.values[[0, 0]].to_bits(), 1.0f64.to_bits());
    }

    #[test]
    fn impute_copies_twin() {
        let m = mat(array![[1.0, 2.0, 7.5], [1.0, 2.0, f64::NAN], [9.0, -4.0, 0.0]]);
        let out = impute_missing(&m, 1).unwrap();
        assert_eq!(out.values[[1, 2]], 7.5);
    }

    #[test]
    fn impute_errors() {
        let m = mat(array![[1.0, f64::NAN], [2.0, f64::NAN]]);
        let err = impute_missing(&m, 1).unwrap_err();
        assert!(err.to_string().contains("'f1'"));
        assert!(impute_missing(&mat(array![[1.0], [2.0]]), 2).is_err());
    }

    #[test]
    fn zscore_columns() {
        let m = mat(array![[1.0, 4.0], [2.0, 4.0], [3.0, 4.0]]);
        let z = zscore(&m).unwrap();
        let sd = (2.0f64 / 3.0).sqrt();
        for (i, want) in [-1.0, 0.0, 1.0].iter().enumerate() {
            assert!((z.values[[i, 0]] - want / sd).abs() < 1e-12);
            assert_eq!(z.values[[i, 1]], 0.0);
        }
        let zz = zscore(&z).unwrap();
        for (a, b) in z.values.iter().zip(zz.values.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(zscore(&mat(array![[f64::NAN]])).is_err());
    }

    #[test]
    fn meta_parsing() {
        let p = tmp("meta.csv");
        std::fs::write(
            &p,
            "sample_id,label,survival_time,event\na,LumA,100,1\nb,,NA,NA\nc,Basal,20.5,0\n",
        )
        .unwrap();
        let m = load_sample_meta(&p).unwrap();
        assert_eq!(m[0].event, Some(true));
        assert_eq!(m[1].label, None);
        assert_eq!(m[1].survival_time, None);
        assert_eq!(m[2].survival_time, Some(20.5));
        std::fs::write(&p, "sample_id,label,survival_time,event\na,x,10,\n").unwrap();
        assert!(load_sample_meta(&p).is_err());
    }
}
