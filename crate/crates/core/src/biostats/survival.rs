use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::special::chi_square_sf;
use crate::error::{Error, Result};
use crate::linalg::jacobi_eigen;
use crate::tsv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub sample_id: String,
    pub time: f64,
    /// `true` when the event was observed, `false` when censored.
    pub event: bool,
    pub group: usize,
}

impl SurvivalRecord {
    pub fn new(sample_id: impl Into<String>, time: f64, event: bool, group: usize) -> Result<Self> {
        if !(time >= 0.0) || !time.is_finite() {
            return Err(Error::validation(format!("survival time must be finite and >= 0, got {time}")));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            time,
            event,
            group,
        })
    }
}

/// Kaplan–Meier step function evaluated at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub n_at_risk: Vec<usize>,
    pub d_events: Vec<usize>,
    pub survival: Vec<f64>,
}

impl KmCurve {
    /// `S(t)`: 1 before the first event time, right-continuous steps after.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

/// Sorted by time, events before censorings at equal times.
fn sorted(records: &[&SurvivalRecord]) -> Vec<(f64, bool)> {
    let mut v: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.event)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    v
}

pub fn km_curve(records: &[SurvivalRecord]) -> Result<KmCurve> {
    if records.is_empty() {
        return Err(Error::invalid("Kaplan–Meier needs at least one record"));
    }
    let refs: Vec<&SurvivalRecord> = records.iter().collect();
    Ok(km_from_refs(&refs))
}

fn km_from_refs(records: &[&SurvivalRecord]) -> KmCurve {
    let v = sorted(records);
    let mut curve = KmCurve {
        times: vec![],
        n_at_risk: vec![],
        d_events: vec![],
        survival: vec![],
    };
    let mut s = 1.0;
    let mut i = 0;
    while i < v.len() {
        let t = v[i].0;
        let at_risk = v.len() - i;
        let mut j = i;
        let mut d = 0;
        while j < v.len() && v[j].0 == t {
            d += usize::from(v[j].1);
            j += 1;
        }
        if d > 0 {
            s *= (at_risk - d) as f64 / at_risk as f64;
            curve.times.push(t);
            curve.n_at_risk.push(at_risk);
            curve.d_events.push(d);
            curve.survival.push(s);
        }
        i = j;
    }
    curve
}

/// One curve per distinct group id, ascending.
pub fn km_by_group(records: &[SurvivalRecord]) -> BTreeMap<usize, KmCurve> {
    let mut groups: BTreeMap<usize, Vec<&SurvivalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.group).or_default().push(r);
    }
    groups.into_iter().map(|(g, rs)| (g, km_from_refs(&rs))).collect()
}

/// KM table: `group, time, n_at_risk, d_events, survival`.
pub fn save_km(path: &Path, curves: &BTreeMap<usize, KmCurve>) -> Result<()> {
    let rows = curves.iter().flat_map(|(g, c)| {
        (0..c.times.len()).map(move |i| {
            vec![
                g.to_string(),
                c.times[i].to_string(),
                c.n_at_risk[i].to_string(),
                c.d_events[i].to_string(),
                c.survival[i].to_string(),
            ]
        })
    });
    tsv::write_table(path, &["group", "time", "n_at_risk", "d_events", "survival"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
    /// Group ids in ascending order; `observed`/`expected` follow it.
    pub groups: Vec<usize>,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
}

/// k-sample log-rank test over the distinct group ids present.
pub fn logrank(records: &[SurvivalRecord]) -> Result<LogRankResult> {
    let groups: Vec<usize> = {
        let mut g: Vec<usize> = records.iter().map(|r| r.group).collect();
        g.sort_unstable();
        g.dedup();
        g
    };
    let k = groups.len();
    if k < 2 {
        return Err(Error::invalid(format!("log-rank needs at least 2 groups, got {k}")));
    }
    if !records.iter().any(|r| r.event) {
        return Err(Error::invalid("log-rank is undefined without any events"));
    }
    let index = |g: usize| groups.binary_search(&g).expect("group listed");
    let mut v: Vec<(f64, bool, usize)> = records.iter().map(|r| (r.time, r.event, index(r.group))).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));

    let mut at_risk = vec![0usize; k];
    for &(_, _, g) in &v {
        at_risk[g] += 1;
    }
    let mut observed = vec![0.0; k];
    let mut expected = vec![0.0; k];
    let mut var = Array2::<f64>::zeros((k, k));
    let mut i = 0;
    while i < v.len() {
        let t = v[i].0;
        let mut j = i;
        let mut d_g = vec![0usize; k];
        let mut leaving = vec![0usize; k];
        while j < v.len() && v[j].0 == t {
            if v[j].1 {
                d_g[v[j].2] += 1;
            }
            leaving[v[j].2] += 1;
            j += 1;
        }
        let d: usize = d_g.iter().sum();
        let n: usize = at_risk.iter().sum();
        if d > 0 {
            let (nf, df) = (n as f64, d as f64);
            for g in 0..k {
                observed[g] += d_g[g] as f64;
                expected[g] += df * at_risk[g] as f64 / nf;
            }
            if n > 1 {
                let c = df * (nf - df) / (nf - 1.0);
                for a in 0..k {
                    let pa = at_risk[a] as f64 / nf;
                    for b in 0..k {
                        let pb = at_risk[b] as f64 / nf;
                        let delta = if a == b { 1.0 } else { 0.0 };
                        var[[a, b]] += c * pa * (delta - pb);
                    }
                }
            }
        }
        for g in 0..k {
            at_risk[g] -= leaving[g];
        }
        i = j;
    }

    // the full covariance is singular; drop the last group
    let m = k - 1;
    let u: Vec<f64> = (0..m).map(|g| observed[g] - expected[g]).collect();
    let sub = var.slice(ndarray::s![..m, ..m]).to_owned();
    let chi_square = quadratic_pinv(&sub, &u)?;
    let df = k - 1;
    Ok(LogRankResult {
        chi_square,
        df,
        p_value: chi_square_sf(chi_square, df as f64)?,
        groups,
        observed,
        expected,
    })
}

/// `uᵀ V⁺ u` with a pseudo-inverse that ignores near-null directions.
fn quadratic_pinv(v: &Array2<f64>, u: &[f64]) -> Result<f64> {
    let m = u.len();
    if m == 1 {
        let var = v[[0, 0]];
        return Ok(if var > 0.0 { u[0] * u[0] / var } else { 0.0 });
    }
    let eig = jacobi_eigen(v.view(), crate::linalg::JACOBI_TOLERANCE, crate::linalg::JACOBI_MAX_SWEEPS)?;
    let lmax = eig.values.iter().cloned().fold(0.0, f64::max);
    let mut q = 0.0;
    for (c, &l) in eig.values.iter().enumerate() {
        if l > 1e-10 * lmax {
            let proj: f64 = (0..m).map(|r| eig.vectors[[r, c]] * u[r]).sum();
            q += proj * proj / l;
        }
    }
    Ok(q.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(data: &[(f64, bool, usize)]) -> Vec<SurvivalRecord> {
        data.iter()
            .enumerate()
            .map(|(i, &(t, e, g))| SurvivalRecord::new(format!("s{i}"), t, e, g).unwrap())
            .collect()
    }

    #[test]
    fn km_all_events() {
        let c = km_curve(&recs(&[(1.0, true, 0), (2.0, true, 0), (3.0, true, 0)])).unwrap();
        for (a, b) in c.survival.iter().zip([2.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn km_with_censoring() {
        let c = km_curve(&recs(&[(1.0, true, 0), (2.0, false, 0), (3.0, true, 0)])).unwrap();
        assert_eq!(c.times, vec![1.0, 3.0]);
        assert_eq!(c.survival_at(1.0), 2.0 / 3.0);
        assert_eq!(c.survival_at(2.5), 2.0 / 3.0);
        assert_eq!(c.survival_at(3.0), 0.0);
        assert_eq!(c.survival_at(0.5), 1.0);
    }

    #[test]
    fn km_all_censored() {
        let c = km_curve(&recs(&[(1.0, false, 0), (2.0, false, 0)])).unwrap();
        assert!(c.times.is_empty());
        assert_eq!(c.survival_at(10.0), 1.0);
    }

    #[test]
    fn km_tie_puts_events_first() {
        let c = km_curve(&recs(&[(2.0, false, 0), (2.0, true, 0), (3.0, true, 0)])).unwrap();
        assert_eq!(c.n_at_risk, vec![3, 1]);
    }

    #[test]
    fn logrank_identical_groups() {
        let base = [(1.0, true), (2.0, false), (3.0, true), (4.5, true)];
        let data: Vec<_> = base.iter().flat_map(|&(t, e)| [(t, e, 0), (t, e, 1)]).collect();
        let r = logrank(&recs(&data)).unwrap();
        assert_eq!(r.chi_square, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn logrank_hand_case() {
        // group 0: 1, 3(c), 4 ; group 1: 2, 5, 6(c)
        let data = [(1.0, true, 0), (3.0, false, 0), (4.0, true, 0), (2.0, true, 1), (5.0, true, 1), (6.0, false, 1)];
        let r = logrank(&recs(&data)).unwrap();
        // t=1: n=6,n0=3 E0=1/2 V=1/4 ; t=2: n=5,n0=2 E0=2/5 V=6/25 ;
        // t=4: n=3,n0=1 E0=1/3 V=2/9 ; t=5: n=2,n0=0 E0=0 V=0
        let e0 = 0.5 + 0.4 + 1.0 / 3.0;
        let v = 0.25 + 6.0 / 25.0 + 2.0 / 9.0;
        let chi = (2.0 - e0) * (2.0 - e0) / v;
        assert!((r.chi_square - chi).abs() < 1e-12);
        assert_eq!(r.df, 1);
    }

    #[test]
    fn logrank_requires_events_and_groups() {
        assert!(logrank(&recs(&[(1.0, false, 0), (2.0, false, 1)])).is_err());
        assert!(logrank(&recs(&[(1.0, true, 0), (2.0, true, 0)])).is_err());
    }
}
