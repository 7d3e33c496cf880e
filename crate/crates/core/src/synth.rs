//! Labelled synthetic expression data: clustered latents pushed through a
//! fixed random tanh network, with cluster-dependent survival.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Exp, StandardNormal, Uniform};

use crate::biostats::SurvivalRecord;
use crate::datamatrix::{save_sample_meta, ExpressionMatrix, SampleMeta, Stage};
use crate::error::{Error, Result};
use crate::rng::{seeded, stage_seed, Rng};
use crate::tsv;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub latent_dim: usize,
    pub n_clusters: usize,
    /// Distance between any two centroids in latent units.
    pub separation: f64,
    pub noise_sd: f64,
    /// Expected censored fraction, in `[0, 1)`.
    pub censoring_rate: f64,
    /// Exponential hazard per cluster.
    pub hazards: Vec<f64>,
    /// Width of the tanh layer of the observation map.
    pub hidden_dim: usize,
    /// Scale of the first-layer weights relative to `1/sqrt(latent_dim)`.
    pub map_gain: f64,
    /// Standard deviation of the tanh-layer biases.
    pub bias_scale: f64,
    /// Scale of the second-layer weights relative to `1/sqrt(hidden_dim)`.
    pub output_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 500,
            n_features: 200,
            latent_dim: 8,
            n_clusters: 5,
            separation: 8.0,
            noise_sd: 0.3,
            censoring_rate: 0.2,
            hazards: vec![0.2, 0.4, 0.8, 1.6, 3.2],
            hidden_dim: 16,
            map_gain: 1.0,
            bias_scale: 1.0,
            output_scale: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Lists every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_clusters < 2 {
            problems.push(format!("n_clusters must be >= 2, got {}", self.n_clusters));
        }
        if self.n_samples < self.n_clusters {
            problems.push(format!(
                "n_samples ({}) must be >= n_clusters ({})",
                self.n_samples, self.n_clusters
            ));
        }
        if self.n_features == 0 || self.latent_dim == 0 || self.hidden_dim == 0 {
            problems.push("n_features, latent_dim and hidden_dim must be positive".into());
        }
        if !(self.separation > 0.0) {
            problems.push(format!("separation must be > 0, got {}", self.separation));
        }
        if !(self.noise_sd >= 0.0) {
            problems.push(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        if !(0.0..1.0).contains(&self.censoring_rate) {
            problems.push(format!("censoring_rate must lie in [0, 1), got {}", self.censoring_rate));
        }
        if self.hazards.len() != self.n_clusters {
            problems.push(format!(
                "hazards has {} entries for {} clusters",
                self.hazards.len(),
                self.n_clusters
            ));
        }
        if self.hazards.iter().any(|h| !(*h > 0.0)) {
            problems.push("hazards must be positive".into());
        }
        if !(self.map_gain > 0.0) {
            problems.push(format!("map_gain must be > 0, got {}", self.map_gain));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub matrix: ExpressionMatrix,
    pub labels: Vec<usize>,
    pub survival: Vec<SurvivalRecord>,
    pub latents: Array2<f64>,
    pub centroids: Array2<f64>,
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `k` centroids with pairwise distance exactly `separation` when `k ≤ p`:
/// orthonormal random directions scaled by `separation/√2`. For `k > p`
/// the extra directions are random unit vectors.
fn centroids(k: usize, p: usize, separation: f64, rng: &mut Rng) -> Array2<f64> {
    let mut c = Array2::<f64>::zeros((k, p));
    for i in 0..k {
        loop {
            let mut v = Array1::from_shape_fn(p, |_| normal(rng));
            for j in 0..i.min(p) {
                let prev = c.row(j).to_owned() / (separation / 2f64.sqrt());
                v -= &(&prev * prev.dot(&v));
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                c.row_mut(i).assign(&(v * (separation / 2f64.sqrt() / norm)));
                break;
            }
        }
    }
    c
}

/// Censoring bound `U` so that `mean_g (1 − e^{−h_g U}) / (h_g U)` equals
/// `rate`; `None` when no censoring is wanted.
pub fn censoring_bound(hazards: &[f64], weights: &[f64], rate: f64) -> Option<f64> {
    if rate <= 0.0 {
        return None;
    }
    let frac = |u: f64| -> f64 {
        hazards
            .iter()
            .zip(weights)
            .map(|(&h, &w)| {
                let x = h * u;
                w * if x < 1e-12 { 1.0 } else { -(-x).exp_m1() / x }
            })
            .sum()
    };
    // frac decreases from 1 at u→0 to 0 as u→∞
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    while frac(hi) > rate {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if frac(mid) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let (n, d, p, k, h) = (cfg.n_samples, cfg.n_features, cfg.latent_dim, cfg.n_clusters, cfg.hidden_dim);

    let centroids = centroids(k, p, cfg.separation, &mut seeded(stage_seed(cfg.seed, 0)));

    let mut rng = seeded(stage_seed(cfg.seed, 1));
    let a_scale = cfg.map_gain / (p as f64).sqrt();
    let a = Array2::from_shape_fn((h, p), |_| a_scale * normal(&mut rng));
    let bias = Array1::from_shape_fn(h, |_| cfg.bias_scale * normal(&mut rng));
    let b_scale = cfg.output_scale / (h as f64).sqrt();
    let b = Array2::from_shape_fn((d, h), |_| b_scale * normal(&mut rng));

    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut seeded(stage_seed(cfg.seed, 2)));

    let mut rng = seeded(stage_seed(cfg.seed, 3));
    let mut latents = Array2::<f64>::zeros((n, p));
    for (i, mut row) in latents.rows_mut().into_iter().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = centroids[[labels[i], j]] + normal(&mut rng);
        }
    }

    let hidden = (latents.dot(&a.t()) + &bias).mapv(f64::tanh);
    let mut x = hidden.dot(&b.t());
    let mut rng = seeded(stage_seed(cfg.seed, 4));
    if cfg.noise_sd > 0.0 {
        x.mapv_inplace(|v| v + cfg.noise_sd * normal(&mut rng));
    }

    let mut weights = vec![0.0; k];
    for &l in &labels {
        weights[l] += 1.0 / n as f64;
    }
    let bound = censoring_bound(&cfg.hazards, &weights, cfg.censoring_rate);
    let mut rng = seeded(stage_seed(cfg.seed, 5));
    let sample_ids: Vec<String> = (0..n).map(|i| format!("sample{:04}", i + 1)).collect();
    let feature_ids: Vec<String> = (0..d).map(|j| format!("gene{:04}", j + 1)).collect();
    let mut survival = Vec::with_capacity(n);
    for i in 0..n {
        let hazard = cfg.hazards[labels[i]];
        let t: f64 = rng.sample(Exp::new(hazard).expect("positive hazard"));
        let c: f64 = match bound {
            Some(u) => rng.sample(Uniform::new(0.0, u).expect("positive bound")),
            None => f64::INFINITY,
        };
        let (time, event) = if c < t { (c, false) } else { (t, true) };
        survival.push(SurvivalRecord::new(sample_ids[i].clone(), time, event, labels[i])?);
    }

    Ok(SynthData {
        matrix: ExpressionMatrix::new(x, sample_ids, feature_ids, Stage::Log)?,
        labels,
        survival,
        latents,
        centroids,
    })
}

impl SynthData {
    /// Truth file: `sample_id, true_cluster`.
    pub fn save_truth(&self, path: &Path) -> Result<()> {
        let rows = self
            .matrix
            .sample_ids
            .iter()
            .zip(&self.labels)
            .map(|(s, l)| vec![s.clone(), l.to_string()]);
        tsv::write_table(path, &["sample_id", "true_cluster"], rows)
    }

    /// Metadata with the true cluster as label and the survival columns.
    pub fn save_meta(&self, path: &Path) -> Result<()> {
        let meta: Vec<SampleMeta> = self
            .survival
            .iter()
            .map(|r| SampleMeta {
                sample_id: r.sample_id.clone(),
                label: Some(r.group.to_string()),
                survival_time: Some(r.time),
                event: Some(r.event),
            })
            .collect();
        save_sample_meta(path, &meta)
    }
}
