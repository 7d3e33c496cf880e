use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{LossWeights, Model, ModelConfig, ModelKind};
use crate::autodiff::{AdamConfig, AdamState};
use crate::datamatrix::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::rng::{seeded, stage_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum CodebookUpdate {
    /// Codebook moves by the gradient of the codebook term.
    Gradient,
    /// Exponential moving averages of assigned encoder outputs; the codebook
    /// term is dropped from the objective.
    Ema { decay: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Stop once the best loss has not improved by `early_stop_tol` for this
    /// many epochs. Zero disables early stopping.
    pub early_stop_patience: usize,
    pub early_stop_tol: f64,
    /// Codes unused for this many consecutive epochs are reseeded.
    pub dead_code_epochs: usize,
    pub codebook_update: CodebookUpdate,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            early_stop_patience: 25,
            early_stop_tol: 1e-6,
            dead_code_epochs: 50,
            codebook_update: CodebookUpdate::Gradient,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if !(self.adam.lr > 0.0) {
            problems.push(format!("learning rate must be positive, got {}", self.adam.lr));
        }
        if let CodebookUpdate::Ema { decay } = self.codebook_update {
            if !(0.0..1.0).contains(&decay) {
                problems.push(format!("ema decay must be in [0, 1), got {decay}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean total loss per sample, one entry per completed epoch.
    pub loss_history: Vec<f64>,
    pub recon_history: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub reseeded_codes: usize,
    /// Code-usage perplexity in the last epoch, VQ-VAE only.
    pub final_perplexity: Option<f64>,
}

/// Fresh model for `data`. VQ-VAE codebooks start as a random subset of the
/// encoder's slot outputs on the data.
pub fn initialize(config: ModelConfig, data: &ExpressionMatrix, seed: u64) -> Result<Model> {
    let mut model = Model::new(config, stage_seed(seed, 0))?;
    model.seed = seed;
    if model.kind() == ModelKind::Vqvae {
        let mut rng = seeded(stage_seed(seed, 1));
        init_codebook(&mut model, &data.values, &mut rng)?;
    }
    Ok(model)
}

fn slot_rows(ze: &Array2<f64>, code_dim: usize) -> Array2<f64> {
    let n_slots = ze.len() / code_dim;
    Array2::from_shape_vec(
        (n_slots, code_dim),
        ze.as_standard_layout().iter().copied().collect(),
    )
    .expect("latent width is a multiple of the code width")
}

fn init_codebook(model: &mut Model, x: &Array2<f64>, rng: &mut Rng) -> Result<()> {
    let d = model.config.code_dim();
    let m = model.config.codebook_size;
    let slots = slot_rows(&model.encoder_outputs(x)?, d);
    let mut order: Vec<usize> = (0..slots.nrows()).collect();
    order.shuffle(rng);
    let mut codes = Array2::zeros((m, d));
    for k in 0..m {
        codes.row_mut(k).assign(&slots.row(order[k % order.len()]));
    }
    // duplicated inputs (or M larger than the slot count) give equal codes
    let scale = slots.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
    loop {
        let mut dup = false;
        for a in 0..m {
            for b in 0..a {
                if codes.row(a) == codes.row(b) {
                    dup = true;
                    for v in codes.row_mut(a).iter_mut() {
                        *v += 1e-3 * scale * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
        }
        if !dup {
            break;
        }
    }
    model.set_codebook(&codes)
}

/// Mini-batch Adam training. Deterministic for a given configuration.
pub fn train(
    config: ModelConfig,
    data: &ExpressionMatrix,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    if data.has_missing() {
        return Err(Error::validation("training data contains missing values"));
    }
    if data.n_features() != config.input_dim {
        return Err(Error::invalid(format!(
            "data has {} features, model expects {}",
            data.n_features(),
            config.input_dim
        )));
    }
    let mut model = initialize(config, data, cfg.seed)?;
    let x = &data.values;
    let n = x.nrows();
    let is_vq = model.kind() == ModelKind::Vqvae;
    let ema = match cfg.codebook_update {
        CodebookUpdate::Ema { decay } if is_vq => Some(decay),
        _ => None,
    };

    let mut weights = LossWeights::standard(model.config.beta);
    if ema.is_some() {
        weights.codebook = 0.0;
    }
    let (mut graph, nodes) = model.loss_graph(weights);
    let mut adam = AdamState::new(cfg.adam, &model.params);
    let mut rng = seeded(stage_seed(cfg.seed, 2));

    let m = model.config.codebook_size;
    let code_dim = model.config.code_dim();
    let mut last_used = vec![0usize; m];
    let mut ema_counts = vec![1.0; m];
    let mut ema_sums: Option<Array2<f64>> = None;
    if ema.is_some() {
        ema_sums = model.codebook().map(|c| c.vectors().clone());
    }

    let mut report = TrainReport {
        loss_history: Vec::new(),
        recon_history: Vec::new(),
        epochs_run: 0,
        stopped_early: false,
        reseeded_codes: 0,
        final_perplexity: None,
    };
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut epoch_recon = 0.0;
        let mut usage = vec![0usize; m];
        let mut epoch_slots: Vec<f64> = Vec::new();

        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch = x.select(Axis(0), rows);
            let inputs = model.training_inputs(&batch, &mut rng);
            graph.evaluate(&model.params, &inputs)?;
            let total = graph.value(nodes.total).expect("evaluated").item();
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let recon = graph.value(nodes.reconstruction).expect("evaluated").item();
            epoch_total += total * rows.len() as f64;
            epoch_recon += recon * rows.len() as f64;

            let grads = graph.backward(nodes.total, &model.params)?;
            adam.step(&mut model.params, &grads)?;

            if let Some(q) = nodes.quantized {
                let idx = graph.lookup_indices(q).to_vec();
                for &k in &idx {
                    usage[k] += 1;
                }
                let ze = graph.value(nodes.encoder_out).expect("evaluated").data().to_vec();
                if let (Some(decay), Some(sums)) = (ema, ema_sums.as_mut()) {
                    ema_update(&mut model, decay, &idx, &ze, code_dim, &mut ema_counts, sums)?;
                }
                epoch_slots.extend_from_slice(&ze);
            }
        }

        let epoch_loss = epoch_total / n as f64;
        report.loss_history.push(epoch_loss);
        report.recon_history.push(epoch_recon / n as f64);
        report.epochs_run = epoch + 1;

        if is_vq {
            let used: Vec<usize> = usage
                .iter()
                .enumerate()
                .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
                .collect();
            report.final_perplexity = Some(super::codebook_perplexity(&used)?);
            for (k, &c) in usage.iter().enumerate() {
                if c > 0 {
                    last_used[k] = epoch;
                }
            }
            let n_slots = epoch_slots.len() / code_dim;
            if cfg.dead_code_epochs > 0 && n_slots > 0 {
                let id = model.codebook_param().expect("vq codebook");
                for k in 0..m {
                    if epoch + 1 - last_used[k] > cfg.dead_code_epochs {
                        let s = rng.random_range(0..n_slots);
                        let src = &epoch_slots[s * code_dim..(s + 1) * code_dim];
                        model.params.get_mut(id).data_mut()[k * code_dim..(k + 1) * code_dim]
                            .copy_from_slice(src);
                        if let Some(sums) = ema_sums.as_mut() {
                            sums.row_mut(k).assign(&ndarray::ArrayView1::from(src));
                            ema_counts[k] = 1.0;
                        }
                        last_used[k] = epoch;
                        report.reseeded_codes += 1;
                    }
                }
            }
        }

        if epoch_loss < best - cfg.early_stop_tol {
            best = epoch_loss;
            best_epoch = epoch;
        } else if cfg.early_stop_patience > 0 && epoch - best_epoch >= cfg.early_stop_patience {
            report.stopped_early = true;
            break;
        }
    }
    Ok((model, report))
}

fn ema_update(
    model: &mut Model,
    decay: f64,
    idx: &[usize],
    ze: &[f64],
    code_dim: usize,
    counts: &mut [f64],
    sums: &mut Array2<f64>,
) -> Result<()> {
    let m = counts.len();
    let mut batch_counts = vec![0.0; m];
    let mut batch_sums = Array2::<f64>::zeros((m, code_dim));
    for (slot, &k) in ze.chunks_exact(code_dim).zip(idx) {
        batch_counts[k] += 1.0;
        for (acc, v) in batch_sums.row_mut(k).iter_mut().zip(slot) {
            *acc += v;
        }
    }
    let total: f64 = {
        for k in 0..m {
            counts[k] = decay * counts[k] + (1.0 - decay) * batch_counts[k];
        }
        counts.iter().sum()
    };
    // Laplace smoothing keeps unused codes finite
    let eps = 1e-5;
    let mut codes = Array2::zeros((m, code_dim));
    for k in 0..m {
        let smoothed = (counts[k] + eps) / (total + m as f64 * eps) * total;
        for j in 0..code_dim {
            sums[[k, j]] = decay * sums[[k, j]] + (1.0 - decay) * batch_sums[[k, j]];
            codes[[k, j]] = sums[[k, j]] / smoothed;
        }
    }
    model.set_codebook(&codes)
}
