use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use ndarray::{s, Array2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::quantize::Codebook;
use crate::autodiff::{Checkpoint, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};
use crate::tsv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ae,
    Vae,
    Vqvae,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ae => "ae",
            ModelKind::Vae => "vae",
            ModelKind::Vqvae => "vqvae",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(ModelKind::Ae),
            "vae" => Ok(ModelKind::Vae),
            "vqvae" | "vq-vae" | "vq" => Ok(ModelKind::Vqvae),
            other => Err(Error::invalid(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Number of quantized slots `G`; each has width `latent_dim / slots`.
    pub slots: usize,
    /// Number of code vectors `M`.
    pub codebook_size: usize,
    /// Commitment weight.
    pub beta: f64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, input_dim: usize) -> Self {
        Self {
            kind,
            input_dim,
            hidden: vec![512, 128],
            latent_dim: 64,
            slots: 8,
            codebook_size: 64,
            beta: 0.25,
        }
    }

    pub fn code_dim(&self) -> usize {
        self.latent_dim / self.slots.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.input_dim == 0 {
            problems.push("input_dim must be positive".to_string());
        }
        if self.latent_dim == 0 {
            problems.push("latent_dim must be positive".to_string());
        }
        if self.hidden.contains(&0) {
            problems.push("hidden widths must be positive".to_string());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            problems.push(format!("beta must be a nonnegative number, got {}", self.beta));
        }
        if self.kind == ModelKind::Vqvae {
            if self.slots == 0 || self.latent_dim % self.slots != 0 {
                problems.push(format!(
                    "latent_dim {} is not divisible into {} slots",
                    self.latent_dim, self.slots
                ));
            }
            if self.codebook_size < 2 {
                problems.push("codebook_size must be at least 2".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

/// Coefficients on the three loss terms. The defaults reproduce the
/// standard objective; zeroing a term removes its gradient path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub reconstruction: f64,
    pub codebook: f64,
    /// Multiplies the commitment distance; normally `beta`.
    pub commitment: f64,
    pub kl: f64,
}

impl LossWeights {
    pub fn standard(beta: f64) -> Self {
        Self {
            reconstruction: 1.0,
            codebook: 1.0,
            commitment: beta,
            kl: 1.0,
        }
    }
}

/// Node handles of a loss graph.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: NodeId,
    pub reconstruction: NodeId,
    /// VQ-VAE codebook term, already weighted.
    pub codebook: Option<NodeId>,
    /// VQ-VAE commitment term, already weighted.
    pub commitment: Option<NodeId>,
    pub kl: Option<NodeId>,
    /// Encoder output (`z_e` for VQ-VAE and AE, `μ` for VAE).
    pub encoder_out: NodeId,
    /// What the decoder consumes.
    pub decoder_in: NodeId,
    pub quantized: Option<NodeId>,
    pub reconstruction_out: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub kl: f64,
}

type Layer = (ParamId, ParamId);

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    encoder: Vec<Layer>,
    /// VAE only: second output head producing log σ².
    logvar_head: Option<Layer>,
    decoder: Vec<Layer>,
    codebook: Option<ParamId>,
    pub seed: u64,
}

fn add_layer(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Layer {
    let w = store.add(format!("{name}.weight"), Tensor::glorot(fan_in, fan_out, rng));
    let b = store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
    (w, b)
}

/// Linear layers with ReLU between them and a linear output.
fn mlp(g: &mut Graph, mut x: NodeId, layers: &[Layer]) -> NodeId {
    for (i, &(w, b)) in layers.iter().enumerate() {
        x = g.linear(x, w, b);
        if i + 1 < layers.len() {
            x = g.relu(x);
        }
    }
    x
}

impl Model {
    /// Glorot-initialized weights, zero biases. For VQ-VAE the codebook is
    /// filled with small Gaussian noise; [`initialize`](super::initialize)
    /// replaces it with encoder outputs.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut params = ParamStore::new();
        let mut widths = vec![config.input_dim];
        widths.extend(&config.hidden);

        let mut encoder = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            encoder.push(add_layer(&mut params, &format!("encoder.{i}"), pair[0], pair[1], &mut rng));
        }
        let last = *widths.last().expect("input width");
        encoder.push(add_layer(
            &mut params,
            &format!("encoder.{}", widths.len() - 1),
            last,
            config.latent_dim,
            &mut rng,
        ));
        let logvar_head = (config.kind == ModelKind::Vae)
            .then(|| add_layer(&mut params, "encoder.logvar", last, config.latent_dim, &mut rng));

        let mut dec_widths = vec![config.latent_dim];
        dec_widths.extend(config.hidden.iter().rev());
        dec_widths.push(config.input_dim);
        let decoder = dec_widths
            .windows(2)
            .enumerate()
            .map(|(i, pair)| add_layer(&mut params, &format!("decoder.{i}"), pair[0], pair[1], &mut rng))
            .collect();

        let codebook = (config.kind == ModelKind::Vqvae).then(|| {
            let d = config.code_dim();
            let data = (0..config.codebook_size * d)
                .map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            params.add(
                "codebook",
                Tensor::new(vec![config.codebook_size, d], data).expect("shape"),
            )
        });

        Ok(Self {
            config,
            params,
            encoder,
            logvar_head,
            decoder,
            codebook,
            seed,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn codebook_param(&self) -> Option<ParamId> {
        self.codebook
    }

    pub fn codebook(&self) -> Option<Codebook> {
        self.codebook
            .map(|id| Codebook::new(self.params.get(id).to_array()).expect("validated size"))
    }

    pub fn set_codebook(&mut self, vectors: &Array2<f64>) -> Result<()> {
        let id = self
            .codebook
            .ok_or_else(|| Error::invalid("model has no codebook"))?;
        let t = Tensor::from_array(vectors);
        if t.shape() != self.params.get(id).shape() {
            return Err(Error::invalid(format!(
                "codebook shape {:?} does not match {:?}",
                t.shape(),
                self.params.get(id).shape()
            )));
        }
        *self.params.get_mut(id) = t;
        Ok(())
    }

    fn encode_nodes(&self, g: &mut Graph, x: NodeId) -> (NodeId, Option<NodeId>) {
        let hidden_layers = &self.encoder[..self.encoder.len() - 1];
        let mut h = x;
        for &(w, b) in hidden_layers {
            h = g.linear(h, w, b);
            h = g.relu(h);
        }
        let (w, b) = *self.encoder.last().expect("encoder has an output layer");
        let out = g.linear(h, w, b);
        let logvar = self.logvar_head.map(|(w, b)| g.linear(h, w, b));
        (out, logvar)
    }

    /// Builds the training objective. Inputs: `x` (`rows × d`) and, for the
    /// VAE, `eps` (`rows × latent_dim`) standard-normal noise.
    pub fn loss_graph(&self, weights: LossWeights) -> (Graph, LossNodes) {
        let mut g = Graph::new();
        let x = g.input("x");
        let (ze, logvar) = self.encode_nodes(&mut g, x);
        g.label(ze, "encoder_out");
        let d = self.config.input_dim;
        let l = self.config.latent_dim;
        let (decoder_in, codebook, commitment, kl, quantized) = match self.config.kind {
            ModelKind::Ae => (ze, None, None, None, None),
            ModelKind::Vae => {
                let logvar = logvar.expect("vae head");
                let eps = g.input("eps");
                let half = g.scale(logvar, 0.5);
                let sd = g.exp(half);
                let noise = g.mul(sd, eps);
                let z = g.add(ze, noise);
                let kl = g.gaussian_kl(ze, logvar, l);
                let kl = g.scale(kl, weights.kl);
                (z, None, None, Some(kl), None)
            }
            ModelKind::Vqvae => {
                let cb = g.param(self.codebook.expect("vq codebook"));
                let zq = g.codebook_lookup(ze, cb);
                g.label(zq, "quantized");
                let ze_sg = g.stop_gradient(ze);
                let cb_term = g.row_sq_norm_mean(ze_sg, zq, l);
                let cb_term = g.scale(cb_term, weights.codebook);
                let zq_sg = g.stop_gradient(zq);
                let commit = g.row_sq_norm_mean(ze, zq_sg, l);
                let commit = g.scale(commit, weights.commitment);
                let st = g.straight_through(ze, zq);
                g.label(st, "decoder_in");
                (st, Some(cb_term), Some(commit), None, Some(zq))
            }
        };
        let xr = mlp(&mut g, decoder_in, &self.decoder);
        g.label(xr, "reconstruction");
        let recon = g.row_sq_norm_mean(xr, x, d);
        let recon = g.scale(recon, weights.reconstruction);
        let mut total = recon;
        for extra in [codebook, commitment, kl].into_iter().flatten() {
            total = g.add(total, extra);
        }
        g.label(total, "total_loss");
        g.mark_output("total", total);
        (
            g,
            LossNodes {
                total,
                reconstruction: recon,
                codebook,
                commitment,
                kl,
                encoder_out: ze,
                decoder_in,
                quantized,
                reconstruction_out: xr,
            },
        )
    }

    fn inputs_for(&self, x: &Array2<f64>, rng: Option<&mut Rng>) -> HashMap<String, Tensor> {
        let mut inputs = HashMap::from([("x".to_string(), Tensor::from_array(x))]);
        if self.config.kind == ModelKind::Vae {
            let n = x.nrows() * self.config.latent_dim;
            let eps: Vec<f64> = match rng {
                Some(r) => (0..n).map(|_| r.sample(StandardNormal)).collect(),
                None => vec![0.0; n],
            };
            inputs.insert(
                "eps".into(),
                Tensor::new(vec![x.nrows(), self.config.latent_dim], eps).expect("shape"),
            );
        }
        inputs
    }

    /// Loss terms on `x`. The VAE draws its reparameterization noise from
    /// `rng`, or uses the posterior mean when `rng` is `None`.
    pub fn loss(&self, x: &Array2<f64>, rng: Option<&mut Rng>) -> Result<LossBreakdown> {
        self.check_width(x)?;
        let (mut g, nodes) = self.loss_graph(LossWeights::standard(self.config.beta));
        g.evaluate(&self.params, &self.inputs_for(x, rng))?;
        let v = |n: Option<NodeId>| n.map_or(0.0, |n| g.value(n).expect("evaluated").item());
        Ok(LossBreakdown {
            total: v(Some(nodes.total)),
            reconstruction: v(Some(nodes.reconstruction)),
            codebook: v(nodes.codebook),
            commitment: v(nodes.commitment),
            kl: v(nodes.kl),
        })
    }

    pub(crate) fn training_inputs(&self, x: &Array2<f64>, rng: &mut Rng) -> HashMap<String, Tensor> {
        self.inputs_for(x, Some(rng))
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::invalid(format!(
                "data has {} features, model expects {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Raw encoder output (`z_e`, or `μ` for the VAE) for every row.
    pub fn encoder_outputs(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        let mut g = Graph::new();
        let xin = g.input("x");
        let (ze, _) = self.encode_nodes(&mut g, xin);
        g.mark_output("z", ze);
        self.chunked(x, self.config.latent_dim, |chunk| {
            let out = g.forward(&self.params, &HashMap::from([("x".to_string(), Tensor::from_array(chunk))]))?;
            Ok(out["z"].to_array())
        })
    }

    fn chunked(
        &self,
        x: &Array2<f64>,
        width: usize,
        mut f: impl FnMut(&Array2<f64>) -> Result<Array2<f64>>,
    ) -> Result<Array2<f64>> {
        const CHUNK: usize = 256;
        let mut out = Array2::zeros((x.nrows(), width));
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + CHUNK).min(x.nrows());
            let chunk = x.slice(s![start..end, ..]).to_owned();
            out.slice_mut(s![start..end, ..]).assign(&f(&chunk)?);
            start = end;
        }
        Ok(out)
    }

    /// Latent rows for every sample: quantized latents and code indices for
    /// VQ-VAE, posterior means for the VAE, bottleneck activations for AE.
    pub fn encode_all(&self, x: &Array2<f64>) -> Result<LatentTable> {
        let ze = self.encoder_outputs(x)?;
        match self.codebook() {
            None => Ok(LatentTable { z: ze, code_indices: None }),
            Some(cb) => {
                let g = self.config.slots;
                let mut z = Array2::zeros(ze.dim());
                let mut idx = Array2::zeros((ze.nrows(), g));
                for (i, row) in ze.rows().into_iter().enumerate() {
                    let (q, k) = super::quantize(row.as_slice().expect("contiguous"), &cb, g)?;
                    z.row_mut(i).assign(&ndarray::ArrayView1::from(&q));
                    for (j, kk) in k.into_iter().enumerate() {
                        idx[[i, j]] = kk;
                    }
                }
                Ok(LatentTable {
                    z,
                    code_indices: Some(idx),
                })
            }
        }
    }

    /// Decoder output for every row, through the quantizer for VQ-VAE and
    /// the posterior mean for the VAE.
    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        let (mut g, nodes) = self.loss_graph(LossWeights::standard(self.config.beta));
        g.mark_output("xr", nodes.reconstruction_out);
        self.chunked(x, self.config.input_dim, |chunk| {
            let out = g.forward(&self.params, &self.inputs_for(chunk, None))?;
            Ok(out["xr"].to_array())
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::capture(&self.params, self.seed, None);
        ck.meta = serde_json::to_value(&self.config)?;
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(ck.meta.clone())?;
        let mut model = Model::new(config, ck.seed)?;
        if model.params.len() != ck.params.len() {
            return Err(Error::validation(format!(
                "checkpoint holds {} tensors, configuration needs {}",
                ck.params.len(),
                model.params.len()
            )));
        }
        let ids: Vec<_> = model.params.ids().collect();
        for (id, saved) in ids.into_iter().zip(&ck.params) {
            if model.params.name(id) != saved.name || model.params.get(id).shape() != saved.tensor.shape() {
                return Err(Error::validation(format!(
                    "checkpoint tensor '{}' {:?} does not match '{}' {:?}",
                    saved.name,
                    saved.tensor.shape(),
                    model.params.name(id),
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = saved.tensor.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub z: Array2<f64>,
    /// `n × G` code indices, VQ-VAE only.
    pub code_indices: Option<Array2<usize>>,
}

impl LatentTable {
    pub fn save_latents(&self, path: &Path, sample_ids: &[String]) -> Result<()> {
        let mut header = vec!["sample_id".to_string()];
        header.extend((1..=self.z.ncols()).map(|j| format!("z{j}")));
        let rows = self.z.rows().into_iter().zip(sample_ids).map(|(r, id)| {
            let mut v = vec![id.clone()];
            v.extend(r.iter().map(|x| x.to_string()));
            v
        });
        tsv::write_table(path, &header, rows)
    }

    pub fn save_codes(&self, path: &Path, sample_ids: &[String]) -> Result<()> {
        let idx = self
            .code_indices
            .as_ref()
            .ok_or_else(|| Error::invalid("latent table has no code indices"))?;
        let mut header = vec!["sample_id".to_string()];
        header.extend((1..=idx.ncols()).map(|j| format!("code{j}")));
        let rows = idx.rows().into_iter().zip(sample_ids).map(|(r, id)| {
            let mut v = vec![id.clone()];
            v.extend(r.iter().map(|x| x.to_string()));
            v
        });
        tsv::write_table(path, &header, rows)
    }
}
