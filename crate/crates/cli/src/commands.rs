//! Subcommands. Each reads what the configuration points at, writes its
//! outputs through a [`RunDir`] and never touches its inputs. When
//! `input.expression` is unset the dataset comes from the `[synth]` section.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;
use subtype_core::biostats::{
    deg, enrich, km_by_group, load_gmt, logrank, save_km, save_volcano, DegStatus, DegThresholds,
    EnrichmentResult, GeneSet,
};
use subtype_core::clustering::{
    agglomerate, canonicalize, cut_dendrogram, gmm_em, hierarchical_corr, kmeans, load_assignment,
    spectral,
};
use subtype_core::clustmetrics::encode_labels;
use subtype_core::datamatrix::{
    filter_features, impute_missing, load_sample_meta, log_transform, rsem_to_fpkm, zscore,
};
use subtype_core::dimred::{pca, scatter_svg, tsne, TsneConfig};
use subtype_core::generative::{train, TrainConfig, TrainReport};
use subtype_core::synth::generate;
use subtype_core::{
    tsv, AdamConfig, ClusterAlgorithm, ClusterAssignment, Error, ExpressionMatrix, LatentTable,
    MetricsReport, Model, SampleMeta, Stage, SurvivalRecord,
};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::RunDir;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Filter, transform, impute and z-score the expression matrix.
    Preprocess,
    /// Generate a labeled synthetic dataset.
    Synth,
    /// Train the configured generative model.
    Train,
    /// Encode samples with a trained model.
    Encode,
    /// Partition latent (or preprocessed) rows.
    Cluster,
    /// Score an assignment against truth labels.
    Evaluate,
    /// PCA and t-SNE coordinates and scatter plots.
    Project,
    /// Differential expression of one cluster against the rest.
    Deg,
    /// Gene-set overrepresentation among differentially expressed features.
    Enrich,
    /// Kaplan-Meier curves and the log-rank test across clusters.
    Survival,
    /// All stages in sequence.
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Encode => "encode",
            Command::Cluster => "cluster",
            Command::Evaluate => "evaluate",
            Command::Project => "project",
            Command::Deg => "deg",
            Command::Enrich => "enrich",
            Command::Survival => "survival",
            Command::Pipeline => "pipeline",
        }
    }
}

/// Runs `command` into `out`; returns the sorted output file names.
pub fn execute(command: Command, cfg: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let mut run = RunDir::create(out, command.name(), cfg)?;
    match command {
        Command::Preprocess => cmd_preprocess(cfg, &mut run)?,
        Command::Synth => cmd_synth(cfg, &mut run)?,
        Command::Train => cmd_train(cfg, &mut run)?,
        Command::Encode => cmd_encode(cfg, &mut run)?,
        Command::Cluster => cmd_cluster(cfg, &mut run)?,
        Command::Evaluate => cmd_evaluate(cfg, &mut run)?,
        Command::Project => cmd_project(cfg, &mut run)?,
        Command::Deg => cmd_deg(cfg, &mut run)?,
        Command::Enrich => cmd_enrich(cfg, &mut run)?,
        Command::Survival => cmd_survival(cfg, &mut run)?,
        Command::Pipeline => cmd_pipeline(cfg, &mut run)?,
    }
    run.finish(cfg)
}

fn missing(key: &str, command: &str) -> CliError {
    CliError::MissingInput(format!("input.{key} is required by '{command}'"))
}

/// Samples with their preprocessed values and any labels or survival data.
struct Dataset {
    /// Filtered, log-scale, imputed; the scale used for fold changes.
    log: ExpressionMatrix,
    /// `log` standardized per feature; the model and clustering input.
    z: ExpressionMatrix,
    removed: Vec<String>,
    /// Per-sample truth label, aligned with the sample order.
    truth: Option<Vec<String>>,
    meta: Option<Vec<SampleMeta>>,
}

/// Raw matrix, truth and metadata from the configured files, or from the
/// synthetic generator when no expression file is set.
fn source(cfg: &PipelineConfig, run: &mut RunDir) -> Result<(ExpressionMatrix, Option<Vec<String>>, Option<Vec<SampleMeta>>)> {
    let Some(path) = &cfg.input.expression else {
        run.input("expression", format!("synth (seed {})", cfg.synth.seed));
        let data = generate(&cfg.synth)?;
        let truth = data.labels.iter().map(|l| l.to_string()).collect();
        let meta = synth_meta(&data.matrix.sample_ids, &data.labels, &data.survival);
        return Ok((data.matrix, Some(truth), Some(meta)));
    };
    run.input("expression", path.display().to_string());
    let mut m = ExpressionMatrix::load(path, cfg.input.orientation)?;
    m.stage = cfg.input.stage;
    let meta = load_meta(cfg, run)?;
    let truth = truth_labels(cfg, run, &m.sample_ids, meta.as_deref())?;
    Ok((m, truth, meta))
}

fn synth_meta(ids: &[String], labels: &[usize], survival: &[SurvivalRecord]) -> Vec<SampleMeta> {
    ids.iter()
        .zip(labels)
        .zip(survival)
        .map(|((id, l), s)| SampleMeta {
            sample_id: id.clone(),
            label: Some(l.to_string()),
            survival_time: Some(s.time),
            event: Some(s.event),
        })
        .collect()
}

fn load_meta(cfg: &PipelineConfig, run: &mut RunDir) -> Result<Option<Vec<SampleMeta>>> {
    match &cfg.input.metadata {
        Some(p) => {
            run.input("metadata", p.display().to_string());
            Ok(Some(load_sample_meta(p)?))
        }
        None => Ok(None),
    }
}

/// Truth labels for `ids` from the truth file, else metadata labels.
/// Returns `None` when neither source covers every sample.
fn truth_labels(
    cfg: &PipelineConfig,
    run: &mut RunDir,
    ids: &[String],
    meta: Option<&[SampleMeta]>,
) -> Result<Option<Vec<String>>> {
    let map: BTreeMap<String, String> = if let Some(p) = &cfg.input.truth {
        run.input("truth", p.display().to_string());
        let table = tsv::read_table(p)?;
        let mut map = BTreeMap::new();
        for (line, fields) in table.rows {
            if fields.len() < 2 {
                return Err(Error::Parse {
                    line,
                    message: "expected sample_id and true_cluster".into(),
                }
                .into());
            }
            map.insert(fields[0].clone(), fields[1].clone());
        }
        map
    } else if let Some(meta) = meta {
        meta.iter()
            .filter_map(|m| m.label.clone().map(|l| (m.sample_id.clone(), l)))
            .collect()
    } else {
        return Ok(None);
    };
    Ok(ids.iter().map(|id| map.get(id).cloned()).collect())
}

fn load_dataset(cfg: &PipelineConfig, run: &mut RunDir) -> Result<Dataset> {
    let (m, truth, meta) = source(cfg, run)?;
    let (log, removed) = to_log_scale(m, cfg, run)?;
    let log = if log.has_missing() {
        impute_missing(&log, cfg.preprocess.impute_k)?
    } else {
        log
    };
    let z = if log.stage == Stage::Zscored {
        log.clone()
    } else {
        zscore(&log)?
    };
    Ok(Dataset {
        log,
        z,
        removed,
        truth,
        meta,
    })
}

/// Brings any input stage to filtered log scale. Z-scored input passes
/// through unfiltered since zeros carry no meaning there.
fn to_log_scale(m: ExpressionMatrix, cfg: &PipelineConfig, run: &mut RunDir) -> Result<(ExpressionMatrix, Vec<String>)> {
    let m = match m.stage {
        Stage::Zscored => return Ok((m, Vec::new())),
        Stage::Raw => {
            let path = cfg
                .input
                .feature_lengths
                .as_ref()
                .ok_or_else(|| missing("feature_lengths", "raw-stage preprocessing"))?;
            run.input("feature_lengths", path.display().to_string());
            let lengths = load_lengths(path, &m.feature_ids)?;
            let library: Vec<f64> = m
                .values
                .rows()
                .into_iter()
                .map(|r| r.iter().filter(|v| !v.is_nan()).sum())
                .collect();
            rsem_to_fpkm(&m, &lengths, &library)?
        }
        _ => m,
    };
    let (filtered, removed) = filter_features(&m, cfg.preprocess.filter)?;
    let log = match filtered.stage {
        Stage::Fpkm => log_transform(&filtered)?,
        _ => filtered,
    };
    Ok((log, removed))
}

fn load_lengths(path: &Path, features: &[String]) -> Result<Vec<f64>> {
    let table = tsv::read_table(path)?;
    let mut map = BTreeMap::new();
    for (line, fields) in table.rows {
        let len = fields.get(1).and_then(|s| s.parse::<f64>().ok()).ok_or(Error::Parse {
            line,
            message: "expected feature_id and a numeric length".into(),
        })?;
        map.insert(fields[0].clone(), len);
    }
    features
        .iter()
        .map(|f| {
            map.get(f)
                .copied()
                .ok_or_else(|| CliError::Core(Error::Validation(format!("no length for feature '{f}'"))))
        })
        .collect()
}

fn load_latents(cfg: &PipelineConfig, run: &mut RunDir) -> Result<Option<ExpressionMatrix>> {
    match &cfg.input.latents {
        Some(p) => {
            run.input("latents", p.display().to_string());
            let mut m = ExpressionMatrix::load(p, subtype_core::datamatrix::Orientation::SamplesRows)?;
            m.stage = Stage::Zscored;
            Ok(Some(m))
        }
        None => Ok(None),
    }
}

fn load_clusters(cfg: &PipelineConfig, run: &mut RunDir, ids: &[String], command: &str) -> Result<Vec<usize>> {
    let path = cfg.input.clusters.as_ref().ok_or_else(|| missing("clusters", command))?;
    run.input("clusters", path.display().to_string());
    let map = load_assignment(path)?;
    ids.iter()
        .map(|id| {
            map.get(id)
                .copied()
                .ok_or_else(|| CliError::Core(Error::Validation(format!("no cluster for sample '{id}'"))))
        })
        .collect()
}

/// Rows to cluster or project: configured latents, else preprocessed data.
fn feature_rows(cfg: &PipelineConfig, run: &mut RunDir) -> Result<(ExpressionMatrix, Option<Dataset>)> {
    if let Some(l) = load_latents(cfg, run)? {
        return Ok((l, None));
    }
    let ds = load_dataset(cfg, run)?;
    Ok((ds.z.clone(), Some(ds)))
}

/// Truth for `ids` when the rows did not come with a dataset.
fn truth_for(cfg: &PipelineConfig, run: &mut RunDir, ids: &[String], ds: Option<&Dataset>) -> Result<Option<Vec<String>>> {
    if let Some(ds) = ds {
        return Ok(ds.truth.clone());
    }
    if cfg.input.truth.is_some() || cfg.input.metadata.is_some() {
        let meta = load_meta(cfg, run)?;
        return truth_labels(cfg, run, ids, meta.as_deref());
    }
    if cfg.input.expression.is_none() {
        let data = generate(&cfg.synth)?;
        let map: BTreeMap<&String, usize> = data.matrix.sample_ids.iter().zip(data.labels.iter().copied()).collect();
        return Ok(ids.iter().map(|id| map.get(id).map(|l| l.to_string())).collect());
    }
    Ok(None)
}

pub fn train_config(cfg: &PipelineConfig) -> TrainConfig {
    let m = &cfg.model;
    TrainConfig {
        epochs: m.epochs,
        batch_size: m.batch_size,
        seed: m.seed,
        adam: AdamConfig {
            lr: m.learning_rate,
            ..AdamConfig::default()
        },
        early_stop_patience: m.patience,
        early_stop_tol: m.tolerance,
        dead_code_epochs: m.dead_code_epochs,
        codebook_update: m.codebook_update,
    }
}

/// Partitions the rows of `x` with the configured algorithm.
pub fn cluster_rows(x: ArrayView2<f64>, cfg: &PipelineConfig) -> Result<ClusterAssignment> {
    let c = &cfg.cluster;
    Ok(match c.algorithm {
        ClusterAlgorithm::Kmeans => kmeans(x, c.k, c.seed, c.max_iter)?,
        ClusterAlgorithm::Gmm => gmm_em(x, c.k, c.seed, c.max_iter, c.covariance)?.assignment,
        ClusterAlgorithm::Spectral => spectral(x, c.k, c.seed, c.gamma)?,
        ClusterAlgorithm::Hierarchical => {
            let d = agglomerate(&euclidean(x), cfg.analysis.linkage)?;
            let (labels, _) = canonicalize(&cut_dendrogram(&d, c.k)?, c.k);
            let objective = within_ss(x, &labels, c.k);
            ClusterAssignment {
                labels,
                k: c.k,
                algorithm: ClusterAlgorithm::Hierarchical,
                seed: c.seed,
                objective,
            }
        }
    })
}

fn euclidean(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

fn within_ss(x: ArrayView2<f64>, labels: &[usize], k: usize) -> f64 {
    let mut sums = Array2::<f64>::zeros((k, x.ncols()));
    let mut counts = vec![0.0; k];
    for (row, &l) in x.rows().into_iter().zip(labels) {
        sums.row_mut(l).scaled_add(1.0, &row);
        counts[l] += 1.0;
    }
    x.rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| row.iter().zip(sums.row(l)).map(|(v, s)| (v - s / counts[l]).powi(2)).sum::<f64>())
        .sum()
}

fn cluster_names(labels: &[usize]) -> Vec<String> {
    labels.iter().map(|l| format!("cluster{l}")).collect()
}

fn metrics(x: ArrayView2<f64>, a: &ClusterAssignment, truth: Option<&[String]>) -> Result<MetricsReport> {
    let truth_ids = truth.map(|t| encode_labels(t).0);
    Ok(MetricsReport::compute(x, &a.labels, truth_ids.as_deref(), a.k, a.algorithm, a.seed)?)
}

fn project(
    x: ArrayView2<f64>,
    ids: &[String],
    groups: &[String],
    cfg: &PipelineConfig,
    run: &mut RunDir,
) -> Result<()> {
    let fit = pca(x, 2)?;
    fit.projection.save(&run.output("pca.tsv")?, ids, groups)?;
    let svg = scatter_svg(fit.projection.coords.view(), groups, "PCA", ("PC1", "PC2"));
    run.write_text("pca.svg", &svg)?;
    if cfg.analysis.tsne {
        let tc = TsneConfig {
            perplexity: cfg.analysis.perplexity,
            iterations: cfg.analysis.tsne_iterations,
            seed: cfg.analysis.tsne_seed,
            ..TsneConfig::default()
        };
        let fit = tsne(x, &tc)?;
        fit.projection.save(&run.output("tsne.tsv")?, ids, groups)?;
        let svg = scatter_svg(fit.projection.coords.view(), groups, "t-SNE", ("tSNE1", "tSNE2"));
        run.write_text("tsne.svg", &svg)?;
        let kl: Vec<_> = fit.kl_history.iter().map(|&(it, kl)| KlPoint { iteration: it, kl }).collect();
        run.write_json("tsne_kl.json", &kl)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct KlPoint {
    iteration: usize,
    kl: f64,
}

#[derive(Serialize)]
struct DegSummary {
    cluster: usize,
    n_in: usize,
    n_out: usize,
    n_features: usize,
    up: usize,
    down: usize,
    lfc_threshold: f64,
    q_threshold: f64,
}

fn run_deg(ds: &Dataset, labels: &[usize], cfg: &PipelineConfig, run: &mut RunDir) -> Result<Vec<subtype_core::DegResult>> {
    let a = &cfg.analysis;
    let mask: Vec<bool> = labels.iter().map(|&l| l == a.deg_cluster).collect();
    let thresholds = DegThresholds {
        lfc: a.lfc_threshold,
        q: a.q_threshold,
    };
    let results = deg(&ds.log, &mask, thresholds)?;
    save_volcano(&run.output("volcano.tsv")?, &results)?;
    let count = |s: DegStatus| results.iter().filter(|r| r.status == s).count();
    let n_in = mask.iter().filter(|&&b| b).count();
    run.write_json(
        "deg.json",
        &DegSummary {
            cluster: a.deg_cluster,
            n_in,
            n_out: mask.len() - n_in,
            n_features: results.len(),
            up: count(DegStatus::Up),
            down: count(DegStatus::Down),
            lfc_threshold: a.lfc_threshold,
            q_threshold: a.q_threshold,
        },
    )?;
    Ok(results)
}

fn run_enrich(
    sets: &[GeneSet],
    hits: BTreeSet<String>,
    universe: BTreeSet<String>,
    run: &mut RunDir,
) -> Result<Vec<EnrichmentResult>> {
    let results = enrich(&hits, sets, &universe)?;
    let rows = results.iter().map(|r| {
        vec![
            r.set_id.clone(),
            r.description.clone(),
            r.set_size.to_string(),
            r.overlap.to_string(),
            r.p_value.to_string(),
            r.q_value.to_string(),
        ]
    });
    tsv::write_table(
        &run.output("enrichment.tsv")?,
        &["set_id", "description", "set_size", "overlap", "p", "q"],
        rows,
    )?;
    Ok(results)
}

fn load_sets(cfg: &PipelineConfig, run: &mut RunDir, command: &str) -> Result<Vec<GeneSet>> {
    let path = cfg.input.gene_sets.as_ref().ok_or_else(|| missing("gene_sets", command))?;
    run.input("gene_sets", path.display().to_string());
    Ok(load_gmt(path)?)
}

/// Survival records for samples with follow-up data, grouped by cluster.
fn survival_records(ids: &[String], labels: &[usize], meta: &[SampleMeta]) -> Result<Vec<SurvivalRecord>> {
    let by_id: BTreeMap<&str, &SampleMeta> = meta.iter().map(|m| (m.sample_id.as_str(), m)).collect();
    let mut out = Vec::new();
    for (id, &l) in ids.iter().zip(labels) {
        if let Some(m) = by_id.get(id.as_str()) {
            if let (Some(t), Some(e)) = (m.survival_time, m.event) {
                out.push(SurvivalRecord::new(id.clone(), t, e, l)?);
            }
        }
    }
    Ok(out)
}

fn run_survival(records: &[SurvivalRecord], run: &mut RunDir) -> Result<()> {
    if records.is_empty() {
        return Err(CliError::Core(Error::Validation("no sample has survival_time and event".into())));
    }
    save_km(&run.output("km.tsv")?, &km_by_group(records))?;
    run.write_json("logrank.json", &logrank(records)?)
}

#[derive(Serialize)]
struct LfgSummary {
    dropped_constant: Vec<String>,
    groups: Vec<Vec<String>>,
}

/// Latent feature groups: hierarchical clustering of latent columns by
/// absolute correlation, cut into at most `lfg_groups` groups. Constant
/// columns carry no correlation and are set aside.
fn run_lfg(z: &Array2<f64>, cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let names: Vec<String> = (1..=z.ncols()).map(|j| format!("z{j}")).collect();
    let std = z.std_axis(Axis(0), 0.0);
    let keep: Vec<usize> = (0..z.ncols()).filter(|&j| std[j] > 1e-12).collect();
    let dropped = (0..z.ncols()).filter(|j| !keep.contains(j)).map(|j| names[j].clone()).collect();
    let mut groups: Vec<Vec<String>> = Vec::new();
    if keep.len() >= 2 {
        let sub = z.select(Axis(1), &keep);
        let kept: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
        let d = hierarchical_corr(sub.view(), Some(&kept), cfg.analysis.linkage)?;
        d.save(&run.output("lfg_dendrogram.tsv")?)?;
        let labels = cut_dendrogram(&d, cfg.analysis.lfg_groups.min(keep.len()))?;
        let n_groups = labels.iter().max().map_or(0, |m| m + 1);
        groups = vec![Vec::new(); n_groups];
        for (name, &g) in kept.iter().zip(&labels) {
            groups[g].push(name.clone());
        }
        let rows = kept.iter().zip(&labels).map(|(n, g)| vec![n.clone(), format!("LFG{}", g + 1)]);
        tsv::write_table(&run.output("lfg.tsv")?, &["latent_feature", "group"], rows)?;
    }
    run.write_json(
        "lfg.json",
        &LfgSummary {
            dropped_constant: dropped,
            groups,
        },
    )
}

fn write_training(model: &Model, report: &TrainReport, run: &mut RunDir) -> Result<()> {
    model.save(&run.output("model.json")?)?;
    let rows = report
        .loss_history
        .iter()
        .zip(&report.recon_history)
        .enumerate()
        .map(|(e, (l, r))| vec![(e + 1).to_string(), l.to_string(), r.to_string()]);
    tsv::write_table(&run.output("training.tsv")?, &["epoch", "loss", "reconstruction"], rows)?;
    run.write_json("training.json", report)
}

fn write_latents(latents: &LatentTable, ids: &[String], run: &mut RunDir) -> Result<()> {
    latents.save_latents(&run.output("latents.tsv")?, ids)?;
    if latents.code_indices.is_some() {
        latents.save_codes(&run.output("codes.tsv")?, ids)?;
    }
    Ok(())
}

fn write_preprocessed(ds: &Dataset, run: &mut RunDir) -> Result<()> {
    ds.z.save(&run.output("preprocessed.tsv")?)?;
    let rows = ds.removed.iter().map(|f| vec![f.clone()]);
    tsv::write_table(&run.output("removed_features.tsv")?, &["feature_id"], rows)?;
    Ok(())
}

fn cmd_preprocess(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let ds = load_dataset(cfg, run)?;
    write_preprocessed(&ds, run)
}

fn cmd_synth(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    run.input("synth_seed", cfg.synth.seed.to_string());
    let data = generate(&cfg.synth)?;
    data.matrix.save(&run.output("expression.tsv")?)?;
    data.save_meta(&run.output("metadata.tsv")?)?;
    data.save_truth(&run.output("truth.tsv")?)?;
    Ok(())
}

fn cmd_train(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let ds = load_dataset(cfg, run)?;
    let (model, report) = train(cfg.model_config(ds.z.n_features()), &ds.z, &train_config(cfg))?;
    write_training(&model, &report, run)
}

fn cmd_encode(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let path = cfg.input.model.as_ref().ok_or_else(|| missing("model", "encode"))?;
    run.input("model", path.display().to_string());
    let model = Model::load(path)?;
    let ds = load_dataset(cfg, run)?;
    let latents = model.encode_all(&ds.z.values)?;
    write_latents(&latents, &ds.z.sample_ids, run)
}

fn cmd_cluster(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let (x, _) = feature_rows(cfg, run)?;
    let a = cluster_rows(x.values.view(), cfg)?;
    a.save(&run.output("clusters.tsv")?, &x.sample_ids)?;
    Ok(())
}

fn cmd_evaluate(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let (x, ds) = feature_rows(cfg, run)?;
    let labels = load_clusters(cfg, run, &x.sample_ids, "evaluate")?;
    let truth = truth_for(cfg, run, &x.sample_ids, ds.as_ref())?
        .ok_or_else(|| missing("truth", "evaluate"))?;
    let k = labels.iter().collect::<BTreeSet<_>>().len();
    let report = MetricsReport::compute(
        x.values.view(),
        &labels,
        Some(&encode_labels(&truth).0),
        k,
        cfg.cluster.algorithm,
        cfg.cluster.seed,
    )?;
    run.write_json("metrics.json", &report)
}

fn cmd_project(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let (x, ds) = feature_rows(cfg, run)?;
    let groups = if cfg.input.clusters.is_some() {
        cluster_names(&load_clusters(cfg, run, &x.sample_ids, "project")?)
    } else {
        truth_for(cfg, run, &x.sample_ids, ds.as_ref())?.unwrap_or_else(|| vec!["all".to_string(); x.n_samples()])
    };
    project(x.values.view(), &x.sample_ids, &groups, cfg, run)
}

fn cmd_deg(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let ds = load_dataset(cfg, run)?;
    let labels = load_clusters(cfg, run, &ds.log.sample_ids, "deg")?;
    run_deg(&ds, &labels, cfg, run)?;
    Ok(())
}

fn cmd_enrich(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let sets = load_sets(cfg, run, "enrich")?;
    let path = cfg.input.volcano.as_ref().ok_or_else(|| missing("volcano", "enrich"))?;
    run.input("volcano", path.display().to_string());
    let table = tsv::read_table(path)?;
    let status = table.header.iter().position(|h| h == "status").ok_or(Error::Parse {
        line: 1,
        message: "volcano header lacks 'status'".into(),
    })?;
    let mut hits = BTreeSet::new();
    let mut universe = BTreeSet::new();
    for (line, fields) in table.rows {
        let s = fields.get(status).ok_or(Error::Parse {
            line,
            message: "short row".into(),
        })?;
        if s == "up" || s == "down" {
            hits.insert(fields[0].clone());
        }
        universe.insert(fields[0].clone());
    }
    run_enrich(&sets, hits, universe, run)?;
    Ok(())
}

fn cmd_survival(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let meta = match load_meta(cfg, run)? {
        Some(m) => m,
        None if cfg.input.expression.is_none() => {
            let data = generate(&cfg.synth)?;
            synth_meta(&data.matrix.sample_ids, &data.labels, &data.survival)
        }
        None => return Err(missing("metadata", "survival")),
    };
    let ids: Vec<String> = meta.iter().map(|m| m.sample_id.clone()).collect();
    let path = cfg.input.clusters.as_ref().ok_or_else(|| missing("clusters", "survival"))?;
    run.input("clusters", path.display().to_string());
    let map = load_assignment(path)?;
    let (ids, labels): (Vec<String>, Vec<usize>) =
        ids.into_iter().filter_map(|id| map.get(&id).map(|&l| (id, l))).unzip();
    run_survival(&survival_records(&ids, &labels, &meta)?, run)
}

#[derive(Serialize)]
struct PipelineSummary {
    n_samples: usize,
    n_features: usize,
    removed_features: usize,
    epochs_run: usize,
    final_loss: Option<f64>,
    cluster_sizes: Vec<usize>,
    baseline: Option<MetricsReport>,
}

fn cmd_pipeline(cfg: &PipelineConfig, run: &mut RunDir) -> Result<()> {
    let ds = load_dataset(cfg, run)?;
    write_preprocessed(&ds, run)?;
    let ids = ds.z.sample_ids.clone();

    let (model, report) = train(cfg.model_config(ds.z.n_features()), &ds.z, &train_config(cfg))?;
    write_training(&model, &report, run)?;
    let latents = model.encode_all(&ds.z.values)?;
    write_latents(&latents, &ids, run)?;

    let assignment = cluster_rows(latents.z.view(), cfg)?;
    assignment.save(&run.output("clusters.tsv")?, &ids)?;
    let truth = ds.truth.as_deref();
    run.write_json("metrics.json", &metrics(latents.z.view(), &assignment, truth)?)?;
    // The same clusterer on the preprocessed data, for comparison.
    let baseline = match truth {
        Some(t) => Some(metrics(ds.z.values.view(), &cluster_rows(ds.z.values.view(), cfg)?, Some(t))?),
        None => None,
    };

    project(latents.z.view(), &ids, &cluster_names(&assignment.labels), cfg, run)?;
    run_lfg(&latents.z, cfg, run)?;

    let a = &cfg.analysis;
    if a.deg {
        let results = run_deg(&ds, &assignment.labels, cfg, run)?;
        if a.enrich && cfg.input.gene_sets.is_some() {
            let sets = load_sets(cfg, run, "pipeline")?;
            let hits = results
                .iter()
                .filter(|r| r.status != DegStatus::Ns)
                .map(|r| r.feature_id.clone())
                .collect();
            let universe = results.iter().map(|r| r.feature_id.clone()).collect();
            run_enrich(&sets, hits, universe, run)?;
        }
    }
    if a.survival {
        if let Some(meta) = &ds.meta {
            let records = survival_records(&ids, &assignment.labels, meta)?;
            if !records.is_empty() {
                run_survival(&records, run)?;
            }
        }
    }

    run.write_json(
        "summary.json",
        &PipelineSummary {
            n_samples: ds.z.n_samples(),
            n_features: ds.z.n_features(),
            removed_features: ds.removed.len(),
            epochs_run: report.epochs_run,
            final_loss: report.loss_history.last().copied(),
            cluster_sizes: assignment.sizes(),
            baseline,
        },
    )
}
