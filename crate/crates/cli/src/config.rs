//! INI pipeline configuration: parsing, overrides, validation and echo.
//!
//! Every key is optional. Unknown sections or keys, unparsable values and
//! out-of-range settings are all collected before anything is reported, so a
//! single run lists every problem in the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use subtype_core::clustering::{Covariance, Linkage};
use subtype_core::datamatrix::{FilterThresholds, Orientation, DEFAULT_IMPUTE_K};
use subtype_core::generative::CodebookUpdate;
use subtype_core::rng::stage_seed;
use subtype_core::{ClusterAlgorithm, ModelConfig, ModelKind, Stage, SynthConfig};

use crate::error::CliError;

/// Stage counters for seed expansion from the root seed. The synthetic
/// dataset stands in for input data and keeps its own seed.
pub const MODEL_STAGE: u64 = 2;
pub const CLUSTER_STAGE: u64 = 3;
pub const TSNE_STAGE: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputSection {
    pub expression: Option<PathBuf>,
    pub orientation: Orientation,
    pub stage: Stage,
    pub feature_lengths: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub gene_sets: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub latents: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub volcano: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSection {
    pub filter: FilterThresholds,
    pub impute_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub slots: usize,
    pub codebook_size: usize,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub tolerance: f64,
    pub dead_code_epochs: usize,
    pub codebook_update: CodebookUpdate,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSection {
    pub algorithm: ClusterAlgorithm,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub covariance: Covariance,
    /// RBF width for spectral clustering; `None` uses the median heuristic.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSection {
    pub deg: bool,
    /// Cluster tested against all other samples.
    pub deg_cluster: usize,
    pub lfc_threshold: f64,
    pub q_threshold: f64,
    pub enrich: bool,
    pub survival: bool,
    pub tsne: bool,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    pub tsne_seed: u64,
    pub lfg_groups: usize,
    pub linkage: Linkage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub input: InputSection,
    pub preprocess: PreprocessSection,
    pub synth: SynthConfig,
    pub model: ModelSection,
    pub cluster: ClusterSection,
    pub analysis: AnalysisSection,
}

/// Command-line adjustments applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// `section.key=value` assignments, applied in order.
    pub set: Vec<String>,
}

type Entries = BTreeMap<(String, String), String>;

struct Reader {
    entries: Entries,
    base: PathBuf,
    problems: Vec<String>,
}

impl Reader {
    fn take<T>(&mut self, section: &str, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let raw = self.entries.remove(&(section.to_string(), key.to_string()))?;
        match parse(raw.trim()) {
            Ok(v) => Some(v),
            Err(e) => {
                self.problems.push(format!("{section}.{key}: {e}"));
                None
            }
        }
    }

    fn value<T>(&mut self, section: &str, key: &str, default: T) -> T
    where
        T: FromStr,
        T::Err: Display,
    {
        self.take(section, key, parse_from_str).unwrap_or(default)
    }

    fn flag(&mut self, section: &str, key: &str, default: bool) -> bool {
        self.take(section, key, parse_bool).unwrap_or(default)
    }

    fn path(&mut self, section: &str, key: &str) -> Option<PathBuf> {
        let base = self.base.clone();
        self.take(section, key, |s| {
            if s.is_empty() {
                Err("empty path".to_string())
            } else {
                Ok(base.join(s))
            }
        })
    }

    fn seed(&mut self, section: &str, root: u64, stage: u64) -> u64 {
        self.take(section, "seed", parse_from_str)
            .unwrap_or_else(|| stage_seed(root, stage))
    }
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: FromStr,
    T::Err: Display,
{
    s.parse::<T>().map_err(|e| format!("cannot parse '{s}': {e}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got '{s}'")),
    }
}

fn parse_list<T>(s: &str) -> Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: Display,
{
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|v| parse_from_str(v.trim())).collect()
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    match s.to_ascii_lowercase().as_str() {
        "raw" => Ok(Stage::Raw),
        "fpkm" => Ok(Stage::Fpkm),
        "log" => Ok(Stage::Log),
        "zscored" => Ok(Stage::Zscored),
        _ => Err(format!("unknown stage '{s}' (raw, fpkm, log, zscored)")),
    }
}

fn parse_orientation(s: &str) -> Result<Orientation, String> {
    match s.to_ascii_lowercase().as_str() {
        "samples_rows" => Ok(Orientation::SamplesRows),
        "features_rows" => Ok(Orientation::FeaturesRows),
        _ => Err(format!("unknown orientation '{s}' (samples_rows, features_rows)")),
    }
}

fn parse_covariance(s: &str) -> Result<Covariance, String> {
    match s.to_ascii_lowercase().as_str() {
        "diagonal" => Ok(Covariance::Diagonal),
        "full" => Ok(Covariance::Full),
        _ => Err(format!("unknown covariance '{s}' (diagonal, full)")),
    }
}

fn parse_linkage(s: &str) -> Result<Linkage, String> {
    match s.to_ascii_lowercase().as_str() {
        "average" => Ok(Linkage::Average),
        "complete" => Ok(Linkage::Complete),
        _ => Err(format!("unknown linkage '{s}' (average, complete)")),
    }
}

fn orientation_name(o: Orientation) -> &'static str {
    match o {
        Orientation::SamplesRows => "samples_rows",
        Orientation::FeaturesRows => "features_rows",
    }
}

fn covariance_name(c: Covariance) -> &'static str {
    match c {
        Covariance::Diagonal => "diagonal",
        Covariance::Full => "full",
    }
}

fn linkage_name(l: Linkage) -> &'static str {
    match l {
        Linkage::Average => "average",
        Linkage::Complete => "complete",
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Defaults for every section, with seeds expanded from `root`.
    pub fn defaults(root: u64) -> Self {
        Self::from_entries(Entries::new(), Path::new("."), &Overrides { seed: Some(root), ..Default::default() })
            .expect("defaults are valid")
    }

    /// Reads `path` (or pure defaults when `None`) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let (entries, base) = match path {
            Some(p) => {
                let ini = Ini::load_from_file(p).map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (entries_of(&ini)?, base)
            }
            None => (Entries::new(), PathBuf::new()),
        };
        Self::from_entries(entries, &base, overrides)
    }

    /// Parses INI text with relative paths resolved against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        Self::from_entries(entries_of(&ini)?, base, overrides)
    }

    fn from_entries(mut entries: Entries, base: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let mut problems = Vec::new();
        for assignment in &overrides.set {
            match assignment.split_once('=').and_then(|(k, v)| k.split_once('.').map(|(s, k)| (s, k, v))) {
                Some((s, k, v)) if !s.is_empty() && !k.is_empty() => {
                    entries.insert((s.trim().to_string(), k.trim().to_string()), v.trim().to_string());
                }
                _ => problems.push(format!("--set '{assignment}': expected section.key=value")),
            }
        }
        let mut r = Reader {
            entries,
            base: base.to_path_buf(),
            problems,
        };

        let file_seed = r.value("run", "seed", 0u64);
        let file_threads = r.value("run", "threads", 1usize);
        let root = overrides.seed.unwrap_or(file_seed);
        let threads = overrides.threads.unwrap_or(file_threads);
        let run = RunSection { seed: root, threads };

        let input = InputSection {
            expression: r.path("input", "expression"),
            orientation: r.take("input", "orientation", parse_orientation).unwrap_or(Orientation::SamplesRows),
            stage: r.take("input", "stage", parse_stage).unwrap_or(Stage::Log),
            feature_lengths: r.path("input", "feature_lengths"),
            metadata: r.path("input", "metadata"),
            truth: r.path("input", "truth"),
            gene_sets: r.path("input", "gene_sets"),
            model: r.path("input", "model"),
            latents: r.path("input", "latents"),
            clusters: r.path("input", "clusters"),
            volcano: r.path("input", "volcano"),
        };

        let fd = FilterThresholds::default();
        let preprocess = PreprocessSection {
            filter: FilterThresholds {
                zero_fraction: r.value("preprocess", "zero_fraction", fd.zero_fraction),
                na_fraction: r.value("preprocess", "na_fraction", fd.na_fraction),
            },
            impute_k: r.value("preprocess", "impute_k", DEFAULT_IMPUTE_K),
        };

        let sd = SynthConfig::default();
        let synth = SynthConfig {
            n_samples: r.value("synth", "n_samples", sd.n_samples),
            n_features: r.value("synth", "n_features", sd.n_features),
            latent_dim: r.value("synth", "latent_dim", sd.latent_dim),
            n_clusters: r.value("synth", "n_clusters", sd.n_clusters),
            separation: r.value("synth", "separation", sd.separation),
            noise_sd: r.value("synth", "noise_sd", sd.noise_sd),
            censoring_rate: r.value("synth", "censoring_rate", sd.censoring_rate),
            hazards: r.take("synth", "hazards", parse_list).unwrap_or(sd.hazards.clone()),
            hidden_dim: r.value("synth", "hidden_dim", sd.hidden_dim),
            map_gain: r.value("synth", "map_gain", sd.map_gain),
            bias_scale: r.value("synth", "bias_scale", sd.bias_scale),
            output_scale: r.value("synth", "output_scale", sd.output_scale),
            seed: r.value("synth", "seed", sd.seed),
        };

        let md = ModelConfig::new(ModelKind::Vqvae, 1);
        let kind = r.take("model", "kind", |s| s.parse::<ModelKind>().map_err(|e| e.to_string())).unwrap_or(md.kind);
        let update = r.take("model", "codebook_update", |s| match s.to_ascii_lowercase().as_str() {
            "gradient" => Ok(false),
            "ema" => Ok(true),
            _ => Err(format!("unknown codebook_update '{s}' (gradient, ema)")),
        });
        let decay = r.value("model", "ema_decay", 0.99f64);
        let model = ModelSection {
            kind,
            hidden: r.take("model", "hidden", parse_list).unwrap_or(md.hidden.clone()),
            latent_dim: r.value("model", "latent_dim", md.latent_dim),
            slots: r.value("model", "slots", md.slots),
            codebook_size: r.value("model", "codebook_size", md.codebook_size),
            beta: r.value("model", "beta", md.beta),
            epochs: r.value("model", "epochs", 60usize),
            batch_size: r.value("model", "batch_size", 32usize),
            learning_rate: r.value("model", "learning_rate", 1e-3f64),
            patience: r.value("model", "patience", 25usize),
            tolerance: r.value("model", "tolerance", 1e-6f64),
            dead_code_epochs: r.value("model", "dead_code_epochs", 50usize),
            codebook_update: if update == Some(true) {
                CodebookUpdate::Ema { decay }
            } else {
                CodebookUpdate::Gradient
            },
            seed: r.seed("model", root, MODEL_STAGE),
        };

        let cluster = ClusterSection {
            algorithm: r
                .take("cluster", "algorithm", |s| s.parse::<ClusterAlgorithm>().map_err(|e| e.to_string()))
                .unwrap_or(ClusterAlgorithm::Kmeans),
            k: r.value("cluster", "k", 5usize),
            seed: r.seed("cluster", root, CLUSTER_STAGE),
            max_iter: r.value("cluster", "max_iter", 300usize),
            covariance: r.take("cluster", "covariance", parse_covariance).unwrap_or(Covariance::Diagonal),
            gamma: r.take("cluster", "gamma", parse_from_str),
        };

        let analysis = AnalysisSection {
            deg: r.flag("analysis", "deg", true),
            deg_cluster: r.value("analysis", "deg_cluster", 0usize),
            lfc_threshold: r.value("analysis", "lfc_threshold", 1.0f64),
            q_threshold: r.value("analysis", "q_threshold", 0.05f64),
            enrich: r.flag("analysis", "enrich", true),
            survival: r.flag("analysis", "survival", true),
            tsne: r.flag("analysis", "tsne", true),
            perplexity: r.value("analysis", "perplexity", 30.0f64),
            tsne_iterations: r.value("analysis", "tsne_iterations", 1000usize),
            tsne_seed: r.seed("analysis", root, TSNE_STAGE),
            lfg_groups: r.value("analysis", "lfg_groups", 3usize),
            linkage: r.take("analysis", "linkage", parse_linkage).unwrap_or(Linkage::Average),
        };

        for (section, key) in r.entries.keys() {
            r.problems.push(format!("{section}.{key}: unknown key"));
        }
        let cfg = Self {
            run,
            input,
            preprocess,
            synth,
            model,
            cluster,
            analysis,
        };
        let mut problems = r.problems;
        problems.extend(cfg.problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Config(problems))
        }
    }

    /// Range checks against the preconditions of the modules each section
    /// feeds, plus existence of every referenced file.
    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                p.push(msg);
            }
        };
        check(self.run.threads >= 1, "run.threads: must be at least 1".into());

        let f = self.preprocess.filter;
        for (key, v) in [("zero_fraction", f.zero_fraction), ("na_fraction", f.na_fraction)] {
            check(v > 0.0 && v <= 1.0, format!("preprocess.{key}: must be in (0, 1], got {v}"));
        }
        check(self.preprocess.impute_k >= 1, "preprocess.impute_k: must be at least 1".into());

        if let Err(e) = self.synth.validate() {
            check(false, format!("synth: {}", strip_kind(&e.to_string())));
        }

        let m = &self.model;
        if let Err(e) = self.model_config(1).validate() {
            check(false, format!("model: {}", strip_kind(&e.to_string())));
        }
        check(m.epochs >= 1, "model.epochs: must be at least 1".into());
        check(m.batch_size >= 1, "model.batch_size: must be at least 1".into());
        check(
            m.learning_rate > 0.0 && m.learning_rate.is_finite(),
            format!("model.learning_rate: must be positive, got {}", m.learning_rate),
        );
        check(m.tolerance >= 0.0, format!("model.tolerance: must be nonnegative, got {}", m.tolerance));
        if let CodebookUpdate::Ema { decay } = m.codebook_update {
            check((0.0..1.0).contains(&decay), format!("model.ema_decay: must be in [0, 1), got {decay}"));
        }

        let c = &self.cluster;
        check(c.k >= 2, format!("cluster.k: must be at least 2, got {}", c.k));
        check(c.max_iter >= 1, "cluster.max_iter: must be at least 1".into());
        if let Some(g) = c.gamma {
            check(g > 0.0 && g.is_finite(), format!("cluster.gamma: must be positive, got {g}"));
        }

        let a = &self.analysis;
        check(
            a.deg_cluster < c.k,
            format!("analysis.deg_cluster: must be below cluster.k = {}, got {}", c.k, a.deg_cluster),
        );
        check(a.lfc_threshold >= 0.0, format!("analysis.lfc_threshold: must be nonnegative, got {}", a.lfc_threshold));
        check(
            a.q_threshold > 0.0 && a.q_threshold <= 1.0,
            format!("analysis.q_threshold: must be in (0, 1], got {}", a.q_threshold),
        );
        check(a.perplexity > 1.0, format!("analysis.perplexity: must exceed 1, got {}", a.perplexity));
        check(a.tsne_iterations >= 1, "analysis.tsne_iterations: must be at least 1".into());
        check(a.lfg_groups >= 1, "analysis.lfg_groups: must be at least 1".into());

        for (key, path) in self.input_paths() {
            check(path.is_file(), format!("input.{key}: file '{}' does not exist", path.display()));
        }
        p
    }

    /// Referenced input files, keyed by their config name.
    pub fn input_paths(&self) -> Vec<(&'static str, &Path)> {
        let i = &self.input;
        [
            ("expression", &i.expression),
            ("feature_lengths", &i.feature_lengths),
            ("metadata", &i.metadata),
            ("truth", &i.truth),
            ("gene_sets", &i.gene_sets),
            ("model", &i.model),
            ("latents", &i.latents),
            ("clusters", &i.clusters),
            ("volcano", &i.volcano),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
        .collect()
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            kind: m.kind,
            input_dim,
            hidden: m.hidden.clone(),
            latent_dim: m.latent_dim,
            slots: m.slots,
            codebook_size: m.codebook_size,
            beta: m.beta,
        }
    }

    /// Fully resolved configuration, seeds included, as INI text. Loading
    /// it back yields an equal configuration.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut section = |name: &str, pairs: Vec<(&str, String)>| {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in pairs {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        };
        section("run", vec![("seed", self.run.seed.to_string()), ("threads", self.run.threads.to_string())]);

        let i = &self.input;
        let mut pairs = vec![
            ("orientation", orientation_name(i.orientation).to_string()),
            ("stage", i.stage.to_string()),
        ];
        for (k, p) in self.input_paths() {
            pairs.push((k, p.display().to_string()));
        }
        section("input", pairs);

        let p = &self.preprocess;
        section(
            "preprocess",
            vec![
                ("zero_fraction", p.filter.zero_fraction.to_string()),
                ("na_fraction", p.filter.na_fraction.to_string()),
                ("impute_k", p.impute_k.to_string()),
            ],
        );

        let s = &self.synth;
        section(
            "synth",
            vec![
                ("n_samples", s.n_samples.to_string()),
                ("n_features", s.n_features.to_string()),
                ("latent_dim", s.latent_dim.to_string()),
                ("n_clusters", s.n_clusters.to_string()),
                ("separation", s.separation.to_string()),
                ("noise_sd", s.noise_sd.to_string()),
                ("censoring_rate", s.censoring_rate.to_string()),
                ("hazards", join(&s.hazards)),
                ("hidden_dim", s.hidden_dim.to_string()),
                ("map_gain", s.map_gain.to_string()),
                ("bias_scale", s.bias_scale.to_string()),
                ("output_scale", s.output_scale.to_string()),
                ("seed", s.seed.to_string()),
            ],
        );

        let m = &self.model;
        let mut pairs = vec![
            ("kind", m.kind.to_string()),
            ("hidden", join(&m.hidden)),
            ("latent_dim", m.latent_dim.to_string()),
            ("slots", m.slots.to_string()),
            ("codebook_size", m.codebook_size.to_string()),
            ("beta", m.beta.to_string()),
            ("epochs", m.epochs.to_string()),
            ("batch_size", m.batch_size.to_string()),
            ("learning_rate", m.learning_rate.to_string()),
            ("patience", m.patience.to_string()),
            ("tolerance", m.tolerance.to_string()),
            ("dead_code_epochs", m.dead_code_epochs.to_string()),
        ];
        match m.codebook_update {
            CodebookUpdate::Gradient => pairs.push(("codebook_update", "gradient".into())),
            CodebookUpdate::Ema { decay } => {
                pairs.push(("codebook_update", "ema".into()));
                pairs.push(("ema_decay", decay.to_string()));
            }
        }
        pairs.push(("seed", m.seed.to_string()));
        section("model", pairs);

        let c = &self.cluster;
        let mut pairs = vec![
            ("algorithm", c.algorithm.to_string()),
            ("k", c.k.to_string()),
            ("seed", c.seed.to_string()),
            ("max_iter", c.max_iter.to_string()),
            ("covariance", covariance_name(c.covariance).to_string()),
        ];
        if let Some(g) = c.gamma {
            pairs.push(("gamma", g.to_string()));
        }
        section("cluster", pairs);

        let a = &self.analysis;
        section(
            "analysis",
            vec![
                ("deg", a.deg.to_string()),
                ("deg_cluster", a.deg_cluster.to_string()),
                ("lfc_threshold", a.lfc_threshold.to_string()),
                ("q_threshold", a.q_threshold.to_string()),
                ("enrich", a.enrich.to_string()),
                ("survival", a.survival.to_string()),
                ("tsne", a.tsne.to_string()),
                ("perplexity", a.perplexity.to_string()),
                ("tsne_iterations", a.tsne_iterations.to_string()),
                ("seed", a.tsne_seed.to_string()),
                ("lfg_groups", a.lfg_groups.to_string()),
                ("linkage", linkage_name(a.linkage).to_string()),
            ],
        );
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }
}

fn entries_of(ini: &Ini) -> Result<Entries, CliError> {
    let mut entries = Entries::new();
    let mut problems = Vec::new();
    for (section, props) in ini.iter() {
        for (k, v) in props.iter() {
            match section {
                Some(s) => {
                    entries.insert((s.to_string(), k.to_string()), v.to_string());
                }
                None => problems.push(format!("{k}: key outside any section")),
            }
        }
    }
    if problems.is_empty() {
        Ok(entries)
    } else {
        Err(CliError::Config(problems))
    }
}

/// Drops the "invalid argument: " prefix of core error messages.
fn strip_kind(msg: &str) -> &str {
    msg.split_once(": ").map_or(msg, |(_, rest)| rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig, CliError> {
        PipelineConfig::parse(text, Path::new(""), &Overrides::default())
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, PipelineConfig::defaults(0));
        assert_eq!(cfg.model.latent_dim, 64);
        assert_eq!(cfg.cluster.k, 5);
        assert_eq!(cfg.synth.n_samples, 500);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse("[model]\nkind = vae\nhidden = 32, 16\ncodebook_update = ema\n[cluster]\ngamma = 0.5\n").unwrap();
        let again = parse(&cfg.echo()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.model.hidden, vec![32, 16]);
    }

    #[test]
    fn all_problems_reported_together() {
        let err = parse("[model]\nepochs = many\nbeta = -1\n[cluster]\nk = 1\ncolour = red\n[bogus]\nx = 1\n")
            .unwrap_err();
        let CliError::Config(problems) = err else { panic!("expected config error") };
        let text = problems.join("\n");
        for needle in ["model.epochs", "beta", "cluster.k", "cluster.colour", "bogus.x"] {
            assert!(text.contains(needle), "missing {needle} in {text}");
        }
        assert!(problems.len() >= 5);
    }

    #[test]
    fn seeds_follow_root_unless_pinned() {
        let a = parse("[run]\nseed = 3\n").unwrap();
        let b = parse("[run]\nseed = 4\n").unwrap();
        assert_ne!(a.model.seed, b.model.seed);
        assert_ne!(a.model.seed, a.cluster.seed);
        let c = parse("[run]\nseed = 4\n[model]\nseed = 11\n").unwrap();
        assert_eq!(c.model.seed, 11);
        assert_eq!(c.cluster.seed, b.cluster.seed);
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides {
            seed: Some(9),
            threads: Some(2),
            set: vec!["cluster.k=4".into(), "analysis.tsne=false".into()],
        };
        let cfg = PipelineConfig::parse("[run]\nseed = 1\n", Path::new(""), &o).unwrap();
        assert_eq!(cfg.run.seed, 9);
        assert_eq!(cfg.run.threads, 2);
        assert_eq!(cfg.cluster.k, 4);
        assert!(!cfg.analysis.tsne);
        let bad = Overrides {
            set: vec!["nodot=1".into()],
            ..Default::default()
        };
        assert!(PipelineConfig::parse("", Path::new(""), &bad).is_err());
    }

    #[test]
    fn missing_input_file_is_a_problem() {
        let err = parse("[input]\nexpression = /definitely/not/here.tsv\n").unwrap_err();
        assert!(err.to_string().contains("input.expression"));
    }
}
