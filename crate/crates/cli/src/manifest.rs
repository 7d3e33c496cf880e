//! Run directory bookkeeping. Every file a command writes is registered
//! here and listed in `manifest.json` together with the inputs, the resolved
//! configuration, the seeds and the wall time.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.ini";

pub struct RunDir {
    dir: PathBuf,
    command: String,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    protected: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(dir: &Path, command: &str, cfg: &PipelineConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let protected = cfg
            .input_paths()
            .into_iter()
            .filter_map(|(_, p)| fs::canonicalize(p).ok())
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            started: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            protected,
        })
    }

    /// Path for output `name`, refusing to overwrite a configured input.
    pub fn output(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if let Ok(canon) = fs::canonicalize(&path) {
            if self.protected.contains(&canon) {
                return Err(CliError::Usage(format!(
                    "output '{}' would overwrite an input; choose another --out",
                    path.display()
                )));
            }
        }
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(path)
    }

    pub fn input(&mut self, name: &str, source: impl Into<String>) {
        self.inputs.insert(name.to_string(), source.into());
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.output(name)?;
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes the config echo and the manifest; returns the output list.
    pub fn finish(mut self, cfg: &PipelineConfig) -> Result<Vec<String>, CliError> {
        let echo = cfg.echo();
        self.write_text(CONFIG_ECHO, &echo)?;
        let mut outputs = self.outputs.clone();
        outputs.sort();
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "modules": {
                "subtype-cli": env!("CARGO_PKG_VERSION"),
                "subtype-core": subtype_core::VERSION,
            },
            "inputs": self.inputs,
            "config": echo,
            "seeds": {
                "root": cfg.run.seed,
                "synth": cfg.synth.seed,
                "model": cfg.model.seed,
                "cluster": cfg.cluster.seed,
                "tsne": cfg.analysis.tsne_seed,
            },
            "threads": cfg.run.threads,
            "wall_time_seconds": self.started.elapsed().as_secs_f64(),
            "outputs": outputs,
        });
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
        Ok(outputs)
    }
}
