use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use genre_embed::eval::DEFAULT_MIN_TAG_COUNT;
use genre_embed::retrofit::RetrofitConfig;
use genre_embed::translate::Scorer;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Composition {
    Avg,
    #[default]
    Sif,
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Composition::Avg => "avg",
            Composition::Sif => "sif",
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Aligned word vectors, keyed by two-letter language code.
    pub vectors: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub vector_limit: Option<usize>,
    pub nodes: PathBuf,
    pub edges: PathBuf,
    #[serde(default)]
    pub lemmas: Option<PathBuf>,
    pub corpus: PathBuf,
    /// Extra node ids, one per line, that keep their component alive when
    /// the graph is filtered. Attached tag nodes always do.
    #[serde(default)]
    pub high_confidence: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagSystem {
    pub name: String,
    pub lang: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evaluation {
    pub target: String,
    pub sources: Vec<String>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_sif_a() -> f64 {
    genre_embed::compose::DEFAULT_SIF_A
}

fn default_folds() -> usize {
    4
}

fn default_min_tag_count() -> usize {
    DEFAULT_MIN_TAG_COUNT
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub composition: Composition,
    #[serde(default = "default_sif_a")]
    pub sif_a: f64,
    #[serde(default)]
    pub retrofit: RetrofitConfig,
    #[serde(default)]
    pub scorer: Scorer,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_tag_count")]
    pub min_tag_count: usize,
    #[serde(default)]
    pub tag_systems: Vec<TagSystem>,
    #[serde(default)]
    pub evaluation: Option<Evaluation>,
}

impl FromStr for PipelineConfig {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        // toml errors span several lines; keep the first, which names the key
        toml::from_str(s).map_err(|e| anyhow::anyhow!("{}", e.message()))
    }
}

impl PipelineConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the directory holding the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        let mut cfg: PipelineConfig = text.parse().with_context(|| format!("{}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        paths.vectors.values_mut().for_each(join);
        join(&mut paths.nodes);
        join(&mut paths.edges);
        join(&mut paths.corpus);
        paths.lemmas.iter_mut().for_each(join);
        paths.high_confidence.iter_mut().for_each(join);
        join(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.vectors.is_empty() {
            bail!("paths.vectors lists no language");
        }
        if self.paths.vector_limit == Some(0) {
            bail!("paths.vector_limit must be positive");
        }
        if self.sif_a.is_nan() || self.sif_a <= 0.0 {
            bail!("sif_a must be > 0, got {}", self.sif_a);
        }
        if self.folds < 2 {
            bail!("folds must be at least 2, got {}", self.folds);
        }
        self.retrofit.validate()?;
        let mut names = std::collections::BTreeSet::new();
        for s in &self.tag_systems {
            if !names.insert(s.name.as_str()) {
                bail!("tag system `{}` is listed twice", s.name);
            }
        }
        Ok(())
    }

    pub fn evaluation(&self) -> Result<&Evaluation> {
        self.evaluation
            .as_ref()
            .context("config has no [evaluation] section")
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
