//! Pipeline configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use graphsent_core::corpus::{ClassCounts, SplitSpec, StratumQuota};
use graphsent_core::gat::GatConfig;
use graphsent_core::glmm::Covariate;
use graphsent_core::graph::GraphOptions;
use graphsent_core::synthetic::uniform_split_spec;
use serde::Deserialize;

use crate::InputError;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the splits, initialization and fold assignment.
    pub seed: u64,
    pub output: PathBuf,
    pub paths: Paths,
    pub gat: GatConfig,
    pub training: TrainingConfig,
    pub split: SplitDesign,
    pub graph: GraphConfig,
    pub glmm: GlmmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("out"),
            paths: Paths::default(),
            gat: GatConfig::default(),
            training: TrainingConfig::default(),
            split: SplitDesign::Reference,
            graph: GraphConfig::default(),
            glmm: GlmmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub messages: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    /// Aggregated counts for `glmm`, used instead of the predictions.
    pub rows: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Candidate penalties; empty skips cross-validation.
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_grid: Vec::new(),
            folds: 4,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "design", rename_all = "lowercase", deny_unknown_fields)]
pub enum SplitDesign {
    #[default]
    Reference,
    /// The same quotas in all sixteen school-years.
    Uniform {
        #[serde(default)]
        gat_train: ClassCounts,
        #[serde(default)]
        test: ClassCounts,
        #[serde(default)]
        stack_train: ClassCounts,
    },
    Custom { strata: Vec<StratumQuota> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub symmetric: bool,
    pub self_loops: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        let d = GraphOptions::default();
        Self {
            symmetric: d.symmetric,
            self_loops: d.self_loops,
        }
    }
}

/// Which predictions label the messages handed to the mixed model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Stacked,
    Gat,
    Baseline,
}

impl LabelSource {
    pub fn token(self) -> &'static str {
        match self {
            LabelSource::Stacked => "stacked",
            LabelSource::Gat => "gat",
            LabelSource::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmmConfig {
    /// 1 is the Laplace approximation.
    pub quad_nodes: usize,
    pub labels_from: LabelSource,
    /// Use the hand label where one exists.
    pub prefer_gold: bool,
    pub year_model: Vec<Covariate>,
    pub in_person_model: Vec<Covariate>,
}

impl Default for GlmmConfig {
    fn default() -> Self {
        Self {
            quad_nodes: 1,
            labels_from: LabelSource::Stacked,
            prefer_gold: true,
            year_model: Covariate::YEAR_MODEL.to_vec(),
            in_person_model: Covariate::IN_PERSON_MODEL.to_vec(),
        }
    }
}

impl PipelineConfig {
    /// Parses `path`; relative paths inside it are taken from its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.paths.messages,
            &mut cfg.paths.edges,
            &mut cfg.paths.embeddings,
            &mut cfg.paths.scores,
            &mut cfg.paths.rows,
        ]
        .into_iter()
        .flatten()
        {
            *p = base.join(&*p);
        }
        cfg.output = base.join(&cfg.output);
        Ok(cfg)
    }

    pub fn split_spec(&self) -> SplitSpec {
        match &self.split {
            SplitDesign::Reference => SplitSpec::reference_design(self.seed),
            SplitDesign::Uniform {
                gat_train,
                test,
                stack_train,
            } => uniform_split_spec(self.seed, *gat_train, *test, *stack_train),
            SplitDesign::Custom { strata } => SplitSpec {
                seed: self.seed,
                strata: strata.clone(),
            },
        }
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            symmetric: self.graph.symmetric,
            self_loops: self.graph.self_loops,
        }
    }

    /// GAT settings with the pipeline seed.
    pub fn gat_config(&self) -> GatConfig {
        GatConfig {
            seed: self.seed,
            ..self.gat.clone()
        }
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> anyhow::Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| InputError(format!("config lacks paths.{key}")).into())
    }

    pub fn output_file(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }

    pub fn ensure_output(&self) -> anyhow::Result<()> {
        std::fs::create_dir_all(&self.output)
            .with_context(|| format!("creating {}", self.output.display()))
    }
}
