//! Inputs shared by the stages.

use graphsent_core::corpus::{
    collapse_scores, load_edges, load_embeddings, load_messages, load_scores, make_splits, Corpus,
    EmbeddingMatrix, ScoreTable, SentimentLabel, SplitSpec, Splits,
};
use graphsent_core::graph::Graph;
use graphsent_core::Error;
use log::info;

use crate::PipelineConfig;

pub struct Dataset {
    pub corpus: Corpus,
    /// `(replier, target)` in dense ids.
    pub edges: Vec<(usize, usize)>,
    pub graph: Graph,
    pub embeddings: EmbeddingMatrix,
    pub scores: ScoreTable,
    /// Baseline probability of NonNegative per node.
    pub baseline: Vec<f64>,
    pub spec: SplitSpec,
    pub splits: Splits,
}

impl Dataset {
    /// Loads and cross-checks every input file and draws the splits.
    pub fn load(cfg: &PipelineConfig) -> anyhow::Result<Self> {
        let corpus = load_messages(cfg.require(&cfg.paths.messages, "messages")?)?;
        let edges = load_edges(cfg.require(&cfg.paths.edges, "edges")?, &corpus.id_map)?;
        let embeddings = load_embeddings(cfg.require(&cfg.paths.embeddings, "embeddings")?)?;
        embeddings.check_shape(corpus.len(), None)?;
        let scores = load_scores(cfg.require(&cfg.paths.scores, "scores")?)?;
        if scores.len() != corpus.len() {
            return Err(Error::Shape(format!(
                "{} score rows for {} messages",
                scores.len(),
                corpus.len()
            ))
            .into());
        }
        let graph = Graph::build(&edges, corpus.len(), cfg.graph_options())?;
        let spec = cfg.split_spec();
        let splits = make_splits(&corpus, &spec)?;
        info!(
            "loaded {} messages, {} replies, embedding width {}",
            corpus.len(),
            edges.len(),
            embeddings.d()
        );
        let baseline = collapse_scores(&scores);
        Ok(Self {
            corpus,
            edges,
            graph,
            embeddings,
            scores,
            baseline,
            spec,
            splits,
        })
    }

    /// `(node, gold label)` for the given nodes.
    pub fn labeled(&self, nodes: &[usize]) -> Vec<(usize, SentimentLabel)> {
        nodes
            .iter()
            .map(|&i| {
                let y = self.corpus.messages[i]
                    .gold_label
                    .expect("split nodes carry gold labels");
                (i, y)
            })
            .collect()
    }
}

/// Messages and splits only, for stages that work from earlier outputs.
pub fn load_corpus_and_splits(cfg: &PipelineConfig) -> anyhow::Result<(Corpus, Splits)> {
    let corpus = load_messages(cfg.require(&cfg.paths.messages, "messages")?)?;
    let splits = make_splits(&corpus, &cfg.split_spec())?;
    Ok((corpus, splits))
}
