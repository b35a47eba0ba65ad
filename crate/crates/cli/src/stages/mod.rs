pub mod evaluate;
pub mod glmm;
pub mod ingest;
pub mod stack;
pub mod train;

use graphsent_core::calibrate::PredictionRecord;
use graphsent_core::corpus::{Corpus, SentimentLabel};

use crate::LabelSource;

pub const CHECKPOINT: &str = "gat_checkpoint.bin";
pub const PREDICTIONS: &str = "predictions.csv";
pub const META_MODEL: &str = "meta_model.txt";

/// Label of one record under `source`, thresholding each base model at its
/// own cutoff.
pub fn model_label(r: &PredictionRecord, cutoffs: [f64; 2], source: LabelSource) -> SentimentLabel {
    match source {
        LabelSource::Stacked => r.label,
        LabelSource::Baseline => SentimentLabel::from_probability(r.p_raw[0], cutoffs[0]),
        LabelSource::Gat => SentimentLabel::from_probability(r.p_raw[1], cutoffs[1]),
    }
}

/// Labels for every message, optionally replacing predictions by hand labels.
pub fn final_labels(
    corpus: &Corpus,
    records: &[PredictionRecord],
    cutoffs: [f64; 2],
    source: LabelSource,
    prefer_gold: bool,
) -> anyhow::Result<Vec<SentimentLabel>> {
    if records.len() != corpus.len() {
        anyhow::bail!(crate::InputError(format!(
            "{} predictions for {} messages",
            records.len(),
            corpus.len()
        )));
    }
    Ok(records
        .iter()
        .zip(&corpus.messages)
        .map(|(r, m)| match m.gold_label {
            Some(y) if prefer_gold => y,
            _ => model_label(r, cutoffs, source),
        })
        .collect())
}
