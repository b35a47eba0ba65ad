//! GAT training, with optional cross-validation of the penalty.

use std::fmt::Write as _;

use graphsent_core::gat::{cross_validate_lambda, train, write_checkpoint, write_loss_trace, TrainOutcome};
use log::info;

use super::CHECKPOINT;
use crate::table::{write_text, Csv};
use crate::{Dataset, InputError, PipelineConfig};

pub fn run(cfg: &PipelineConfig, ds: &Dataset) -> anyhow::Result<TrainOutcome> {
    cfg.ensure_output()?;
    let labels = ds.labeled(&ds.splits.gat_train);
    if labels.is_empty() {
        anyhow::bail!(InputError("the split design puts no nodes in gat_train".into()));
    }
    let mut gat = cfg.gat_config();
    let mut summary = String::new();
    writeln!(summary, "seed = {}", cfg.seed).unwrap();
    writeln!(summary, "training_nodes = {}", labels.len()).unwrap();

    let grid = &cfg.training.lambda_grid;
    if !grid.is_empty() {
        let cv = cross_validate_lambda(&ds.graph, &ds.embeddings, &labels, grid, cfg.training.folds, &gat)?;
        let mut csv = Csv::new(&["lambda", "fold", "score"]);
        for s in &cv.scores {
            for (f, v) in s.folds.iter().enumerate() {
                csv.row(&[&s.lambda, &f, v]);
            }
            csv.row(&[&s.lambda, &"mean", &s.mean]);
        }
        csv.write(&cfg.output_file("cv_scores.csv"))?;
        info!("cross-validation picked lambda = {}", cv.best_lambda);
        gat.lambda = cv.best_lambda;
    }

    let outcome = train(&ds.graph, &ds.embeddings, &labels, &gat)?;
    write_checkpoint(cfg.output_file(CHECKPOINT), &outcome.params, cfg.seed)?;
    write_loss_trace(cfg.output_file("loss_trace.csv"), &outcome.loss_trace)?;
    writeln!(summary, "lambda = {}", gat.lambda).unwrap();
    writeln!(summary, "epochs = {}", gat.epochs).unwrap();
    writeln!(summary, "final_loss = {}", outcome.loss_trace.last().copied().unwrap_or(f64::NAN)).unwrap();
    write_text(&cfg.output_file("train_summary.txt"), &summary)?;
    Ok(outcome)
}
