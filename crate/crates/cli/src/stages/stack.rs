//! Cutoffs, rescaling and the stacking meta-model.

use graphsent_core::calibrate::{
    fit_meta, optimal_cutoff, rescale, write_predictions, CutoffResult, PredictionRecord, StackModel,
};
use graphsent_core::corpus::{Corpus, School, SentimentLabel, Year};
use graphsent_core::gat::{predict, read_checkpoint};
use log::{info, warn};

use super::{final_labels, CHECKPOINT, META_MODEL, PREDICTIONS};
use crate::table::Csv;
use crate::{Dataset, PipelineConfig};

#[derive(Debug, Clone)]
pub struct StackOutcome {
    pub model: StackModel,
    pub cutoffs: [CutoffResult; 2],
    /// One record per node, in node order.
    pub records: Vec<PredictionRecord>,
}

/// Fits cutoffs and meta-model on `train` and labels every node.
///
/// `baseline` and `gat` hold each model's probability of NonNegative per node.
pub fn fit_stack(
    baseline: &[f64],
    gat: &[f64],
    train: &[(usize, SentimentLabel)],
    seed: u64,
) -> graphsent_core::Result<StackOutcome> {
    let y: Vec<SentimentLabel> = train.iter().map(|&(_, y)| y).collect();
    let mut cutoffs = Vec::with_capacity(2);
    for (name, p) in [("baseline", baseline), ("gat", gat)] {
        let sub: Vec<f64> = train.iter().map(|&(i, _)| p[i]).collect();
        let c = optimal_cutoff(&sub, &y)?;
        if c.degenerate {
            warn!("{name}: all stacking-set probabilities are equal");
        }
        info!("{name}: cutoff {:.6}, score {:.4}", c.cutoff, c.score);
        cutoffs.push(c);
    }
    let cutoffs = [cutoffs[0], cutoffs[1]];
    let c = [cutoffs[0].cutoff, cutoffs[1].cutoff];

    let mut p1 = Vec::with_capacity(train.len());
    let mut p2 = Vec::with_capacity(train.len());
    for &(i, _) in train {
        p1.push(rescale(baseline[i], c[0])?);
        p2.push(rescale(gat[i], c[1])?);
    }
    let meta = fit_meta(&p1, &p2, &y)?;
    if !meta.converged {
        warn!("meta-model did not converge in {} iterations", meta.iterations);
    }
    let model = StackModel {
        cutoffs: c,
        meta,
        seed,
    };
    let records = baseline
        .iter()
        .zip(gat)
        .enumerate()
        .map(|(i, (&b, &g))| model.record(i, [b, g]))
        .collect::<graphsent_core::Result<Vec<_>>>()?;
    Ok(StackOutcome {
        model,
        cutoffs,
        records,
    })
}

pub fn run(cfg: &PipelineConfig, ds: &Dataset) -> anyhow::Result<StackOutcome> {
    cfg.ensure_output()?;
    let (params, _) = read_checkpoint(cfg.output_file(CHECKPOINT))?;
    let gat = predict(&ds.graph, &ds.embeddings, &params)?;
    let train = ds.labeled(&ds.splits.stack_train);
    let outcome = fit_stack(&ds.baseline, &gat, &train, cfg.seed)?;
    write_predictions(cfg.output_file(PREDICTIONS), &outcome.records)?;
    outcome.model.write(cfg.output_file(META_MODEL))?;
    let labels = final_labels(
        &ds.corpus,
        &outcome.records,
        outcome.model.cutoffs,
        crate::LabelSource::Stacked,
        cfg.glmm.prefer_gold,
    )?;
    proportions(&ds.corpus, &labels).write(&cfg.output_file("proportions.csv"))?;
    Ok(outcome)
}

/// Negative and NonNegative counts per school-year with yearly totals.
pub(crate) fn proportions(corpus: &Corpus, labels: &[SentimentLabel]) -> Csv {
    let mut counts = [[[0usize; 2]; 8]; 2];
    for (m, y) in corpus.messages.iter().zip(labels) {
        let yi = usize::from(m.year == Year::Y2020);
        counts[yi][m.school.index()][usize::from(!y.is_negative())] += 1;
    }
    let mut csv = Csv::new(&["school", "year", "negative", "non_negative", "total", "pct_negative"]);
    let row = |csv: &mut Csv, name: &str, year: Year, c: [usize; 2]| {
        let total = c[0] + c[1];
        let pct = if total == 0 {
            "NA".to_string()
        } else {
            format!("{:.2}", 100.0 * c[0] as f64 / total as f64)
        };
        csv.row(&[&name, &year, &c[0], &c[1], &total, &pct]);
    };
    for year in Year::ALL {
        let yi = usize::from(year == Year::Y2020);
        let mut total = [0usize; 2];
        for s in School::ALL {
            let c = counts[yi][s.index()];
            total[0] += c[0];
            total[1] += c[1];
            row(&mut csv, s.token(), year, c);
        }
        row(&mut csv, "Total", year, total);
    }
    csv
}
