//! Test-set metrics for the baseline, the GAT and the stacked model.

use std::fmt::Write as _;

use graphsent_core::calibrate::{read_predictions, PredictionRecord, StackModel};
use graphsent_core::corpus::{Corpus, School, SentimentLabel, Splits, Year};
use graphsent_core::metrics::{agreement_and_kappa, confusion, mean_suite, metric_suite, ConfusionMatrix, MetricSuite};

use super::{model_label, META_MODEL, PREDICTIONS};
use crate::table::{opt, write_text, Csv};
use crate::{InputError, LabelSource, PipelineConfig};

pub const MODELS: [LabelSource; 3] = [LabelSource::Baseline, LabelSource::Gat, LabelSource::Stacked];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: LabelSource,
    /// School token, `All` for the pooled row or `Mean` for the cell average.
    pub group: String,
    pub year: Option<Year>,
    pub confusion: Option<ConfusionMatrix>,
    pub suite: MetricSuite,
}

/// Per-cell, pooled and averaged metrics on the test nodes. Cells without
/// test nodes are left out.
pub fn evaluate(
    corpus: &Corpus,
    test: &[usize],
    records: &[PredictionRecord],
    cutoffs: [f64; 2],
) -> anyhow::Result<Vec<MetricRow>> {
    if test.is_empty() {
        anyhow::bail!(InputError("the test set is empty".into()));
    }
    let mut rows = Vec::new();
    for model in MODELS {
        let mut cells = Vec::new();
        let mut pooled = ConfusionMatrix::default();
        for year in Year::ALL {
            for school in School::ALL {
                let nodes: Vec<usize> = test
                    .iter()
                    .copied()
                    .filter(|&i| corpus.messages[i].school == school && corpus.messages[i].year == year)
                    .collect();
                if nodes.is_empty() {
                    continue;
                }
                let (gold, pred) = labels(corpus, records, cutoffs, model, &nodes);
                let cm = confusion(&gold, &pred)?;
                pooled = pooled + cm;
                let suite = metric_suite(&cm);
                cells.push(suite);
                rows.push(MetricRow {
                    model,
                    group: school.token().to_string(),
                    year: Some(year),
                    confusion: Some(cm),
                    suite,
                });
            }
        }
        rows.push(MetricRow {
            model,
            group: "All".into(),
            year: None,
            confusion: Some(pooled),
            suite: metric_suite(&pooled),
        });
        rows.push(MetricRow {
            model,
            group: "Mean".into(),
            year: None,
            confusion: None,
            suite: mean_suite(&cells),
        });
    }
    Ok(rows)
}

fn labels(
    corpus: &Corpus,
    records: &[PredictionRecord],
    cutoffs: [f64; 2],
    model: LabelSource,
    nodes: &[usize],
) -> (Vec<SentimentLabel>, Vec<SentimentLabel>) {
    nodes
        .iter()
        .map(|&i| {
            let gold = corpus.messages[i].gold_label.expect("test nodes carry gold labels");
            (gold, model_label(&records[i], cutoffs, model))
        })
        .unzip()
}

pub fn run(cfg: &PipelineConfig, corpus: &Corpus, splits: &Splits) -> anyhow::Result<String> {
    cfg.ensure_output()?;
    let records = read_predictions(cfg.output_file(PREDICTIONS))?;
    let model = StackModel::read(cfg.output_file(META_MODEL))?;
    if records.len() != corpus.len() {
        anyhow::bail!(InputError(format!(
            "{} predictions for {} messages",
            records.len(),
            corpus.len()
        )));
    }
    let rows = evaluate(corpus, &splits.test, &records, model.cutoffs)?;

    let mut csv = Csv::new(&[
        "model", "school", "year", "tp", "fp", "fn", "tn", "car", "f1", "precision", "recall",
        "specificity", "npv",
    ]);
    let mut report = String::new();
    writeln!(report, "seed {}; Negative is the positive class", model.seed).unwrap();
    writeln!(
        report,
        "{:<9} {:<10} {:>5} {:>7} {:>7} {:>9} {:>7} {:>11}",
        "model", "school", "year", "CAR", "F1", "precision", "recall", "specificity"
    )
    .unwrap();
    for r in &rows {
        let year = r.year.map_or_else(String::new, |y| y.to_string());
        let cm = r.confusion.map_or_else(|| std::array::from_fn(|_| "NA".to_string()), |c| {
            [c.tp, c.fp, c.fn_, c.tn].map(|v| v.to_string())
        });
        let s = &r.suite;
        csv.row(&[
            &r.model.token(),
            &r.group,
            &year,
            &cm[0],
            &cm[1],
            &cm[2],
            &cm[3],
            &opt(s.car),
            &opt(s.f1),
            &opt(s.precision),
            &opt(s.recall),
            &opt(s.specificity),
            &opt(s.npv),
        ]);
        let short = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"));
        writeln!(
            report,
            "{:<9} {:<10} {:>5} {:>7} {:>7} {:>9} {:>7} {:>11}",
            r.model.token(),
            r.group,
            year,
            short(s.car),
            short(s.f1),
            short(s.precision),
            short(s.recall),
            short(s.specificity)
        )
        .unwrap();
    }
    csv.write(&cfg.output_file("metrics.csv"))?;

    // Agreement between the models' labels over the whole corpus.
    let all: Vec<Vec<SentimentLabel>> = MODELS
        .iter()
        .map(|&m| records.iter().map(|r| model_label(r, model.cutoffs, m)).collect())
        .collect();
    let mut agree = Csv::new(&["model_a", "model_b", "p_o", "p_e", "kappa"]);
    for a in 0..3 {
        for b in a + 1..3 {
            let ag = agreement_and_kappa(&all[a], &all[b])?;
            agree.row(&[&MODELS[a].token(), &MODELS[b].token(), &format!("{:.6}", ag.p_o), &format!("{:.6}", ag.p_e), &opt(ag.kappa)]);
        }
    }
    agree.write(&cfg.output_file("agreement.csv"))?;
    write_text(&cfg.output_file("metrics_report.txt"), &report)?;
    Ok(report)
}
