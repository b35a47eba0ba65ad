//! Mixed-model inference on labeled counts per school-year.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use graphsent_core::calibrate::{read_predictions, StackModel};
use graphsent_core::corpus::Corpus;
use graphsent_core::glmm::{
    fit_glmm, format_report, odds_ratios, read_rows, sufficient_stats, write_rows, Covariate, GlmmFit,
    GlmmOptions, GlmmRow,
};

use super::{final_labels, META_MODEL, PREDICTIONS};
use crate::table::{write_text, Csv};
use crate::{InputError, LabelSource, PipelineConfig};

#[derive(Debug, Clone)]
pub struct GlmmOutcome {
    pub year_fit: GlmmFit,
    pub in_person_fit: GlmmFit,
    pub report: String,
}

/// Counts per school-year from the predictions file.
pub fn rows_from_predictions(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    source: LabelSource,
) -> anyhow::Result<Vec<GlmmRow>> {
    let records = read_predictions(cfg.output_file(PREDICTIONS))?;
    let model = StackModel::read(cfg.output_file(META_MODEL))?;
    let labels = final_labels(corpus, &records, model.cutoffs, source, cfg.glmm.prefer_gold)?;
    let cells: Vec<_> = corpus
        .messages
        .iter()
        .zip(labels)
        .map(|(m, y)| (m.school, m.year, y))
        .collect();
    Ok(sufficient_stats(&cells))
}

/// Fits the year model on all rows and the in-person model on 2020 rows.
pub fn fit_models(
    rows: &[GlmmRow],
    year_model: &[Covariate],
    in_person_model: &[Covariate],
    quad_nodes: usize,
) -> anyhow::Result<(GlmmFit, GlmmFit)> {
    let opts = GlmmOptions {
        quad_nodes,
        ..GlmmOptions::default()
    };
    let year_fit = fit_glmm(rows, year_model, &opts).context("fitting the year model")?;
    let rows_2020: Vec<GlmmRow> = rows.iter().filter(|r| r.year == 1).cloned().collect();
    let in_person_fit =
        fit_glmm(&rows_2020, in_person_model, &opts).context("fitting the in-person model on 2020")?;
    Ok((year_fit, in_person_fit))
}

/// Runs both models. Rows come from `rows_file` when given, otherwise from
/// the predictions labeled by `source`. Outputs are named after the source,
/// except that stacked labels and explicit rows use the plain names.
pub fn run(
    cfg: &PipelineConfig,
    corpus: Option<&Corpus>,
    source: LabelSource,
    rows_file: Option<&Path>,
) -> anyhow::Result<GlmmOutcome> {
    cfg.ensure_output()?;
    let (rows, origin, stem) = match rows_file {
        Some(p) => (read_rows(p)?, format!("counts from {}", p.display()), "glmm".to_string()),
        None => {
            let corpus = corpus.ok_or_else(|| InputError("glmm needs paths.messages or --rows".into()))?;
            let stem = match source {
                LabelSource::Stacked => "glmm".to_string(),
                other => format!("glmm_{}", other.token()),
            };
            let origin = format!(
                "{} labels{}",
                source.token(),
                if cfg.glmm.prefer_gold { ", hand labels where available" } else { "" }
            );
            (rows_from_predictions(cfg, corpus, source)?, origin, stem)
        }
    };
    let g = &cfg.glmm;
    let (year_fit, in_person_fit) = fit_models(&rows, &g.year_model, &g.in_person_model, g.quad_nodes)?;
    write_rows(cfg.output_file(&format!("{stem}_rows.csv")), &rows)?;

    let mut report = String::new();
    writeln!(report, "labels: {origin}; seed {}", cfg.seed).unwrap();
    writeln!(report).unwrap();
    report.push_str(&format_report("Model 1: all messages", &year_fit, &g.year_model));
    writeln!(report).unwrap();
    report.push_str(&format_report("Model 2: 2020 messages", &in_person_fit, &g.in_person_model));
    write_text(&cfg.output_file(&format!("{stem}_report.txt")), &report)?;

    let mut csv = Csv::new(&["model", "factor", "estimate", "se", "or_negative", "p_value", "sigma", "loglik", "method"]);
    for (name, fit, covs) in [
        ("year", &year_fit, &g.year_model),
        ("in_person", &in_person_fit, &g.in_person_model),
    ] {
        for r in odds_ratios(fit, covs) {
            csv.row(&[
                &name,
                &r.factor,
                &format!("{:.6}", r.estimate),
                &format!("{:.6}", r.se),
                &format!("{:.6}", r.or_negative),
                &format!("{:.6e}", r.p_value),
                &format!("{:.6}", fit.sigma),
                &format!("{:.6}", fit.loglik),
                &fit.method,
            ]);
        }
    }
    csv.write(&cfg.output_file(&format!("{stem}_report.csv")))?;
    Ok(GlmmOutcome {
        year_fit,
        in_person_fit,
        report,
    })
}
