//! Input validation and per-school-year counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use graphsent_core::corpus::{write_id_map, ClassCounts, School, SentimentLabel, Year};
use graphsent_core::graph::degree_histogram;

use crate::table::{write_text, Csv};
use crate::{Dataset, PipelineConfig};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StratumSummary {
    pub messages: usize,
    /// Reply edges whose replying message is in the stratum.
    pub replies: usize,
    pub labeled: ClassCounts,
}

/// Counts per (school, year) in canonical order, empty strata included.
pub fn summarize(ds: &Dataset) -> BTreeMap<(Year, usize), StratumSummary> {
    let mut cells: BTreeMap<(Year, usize), StratumSummary> = BTreeMap::new();
    for year in Year::ALL {
        for s in School::ALL {
            cells.insert((year, s.index()), StratumSummary::default());
        }
    }
    let msgs = &ds.corpus.messages;
    for m in msgs {
        let c = cells.get_mut(&(m.year, m.school.index())).unwrap();
        c.messages += 1;
        match m.gold_label {
            Some(SentimentLabel::Negative) => c.labeled.negative += 1,
            Some(SentimentLabel::NonNegative) => c.labeled.non_negative += 1,
            None => {}
        }
    }
    for &(replier, _) in &ds.edges {
        let m = &msgs[replier];
        cells.get_mut(&(m.year, m.school.index())).unwrap().replies += 1;
    }
    cells
}

/// Writes the summary, id map, degree histogram and split membership, and
/// returns the printed report.
pub fn run(cfg: &PipelineConfig, ds: &Dataset) -> anyhow::Result<String> {
    cfg.ensure_output()?;
    let cells = summarize(ds);

    let header = [
        "school",
        "year",
        "messages",
        "replies",
        "labeled_negative",
        "labeled_non_negative",
        "labeled_total",
    ];
    let mut csv = Csv::new(&header);
    let mut report = String::new();
    writeln!(
        report,
        "{:<10} {:>5} {:>9} {:>9} {:>8} {:>8} {:>8}",
        "school", "year", "messages", "replies", "neg", "non-neg", "labeled"
    )
    .unwrap();
    for year in Year::ALL {
        let mut total = StratumSummary::default();
        for s in School::ALL {
            let c = &cells[&(year, s.index())];
            total.messages += c.messages;
            total.replies += c.replies;
            total.labeled.negative += c.labeled.negative;
            total.labeled.non_negative += c.labeled.non_negative;
            emit(&mut csv, &mut report, s.token(), year, c);
        }
        emit(&mut csv, &mut report, "Total", year, &total);
    }
    writeln!(report, "total messages: {}", ds.corpus.len()).unwrap();
    writeln!(report, "total replies: {}", ds.edges.len()).unwrap();
    writeln!(
        report,
        "split sizes: gat_train {}, stack_train {}, test {} (seed {})",
        ds.splits.gat_train.len(),
        ds.splits.stack_train.len(),
        ds.splits.test.len(),
        ds.spec.seed
    )
    .unwrap();
    csv.write(&cfg.output_file("ingest_summary.csv"))?;
    write_text(&cfg.output_file("ingest_report.txt"), &report)?;

    write_id_map(cfg.output_file("id_map.csv"), &ds.corpus.id_map)?;

    let mut hist = Csv::new(&["degree", "nodes"]);
    for (d, count) in degree_histogram(&ds.graph) {
        hist.row(&[&d, &count]);
    }
    hist.write(&cfg.output_file("degree_histogram.csv"))?;

    let mut splits = Csv::new(&["node_id", "original_id", "set"]);
    for (i, set) in ds.splits.assignment(ds.corpus.len()).into_iter().enumerate() {
        if let Some(set) = set {
            let orig = ds.corpus.messages[i].original_id;
            splits.row(&[&i, &orig, &set.token()]);
        }
    }
    splits.write(&cfg.output_file("splits.csv"))?;
    Ok(report)
}

fn emit(csv: &mut Csv, report: &mut String, name: &str, year: Year, c: &StratumSummary) {
    let lab = c.labeled;
    csv.row(&[
        &name,
        &year,
        &c.messages,
        &c.replies,
        &lab.negative,
        &lab.non_negative,
        &lab.total(),
    ]);
    writeln!(
        report,
        "{:<10} {:>5} {:>9} {:>9} {:>8} {:>8} {:>8}",
        name,
        year,
        c.messages,
        c.replies,
        lab.negative,
        lab.non_negative,
        lab.total()
    )
    .unwrap();
}
