mod common;

use common::{graphsent, planted_run, stderr, stdout};
use graphsent_core::calibrate::{read_predictions, StackModel};
use graphsent_core::corpus::SentimentLabel;

#[test]
fn stages_run_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_run(dir.path(), 3, 60);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");

    let o = graphsent(&["ingest", "--config", cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("total messages: 960"));
    let summary = std::fs::read_to_string(out.join("ingest_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 18);

    let o = graphsent(&["train", "--config", cfg, "--lambda-grid", "0.01,0.08"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cv = std::fs::read_to_string(out.join("cv_scores.csv")).unwrap();
    assert_eq!(cv.lines().count(), 1 + 2 * 5);
    let ckpt = std::fs::read(out.join("gat_checkpoint.bin")).unwrap();

    let o = graphsent(&["train", "--config", cfg, "--lambda-grid", "0.01,0.08"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("gat_checkpoint.bin")).unwrap(), ckpt);

    let o = graphsent(&["stack", "--config", cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = read_predictions(out.join("predictions.csv")).unwrap();
    assert_eq!(records.len(), 960);
    for r in &records {
        assert_eq!(r.label, SentimentLabel::from_probability(r.p_bar, 0.5));
    }
    assert_eq!(StackModel::read(out.join("meta_model.txt")).unwrap().seed, 3);
    let props = std::fs::read_to_string(out.join("proportions.csv")).unwrap();
    assert!(props.starts_with("school,year,negative,non_negative,total,pct_negative\n"));
    assert_eq!(props.lines().count(), 1 + 18);

    let o = graphsent(&["evaluate", "--config", cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    // 16 cells plus All and Mean for each of three models.
    assert_eq!(metrics.lines().count(), 1 + 3 * 18);
    for model in ["baseline", "gat", "stacked"] {
        assert!(metrics.lines().any(|l| l.starts_with(&format!("{model},All,"))));
    }

    let o = graphsent(&["glmm", "--config", cfg, "--labels-from", "gat", "--quad-nodes", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Model 2"));
    assert!(out.join("glmm_gat_report.csv").exists());
    assert!(out.join("glmm_gat_rows.csv").exists());
}

#[test]
fn glmm_from_count_rows() {
    let dir = tempfile::tempdir().unwrap();
    let rows = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/school_year_counts.csv");
    let out = dir.path().to_str().unwrap();
    let o = graphsent(&["glmm", "--rows", rows, "--output", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Year 2020"), "{text}");
    assert!(text.contains("In-Person"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("glmm_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn missing_embeddings_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_run(dir.path(), 1, 5);
    std::fs::remove_file(dir.path().join("embeddings.gsem")).unwrap();
    let o = graphsent(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("embeddings.gsem"), "{}", stderr(&o));
}

#[test]
fn bad_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = \"x\"\n").unwrap();
    let o = graphsent(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = graphsent(&["ingest"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("paths.messages"));
}

#[test]
fn stack_without_checkpoint_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_run(dir.path(), 1, 5);
    let o = graphsent(&["stack", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gat_checkpoint.bin"), "{}", stderr(&o));
}

#[test]
fn separated_count_rows_fail_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.csv");
    let mut text = String::from("school,year,type_private,location_small,in_person,k,n\n");
    for (s, p, l, ip) in [("a", 0, 0, 0), ("b", 0, 1, 1), ("c", 1, 0, 1), ("d", 1, 1, 0)] {
        text.push_str(&format!("{s},0,{p},{l},{ip},50,100\n"));
        text.push_str(&format!("{s},1,{p},{l},{ip},100,100\n"));
    }
    std::fs::write(&rows, text).unwrap();
    let o = graphsent(&["glmm", "--rows", rows.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}
