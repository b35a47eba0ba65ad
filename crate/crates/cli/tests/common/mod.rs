#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphsent_core::synthetic::{PlantedCorpus, PlantedOptions};

/// Writes a planted corpus and a config with uniform quotas into `dir`.
pub fn planted_run(dir: &Path, seed: u64, epochs: usize) -> PathBuf {
    let planted = PlantedCorpus::generate(&PlantedOptions {
        seed,
        n: 960,
        embedding_signal: 0.3,
        homophily: 0.65,
        baseline_noise: 1.5,
        ..PlantedOptions::default()
    });
    planted.write_to(dir).unwrap();
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"seed = {seed}
output = "out"

[paths]
messages = "messages.jsonl"
edges = "edges.csv"
embeddings = "embeddings.gsem"
scores = "scores.csv"

[gat]
epochs = {epochs}

[split]
design = "uniform"
gat_train = {{ negative = 5, non_negative = 8 }}
test = {{ negative = 4, non_negative = 4 }}
stack_train = {{ negative = 4, non_negative = 4 }}
"#
        ),
    )
    .unwrap();
    config
}

pub fn graphsent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphsent"))
        .args(args)
        .env("GRAPHSENT_LOG", "error")
        .output()
        .expect("run graphsent")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
