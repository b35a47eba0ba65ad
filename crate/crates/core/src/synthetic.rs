//! Planted data generators for tests, benchmarks and demos.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand_distr::{Binomial, Distribution, Normal};

use crate::corpus::{
    write_embeddings, ClassCounts, Corpus, EmbeddingMatrix, IdMap, Message, School, ScoreTable,
    SentimentLabel, SplitSpec, StratumQuota, Year,
};
use crate::error::{Error, Result};
use crate::glmm::GlmmRow;
use crate::rng::SplitMix64;

/// Binomial counts for all sixteen school-year cells drawn from the
/// random-intercept model with `beta = (intercept, year, small city,
/// private)` and `n` trials per cell.
pub fn glmm_rows(seed: u64, beta: &[f64; 4], sigma: f64, n: u64) -> Vec<GlmmRow> {
    let mut rng = SplitMix64::new(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let intercepts: Vec<f64> = School::ALL.iter().map(|_| sigma * normal.sample(&mut rng)).collect();
    let mut rows = Vec::with_capacity(16);
    for year in Year::ALL {
        for (s, &school) in School::ALL.iter().enumerate() {
            let template = GlmmRow::for_cell(school, year, 0, n);
            let eta = beta[0]
                + beta[1] * f64::from(template.year)
                + beta[2] * f64::from(template.location_small)
                + beta[3] * f64::from(template.type_private)
                + intercepts[s];
            let p = 1.0 / (1.0 + (-eta).exp());
            let k = Binomial::new(n, p).unwrap().sample(&mut rng);
            rows.push(GlmmRow { k, ..template });
        }
    }
    rows
}

/// Knobs of the planted message corpus.
#[derive(Debug, Clone)]
pub struct PlantedOptions {
    pub seed: u64,
    pub n: usize,
    pub negative_rate: f64,
    pub dim: usize,
    /// Mean shift of the first two embedding coordinates between classes.
    pub embedding_signal: f64,
    /// Replies made by each message.
    pub replies: usize,
    /// Chance that a reply goes to a message of the same class.
    pub homophily: f64,
    /// Class separation of the baseline logit.
    pub baseline_signal: f64,
    pub baseline_noise: f64,
}

impl Default for PlantedOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            n: 500,
            negative_rate: 0.4,
            dim: 8,
            embedding_signal: 0.5,
            replies: 4,
            homophily: 0.85,
            baseline_signal: 1.0,
            baseline_noise: 1.2,
        }
    }
}

/// A labeled corpus whose labels are recoverable from two noisy sources:
/// embeddings aggregated over a homophilous reply graph, and independent
/// baseline scores.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// `(replier, target)` in dense ids.
    pub edges: Vec<(usize, usize)>,
    pub embeddings: EmbeddingMatrix,
    pub scores: ScoreTable,
}

#[derive(Debug, Clone)]
pub struct PlantedPaths {
    pub messages: PathBuf,
    pub edges: PathBuf,
    pub embeddings: PathBuf,
    pub scores: PathBuf,
}

impl PlantedCorpus {
    pub fn generate(opts: &PlantedOptions) -> Self {
        assert!(opts.n >= 2 && opts.dim >= 2);
        let mut rng = SplitMix64::new(opts.seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let strata: Vec<(School, Year)> = Year::ALL
            .iter()
            .flat_map(|&y| School::ALL.iter().map(move |&s| (s, y)))
            .collect();

        let mut labels = Vec::with_capacity(opts.n);
        let mut messages = Vec::with_capacity(opts.n);
        let mut id_map = IdMap::default();
        for i in 0..opts.n {
            let label = if rng.unit() < opts.negative_rate {
                SentimentLabel::Negative
            } else {
                SentimentLabel::NonNegative
            };
            let (school, year) = strata[i % strata.len()];
            let original_id = 1000 + 7 * i as u64;
            id_map.insert(original_id).expect("ids are distinct");
            labels.push(label);
            messages.push(Message {
                node_id: i,
                original_id,
                user_id: rng.below(opts.n as u64 / 3 + 1),
                school,
                year,
                text: None,
                gold_label: Some(label),
            });
        }
        let sign = |y: SentimentLabel| if y.is_negative() { -1.0 } else { 1.0 };

        let mut h = Array2::zeros((opts.n, opts.dim));
        for i in 0..opts.n {
            for j in 0..opts.dim {
                let shift = if j < 2 { opts.embedding_signal * sign(labels[i]) } else { 0.0 };
                h[(i, j)] = shift + normal.sample(&mut rng);
            }
        }

        let by_class = |c: SentimentLabel| -> Vec<usize> { (0..opts.n).filter(|&i| labels[i] == c).collect() };
        let neg = by_class(SentimentLabel::Negative);
        let nonneg = by_class(SentimentLabel::NonNegative);
        let mut edges = Vec::with_capacity(opts.n * opts.replies);
        for i in 0..opts.n {
            for _ in 0..opts.replies {
                let pool = if rng.unit() < opts.homophily {
                    if labels[i].is_negative() {
                        &neg
                    } else {
                        &nonneg
                    }
                } else if rng.below(2) == 0 {
                    &neg
                } else {
                    &nonneg
                };
                if pool.is_empty() {
                    continue;
                }
                let j = pool[rng.below(pool.len() as u64) as usize];
                if j != i {
                    edges.push((i, j));
                }
            }
        }

        let rows = labels
            .iter()
            .map(|&y| {
                let logit = opts.baseline_signal * sign(y) + opts.baseline_noise * normal.sample(&mut rng);
                let p = 1.0 / (1.0 + (-logit).exp());
                [1.0 - p, 0.5 * p, 0.5 * p]
            })
            .collect();

        Self {
            corpus: Corpus { messages, id_map },
            edges,
            embeddings: EmbeddingMatrix::new(h).expect("finite embeddings"),
            scores: ScoreTable::new(rows).expect("valid score rows"),
        }
    }

    /// Writes the four input files the command-line pipeline reads.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PlantedPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = PlantedPaths {
            messages: dir.join("messages.jsonl"),
            edges: dir.join("edges.csv"),
            embeddings: dir.join("embeddings.gsem"),
            scores: dir.join("scores.csv"),
        };

        let mut text = String::new();
        for m in &self.corpus.messages {
            let mut obj = serde_json::json!({
                "node_id": m.original_id,
                "user_id": m.user_id,
                "school": m.school.token(),
                "year": m.year.value(),
            });
            if let Some(label) = m.gold_label {
                obj["label"] = label.token().into();
            }
            text.push_str(&obj.to_string());
            text.push('\n');
        }
        std::fs::write(&paths.messages, text).map_err(|e| Error::io(&paths.messages, e))?;

        let ids = &self.corpus.id_map;
        let mut text = String::from("replier_id,target_id\n");
        for &(a, b) in &self.edges {
            text.push_str(&format!("{},{}\n", ids.original(a).unwrap(), ids.original(b).unwrap()));
        }
        std::fs::write(&paths.edges, text).map_err(|e| Error::io(&paths.edges, e))?;

        write_embeddings(&paths.embeddings, &self.embeddings)?;

        let mut text = String::from("negative,neutral,positive\n");
        for r in self.scores.rows() {
            text.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
        }
        std::fs::write(&paths.scores, text).map_err(|e| Error::io(&paths.scores, e))?;
        Ok(paths)
    }
}

/// The same per-class quotas in every school-year stratum.
pub fn uniform_split_spec(seed: u64, gat_train: ClassCounts, test: ClassCounts, stack_train: ClassCounts) -> SplitSpec {
    let strata = Year::ALL
        .iter()
        .flat_map(|&year| {
            School::ALL.iter().map(move |&school| StratumQuota {
                school,
                year,
                gat_train,
                test,
                stack_train,
            })
        })
        .collect();
    SplitSpec { seed, strata }
}
