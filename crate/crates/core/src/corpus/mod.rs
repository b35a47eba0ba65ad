//! Message corpus: domain types, file loaders and deterministic splits.

mod io;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_edges, load_embeddings, load_messages, load_scores, write_embeddings, write_id_map,
    EMBEDDING_MAGIC,
};
pub use split::{make_splits, ClassCounts, SplitSet, SplitSpec, Splits, StratumQuota};

/// One of the eight universities in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum School {
    Ucla,
    Ucsd,
    Ucb,
    Umich,
    Harvard,
    Columbia,
    Dartmouth,
    Nd,
}

impl School {
    /// Canonical ordering used by every report and by split sampling.
    pub const ALL: [School; 8] = [
        School::Ucla,
        School::Ucsd,
        School::Ucb,
        School::Umich,
        School::Harvard,
        School::Columbia,
        School::Dartmouth,
        School::Nd,
    ];

    pub fn token(self) -> &'static str {
        match self {
            School::Ucla => "UCLA",
            School::Ucsd => "UCSD",
            School::Ucb => "UCB",
            School::Umich => "UMich",
            School::Harvard => "Harvard",
            School::Columbia => "Columbia",
            School::Dartmouth => "Dartmouth",
            School::Nd => "ND",
        }
    }

    pub fn index(self) -> usize {
        School::ALL.iter().position(|&s| s == self).unwrap()
    }

    pub fn covariates(self) -> SchoolCovariates {
        let (private, small_city, in_person) = match self {
            School::Ucla => (false, false, false),
            School::Ucsd => (false, false, true),
            School::Ucb => (false, true, false),
            School::Umich => (false, true, true),
            School::Harvard => (true, false, false),
            School::Columbia => (true, false, true),
            School::Dartmouth => (true, true, false),
            School::Nd => (true, true, true),
        };
        SchoolCovariates {
            private,
            small_city,
            in_person,
        }
    }
}

impl fmt::Display for School {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for School {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let school = match key.as_str() {
            "ucla" => School::Ucla,
            "ucsd" => School::Ucsd,
            "ucb" | "uc-berkeley" | "berkeley" => School::Ucb,
            "umich" => School::Umich,
            "harvard" => School::Harvard,
            "columbia" => School::Columbia,
            "dartmouth" => School::Dartmouth,
            "nd" | "notredame" | "notre dame" => School::Nd,
            _ => return Err(Error::UnknownStratum(format!("school {s:?}"))),
        };
        Ok(school)
    }
}

impl TryFrom<String> for School {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<School> for String {
    fn from(s: School) -> String {
        s.token().to_string()
    }
}

/// Institution-level binary covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchoolCovariates {
    pub private: bool,
    pub small_city: bool,
    /// In-person teaching during the Aug–Nov 2020 term.
    pub in_person: bool,
}

/// Collection period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Year {
    Y2019,
    Y2020,
}

impl Year {
    pub const ALL: [Year; 2] = [Year::Y2019, Year::Y2020];

    pub fn value(self) -> u16 {
        match self {
            Year::Y2019 => 2019,
            Year::Y2020 => 2020,
        }
    }
}

impl fmt::Display for Year {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl TryFrom<u16> for Year {
    type Error = Error;

    fn try_from(v: u16) -> Result<Self> {
        match v {
            2019 => Ok(Year::Y2019),
            2020 => Ok(Year::Y2020),
            _ => Err(Error::UnknownStratum(format!("year {v}"))),
        }
    }
}

impl From<Year> for u16 {
    fn from(y: Year) -> u16 {
        y.value()
    }
}

impl FromStr for Year {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: u16 = s
            .trim()
            .parse()
            .map_err(|_| Error::UnknownStratum(format!("year {s:?}")))?;
        Year::try_from(v)
    }
}

/// Binary sentiment category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SentimentLabel {
    Negative,
    NonNegative,
}

impl SentimentLabel {
    pub fn token(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "Negative",
            SentimentLabel::NonNegative => "NonNegative",
        }
    }

    /// Label implied by a probability of NonNegative and a cutoff:
    /// `p < cutoff` is Negative, otherwise NonNegative.
    pub fn from_probability(p: f64, cutoff: f64) -> Self {
        if p < cutoff {
            SentimentLabel::Negative
        } else {
            SentimentLabel::NonNegative
        }
    }

    pub fn is_negative(self) -> bool {
        self == SentimentLabel::Negative
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "negative" | "neg" => Ok(SentimentLabel::Negative),
            "nonnegative" | "nonneg" => Ok(SentimentLabel::NonNegative),
            _ => Err(Error::Invalid(format!("unknown sentiment label {s:?}"))),
        }
    }
}

/// One message node.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    /// Dense 0-based index.
    pub node_id: usize,
    /// Identifier as it appeared in the input file.
    pub original_id: u64,
    pub user_id: u64,
    pub school: School,
    pub year: Year,
    pub text: Option<String>,
    pub gold_label: Option<SentimentLabel>,
}

/// Mapping from input-file ids to dense node ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    forward: HashMap<u64, usize>,
    original: Vec<u64>,
}

impl IdMap {
    pub(crate) fn insert(&mut self, original: u64) -> Result<usize> {
        if self.forward.contains_key(&original) {
            return Err(Error::DuplicateId(original));
        }
        let dense = self.original.len();
        self.forward.insert(original, dense);
        self.original.push(original);
        Ok(dense)
    }

    pub fn get(&self, original: u64) -> Option<usize> {
        self.forward.get(&original).copied()
    }

    pub fn original(&self, dense: usize) -> Option<u64> {
        self.original.get(dense).copied()
    }

    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    /// `(original_id, node_id)` pairs in dense order.
    pub fn pairs(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.original.iter().enumerate().map(|(i, &o)| (o, i))
    }
}

/// A loaded message corpus. Immutable after loading.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub messages: Vec<Message>,
    pub id_map: IdMap,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Gold labels indexed by node id.
    pub fn gold_labels(&self) -> Vec<Option<SentimentLabel>> {
        self.messages.iter().map(|m| m.gold_label).collect()
    }
}

/// Row-major `n × d` matrix of node embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    values: Array2<f64>,
}

impl EmbeddingMatrix {
    /// Wraps an array after checking that every entry is finite.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn check_shape(&self, n: usize, d: Option<usize>) -> Result<()> {
        if self.n() != n || d.is_some_and(|d| d != self.d()) {
            return Err(Error::Shape(format!(
                "embedding matrix is {}x{}, expected {}x{}",
                self.n(),
                self.d(),
                n,
                d.map_or_else(|| "*".to_string(), |d| d.to_string())
            )));
        }
        Ok(())
    }
}

/// Three-class sentiment probabilities from the transformer baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    rows: Vec<[f64; 3]>,
}

/// Tolerance on each score row summing to one.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-4;

impl ScoreTable {
    /// Rows are `(negative, neutral, positive)`.
    pub fn new(rows: Vec<[f64; 3]>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if let Some(col) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col });
            }
            if r.iter().any(|&v| v < 0.0) {
                return Err(Error::Invalid(format!("score row {i} has a negative entry")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > SCORE_SUM_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "score row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }
}

/// Probability of NonNegative per node: neutral + positive, clamped to [0, 1].
pub fn collapse_scores(scores: &ScoreTable) -> Vec<f64> {
    scores
        .rows
        .iter()
        .map(|r| (r[1] + r[2]).clamp(0.0, 1.0))
        .collect()
}
