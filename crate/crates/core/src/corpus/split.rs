use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, School, SentimentLabel, Year};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Per-class case counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    #[serde(default)]
    pub negative: usize,
    #[serde(default)]
    pub non_negative: usize,
}

impl ClassCounts {
    pub const fn new(negative: usize, non_negative: usize) -> Self {
        Self {
            negative,
            non_negative,
        }
    }

    pub fn get(&self, label: SentimentLabel) -> usize {
        match label {
            SentimentLabel::Negative => self.negative,
            SentimentLabel::NonNegative => self.non_negative,
        }
    }

    pub fn total(&self) -> usize {
        self.negative + self.non_negative
    }
}

/// How many labeled cases of one school-year go into each set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumQuota {
    pub school: School,
    pub year: Year,
    #[serde(default)]
    pub gat_train: ClassCounts,
    #[serde(default)]
    pub test: ClassCounts,
    #[serde(default)]
    pub stack_train: ClassCounts,
}

/// Sampling plan for the GAT training, stacking training and test sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub strata: Vec<StratumQuota>,
}

impl SplitSpec {
    /// The reference design: the GAT is trained on Dartmouth only (every labeled
    /// 2020 case plus part of 2019, 601 NonNegative and 94 Negative in total);
    /// test and stacking sets each take 25 + 25 cases from the remaining
    /// Dartmouth 2019 pool and from each of the other 14 school-years.
    pub fn reference_design(seed: u64) -> Self {
        let per_cell = ClassCounts::new(25, 25);
        let mut strata = Vec::new();
        for school in School::ALL {
            for year in Year::ALL {
                let quota = match (school, year) {
                    (School::Dartmouth, Year::Y2020) => StratumQuota {
                        school,
                        year,
                        gat_train: ClassCounts::new(66, 327),
                        test: ClassCounts::default(),
                        stack_train: ClassCounts::default(),
                    },
                    (School::Dartmouth, Year::Y2019) => StratumQuota {
                        school,
                        year,
                        gat_train: ClassCounts::new(28, 274),
                        test: per_cell,
                        stack_train: per_cell,
                    },
                    _ => StratumQuota {
                        school,
                        year,
                        gat_train: ClassCounts::default(),
                        test: per_cell,
                        stack_train: per_cell,
                    },
                };
                strata.push(quota);
            }
        }
        Self { seed, strata }
    }

    /// Quotas keyed by stratum; duplicate entries are rejected.
    fn quotas(&self) -> Result<BTreeMap<(School, Year), &StratumQuota>> {
        let mut map = BTreeMap::new();
        for q in &self.strata {
            if map.insert((q.school, q.year), q).is_some() {
                return Err(Error::Invalid(format!(
                    "split spec lists {} {} twice",
                    q.school, q.year
                )));
            }
        }
        Ok(map)
    }
}

/// Which set a node was drawn into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitSet {
    GatTrain,
    StackTrain,
    Test,
}

impl SplitSet {
    pub fn token(self) -> &'static str {
        match self {
            SplitSet::GatTrain => "gat_train",
            SplitSet::StackTrain => "stack_train",
            SplitSet::Test => "test",
        }
    }
}

/// Node ids of each set, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub gat_train: Vec<usize>,
    pub stack_train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Per-node set membership for a corpus of `n` nodes.
    pub fn assignment(&self, n: usize) -> Vec<Option<SplitSet>> {
        let mut out = vec![None; n];
        for (set, ids) in [
            (SplitSet::GatTrain, &self.gat_train),
            (SplitSet::StackTrain, &self.stack_train),
            (SplitSet::Test, &self.test),
        ] {
            for &i in ids {
                out[i] = Some(set);
            }
        }
        out
    }
}

/// Draws the three sets by stratified sampling without replacement.
///
/// Strata are visited in canonical order (schools as in [`School::ALL`],
/// 2019 before 2020) and, within a stratum, Negative before NonNegative.
/// For every (stratum, class) with a non-zero quota the labeled node ids are
/// sorted ascending, shuffled with [`SplitMix64::shuffle`] on a single stream
/// seeded with `spec.seed`, and consumed in order: first the GAT quota, then
/// the test quota, then the stacking quota.
pub fn make_splits(corpus: &Corpus, spec: &SplitSpec) -> Result<Splits> {
    let quotas = spec.quotas()?;
    let mut pools: BTreeMap<(School, Year, SentimentLabel), Vec<usize>> = BTreeMap::new();
    for m in &corpus.messages {
        if let Some(label) = m.gold_label {
            pools
                .entry((m.school, m.year, label))
                .or_default()
                .push(m.node_id);
        }
    }

    let mut rng = SplitMix64::new(spec.seed);
    let mut splits = Splits::default();
    for school in School::ALL {
        for year in Year::ALL {
            let Some(q) = quotas.get(&(school, year)) else {
                continue;
            };
            for label in [SentimentLabel::Negative, SentimentLabel::NonNegative] {
                let counts = [
                    q.gat_train.get(label),
                    q.test.get(label),
                    q.stack_train.get(label),
                ];
                let needed: usize = counts.iter().sum();
                if needed == 0 {
                    continue;
                }
                let mut pool = pools.remove(&(school, year, label)).unwrap_or_default();
                if pool.len() < needed {
                    return Err(Error::InsufficientLabels {
                        stratum: format!("{school} {year} {label}"),
                        needed,
                        available: pool.len(),
                    });
                }
                pool.sort_unstable();
                rng.shuffle(&mut pool);
                let mut drawn = pool.into_iter();
                splits.gat_train.extend(drawn.by_ref().take(counts[0]));
                splits.test.extend(drawn.by_ref().take(counts[1]));
                splits.stack_train.extend(drawn.by_ref().take(counts[2]));
            }
        }
    }
    splits.gat_train.sort_unstable();
    splits.test.sort_unstable();
    splits.stack_train.sort_unstable();
    Ok(splits)
}
