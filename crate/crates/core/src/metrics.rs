//! Binary classification metrics and inter-rater agreement.
//!
//! Negative sentiment is the positive class throughout: `tp` counts gold
//! Negative messages predicted Negative.

use serde::Serialize;

use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Gold Negative count.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Gold NonNegative count.
    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    /// The same table with NonNegative treated as the positive class.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

pub fn confusion(gold: &[SentimentLabel], pred: &[SentimentLabel]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Invalid("confusion matrix of zero messages".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(pred) {
        match (g.is_negative(), p.is_negative()) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Metrics of one confusion matrix. `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSuite {
    /// Correct assignment rate (accuracy).
    pub car: Option<f64>,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    /// Negative predictive value, i.e. precision of the NonNegative class.
    pub npv: Option<f64>,
}

pub fn metric_suite(cm: &ConfusionMatrix) -> MetricSuite {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    MetricSuite {
        car: ratio(cm.tp + cm.tn, cm.total()),
        f1,
        precision,
        recall,
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        npv: ratio(cm.tn, cm.tn + cm.fn_),
    }
}

/// Unweighted mean of each metric over the given suites, skipping undefined
/// entries. A metric undefined everywhere stays undefined.
pub fn mean_suite(suites: &[MetricSuite]) -> MetricSuite {
    let mean = |f: fn(&MetricSuite) -> Option<f64>| {
        let vals: Vec<f64> = suites.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    MetricSuite {
        car: mean(|s| s.car),
        f1: mean(|s| s.f1),
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        specificity: mean(|s| s.specificity),
        npv: mean(|s| s.npv),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub p_o: f64,
    pub p_e: f64,
    /// `None` when chance agreement is 1.
    pub kappa: Option<f64>,
}

/// Observed agreement and Cohen's kappa between two raters.
pub fn agreement_and_kappa(a: &[SentimentLabel], b: &[SentimentLabel]) -> Result<Agreement> {
    let cm = confusion(a, b)?;
    let n = cm.total() as f64;
    let p_o = (cm.tp + cm.tn) as f64 / n;
    let a_neg = cm.positives() as f64 / n;
    let b_neg = (cm.tp + cm.fp) as f64 / n;
    let p_e = a_neg * b_neg + (1.0 - a_neg) * (1.0 - b_neg);
    let kappa = (p_e < 1.0).then(|| (p_o - p_e) / (1.0 - p_e));
    Ok(Agreement { p_o, p_e, kappa })
}
