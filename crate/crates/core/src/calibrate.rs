//! Cutoff selection, probability rescaling and the logistic stacking
//! meta-model.
//!
//! Each base model emits a probability of NonNegative. A per-model cutoff is
//! chosen on labeled data by maximising the geometric mean of sensitivity and
//! positive predictive value (Negative is the positive class). The affine map
//! [`rescale`] then sends each model's cutoff to 0.5, and a logistic
//! regression on the two rescaled probabilities gives the stacked
//! probability. Messages with a stacked probability of at least 0.5 are
//! NonNegative.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::logistic::{fit_binomial, IrlsOptions};

/// Cutoff chosen by [`optimal_cutoff`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffResult {
    pub cutoff: f64,
    /// `sqrt(sensitivity × PPV)` achieved at `cutoff`.
    pub score: f64,
    /// Every probability was identical, so no threshold separates anything.
    pub degenerate: bool,
}

/// `sqrt(sensitivity × PPV)` for Negative-as-positive at cutoff `c`
/// (`p < c` ⇒ Negative). An undefined PPV (nothing predicted Negative)
/// scores 0.
pub fn cutoff_score(p: &[f64], labels: &[SentimentLabel], c: f64) -> f64 {
    let mut tp = 0u64;
    let mut predicted = 0u64;
    let mut positives = 0u64;
    for (&pi, &y) in p.iter().zip(labels) {
        let neg = y.is_negative();
        positives += u64::from(neg);
        if pi < c {
            predicted += 1;
            tp += u64::from(neg);
        }
    }
    score_from_counts(tp, predicted, positives)
}

fn score_from_counts(tp: u64, predicted: u64, positives: u64) -> f64 {
    if predicted == 0 || positives == 0 {
        return 0.0;
    }
    // Exact integer ratio so equal rationals compare equal.
    ((tp * tp) as f64 / (predicted * positives) as f64).sqrt()
}

/// Sweeps every distinct probability and every midpoint between adjacent
/// distinct probabilities, returning the cutoff with the highest
/// [`cutoff_score`]; ties go to the smallest cutoff.
pub fn optimal_cutoff(p: &[f64], labels: &[SentimentLabel]) -> Result<CutoffResult> {
    if p.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            p.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|y| y.is_negative()).count() as u64;
    if positives == 0 || positives as usize == labels.len() {
        return Err(Error::Invalid("cutoff search needs both classes".into()));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("non-finite probability {bad}")));
    }

    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));

    // Distinct values with the number of Negatives/all cases at each.
    let mut values: Vec<(f64, u64, u64)> = Vec::new();
    for &i in &order {
        let neg = u64::from(labels[i].is_negative());
        match values.last_mut() {
            Some(last) if last.0 == p[i] => {
                last.1 += neg;
                last.2 += 1;
            }
            _ => values.push((p[i], neg, 1)),
        }
    }

    let mut best = CutoffResult {
        cutoff: values[0].0,
        score: 0.0,
        degenerate: values.len() == 1,
    };
    // Cases strictly below the current candidate.
    let mut tp = 0u64;
    let mut predicted = 0u64;
    for (idx, &(v, neg, count)) in values.iter().enumerate() {
        // Candidate c = v: everything before index idx lies below.
        let s = score_from_counts(tp, predicted, positives);
        if s > best.score {
            best.cutoff = v;
            best.score = s;
        }
        tp += neg;
        predicted += count;
        // Midpoint to the next value: now v itself lies below.
        if let Some(&(next, _, _)) = values.get(idx + 1) {
            let s = score_from_counts(tp, predicted, positives);
            if s > best.score {
                best.cutoff = 0.5 * (v + next);
                best.score = s;
            }
        }
    }
    Ok(best)
}

/// Affine map sending cutoff `c` to 0.5 and 1 to 1. Not clamped.
pub fn rescale(p: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Invalid(format!("cutoff {c} outside (0, 1)")));
    }
    Ok(0.5 * ((p - c) / (1.0 - c)) + 0.5)
}

/// Logistic meta-model `logit p̄ = β0 + β1·p′1 + β2·p′2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel {
    pub beta: [f64; 3],
    pub se: [f64; 3],
    pub converged: bool,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
}

impl MetaModel {
    pub fn from_coefficients(beta: [f64; 3]) -> Self {
        Self {
            beta,
            se: [f64::NAN; 3],
            converged: true,
            iterations: 0,
            loglik_trace: Vec::new(),
        }
    }
}

/// Maximum-likelihood fit of the meta-model on rescaled probabilities.
pub fn fit_meta(p1: &[f64], p2: &[f64], labels: &[SentimentLabel]) -> Result<MetaModel> {
    if p1.len() != labels.len() || p2.len() != labels.len() {
        return Err(Error::Shape("meta-model inputs are not aligned".into()));
    }
    let n = labels.len();
    if !labels.iter().any(|y| y.is_negative()) || labels.iter().all(|y| y.is_negative()) {
        return Err(Error::Invalid("meta-model needs both classes".into()));
    }
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => p1[i],
        _ => p2[i],
    });
    let k: Vec<f64> = labels
        .iter()
        .map(|y| if y.is_negative() { 0.0 } else { 1.0 })
        .collect();
    let fit = fit_binomial(&x, &k, &vec![1.0; n], &IrlsOptions::default())?;
    Ok(MetaModel {
        beta: [fit.beta[0], fit.beta[1], fit.beta[2]],
        se: [fit.se[0], fit.se[1], fit.se[2]],
        converged: fit.converged,
        iterations: fit.iterations,
        loglik_trace: fit.loglik_trace,
    })
}

/// Stacked probability of NonNegative, strictly inside (0, 1).
pub fn predict_meta(m: &MetaModel, p1: f64, p2: f64) -> f64 {
    let eta = m.beta[0] + m.beta[1] * p1 + m.beta[2] * p2;
    let p = if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Per-message output of the stacking stage. Index 0 is the transformer
/// baseline, index 1 the GAT.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub node_id: usize,
    pub p_raw: [f64; 2],
    pub p_scaled: [f64; 2],
    pub p_bar: f64,
    pub label: SentimentLabel,
}

/// Applies the final 0.5 rule: `p̄ ≥ 0.5` is NonNegative.
pub fn stack_labels(records: &mut [PredictionRecord]) {
    for r in records {
        r.label = SentimentLabel::from_probability(r.p_bar, 0.5);
    }
}

/// Cutoffs and meta-model coefficients, everything needed to label new data.
#[derive(Debug, Clone, PartialEq)]
pub struct StackModel {
    pub cutoffs: [f64; 2],
    pub meta: MetaModel,
    pub seed: u64,
}

impl StackModel {
    /// Rescales, stacks and labels one message.
    pub fn record(&self, node_id: usize, p_raw: [f64; 2]) -> Result<PredictionRecord> {
        let p_scaled = [
            rescale(p_raw[0], self.cutoffs[0])?,
            rescale(p_raw[1], self.cutoffs[1])?,
        ];
        let p_bar = predict_meta(&self.meta, p_scaled[0], p_scaled[1]);
        Ok(PredictionRecord {
            node_id,
            p_raw,
            p_scaled,
            p_bar,
            label: SentimentLabel::from_probability(p_bar, 0.5),
        })
    }

    /// `key = value` text with beta0..2, cutoff_1, cutoff_2 and the seed.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "beta0 = {}", self.meta.beta[0]).unwrap();
        writeln!(s, "beta1 = {}", self.meta.beta[1]).unwrap();
        writeln!(s, "beta2 = {}", self.meta.beta[2]).unwrap();
        writeln!(s, "cutoff_1 = {}", self.cutoffs[0]).unwrap();
        writeln!(s, "cutoff_2 = {}", self.cutoffs[1]).unwrap();
        writeln!(s, "se_beta0 = {}", self.meta.se[0]).unwrap();
        writeln!(s, "se_beta1 = {}", self.meta.se[1]).unwrap();
        writeln!(s, "se_beta2 = {}", self.meta.se[2]).unwrap();
        writeln!(s, "converged = {}", self.meta.converged).unwrap();
        writeln!(s, "iterations = {}", self.meta.iterations).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("meta-model line {}: expected key = value", i + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<f64> {
            kv.get(key)
                .ok_or_else(|| Error::Invalid(format!("meta-model file lacks {key}")))?
                .parse()
                .map_err(|_| Error::Invalid(format!("meta-model {key} is not a number")))
        };
        let opt = |key: &str| num(key).unwrap_or(f64::NAN);
        Ok(Self {
            cutoffs: [num("cutoff_1")?, num("cutoff_2")?],
            meta: MetaModel {
                beta: [num("beta0")?, num("beta1")?, num("beta2")?],
                se: [opt("se_beta0"), opt("se_beta1"), opt("se_beta2")],
                converged: kv.get("converged").is_none_or(|v| v == "true"),
                iterations: kv.get("iterations").and_then(|v| v.parse().ok()).unwrap_or(0),
                loglik_trace: Vec::new(),
            },
            seed: kv.get("seed").and_then(|v| v.parse().ok()).unwrap_or(0),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

const PREDICTION_HEADER: &str = "node_id,p_raw_1,p_raw_2,p_scaled_1,p_scaled_2,p_bar,label";

/// Writes one CSV row per record. Floats use the shortest representation
/// that reads back exactly.
pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(64 * (records.len() + 1));
    writeln!(s, "{PREDICTION_HEADER}").unwrap();
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.node_id, r.p_raw[0], r.p_raw[1], r.p_scaled[0], r.p_scaled[1], r.p_bar, r.label
        )
        .unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PREDICTION_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header {PREDICTION_HEADER}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::parse(path, i + 1, m);
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 columns, found {}", f.len())));
        }
        let num = |j: usize| -> Result<f64> {
            f[j].parse().map_err(|_| bad(format!("not a number: {:?}", f[j])))
        };
        out.push(PredictionRecord {
            node_id: f[0].parse().map_err(|_| bad(format!("not a node id: {:?}", f[0])))?,
            p_raw: [num(1)?, num(2)?],
            p_scaled: [num(3)?, num(4)?],
            p_bar: num(5)?,
            label: f[6].parse().map_err(|e: Error| bad(e.to_string()))?,
        });
    }
    Ok(out)
}
