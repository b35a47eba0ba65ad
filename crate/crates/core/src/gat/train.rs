use log::{debug, info, warn};

use super::{gradients, predict, GatConfig, GatParams};
use crate::calibrate::optimal_cutoff;
use crate::corpus::{EmbeddingMatrix, SentimentLabel};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::SplitMix64;

/// Adam with bias-corrected moments over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(learning_rate: f64, len: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: GatParams,
    /// Loss at the start of each epoch, before that epoch's update.
    pub loss_trace: Vec<f64>,
}

/// Full-batch Adam from a seeded Glorot initialisation.
pub fn train(
    graph: &Graph,
    h: &EmbeddingMatrix,
    labels: &[(usize, SentimentLabel)],
    config: &GatConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if labels.is_empty() {
        return Err(Error::Invalid("no labeled training nodes".into()));
    }
    let mut params = GatParams::init(h.d(), config);
    let mut flat = params.to_flat();
    let mut adam = Adam::new(config.learning_rate, flat.len());
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let (value, grad) = gradients(graph, h, &params, labels, config)?;
        if !value.is_finite() {
            return Err(Error::Diverged { epoch, loss: value });
        }
        trace.push(value);
        if epoch % 25 == 0 {
            debug!("epoch {epoch}: loss {value:.6}");
        }
        adam.step(&mut flat, &grad.to_flat());
        params.assign_flat(&flat);
    }
    if !params.is_finite() {
        return Err(Error::Diverged {
            epoch: config.epochs,
            loss: f64::NAN,
        });
    }
    info!(
        "trained GAT for {} epochs, final loss {:.6}",
        config.epochs,
        trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
    })
}

/// Validation scores of one grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct CvScore {
    pub lambda: f64,
    /// Per-fold score; `-inf` when training on that fold failed.
    pub folds: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best_lambda: f64,
    pub scores: Vec<CvScore>,
}

/// Stratified fold assignment: each class's nodes (in the given order) are
/// shuffled and dealt round-robin.
fn assign_folds(labels: &[(usize, SentimentLabel)], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::derive(seed, 0x2);
    let mut fold_of = vec![0; labels.len()];
    for class in [SentimentLabel::Negative, SentimentLabel::NonNegative] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].1 == class).collect();
        rng.shuffle(&mut idx);
        for (k, i) in idx.into_iter().enumerate() {
            fold_of[i] = k % folds;
        }
    }
    fold_of
}

/// Picks the ℓ2 weight maximising the mean validation score across folds.
///
/// The validation score of a fold is the best geometric mean of sensitivity
/// and positive predictive value over cutoffs (see
/// [`crate::calibrate::optimal_cutoff`]). A grid value whose training
/// diverges on any fold scores `-inf`. Ties go to the larger λ.
pub fn cross_validate_lambda(
    graph: &Graph,
    h: &EmbeddingMatrix,
    labels: &[(usize, SentimentLabel)],
    grid: &[f64],
    folds: usize,
    config: &GatConfig,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty lambda grid".into()));
    }
    if folds < 2 {
        return Err(Error::Invalid("need at least two folds".into()));
    }
    let fold_of = assign_folds(labels, folds, config.seed);
    for f in 0..folds {
        let classes: Vec<_> = labels
            .iter()
            .zip(&fold_of)
            .filter(|(_, &k)| k == f)
            .map(|(&(_, y), _)| y)
            .collect();
        if !classes.contains(&SentimentLabel::Negative) || !classes.contains(&SentimentLabel::NonNegative) {
            return Err(Error::Invalid(format!(
                "cross-validation fold {f} does not contain both classes"
            )));
        }
    }

    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let cfg = GatConfig {
            lambda,
            ..config.clone()
        };
        let mut fold_scores = Vec::with_capacity(folds);
        for f in 0..folds {
            let (train_set, valid): (Vec<_>, Vec<_>) = labels
                .iter()
                .zip(&fold_of)
                .partition(|(_, &k)| k != f);
            let train_set: Vec<_> = train_set.into_iter().map(|(&l, _)| l).collect();
            let score = match train(graph, h, &train_set, &cfg) {
                Ok(outcome) => {
                    let p = predict(graph, h, &outcome.params)?;
                    let vp: Vec<f64> = valid.iter().map(|(&(i, _), _)| p[i]).collect();
                    let vy: Vec<_> = valid.iter().map(|(&(_, y), _)| y).collect();
                    optimal_cutoff(&vp, &vy)?.score
                }
                Err(e @ Error::Diverged { .. }) => {
                    warn!("lambda {lambda}, fold {f}: {e}");
                    f64::NEG_INFINITY
                }
                Err(e) => return Err(e),
            };
            fold_scores.push(score);
        }
        let mean = if fold_scores.iter().any(|s| !s.is_finite()) {
            f64::NEG_INFINITY
        } else {
            fold_scores.iter().sum::<f64>() / folds as f64
        };
        info!("lambda {lambda}: mean validation score {mean:.4}");
        scores.push(CvScore {
            lambda,
            folds: fold_scores,
            mean,
        });
    }

    let best = scores
        .iter()
        .filter(|s| s.mean.is_finite())
        .max_by(|a, b| {
            a.mean
                .partial_cmp(&b.mean)
                .unwrap()
                .then(a.lambda.partial_cmp(&b.lambda).unwrap())
        })
        .ok_or_else(|| Error::Diverged {
            epoch: config.epochs,
            loss: f64::NAN,
        })?;
    Ok(CvOutcome {
        best_lambda: best.lambda,
        scores,
    })
}
