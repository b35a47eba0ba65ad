//! Binomial logistic regression by iteratively reweighted least squares.
//!
//! Used by the stacking meta-model (one trial per row) and as the pooled
//! reference fit for the mixed model with the random effect switched off.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct IrlsOptions {
    /// Converged once every score component is below this in magnitude.
    pub score_tolerance: f64,
    pub max_iterations: usize,
    /// Linear-predictor magnitude past which steady growth is read as
    /// separation.
    pub separation_bound: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            score_tolerance: 1e-8,
            max_iterations: 100,
            separation_bound: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub beta: Vec<f64>,
    /// Standard errors from the inverse Fisher information at the estimate.
    pub se: Vec<f64>,
    /// Binomial log-likelihood without the `log C(n, k)` constant.
    pub loglik: f64,
    /// Log-likelihood at the start point and after each accepted step.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `k log p + (n − k) log(1 − p)` with `p = logistic(η)`, accurate in both
/// tails.
pub(crate) fn binomial_kernel(k: f64, n: f64, eta: f64) -> f64 {
    let mut v = 0.0;
    if k > 0.0 {
        v -= k * log1p_exp(-eta);
    }
    if n > k {
        v -= (n - k) * log1p_exp(eta);
    }
    v
}

/// `Σ k η − n log(1 + e^η)`.
pub fn binomial_loglik(x: &DMatrix<f64>, k: &[f64], n: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(k.iter().zip(n))
        .map(|(&e, (&k, &n))| binomial_kernel(k, n, e))
        .sum()
}

/// Fits `logit P(success) = X β` to `k` successes out of `n` trials per row.
pub fn fit_binomial(x: &DMatrix<f64>, k: &[f64], n: &[f64], opts: &IrlsOptions) -> Result<LogisticFit> {
    let rows = x.nrows();
    let p = x.ncols();
    if k.len() != rows || n.len() != rows {
        return Err(Error::Shape(format!(
            "design has {rows} rows but {} successes and {} trials",
            k.len(),
            n.len()
        )));
    }
    if rows == 0 {
        return Err(Error::Invalid("logistic regression on zero rows".into()));
    }
    for (&ki, &ni) in k.iter().zip(n) {
        if !(ki >= 0.0 && ki <= ni) {
            return Err(Error::Invalid(format!("need 0 <= k <= n, got k={ki}, n={ni}")));
        }
    }

    let mut beta = DVector::zeros(p);
    let mut ll = binomial_loglik(x, k, n, &beta);
    let mut trace = vec![ll];
    let mut growth_streak = 0usize;
    let mut last_max = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let eta = x * &beta;
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(rows, (0..rows).map(|i| k[i] - n[i] * mu[i]));
        let score = x.transpose() * &resid;
        let w = DVector::from_iterator(rows, (0..rows).map(|i| n[i] * mu[i] * (1.0 - mu[i])));
        let info = information(x, &w);
        let step = info
            .cholesky()
            .ok_or_else(|| Error::Singular("logistic information matrix".into()))?
            .solve(&score);
        // Under separation the score vanishes while Newton steps stay O(1),
        // so a small score alone is not enough.
        if score.amax() < opts.score_tolerance && step.amax() < opts.score_tolerance.sqrt() {
            converged = true;
            // Polish with the final Newton step.
            let cand = &beta + &step;
            let cand_ll = binomial_loglik(x, k, n, &cand);
            if cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
            }
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }

        // Step-halving keeps the log-likelihood non-decreasing.
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            let cand_ll = binomial_loglik(x, k, n, &cand);
            if cand_ll.is_finite() && cand_ll >= ll {
                accepted = Some((cand, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        let Some((cand, cand_ll)) = accepted else {
            // No ascent direction left at machine precision.
            converged = score.amax() < opts.score_tolerance.sqrt();
            break;
        };
        beta = cand;
        ll = cand_ll;
        trace.push(ll);

        // Judged on the fitted logits, so rescaling a covariate does not
        // change the verdict.
        let max = (x * &beta).amax();
        if max > last_max {
            growth_streak += 1;
        } else {
            growth_streak = 0;
        }
        last_max = max;
        if max > opts.separation_bound && growth_streak >= 3 {
            return Err(Error::Separation(format!(
                "fitted logit magnitude {max:.1} still growing after {iterations} iterations"
            )));
        }
    }

    let eta = x * &beta;
    let w = DVector::from_iterator(rows, (0..rows).map(|i| {
        let m = sigmoid(eta[i]);
        n[i] * m * (1.0 - m)
    }));
    let cov = information(x, &w)
        .try_inverse()
        .ok_or_else(|| Error::Singular("logistic information matrix".into()))?;
    let se = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();

    Ok(LogisticFit {
        beta: beta.iter().copied().collect(),
        se,
        loglik: ll,
        loglik_trace: trace,
        iterations,
        converged,
    })
}

fn information(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    x.transpose() * xw
}
