use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use super::likelihood::GlmmData;
use super::quadrature::gauss_hermite;
use super::{Covariate, GlmmRow};
use crate::error::{Error, Result};
use crate::logistic::{fit_binomial, IrlsOptions};

/// Random-effect sd below which a fit is reported on the boundary.
const BOUNDARY_SIGMA: f64 = 1e-4;
/// Lower wall on `log σ` during optimisation.
const TAU_MIN: f64 = -12.0;
const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Method {
    Laplace,
    /// Adaptive Gauss–Hermite with this many nodes.
    Agq(usize),
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Laplace => f.write_str("laplace"),
            Method::Agq(m) => write!(f, "agq({m})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmmOptions {
    /// 1 for the Laplace approximation, more for adaptive Gauss–Hermite.
    pub quad_nodes: usize,
    /// Hold σ at this value instead of estimating it.
    pub fixed_sigma: Option<f64>,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GlmmOptions {
    fn default() -> Self {
        Self {
            quad_nodes: 1,
            fixed_sigma: None,
            gradient_tolerance: 1e-6,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmmFit {
    /// Fixed-effect names, intercept first.
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// Random-intercept standard deviation.
    pub sigma: f64,
    /// Delta-method SE of σ; `None` on the boundary or when σ was fixed.
    pub se_sigma: Option<f64>,
    pub loglik: f64,
    pub method: Method,
    /// σ̂ collapsed to zero; the fit is the pooled logistic regression.
    pub boundary: bool,
    pub iterations: usize,
    pub converged: bool,
}

struct Objective<'a> {
    data: &'a GlmmData,
    rule: (Vec<f64>, Vec<f64>),
    /// `None`: θ carries log σ last. `Some(σ)`: θ is β only.
    fixed_sigma: Option<f64>,
}

impl Objective<'_> {
    /// Negative log-likelihood and its gradient; `None` outside the domain.
    fn value_grad(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let p = self.data.num_fixed();
        let res = match self.fixed_sigma {
            Some(s) if s == 0.0 => Ok(self.data.eval_fixed(theta, true)),
            Some(s) => self
                .data
                .eval(theta, s.ln(), &self.rule, true)
                .map(|(ll, mut g)| {
                    g.truncate(p);
                    (ll, g)
                }),
            None => {
                if theta[p] < TAU_MIN {
                    return None;
                }
                self.data.eval(&theta[..p], theta[p], &self.rule, true)
            }
        };
        match res {
            Ok((ll, g)) if ll.is_finite() && g.iter().all(|v| v.is_finite()) => {
                Some((-ll, g.into_iter().map(|v| -v).collect()))
            }
            _ => None,
        }
    }
}

struct BfgsResult {
    theta: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn bfgs(obj: &Objective, start: Vec<f64>, opts: &GlmmOptions, beta_len: usize) -> Result<BfgsResult> {
    let dim = start.len();
    let mut theta = DVector::from_vec(start);
    let (mut f, g0) = obj
        .value_grad(theta.as_slice())
        .ok_or_else(|| Error::Invalid("mixed-model start point is not finite".into()))?;
    let mut g = DVector::from_vec(g0);
    let mut inv_h = DMatrix::<f64>::identity(dim, dim);
    let mut first = true;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if g.amax() < opts.gradient_tolerance {
            return Ok(BfgsResult {
                theta: theta.as_slice().to_vec(),
                value: f,
                grad: g.as_slice().to_vec(),
                iterations,
                converged: true,
            });
        }
        iterations += 1;
        let mut dir = -(&inv_h * &g);
        if dir.dot(&g) >= 0.0 {
            inv_h = DMatrix::identity(dim, dim);
            dir = -g.clone();
        }
        if first {
            // Unit-free first step: move at most 0.1 in any coordinate.
            let m = dir.amax();
            if m > 0.1 {
                dir *= 0.1 / m;
            }
        }

        let slope = dir.dot(&g);
        let noise = 1e-13 * f.abs().max(1.0);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &theta + &dir * alpha;
            if let Some((fc, gc)) = obj.value_grad(cand.as_slice()) {
                let armijo = fc <= f + 1e-4 * alpha * slope;
                // Near the optimum f stops resolving progress; fall back on
                // the gradient getting smaller.
                let flat = fc <= f + noise && max_abs(&gc) < g.amax();
                if armijo || flat {
                    accepted = Some((cand, fc, DVector::from_vec(gc)));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            let converged = g.amax() < opts.gradient_tolerance.sqrt();
            if !converged {
                return Err(Error::NoConvergence {
                    what: format!("mixed-model line search stalled with gradient {:.3e}", g.amax()),
                    iterations,
                });
            }
            warn!("line search stalled at gradient {:.3e}; accepting", g.amax());
            return Ok(BfgsResult {
                theta: theta.as_slice().to_vec(),
                value: f,
                grad: g.as_slice().to_vec(),
                iterations,
                converged,
            });
        };

        let s = &cand - &theta;
        let y = &gc - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                inv_h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(dim, dim);
            let a = &i - &s * y.transpose() * rho;
            let b = &i - &y * s.transpose() * rho;
            inv_h = &a * &inv_h * &b + &s * s.transpose() * rho;
            first = false;
        }
        theta = cand;
        f = fc;
        g = gc;

        let big = max_abs(&theta.as_slice()[..beta_len]);
        if big > SEPARATION_BOUND {
            return Err(Error::Separation(format!(
                "fixed effect magnitude {big:.1} in the mixed model"
            )));
        }
        if iterations % 20 == 0 {
            debug!("bfgs iteration {iterations}: -loglik {f:.6}, gradient {:.3e}", g.amax());
        }
    }
    Err(Error::NoConvergence {
        what: "mixed-model quasi-Newton".into(),
        iterations,
    })
}

/// Central-difference Hessian of the negative log-likelihood from analytic
/// gradients.
fn hessian(obj: &Objective, theta: &[f64]) -> Option<DMatrix<f64>> {
    let d = theta.len();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-5 * theta[j].abs().max(1.0);
        let mut a = theta.to_vec();
        let mut b = theta.to_vec();
        a[j] += step;
        b[j] -= step;
        let (_, ga) = obj.value_grad(&a)?;
        let (_, gb) = obj.value_grad(&b)?;
        for i in 0..d {
            h[(i, j)] = (ga[i] - gb[i]) / (2.0 * step);
        }
    }
    Some((&h + h.transpose()) * 0.5)
}

fn check_rank(data: &GlmmData) -> Result<()> {
    let (x, _, _) = data.pooled();
    let p = data.num_fixed();
    let m = DMatrix::from_fn(x.len(), p, |i, j| x[i][j]);
    let sv = m.singular_values();
    let max = sv.max();
    if sv.min() <= 1e-10 * max {
        return Err(Error::Singular("fixed-effect design is rank deficient".into()));
    }
    Ok(())
}

fn pooled_start(data: &GlmmData) -> Result<Vec<f64>> {
    let (x, k, n) = data.pooled();
    let m = DMatrix::from_fn(x.len(), data.num_fixed(), |i, j| x[i][j]);
    Ok(fit_binomial(&m, &k, &n, &IrlsOptions::default())?.beta)
}

/// Maximum marginal likelihood fit of the random-intercept logit model for
/// the selected covariates (an intercept is always included).
pub fn fit_glmm(rows: &[GlmmRow], covariates: &[Covariate], opts: &GlmmOptions) -> Result<GlmmFit> {
    let data = GlmmData::new(rows, covariates)?;
    if opts.quad_nodes == 0 {
        return Err(Error::Invalid("quad_nodes must be at least 1".into()));
    }
    if data.num_groups() < 2 && opts.fixed_sigma.is_none() {
        return Err(Error::Invalid(format!(
            "random intercept needs at least two groups, got {}",
            data.num_groups()
        )));
    }
    if let Some(s) = opts.fixed_sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Invalid(format!("fixed sigma {s} must be finite and non-negative")));
        }
    }
    check_rank(&data)?;
    let method = if opts.quad_nodes == 1 {
        Method::Laplace
    } else {
        Method::Agq(opts.quad_nodes)
    };
    let rule = gauss_hermite(opts.quad_nodes)?;
    let p = data.num_fixed();
    let beta0 = pooled_start(&data)?;

    let pooled_fit = |iters: usize| -> Result<(BfgsResult, Objective)> {
        let obj = Objective {
            data: &data,
            rule: rule.clone(),
            fixed_sigma: Some(0.0),
        };
        let mut r = bfgs(&obj, beta0.clone(), opts, p)?;
        r.iterations += iters;
        Ok((r, obj))
    };

    let (result, obj, sigma, boundary) = match opts.fixed_sigma {
        Some(s) => {
            let obj = Objective {
                data: &data,
                rule: rule.clone(),
                fixed_sigma: Some(s),
            };
            (bfgs(&obj, beta0.clone(), opts, p)?, obj, s, false)
        }
        None if data.variance_score(&beta0) <= 0.0 => {
            // The likelihood decreases in σ² at the origin: boundary optimum.
            let (r, o) = pooled_fit(0)?;
            (r, o, 0.0, true)
        }
        None => {
            let obj = Objective {
                data: &data,
                rule: rule.clone(),
                fixed_sigma: None,
            };
            let mut start = beta0.clone();
            start.push(0.1f64.ln());
            let r = bfgs(&obj, start, opts, p)?;
            let sigma = r.theta[p].exp();
            if sigma < BOUNDARY_SIGMA {
                let (r, o) = pooled_fit(r.iterations)?;
                (r, o, 0.0, true)
            } else {
                (r, obj, sigma, false)
            }
        }
    };

    let dim = result.theta.len();
    let (se_all, ok) = match hessian(&obj, &result.theta).and_then(|h| h.try_inverse()) {
        Some(cov) => {
            let se: Vec<f64> = (0..dim).map(|j| cov[(j, j)]).collect();
            let ok = se.iter().all(|v| *v > 0.0);
            (se.into_iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>(), ok)
        }
        None => (vec![f64::NAN; dim], false),
    };
    if !ok {
        warn!("observed information is not positive definite; standard errors unreliable");
    }
    debug!(
        "mixed model: {} iterations, gradient {:.3e}",
        result.iterations,
        max_abs(&result.grad)
    );
    let se_sigma = (opts.fixed_sigma.is_none() && !boundary).then(|| sigma * se_all[p]);

    Ok(GlmmFit {
        names: data.names().to_vec(),
        beta: result.theta[..p].to_vec(),
        se: se_all[..p].to_vec(),
        sigma,
        se_sigma,
        loglik: -result.value,
        method,
        boundary,
        iterations: result.iterations,
        converged: result.converged,
    })
}

/// Likelihood-ratio test of dropping one covariate, as a diagnostic beside
/// the reported Wald tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodRatio {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn likelihood_ratio_test(
    rows: &[GlmmRow],
    covariates: &[Covariate],
    drop: Covariate,
    opts: &GlmmOptions,
) -> Result<LikelihoodRatio> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if !covariates.contains(&drop) {
        return Err(Error::Invalid(format!("{} is not in the model", drop.name())));
    }
    let full = fit_glmm(rows, covariates, opts)?;
    let reduced: Vec<Covariate> = covariates.iter().copied().filter(|&c| c != drop).collect();
    let small = fit_glmm(rows, &reduced, opts)?;
    let statistic = (2.0 * (full.loglik - small.loglik)).max(0.0);
    let chi = ChiSquared::new(1.0).expect("valid degrees of freedom");
    Ok(LikelihoodRatio {
        statistic,
        df: 1,
        p_value: chi.sf(statistic),
    })
}
