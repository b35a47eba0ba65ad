//! Marginal log-likelihood of the random-intercept logit model and its
//! gradient with respect to `(β, log σ)`.

use std::collections::BTreeMap;

use super::quadrature::gauss_hermite;
use super::{Covariate, GlmmRow};
use crate::error::{Error, Result};
use crate::logistic::{binomial_kernel, sigmoid as logistic};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn ln_choose(n: f64, k: f64) -> f64 {
    statrs::function::factorial::ln_binomial(n as u64, k as u64)
}

#[derive(Debug, Clone)]
struct Group {
    x: Vec<Vec<f64>>,
    k: Vec<f64>,
    n: Vec<f64>,
    ln_choose: f64,
}

/// Rows grouped by school with the design matrix for a covariate selection
/// (intercept first).
#[derive(Debug, Clone)]
pub struct GlmmData {
    groups: Vec<Group>,
    names: Vec<String>,
    p: usize,
}

impl GlmmData {
    pub fn new(rows: &[GlmmRow], covariates: &[Covariate]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Invalid("mixed model on zero rows".into()));
        }
        let mut by_school: BTreeMap<&str, Group> = BTreeMap::new();
        for r in rows {
            r.validate()?;
            let g = by_school.entry(r.school.as_str()).or_insert_with(|| Group {
                x: Vec::new(),
                k: Vec::new(),
                n: Vec::new(),
                ln_choose: 0.0,
            });
            let mut x = vec![1.0];
            x.extend(covariates.iter().map(|c| c.value(r)));
            g.x.push(x);
            g.k.push(r.k as f64);
            g.n.push(r.n as f64);
            g.ln_choose += ln_choose(r.n as f64, r.k as f64);
        }
        let mut names = vec!["(Intercept)".to_string()];
        names.extend(covariates.iter().map(|c| c.name().to_string()));
        Ok(Self {
            groups: by_school.into_values().collect(),
            names,
            p: covariates.len() + 1,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_fixed(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Stacked design, successes and trials of every row.
    pub(crate) fn pooled(&self) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let mut x = Vec::new();
        let mut k = Vec::new();
        let mut n = Vec::new();
        for g in &self.groups {
            x.extend(g.x.iter().cloned());
            k.extend(&g.k);
            n.extend(&g.n);
        }
        (x, k, n)
    }

    /// Marginal log-likelihood including the binomial coefficients.
    /// `quad_nodes = 1` is the Laplace approximation.
    pub fn marginal_loglik(&self, beta: &[f64], sigma: f64, quad_nodes: usize) -> Result<f64> {
        if !(sigma >= 0.0) {
            return Err(Error::Invalid(format!("random-effect sd {sigma} is negative")));
        }
        let rule = gauss_hermite(quad_nodes)?;
        if sigma == 0.0 {
            return Ok(self.eval_fixed(beta, false).0);
        }
        Ok(self.eval(beta, sigma.ln(), &rule, false)?.0)
    }

    /// Pooled logistic log-likelihood (σ = 0) and its β-gradient.
    pub(crate) fn eval_fixed(&self, beta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let mut ll = 0.0;
        let mut grad = vec![0.0; if want_grad { self.p } else { 0 }];
        for g in &self.groups {
            ll += g.ln_choose;
            for (r, x) in g.x.iter().enumerate() {
                let eta = dot(x, beta);
                ll += binomial_kernel(g.k[r], g.n[r], eta);
                if want_grad {
                    let resid = g.k[r] - g.n[r] * logistic(eta);
                    for (gj, xj) in grad.iter_mut().zip(x) {
                        *gj += resid * xj;
                    }
                }
            }
        }
        (ll, grad)
    }

    /// Log-likelihood and gradient over `(β, τ = log σ)` with adaptive
    /// Gauss–Hermite integration centred at each group's mode.
    ///
    /// The gradient differentiates the quadrature sum exactly, including its
    /// dependence on the mode and curvature, so with one node it is the
    /// gradient of the Laplace approximation.
    pub(crate) fn eval(
        &self,
        beta: &[f64],
        tau: f64,
        rule: &(Vec<f64>, Vec<f64>),
        want_grad: bool,
    ) -> Result<(f64, Vec<f64>)> {
        let p = self.p;
        let sigma2 = (2.0 * tau).exp();
        let inv_s2 = 1.0 / sigma2;
        let (nodes, weights) = rule;
        let mut ll = 0.0;
        let mut grad = vec![0.0; if want_grad { p + 1 } else { 0 }];

        for g in &self.groups {
            let eta: Vec<f64> = g.x.iter().map(|x| dot(x, beta)).collect();
            let (mode, curv) = group_mode(&eta, &g.k, &g.n, inv_s2)?;
            let s_hat = curv.sqrt().recip();

            // h(u) = log[Π binom · N(u; 0, σ²)] without the binomial constants.
            let h = |u: f64| -> f64 {
                let data: f64 = eta
                    .iter()
                    .zip(g.k.iter().zip(&g.n))
                    .map(|(&e, (&k, &n))| binomial_kernel(k, n, e + u))
                    .sum();
                data - 0.5 * u * u * inv_s2 - tau - HALF_LN_2PI
            };
            let u: Vec<f64> = nodes
                .iter()
                .map(|&x| mode + std::f64::consts::SQRT_2 * s_hat * x)
                .collect();
            let t: Vec<f64> = u
                .iter()
                .zip(nodes.iter().zip(weights))
                .map(|(&ui, (&xi, &wi))| wi.ln() + xi * xi + h(ui))
                .collect();
            let t_max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = t.iter().map(|&ti| (ti - t_max).exp()).sum();
            ll += 0.5 * std::f64::consts::LN_2 + s_hat.ln() + t_max + sum_exp.ln() + g.ln_choose;

            if !want_grad {
                continue;
            }

            // Derivatives of the mode and of the curvature H at the mode.
            let mut swx = vec![0.0; p];
            let mut sw = 0.0;
            let mut sw3 = 0.0;
            let mut sw3x = vec![0.0; p];
            for (r, x) in g.x.iter().enumerate() {
                let pr = logistic(eta[r] + mode);
                let w = g.n[r] * pr * (1.0 - pr);
                let w3 = w * (1.0 - 2.0 * pr);
                sw += w;
                sw3 += w3;
                for j in 0..p {
                    swx[j] += w * x[j];
                    sw3x[j] += w3 * x[j];
                }
            }
            debug_assert!((curv - (sw + inv_s2)).abs() <= 1e-9 * curv);
            let du_dbeta: Vec<f64> = swx.iter().map(|v| -v / curv).collect();
            let du_dtau = 2.0 * mode * inv_s2 / curv;
            let mut dh_dtheta = vec![0.0; p + 1];
            for j in 0..p {
                dh_dtheta[j] = sw3x[j] + sw3 * du_dbeta[j];
            }
            dh_dtheta[p] = -2.0 * inv_s2 + sw3 * du_dtau;
            let mut du_dtheta = du_dbeta;
            du_dtheta.push(du_dtau);

            // d log ŝ = -½ dH / H and dŝ = ŝ · d log ŝ.
            for (gj, dh) in grad.iter_mut().zip(&dh_dtheta) {
                *gj -= 0.5 * dh / curv;
            }
            for (i, &ui) in u.iter().enumerate() {
                let omega = (t[i] - t_max).exp() / sum_exp;
                if omega == 0.0 {
                    continue;
                }
                let mut hp = -ui * inv_s2;
                let mut dbeta = vec![0.0; p];
                for (r, x) in g.x.iter().enumerate() {
                    let resid = g.k[r] - g.n[r] * logistic(eta[r] + ui);
                    hp += resid;
                    for j in 0..p {
                        dbeta[j] += resid * x[j];
                    }
                }
                let dtau = ui * ui * inv_s2 - 1.0;
                let shift = std::f64::consts::SQRT_2 * nodes[i] * s_hat;
                for j in 0..=p {
                    let direct = if j < p { dbeta[j] } else { dtau };
                    let du = du_dtheta[j] - 0.5 * shift * dh_dtheta[j] / curv;
                    grad[j] += omega * (direct + hp * du);
                }
            }
        }
        Ok((ll, grad))
    }

    /// Score statistic for the random-effect variance at σ = 0: the
    /// derivative of the log-likelihood with respect to σ² at the origin.
    pub(crate) fn variance_score(&self, beta: &[f64]) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                let mut s = 0.0;
                let mut info = 0.0;
                for (r, x) in g.x.iter().enumerate() {
                    let pr = logistic(dot(x, beta));
                    s += g.k[r] - g.n[r] * pr;
                    info += g.n[r] * pr * (1.0 - pr);
                }
                0.5 * (s * s - info)
            })
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mode of the (strictly concave) integrand and the negative second
/// derivative there.
fn group_mode(eta: &[f64], k: &[f64], n: &[f64], inv_s2: f64) -> Result<(f64, f64)> {
    let eval = |u: f64| -> (f64, f64, f64) {
        let mut val = -0.5 * u * u * inv_s2;
        let mut grad = -u * inv_s2;
        let mut curv = inv_s2;
        for r in 0..eta.len() {
            let e = eta[r] + u;
            let p = logistic(e);
            val += binomial_kernel(k[r], n[r], e);
            grad += k[r] - n[r] * p;
            curv += n[r] * p * (1.0 - p);
        }
        (val, grad, curv)
    };
    let mut u = 0.0;
    let (mut val, mut grad, mut curv) = eval(u);
    for _ in 0..200 {
        let step = grad / curv;
        if step.abs() <= 1e-13 * (1.0 + u.abs()) {
            return Ok((u, curv));
        }
        let mut scale = 1.0;
        loop {
            let cand = u + scale * step;
            let (cv, cg, cc) = eval(cand);
            if cv >= val - 1e-15 * val.abs() || scale < 1e-12 {
                u = cand;
                val = cv;
                grad = cg;
                curv = cc;
                break;
            }
            scale *= 0.5;
        }
    }
    if (grad / curv).abs() <= 1e-9 * (1.0 + u.abs()) {
        return Ok((u, curv));
    }
    Err(Error::NoConvergence {
        what: "random-intercept mode search".into(),
        iterations: 200,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmm::Covariate;

    fn row(school: &str, year: u8, k: u64, n: u64) -> GlmmRow {
        GlmmRow {
            school: school.into(),
            year,
            type_private: 0,
            location_small: 0,
            in_person: 0,
            k,
            n,
        }
    }

    fn fixture() -> GlmmData {
        let rows = vec![
            row("a", 0, 30, 50),
            row("a", 1, 22, 50),
            row("b", 0, 35, 60),
            row("b", 1, 20, 40),
            row("c", 0, 12, 30),
            row("c", 1, 18, 35),
        ];
        GlmmData::new(&rows, &[Covariate::Year]).unwrap()
    }

    #[test]
    fn zero_sigma_is_pooled_logistic() {
        let d = fixture();
        let beta = [0.2, -0.3];
        let got = d.marginal_loglik(&beta, 0.0, 1).unwrap();
        let mut want = 0.0;
        for (k, n, y) in [(30, 50, 0), (22, 50, 1), (35, 60, 0), (20, 40, 1), (12, 30, 0), (18, 35, 1)] {
            let eta = 0.2 - 0.3 * y as f64;
            let p = logistic(eta);
            want += ln_choose(n as f64, k as f64) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
        }
        assert!((got - want).abs() < 1e-10);
        // The limit from above agrees.
        let tiny = d.marginal_loglik(&beta, 1e-6, 1).unwrap();
        assert!((tiny - want).abs() < 1e-6);
    }

    /// Brute-force integral by a dense trapezoid rule.
    fn trapezoid(d: &GlmmData, beta: &[f64], sigma: f64) -> f64 {
        let mut total = 0.0;
        for g in &d.groups {
            let eta: Vec<f64> = g.x.iter().map(|x| dot(x, beta)).collect();
            let f = |u: f64| -> f64 {
                let data: f64 = (0..eta.len())
                    .map(|r| binomial_kernel(g.k[r], g.n[r], eta[r] + u))
                    .sum();
                data - 0.5 * u * u / (sigma * sigma) - sigma.ln() - HALF_LN_2PI
            };
            let steps = 40_000;
            let (lo, hi) = (-10.0 * sigma, 10.0 * sigma);
            let dx = (hi - lo) / steps as f64;
            let vals: Vec<f64> = (0..=steps).map(|i| f(lo + i as f64 * dx)).collect();
            let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = vals
                .iter()
                .enumerate()
                .map(|(i, v)| if i == 0 || i == steps { 0.5 } else { 1.0 } * (v - m).exp())
                .sum();
            total += m + (s * dx).ln() + g.ln_choose;
        }
        total
    }

    #[test]
    fn quadrature_matches_brute_force_integral() {
        let d = fixture();
        let beta = [0.1, -0.4];
        for sigma in [0.05, 0.3, 1.0] {
            let truth = trapezoid(&d, &beta, sigma);
            let agq = d.marginal_loglik(&beta, sigma, 30).unwrap();
            assert!((agq - truth).abs() < 1e-8, "sigma {sigma}: {agq} vs {truth}");
            let laplace = d.marginal_loglik(&beta, sigma, 1).unwrap();
            assert!((laplace - truth).abs() < 1e-2);
        }
    }

    #[test]
    fn refinement_shrinks_error() {
        let d = fixture();
        let beta = [0.1, -0.4];
        let truth = d.marginal_loglik(&beta, 0.8, 50).unwrap();
        let errs: Vec<f64> = [1, 3, 7]
            .iter()
            .map(|&m| (d.marginal_loglik(&beta, 0.8, m).unwrap() - truth).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = fixture();
        for nodes in [1, 2, 5, 20] {
            let rule = gauss_hermite(nodes).unwrap();
            let theta = [0.15, -0.35, (0.4f64).ln()];
            let f = |t: &[f64]| d.eval(&t[..2], t[2], &rule, false).unwrap().0;
            let (_, g) = d.eval(&theta[..2], theta[2], &rule, true).unwrap();
            for j in 0..3 {
                let h = 1e-6;
                let mut a = theta;
                let mut b = theta;
                a[j] += h;
                b[j] -= h;
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6 * (1.0 + fd.abs()), "nodes {nodes} j {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn single_saturated_row_increases_in_intercept() {
        let d = GlmmData::new(&[row("a", 0, 10, 10)], &[]).unwrap();
        let mut last = f64::NEG_INFINITY;
        for b in [0.0, 2.0, 5.0, 10.0, 20.0] {
            let ll = d.marginal_loglik(&[b], 0.5, 1).unwrap();
            assert!(ll > last);
            last = ll;
        }
    }
}
