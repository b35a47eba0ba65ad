//! Binomial mixed models with a random intercept per school.
//!
//! `logit Pr(NonNegative) = x′β + γ_school`, `γ ~ N(0, σ²)`, fitted by
//! maximum marginal likelihood on aggregated school-year counts. Because every
//! covariate is constant within a school-year cell, the counts are sufficient
//! and the fit is independent of corpus size.

mod fit;
mod likelihood;
mod quadrature;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::corpus::{School, SentimentLabel, Year};
use crate::error::{Error, Result};

pub use fit::{fit_glmm, likelihood_ratio_test, GlmmFit, GlmmOptions, LikelihoodRatio, Method};
pub use likelihood::GlmmData;
pub use quadrature::gauss_hermite;

/// Aggregated counts of one school-year cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlmmRow {
    /// Random-intercept level.
    pub school: String,
    /// 1 for 2020, 0 for 2019.
    pub year: u8,
    pub type_private: u8,
    pub location_small: u8,
    pub in_person: u8,
    /// NonNegative messages.
    pub k: u64,
    pub n: u64,
}

impl GlmmRow {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("year", self.year),
            ("type_private", self.type_private),
            ("location_small", self.location_small),
            ("in_person", self.in_person),
        ] {
            if v > 1 {
                return Err(Error::Invalid(format!("{name} must be 0 or 1, got {v}")));
            }
        }
        if self.k > self.n {
            return Err(Error::Invalid(format!(
                "{}: k = {} exceeds n = {}",
                self.school, self.k, self.n
            )));
        }
        Ok(())
    }

    /// Counts for a known school and year, with the school's covariates.
    pub fn for_cell(school: School, year: Year, k: u64, n: u64) -> Self {
        let c = school.covariates();
        Self {
            school: school.token().to_string(),
            year: u8::from(year == Year::Y2020),
            type_private: u8::from(c.private),
            location_small: u8::from(c.small_city),
            in_person: u8::from(c.in_person),
            k,
            n,
        }
    }
}

/// Fixed-effect covariates available to the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Year,
    SmallCity,
    Private,
    InPerson,
}

impl Covariate {
    /// Pandemic model: year with school type and location.
    pub const YEAR_MODEL: [Covariate; 3] = [Covariate::Year, Covariate::SmallCity, Covariate::Private];
    /// Teaching-mode model, fitted on 2020 rows only.
    pub const IN_PERSON_MODEL: [Covariate; 3] =
        [Covariate::InPerson, Covariate::SmallCity, Covariate::Private];

    /// Column name in row files.
    pub fn name(self) -> &'static str {
        match self {
            Covariate::Year => "year",
            Covariate::SmallCity => "location_small",
            Covariate::Private => "type_private",
            Covariate::InPerson => "in_person",
        }
    }

    /// Factor label in reports.
    pub fn label(self) -> &'static str {
        match self {
            Covariate::Year => "Year 2020",
            Covariate::SmallCity => "Small City",
            Covariate::Private => "Private",
            Covariate::InPerson => "In-Person",
        }
    }

    pub fn value(self, row: &GlmmRow) -> f64 {
        f64::from(match self {
            Covariate::Year => row.year,
            Covariate::SmallCity => row.location_small,
            Covariate::Private => row.type_private,
            Covariate::InPerson => row.in_person,
        })
    }
}

impl std::str::FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "year" => Ok(Covariate::Year),
            "location_small" | "small_city" | "location" => Ok(Covariate::SmallCity),
            "type_private" | "private" | "type" => Ok(Covariate::Private),
            "in_person" | "inperson" => Ok(Covariate::InPerson),
            _ => Err(Error::Invalid(format!("unknown covariate {s:?}"))),
        }
    }
}

/// Counts per school-year cell, in canonical order. Cells without messages
/// are omitted.
pub fn sufficient_stats(records: &[(School, Year, SentimentLabel)]) -> Vec<GlmmRow> {
    let mut cells: BTreeMap<(Year, usize), (u64, u64)> = BTreeMap::new();
    for &(school, year, label) in records {
        let c = cells.entry((year, school.index())).or_default();
        c.0 += u64::from(!label.is_negative());
        c.1 += 1;
    }
    cells
        .into_iter()
        .map(|((year, s), (k, n))| GlmmRow::for_cell(School::ALL[s], year, k, n))
        .collect()
}

/// One line of an odds-ratio table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddsRatio {
    pub factor: String,
    pub estimate: f64,
    pub se: f64,
    /// Odds ratio of a Negative message, `exp(−β)`.
    pub or_negative: f64,
    pub p_value: f64,
}

/// Two-sided Wald p-value of `estimate / se`.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if estimate == 0.0 {
        return 1.0;
    }
    let z = (estimate / se).abs();
    let normal = Normal::standard();
    // 2Φ(−|z|) keeps precision in the far tail.
    (2.0 * normal.cdf(-z)).min(1.0)
}

/// Negative-sentiment odds ratios and Wald p-values of each covariate
/// (the intercept is skipped).
pub fn odds_ratios(fit: &GlmmFit, covariates: &[Covariate]) -> Vec<OddsRatio> {
    covariates
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let b = fit.beta[j + 1];
            let se = fit.se[j + 1];
            OddsRatio {
                factor: c.label().to_string(),
                estimate: b,
                se,
                or_negative: (-b).exp(),
                p_value: wald_p_value(b, se),
            }
        })
        .collect()
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<GlmmRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<GlmmRow>().enumerate() {
        let row = rec.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        row.validate().map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_rows(path: impl AsRef<Path>, rows: &[GlmmRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// Plain-text table: factor, estimate, SE, negative-sentiment OR, p-value.
pub fn format_report(title: &str, fit: &GlmmFit, covariates: &[Covariate]) -> String {
    let mut out = Vec::new();
    writeln!(out, "{title}").unwrap();
    writeln!(
        out,
        "method: {}; log-likelihood: {:.4}; sigma: {:.4}{}",
        fit.method,
        fit.loglik,
        fit.sigma,
        if fit.boundary { " (boundary)" } else { "" }
    )
    .unwrap();
    writeln!(out, "{:<12} {:>10} {:>10} {:>12} {:>10}", "factor", "estimate", "se", "OR_negative", "p").unwrap();
    for r in odds_ratios(fit, covariates) {
        let p = if r.p_value < 0.001 {
            "<0.001".to_string()
        } else {
            format!("{:.3}", r.p_value)
        };
        writeln!(
            out,
            "{:<12} {:>10.4} {:>10.4} {:>12.3} {:>10}",
            r.factor, r.estimate, r.se, r.or_negative, p
        )
        .unwrap();
    }
    String::from_utf8(out).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logistic::{fit_binomial, IrlsOptions};
    use crate::synthetic::glmm_rows;
    use nalgebra::DMatrix;

    fn irls(rows: &[GlmmRow], covs: &[Covariate]) -> Vec<f64> {
        let x = DMatrix::from_fn(rows.len(), covs.len() + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                covs[j - 1].value(&rows[i])
            }
        });
        let k: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
        let n: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        fit_binomial(&x, &k, &n, &IrlsOptions::default()).unwrap().beta
    }

    const TRUE_BETA: [f64; 4] = [-0.5, 0.3, 0.1, 0.25];

    #[test]
    fn zero_sigma_matches_irls() {
        let rows = glmm_rows(3, &TRUE_BETA, 0.3, 500);
        let opts = GlmmOptions {
            fixed_sigma: Some(0.0),
            ..GlmmOptions::default()
        };
        let fit = fit_glmm(&rows, &Covariate::YEAR_MODEL, &opts).unwrap();
        let oracle = irls(&rows, &Covariate::YEAR_MODEL);
        for (a, b) in fit.beta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert_eq!(fit.sigma, 0.0);
        assert!(fit.se_sigma.is_none());
    }

    #[test]
    fn laplace_agrees_with_quadrature() {
        // Laplace error shrinks like 1/n per group; counts here are desk scale.
        let rows = glmm_rows(11, &TRUE_BETA, 0.4, 2000);
        let lap = fit_glmm(&rows, &Covariate::YEAR_MODEL, &GlmmOptions::default()).unwrap();
        let agq = fit_glmm(
            &rows,
            &Covariate::YEAR_MODEL,
            &GlmmOptions {
                quad_nodes: 50,
                ..GlmmOptions::default()
            },
        )
        .unwrap();
        assert!(lap.converged && agq.converged);
        for (a, b) in lap.beta.iter().zip(&agq.beta) {
            assert!((a - b).abs() < 1e-2);
        }
        assert!((lap.loglik - agq.loglik).abs() < 1e-3);
        assert_eq!(agq.method, Method::Agq(50));
    }

    #[test]
    fn synthetic_truth_is_recovered() {
        let rows = glmm_rows(5, &TRUE_BETA, 0.2, 10_000);
        let fit = fit_glmm(&rows, &Covariate::YEAR_MODEL, &GlmmOptions::default()).unwrap();
        assert!(fit.converged);
        for j in 0..4 {
            let z = (fit.beta[j] - TRUE_BETA[j]) / fit.se[j];
            assert!(z.abs() < 3.0, "beta{j}: {} (se {})", fit.beta[j], fit.se[j]);
        }
        assert!(fit.sigma > 0.0);
    }

    #[test]
    fn aggregated_and_bernoulli_rows_give_the_same_fit() {
        let rows = glmm_rows(9, &TRUE_BETA, 0.3, 40);
        let mut bern = Vec::new();
        for r in &rows {
            for i in 0..r.n {
                bern.push(GlmmRow {
                    k: u64::from(i < r.k),
                    n: 1,
                    ..r.clone()
                });
            }
        }
        let a = fit_glmm(&rows, &Covariate::YEAR_MODEL, &GlmmOptions::default()).unwrap();
        let b = fit_glmm(&bern, &Covariate::YEAR_MODEL, &GlmmOptions::default()).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            assert!((x - y).abs() < 1e-5);
        }
        assert!((a.sigma - b.sigma).abs() < 1e-5);
        // Only the binomial coefficients differ.
        let ln_c: f64 = rows
            .iter()
            .map(|r| statrs::function::factorial::ln_binomial(r.n, r.k))
            .sum();
        assert!((a.loglik - b.loglik - ln_c).abs() < 1e-6);
    }

    #[test]
    fn scaling_counts_leaves_pooled_estimates_unchanged() {
        let rows = glmm_rows(2, &TRUE_BETA, 0.3, 100);
        let scaled: Vec<GlmmRow> = rows
            .iter()
            .map(|r| GlmmRow {
                k: 3 * r.k,
                n: 3 * r.n,
                ..r.clone()
            })
            .collect();
        let opts = GlmmOptions {
            fixed_sigma: Some(0.0),
            ..GlmmOptions::default()
        };
        let a = fit_glmm(&rows, &Covariate::YEAR_MODEL, &opts).unwrap();
        let b = fit_glmm(&scaled, &Covariate::YEAR_MODEL, &opts).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn homogeneous_groups_hit_the_boundary() {
        let rows = glmm_rows(4, &TRUE_BETA, 0.0, 2000);
        let fit = fit_glmm(&rows, &Covariate::YEAR_MODEL, &GlmmOptions::default()).unwrap();
        if fit.boundary {
            assert_eq!(fit.sigma, 0.0);
            assert!(fit.se_sigma.is_none());
        } else {
            assert!(fit.sigma < 0.1);
        }
    }

    #[test]
    fn saturated_rows_are_separation() {
        let rows: Vec<GlmmRow> = (0..4)
            .map(|i| GlmmRow {
                school: format!("s{i}"),
                year: (i % 2) as u8,
                type_private: 0,
                location_small: 0,
                in_person: 0,
                k: 20,
                n: 20,
            })
            .collect();
        let err = fit_glmm(&rows, &[], &GlmmOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Separation(_)), "{err:?}");
    }

    #[test]
    fn input_checks() {
        let rows = glmm_rows(1, &TRUE_BETA, 0.3, 50);
        let one_school: Vec<_> = rows.iter().filter(|r| r.school == rows[0].school).cloned().collect();
        assert!(matches!(
            fit_glmm(&one_school, &[Covariate::Year], &GlmmOptions::default()),
            Err(Error::Invalid(_))
        ));
        // In-person is constant within the 2019 rows' design only if all
        // schools share it; duplicate a column to force rank deficiency.
        let dup = [Covariate::Year, Covariate::Year];
        assert!(matches!(fit_glmm(&rows, &dup, &GlmmOptions::default()), Err(Error::Singular(_))));
        assert!(fit_glmm(&[], &[], &GlmmOptions::default()).is_err());
    }

    #[test]
    fn odds_ratio_conventions() {
        assert_eq!(wald_p_value(0.0, 0.2), 1.0);
        assert!((wald_p_value(1.96, 1.0) - 0.05).abs() < 1e-3);
        let fit = GlmmFit {
            names: vec![],
            beta: vec![0.1, -0.2287, 0.0],
            se: vec![0.1, 0.05, 0.3],
            sigma: 0.2,
            se_sigma: None,
            loglik: 0.0,
            method: Method::Laplace,
            boundary: false,
            iterations: 0,
            converged: true,
        };
        let or = odds_ratios(&fit, &[Covariate::Year, Covariate::InPerson]);
        assert!((or[0].or_negative - 1.257).abs() < 1e-3);
        assert_eq!(or[1].or_negative, 1.0);
        assert_eq!(or[1].p_value, 1.0);
        assert!(or[0].p_value > 0.0 && or[0].p_value < 0.001);
        // Reversing the direction inverts the odds ratio.
        assert!((fit.beta[1].exp() * or[0].or_negative - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sufficient_stats_counts_cells() {
        use SentimentLabel::*;
        let recs = vec![
            (School::Nd, Year::Y2020, Negative),
            (School::Nd, Year::Y2020, NonNegative),
            (School::Ucla, Year::Y2019, NonNegative),
            (School::Nd, Year::Y2020, NonNegative),
        ];
        let rows = sufficient_stats(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].school, "UCLA");
        assert_eq!((rows[0].year, rows[0].k, rows[0].n), (0, 1, 1));
        assert_eq!((rows[1].year, rows[1].k, rows[1].n), (1, 2, 3));
        assert_eq!((rows[1].type_private, rows[1].location_small, rows[1].in_person), (1, 1, 1));
        assert!(sufficient_stats(&[]).is_empty());
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let rows = glmm_rows(6, &TRUE_BETA, 0.2, 30);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_rows(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("school,year,type_private,location_small,in_person,k,n\n"));
        assert_eq!(read_rows(&path).unwrap(), rows);

        std::fs::write(&path, "school,year,type_private,location_small,in_person,k,n\nA,0,0,0,0,5,3\n").unwrap();
        match read_rows(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lrt_is_a_probability() {
        let rows = glmm_rows(12, &TRUE_BETA, 0.3, 400);
        let lrt = likelihood_ratio_test(&rows, &Covariate::YEAR_MODEL, Covariate::Year, &GlmmOptions::default())
            .unwrap();
        assert!(lrt.p_value > 0.0 && lrt.p_value <= 1.0);
        assert!(lrt.statistic >= 0.0);
    }
}
