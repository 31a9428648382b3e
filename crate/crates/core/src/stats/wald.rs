use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{Term, TermKind};
use super::dist::chi2_sf;
use super::gee::GeeFit;
use crate::error::{Error, Result};

/// Two-sided normal critical value used for every confidence interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub term: String,
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

fn require_converged(fit: &GeeFit) -> Result<()> {
    if fit.converged {
        Ok(())
    } else {
        Err(Error::InvalidFit("Wald test on a non-converged fit".into()))
    }
}

/// Joint test that all coefficients of a term are zero, using the robust covariance.
pub fn wald_test(fit: &GeeFit, term: &Term) -> Result<WaldTest> {
    require_converged(fit)?;
    let cols = &term.columns;
    if cols.is_empty() || cols.iter().any(|&c| c >= fit.beta.len()) {
        return Err(Error::InvalidFit(format!("term {:?} has no columns in this fit", term.name)));
    }
    let b = DVector::from_iterator(cols.len(), cols.iter().map(|&c| fit.beta[c]));
    let v = DMatrix::from_fn(cols.len(), cols.len(), |i, j| fit.robust_cov[(cols[i], cols[j])]);
    let chi2 = if cols.len() == 1 {
        if !(v[(0, 0)] > 0.0) {
            return Err(Error::InvalidFit(format!("term {:?} has zero robust variance", term.name)));
        }
        b[0] * b[0] / v[(0, 0)]
    } else {
        let chol = v
            .cholesky()
            .ok_or_else(|| Error::InvalidFit(format!("robust covariance of {:?} is singular", term.name)))?;
        b.dot(&chol.solve(&b))
    };
    Ok(WaldTest { term: term.name.clone(), chi2, df: cols.len(), p_value: chi2_sf(chi2, cols.len() as f64) })
}

pub fn wald_tests(fit: &GeeFit, terms: &[Term]) -> Result<Vec<WaldTest>> {
    terms.iter().map(|t| wald_test(fit, t)).collect()
}

/// A single-df contrast `δ = wᵀβ` reported as an odds ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub label: String,
    pub estimate: f64,
    pub se: f64,
    pub odds_ratio: f64,
    pub or_ci95_low: f64,
    pub or_ci95_high: f64,
    pub chi2: f64,
    pub p_value: f64,
}

impl Contrast {
    pub fn from_estimate(label: impl Into<String>, estimate: f64, se: f64) -> Self {
        let chi2 = if se > 0.0 {
            (estimate / se).powi(2)
        } else if estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Contrast {
            label: label.into(),
            estimate,
            se,
            odds_ratio: estimate.exp(),
            or_ci95_low: (estimate - Z_95 * se).exp(),
            or_ci95_high: (estimate + Z_95 * se).exp(),
            chi2,
            p_value: chi2_sf(chi2, 1.0),
        }
    }
}

pub fn linear_contrast(fit: &GeeFit, label: impl Into<String>, weights: &DVector<f64>) -> Result<Contrast> {
    require_converged(fit)?;
    if weights.len() != fit.beta.len() {
        return Err(Error::InvalidFit(format!("{} contrast weights for {} coefficients", weights.len(), fit.beta.len())));
    }
    let estimate = weights.dot(&fit.beta);
    let var = (weights.transpose() * &fit.robust_cov * weights)[(0, 0)];
    Ok(Contrast::from_estimate(label, estimate, var.max(0.0).sqrt()))
}

/// Coefficient weights that pick out the log-odds of `level` relative to the
/// reference level of a dummy-coded term.
fn level_weights(fit: &GeeFit, term: &Term, level: usize) -> DVector<f64> {
    let mut w = DVector::zeros(fit.beta.len());
    if level > 0 {
        w[term.columns[level - 1]] = 1.0;
    }
    w
}

fn categorical_levels<'a>(fit: &'a GeeFit, term_name: &str) -> Result<(&'a Term, &'a [String])> {
    let term = fit
        .term(term_name)
        .ok_or_else(|| Error::ContrastNotApplicable(format!("fit has no term {term_name:?}")))?;
    match &term.kind {
        TermKind::Categorical { levels } => Ok((term, levels)),
        _ => Err(Error::ContrastNotApplicable(format!("{term_name:?} is not categorical"))),
    }
}

/// Every level pair `a vs b` (a listed before b) of a significant categorical term.
pub fn posthoc_contrasts(fit: &GeeFit, term_name: &str, alpha: f64) -> Result<Vec<Contrast>> {
    let (term, levels) = categorical_levels(fit, term_name)?;
    let joint = wald_test(fit, term)?;
    if !(joint.p_value < alpha) {
        return Err(Error::ContrastNotApplicable(format!(
            "{term_name} is not significant (p = {:.4})",
            joint.p_value
        )));
    }
    let mut out = Vec::new();
    for a in 0..levels.len() {
        for b in (a + 1)..levels.len() {
            let w = level_weights(fit, term, a) - level_weights(fit, term, b);
            out.push(linear_contrast(fit, format!("{} vs {}", levels[a], levels[b]), &w)?);
        }
    }
    Ok(out)
}

/// Mean log-odds of one group of levels against another group.
pub fn group_contrast(fit: &GeeFit, term_name: &str, label: &str, first: &[&str], second: &[&str]) -> Result<Contrast> {
    let (term, levels) = categorical_levels(fit, term_name)?;
    let mut w = DVector::zeros(fit.beta.len());
    for (group, sign) in [(first, 1.0), (second, -1.0)] {
        if group.is_empty() {
            return Err(Error::ContrastNotApplicable(format!("empty level group in {label:?}")));
        }
        for name in group {
            let idx = levels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::ContrastNotApplicable(format!("{term_name} has no level {name:?}")))?;
            w += level_weights(fit, term, idx) * (sign / group.len() as f64);
        }
    }
    linear_contrast(fit, label, &w)
}
