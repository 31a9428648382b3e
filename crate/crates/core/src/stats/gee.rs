//! Binary-logit GEE with independence or exchangeable working correlation.
//!
//! Fitting runs on centred and scaled columns; coefficients and covariances
//! are mapped back to the original units at the end.

use std::fmt;
use std::str::FromStr;

use log::trace;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{DesignMatrix, Term};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkingCorrelation {
    #[default]
    Independence,
    Exchangeable,
}

impl fmt::Display for WorkingCorrelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkingCorrelation::Independence => "independence",
            WorkingCorrelation::Exchangeable => "exchangeable",
        })
    }
}

impl FromStr for WorkingCorrelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independence" => Ok(WorkingCorrelation::Independence),
            "exchangeable" => Ok(WorkingCorrelation::Exchangeable),
            _ => Err(Error::InvalidMeta(format!("unknown working correlation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeeOptions {
    pub working: WorkingCorrelation,
    pub max_iter: usize,
    /// Relative max-norm tolerance on the coefficient update.
    pub tol: f64,
    /// Any standardized coefficient beyond this is treated as separation.
    pub separation_bound: f64,
}

impl Default for GeeOptions {
    fn default() -> Self {
        Self { working: WorkingCorrelation::Independence, max_iter: 100, tol: 1e-10, separation_bound: 15.0 }
    }
}

impl GeeOptions {
    pub fn with_working(working: WorkingCorrelation) -> Self {
        Self { working, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeeFit {
    pub column_names: Vec<String>,
    pub terms: Vec<Term>,
    pub beta: DVector<f64>,
    pub robust_cov: DMatrix<f64>,
    pub model_cov: DMatrix<f64>,
    pub working_corr: WorkingCorrelation,
    /// Exchangeable correlation parameter; 0 under independence.
    pub alpha: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub qic: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub fitted: Vec<f64>,
    y: Vec<f64>,
    // Penalty ingredients on the scaled columns, where they are well conditioned.
    indep_info_scaled: DMatrix<f64>,
    robust_cov_scaled: DMatrix<f64>,
}

impl GeeFit {
    pub fn se(&self, j: usize) -> f64 {
        self.robust_cov[(j, j)].max(0.0).sqrt()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// `x = shift + scale · z` per column; the intercept column is left alone.
struct Scaling {
    shift: Vec<f64>,
    scale: Vec<f64>,
    intercept: Option<usize>,
}

impl Scaling {
    fn fit(x: &DMatrix<f64>, names: &[String]) -> Result<(Self, DMatrix<f64>)> {
        let n = x.nrows() as f64;
        let intercept = (0..x.ncols()).find(|&j| x.column(j).iter().all(|v| *v == 1.0));
        let mut shift = vec![0.0; x.ncols()];
        let mut scale = vec![1.0; x.ncols()];
        for j in 0..x.ncols() {
            if Some(j) == intercept {
                continue;
            }
            let col = x.column(j);
            let m = if intercept.is_some() { col.sum() / n } else { 0.0 };
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::SingularDesign(format!("column {:?} is constant", names[j])));
            }
            shift[j] = m;
            scale[j] = s;
        }
        let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - shift[j]) / scale[j]);
        Ok((Scaling { shift, scale, intercept }, z))
    }

    /// Linear map taking scaled-column coefficients to original-unit coefficients.
    fn back_transform(&self) -> DMatrix<f64> {
        let p = self.scale.len();
        let mut t = DMatrix::zeros(p, p);
        for j in 0..p {
            t[(j, j)] = 1.0 / self.scale[j];
            if let Some(k) = self.intercept {
                if k != j {
                    t[(k, j)] = -self.shift[j] / self.scale[j];
                }
            }
        }
        t
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Per-cluster bread and score contributions, summed in cluster order.
struct Accumulated {
    bread: DMatrix<f64>,
    score: DVector<f64>,
    meat: DMatrix<f64>,
    indep_info: DMatrix<f64>,
}

fn accumulate(z: &DMatrix<f64>, y: &[f64], mu: &[f64], groups: &[Vec<usize>], alpha: f64) -> Accumulated {
    let p = z.ncols();
    let mut acc = Accumulated {
        bread: DMatrix::zeros(p, p),
        score: DVector::zeros(p),
        meat: DMatrix::zeros(p, p),
        indep_info: DMatrix::zeros(p, p),
    };
    for rows in groups {
        let m = rows.len();
        // W = A^{1/2} Z and Pearson residuals r = A^{-1/2} (y - μ).
        let mut w = DMatrix::zeros(m, p);
        let mut r = DVector::zeros(m);
        for (a, &i) in rows.iter().enumerate() {
            let v = (mu[i] * (1.0 - mu[i])).max(f64::MIN_POSITIVE);
            let sv = v.sqrt();
            for j in 0..p {
                w[(a, j)] = sv * z[(i, j)];
            }
            r[a] = (y[i] - mu[i]) / sv;
        }
        // Exchangeable inverse: (I - c·11ᵀ) / (1 - α).
        let c = alpha / (1.0 + (m as f64 - 1.0) * alpha);
        let col_sums = w.row_sum();
        let mut rw = w.clone();
        for a in 0..m {
            for j in 0..p {
                rw[(a, j)] = (w[(a, j)] - c * col_sums[j]) / (1.0 - alpha);
            }
        }
        let u = rw.transpose() * &r;
        acc.bread += w.transpose() * &rw;
        acc.indep_info += w.transpose() * &w;
        acc.meat += &u * u.transpose();
        acc.score += u;
    }
    acc
}

/// Moment estimate of the exchangeable correlation from Pearson residuals.
fn estimate_alpha(y: &[f64], mu: &[f64], groups: &[Vec<usize>], p: usize) -> f64 {
    let resid = |i: usize| (y[i] - mu[i]) / (mu[i] * (1.0 - mu[i])).max(f64::MIN_POSITIVE).sqrt();
    let n = y.len();
    let mut ss = 0.0;
    let mut cross = 0.0;
    let mut pairs = 0.0;
    let mut max_size = 1;
    for rows in groups {
        let rs: Vec<f64> = rows.iter().map(|&i| resid(i)).collect();
        let sum: f64 = rs.iter().sum();
        let sq: f64 = rs.iter().map(|r| r * r).sum();
        ss += sq;
        cross += 0.5 * (sum * sum - sq);
        pairs += 0.5 * (rows.len() * (rows.len() - 1)) as f64;
        max_size = max_size.max(rows.len());
    }
    let phi = ss / (n as f64 - p as f64).max(1.0);
    let denom = (pairs - p as f64) * phi;
    if max_size < 2 || !(denom > 0.0) {
        return 0.0;
    }
    let lower = -1.0 / (max_size as f64 - 1.0) + 1e-6;
    (cross / denom).clamp(lower, 0.99)
}

fn solve_spd(b: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = b.clone().cholesky().ok_or_else(|| Error::SingularDesign("working information matrix is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-13 {
        return Err(Error::SingularDesign("working information matrix is numerically singular".into()));
    }
    Ok(chol)
}

/// Binomial quasi-likelihood with μ clamped away from 0 and 1.
pub fn quasi_likelihood(y: &[f64], mu: &[f64]) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(y, m)| {
            let m = m.clamp(1e-12, 1.0 - 1e-12);
            y * m.ln() + (1.0 - y) * (1.0 - m).ln()
        })
        .sum()
}

/// `−2Q + 2·trace(Ω_I · V_R)` where `Ω_I` is the independence-model
/// information (the inverse of its model-based covariance).
pub fn pan_qic(y: &[f64], mu: &[f64], indep_info: &DMatrix<f64>, robust_cov: &DMatrix<f64>) -> f64 {
    -2.0 * quasi_likelihood(y, mu) + 2.0 * (indep_info * robust_cov).trace()
}

pub fn qic(fit: &GeeFit) -> Result<f64> {
    if !fit.converged {
        return Err(Error::InvalidFit("QIC of a non-converged fit".into()));
    }
    Ok(pan_qic(&fit.y, &fit.fitted, &fit.indep_info_scaled, &fit.robust_cov_scaled))
}

pub fn gee_fit(design: &DesignMatrix, opts: &GeeOptions) -> Result<GeeFit> {
    let groups = design.cluster_groups();
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "robust covariance needs at least 2 clusters, got {}",
            groups.len()
        )));
    }
    let (scaling, z) = Scaling::fit(design.x(), design.column_names())?;
    let p = z.ncols();
    if design.n_rows() <= p {
        return Err(Error::SingularDesign(format!("{} rows for {p} coefficients", design.n_rows())));
    }
    let y = design.y();
    let exchangeable = opts.working == WorkingCorrelation::Exchangeable;
    let predict = |beta: &DVector<f64>| -> Vec<f64> { (&z * beta).iter().map(|e| sigmoid(*e)).collect() };

    let mut beta = DVector::zeros(p);
    let mut alpha = 0.0;
    let mut converged = false;
    let mut n_iter = 0;
    while n_iter < opts.max_iter {
        n_iter += 1;
        let mu = predict(&beta);
        if exchangeable && n_iter > 1 {
            alpha = estimate_alpha(y, &mu, &groups, p);
        }
        let acc = accumulate(&z, y, &mu, &groups, alpha);
        let step = solve_spd(&acc.bread)?.solve(&acc.score);
        beta += &step;
        let size = beta.amax();
        if !size.is_finite() || size > opts.separation_bound {
            return Err(Error::SeparationDetected(format!(
                "standardized coefficient reached {size:.3} at iteration {n_iter}"
            )));
        }
        trace!("gee iteration {n_iter}: |step| = {:e}, alpha = {alpha:.4}", step.amax());
        if step.amax() <= opts.tol * size.max(1.0) {
            converged = true;
            break;
        }
    }

    let mu = predict(&beta);
    if exchangeable {
        alpha = estimate_alpha(y, &mu, &groups, p);
    }
    let acc = accumulate(&z, y, &mu, &groups, alpha);
    let bread_inv = solve_spd(&acc.bread)?.inverse();
    let robust_z = {
        let v = &bread_inv * &acc.meat * &bread_inv;
        (&v + v.transpose()) * 0.5
    };
    let t = scaling.back_transform();
    let to_original = |c: &DMatrix<f64>| {
        let v = &t * c * t.transpose();
        (&v + v.transpose()) * 0.5
    };
    let qic_value = pan_qic(y, &mu, &acc.indep_info, &robust_z);
    let fit = GeeFit {
        column_names: design.column_names().to_vec(),
        terms: design.terms().to_vec(),
        beta: &t * &beta,
        robust_cov: to_original(&robust_z),
        model_cov: to_original(&bread_inv),
        working_corr: opts.working,
        alpha,
        n_iter,
        converged,
        qic: qic_value,
        n_obs: design.n_rows(),
        n_clusters: groups.len(),
        fitted: mu,
        y: y.to_vec(),
        indep_info_scaled: acc.indep_info,
        robust_cov_scaled: robust_z,
    };
    if !converged {
        return Err(Error::NotConverged { fit: Box::new(fit) });
    }
    Ok(fit)
}


#[cfg(test)]
mod props {
    use super::tests::{design_from_rows, random_logistic};
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clustered(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_logistic(&mut rng, 150, 3);
        let ids = (0..150).map(|i| format!("c{:02}", i % 15)).collect();
        (x, y, ids)
    }

    fn working() -> impl Strategy<Value = WorkingCorrelation> {
        prop::sample::select(vec![WorkingCorrelation::Independence, WorkingCorrelation::Exchangeable])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rescaling_a_column(seed in any::<u64>(), c in 0.01f64..100.0, w in working()) {
            let (x, y, ids) = clustered(seed);
            let opts = GeeOptions::with_working(w);
            let base = gee_fit(&design_from_rows(&x, &y, ids.clone()), &opts);
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            let xs: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[1] * c, r[2]]).collect();
            let fit = gee_fit(&design_from_rows(&xs, &y, ids), &opts).unwrap();
            prop_assert!((fit.beta[1] * c - base.beta[1]).abs() <= 1e-8 * base.beta[1].abs().max(1.0));
            for (a, b) in fit.fitted.iter().zip(&base.fitted) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }

        #[test]
        fn permuting_rows_and_relabelling(seed in any::<u64>(), w in working()) {
            let (x, y, ids) = clustered(seed);
            let opts = GeeOptions::with_working(w);
            let base = gee_fit(&design_from_rows(&x, &y, ids.clone()), &opts);
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            let mut order: Vec<usize> = (0..x.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
            let px: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
            let py: Vec<f64> = order.iter().map(|&i| y[i]).collect();
            let pid: Vec<String> = order.iter().map(|&i| format!("z{}", ids[i].chars().rev().collect::<String>())).collect();
            let fit = gee_fit(&design_from_rows(&px, &py, pid), &opts).unwrap();
            prop_assert!((&fit.beta - &base.beta).amax() <= 1e-10);
            prop_assert!((&fit.robust_cov - &base.robust_cov).amax() <= 1e-10);
        }

        #[test]
        fn robust_cov_is_symmetric_psd(seed in any::<u64>(), w in working()) {
            let (x, y, ids) = clustered(seed);
            let fit = gee_fit(&design_from_rows(&x, &y, ids), &GeeOptions::with_working(w));
            prop_assume!(fit.is_ok());
            let v = fit.unwrap().robust_cov;
            prop_assert!((&v - v.transpose()).amax() <= 1e-12);
            let eig = v.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|e| *e >= -1e-10), "{:?}", eig);
        }
    }
}
