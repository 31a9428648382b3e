//! Model summaries: a serializable report and its markdown rendering.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::design::TermKind;
use super::gee::{GeeFit, WorkingCorrelation};
use super::prune::{PruneDecision, PruneReason};
use super::stepwise::StepRecord;
use super::wald::{wald_test, Contrast, Z_95};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub term: String,
    pub df: usize,
    /// Coefficient and interval for single-column terms only.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci95_low: Option<f64>,
    pub ci95_high: Option<f64>,
    pub wald_chi2: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocSection {
    pub term: String,
    pub joint_p: f64,
    pub contrasts: Vec<Contrast>,
    /// Group-level contrasts such as objective vs subjective assessment.
    pub extra: Vec<Contrast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub title: String,
    pub datasets: Vec<String>,
    pub n_rows: usize,
    pub n_clusters: usize,
    pub n_drowsy: usize,
    pub working_correlation: WorkingCorrelation,
    pub exchangeable_alpha: Option<f64>,
    pub n_iter: usize,
    pub converged: bool,
    pub qic: f64,
    pub terms: Vec<TermRow>,
    pub posthoc: Option<PosthocSection>,
    pub posthoc_note: Option<String>,
    pub pruning_log: Vec<PruneDecision>,
    pub stepwise_trace: Option<Vec<StepRecord>>,
}

/// Wald rows for every term of a converged fit.
pub fn term_rows(fit: &GeeFit) -> Result<Vec<TermRow>> {
    fit.terms
        .iter()
        .map(|term| {
            let w = wald_test(fit, term)?;
            let single = match (&term.kind, term.columns.as_slice()) {
                (TermKind::Categorical { .. }, _) => None,
                (_, [c]) => Some((fit.beta[*c], fit.se(*c))),
                _ => None,
            };
            Ok(TermRow {
                term: term.name.clone(),
                df: w.df,
                estimate: single.map(|(b, _)| b),
                se: single.map(|(_, s)| s),
                ci95_low: single.map(|(b, s)| b - Z_95 * s),
                ci95_high: single.map(|(b, s)| b + Z_95 * s),
                wald_chi2: w.chi2,
                p_value: w.p_value,
            })
        })
        .collect()
}

/// Two decimals, or one significant digit for magnitudes below 0.01.
pub fn fmt_estimate(v: f64) -> String {
    let a = v.abs();
    if a < 1e-12 {
        return "0.0".into();
    }
    let s = if a >= 0.01 {
        format!("{v:.2}")
    } else {
        let decimals = (-a.log10()).floor() as usize + 1;
        format!("{v:.decimals$}")
    };
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.0".into()
    } else {
        s
    }
}

/// Two significant digits without the leading zero; `<.0001` below that.
pub fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        return "<.0001".into();
    }
    if p >= 0.995 {
        return "1.0".into();
    }
    let decimals = (-p.log10()).floor() as usize + 2;
    let s = format!("{p:.decimals$}");
    let s = s.trim_end_matches('0');
    s.strip_prefix('0').unwrap_or(s).to_string()
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// `p = .007` or `p < .0001`.
pub fn fmt_p_inline(p: f64) -> String {
    let s = fmt_p(p);
    match s.strip_prefix('<') {
        Some(rest) => format!("p < {rest}"),
        None => format!("p = {s}"),
    }
}

pub fn fmt_chi2(chi2: f64, df: usize) -> String {
    format!("χ²({df}) = {chi2:.2}")
}

/// `OR = 12.16, 95%CI: [3.28, 45.12]`
pub fn fmt_odds_ratio(c: &Contrast) -> String {
    format!("OR = {:.2}, 95%CI: [{:.2}, {:.2}]", c.odds_ratio, c.or_ci95_low, c.or_ci95_high)
}

fn fmt_opt_qic(q: Option<f64>) -> String {
    q.map_or_else(|| "failed".to_string(), |q| format!("{q:.2}"))
}

impl ModelReport {
    /// Markdown view; depends on nothing but the report itself.
    pub fn render_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# {}\n", self.title);
        let _ = writeln!(
            md,
            "Binary logistic GEE, {} working correlation. {} segments from {} participants ({} drowsy); datasets: {}.",
            self.working_correlation,
            self.n_rows,
            self.n_clusters,
            self.n_drowsy,
            self.datasets.join(", ")
        );
        let alpha = self.exchangeable_alpha.map_or(String::new(), |a| format!(", α = {a:.3}"));
        let _ = writeln!(md, "QIC = {:.2}, {} iterations{alpha}.\n", self.qic, self.n_iter);

        md.push_str("| Independent Variable | Estimate [95% CI] | χ²-value | p-value |\n");
        md.push_str("|---|---|---|---|\n");
        for row in self.terms.iter().filter(|r| r.term != super::design::INTERCEPT) {
            let estimate = match (row.estimate, row.ci95_low, row.ci95_high) {
                (Some(b), Some(lo), Some(hi)) => {
                    format!("{} [{}, {}]", fmt_estimate(b), fmt_estimate(lo), fmt_estimate(hi))
                }
                _ => "-".to_string(),
            };
            let _ = writeln!(
                md,
                "| {} | {} | {} | {}{} |",
                row.term,
                estimate,
                fmt_chi2(row.wald_chi2, row.df),
                fmt_p(row.p_value),
                significance_stars(row.p_value)
            );
        }
        md.push_str("\n** p < .05, * p < .1\n");

        if let Some(section) = &self.posthoc {
            let _ = writeln!(md, "\n## Post-hoc comparisons: {}\n", section.term);
            for c in section.contrasts.iter().chain(&section.extra) {
                let _ = writeln!(
                    md,
                    "- {}: {}, {}, {}",
                    c.label,
                    fmt_odds_ratio(c),
                    fmt_chi2(c.chi2, 1),
                    fmt_p_inline(c.p_value)
                );
            }
        }
        if let Some(note) = &self.posthoc_note {
            let _ = writeln!(md, "\n{note}");
        }

        if !self.pruning_log.is_empty() {
            md.push_str("\n## Collinearity pruning\n\n");
            for d in &self.pruning_log {
                match &d.reason {
                    PruneReason::Constant => {
                        let _ = writeln!(md, "- {}: constant, dropped", d.dropped);
                    }
                    PruneReason::Collinear { partner, r, p, qic_dropped, qic_kept } => {
                        let _ = writeln!(
                            md,
                            "- {}: r = {r:.2} with {partner} ({}), QIC {} vs {}",
                            d.dropped,
                            fmt_p_inline(*p),
                            fmt_opt_qic(*qic_dropped),
                            fmt_opt_qic(*qic_kept)
                        );
                    }
                }
            }
        }

        if let Some(trace) = &self.stepwise_trace {
            md.push_str("\n## Backward stepwise selection\n\n");
            md.push_str("| Step | QIC | Removed | Terms |\n|---|---|---|---|\n");
            for s in trace {
                let _ = writeln!(
                    md,
                    "| {} | {:.2} | {} | {} |",
                    s.step,
                    s.qic,
                    s.accepted.as_deref().unwrap_or("-"),
                    s.terms.join(", ")
                );
            }
        }
        md
    }
}
