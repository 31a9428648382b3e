use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use super::gee::{gee_fit, GeeFit, GeeOptions};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCandidate {
    pub removed: String,
    pub qic: Option<f64>,
    pub error: Option<String>,
}

/// One visited model, the removals tried from it and the one accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub terms: Vec<String>,
    pub qic: f64,
    pub candidates: Vec<StepCandidate>,
    pub accepted: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StepwiseResult {
    pub fit: GeeFit,
    pub design: DesignMatrix,
    pub trace: Vec<StepRecord>,
}

/// Backward elimination on QIC. Each step tries removing every non-intercept
/// term (a categorical term as a whole) and accepts the best removal only if
/// it lowers QIC. Candidates that fail numerically are skipped.
pub fn backward_stepwise(design: &DesignMatrix, opts: &GeeOptions) -> Result<StepwiseResult> {
    let mut current = design.clone();
    let mut fit = gee_fit(&current, opts)?;
    let mut trace = Vec::new();
    loop {
        let mut record = StepRecord {
            step: trace.len(),
            terms: current.terms().iter().map(|t| t.name.clone()).collect(),
            qic: fit.qic,
            candidates: Vec::new(),
            accepted: None,
        };
        let mut best: Option<(f64, DesignMatrix, GeeFit)> = None;
        for (t, term) in current.terms().iter().enumerate() {
            if term.is_intercept() || current.terms().len() == 1 {
                continue;
            }
            let candidate = current.without_term(t);
            match gee_fit(&candidate, opts) {
                Ok(f) => {
                    record.candidates.push(StepCandidate { removed: term.name.clone(), qic: Some(f.qic), error: None });
                    if best.as_ref().is_none_or(|(q, _, _)| f.qic < *q) {
                        best = Some((f.qic, candidate, f));
                    }
                }
                Err(e) if e.is_numerical() => {
                    warn!("skipping removal of {}: {e}", term.name);
                    record.candidates.push(StepCandidate { removed: term.name.clone(), qic: None, error: Some(e.to_string()) });
                }
                Err(e) => return Err(e),
            }
        }
        match best {
            Some((q, candidate, f)) if q < fit.qic => {
                let removed = current.terms().iter().find(|t| candidate.term(&t.name).is_none()).map(|t| t.name.clone());
                debug!("step {}: removing {removed:?}, QIC {:.3} -> {q:.3}", record.step, fit.qic);
                record.accepted = removed;
                trace.push(record);
                current = candidate;
                fit = f;
            }
            _ => {
                trace.push(record);
                return Ok(StepwiseResult { fit, design: current, trace });
            }
        }
    }
}
