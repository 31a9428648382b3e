use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "Intercept";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TermKind {
    Intercept,
    Numeric,
    /// Dummy-coded; `levels[0]` is the reference and has no column.
    Categorical { levels: Vec<String> },
}

/// A named model term and the design columns it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub kind: TermKind,
    pub columns: Vec<usize>,
}

impl Term {
    pub fn is_intercept(&self) -> bool {
        matches!(self.kind, TermKind::Intercept)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    column_names: Vec<String>,
    terms: Vec<Term>,
    y: Vec<f64>,
    clusters: Vec<String>,
}

impl DesignMatrix {
    pub fn builder(y: Vec<f64>, clusters: Vec<String>) -> DesignBuilder {
        DesignBuilder { y, clusters, columns: Vec::new(), names: Vec::new(), terms: Vec::new(), error: None }
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn clusters(&self) -> &[String] {
        &self.clusters
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.iter().any(Term::is_intercept)
    }

    /// Row indices grouped by cluster, clusters in sorted label order.
    pub fn cluster_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.clusters.iter().enumerate() {
            groups.entry(c.as_str()).or_default().push(i);
        }
        groups.into_values().collect()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_groups().len()
    }

    /// The same rows restricted to the given terms, in the given order.
    pub fn select_terms(&self, keep: &[usize]) -> DesignMatrix {
        let mut cols = Vec::new();
        let mut terms = Vec::new();
        for &t in keep {
            let term = &self.terms[t];
            let start = cols.len();
            cols.extend(&term.columns);
            terms.push(Term { name: term.name.clone(), kind: term.kind.clone(), columns: (start..cols.len()).collect() });
        }
        DesignMatrix {
            x: self.x.select_columns(&cols),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            terms,
            y: self.y.clone(),
            clusters: self.clusters.clone(),
        }
    }

    /// Drops one term; the others keep their order.
    pub fn without_term(&self, index: usize) -> DesignMatrix {
        let keep: Vec<usize> = (0..self.terms.len()).filter(|&t| t != index).collect();
        self.select_terms(&keep)
    }
}

pub struct DesignBuilder {
    y: Vec<f64>,
    clusters: Vec<String>,
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
    terms: Vec<Term>,
    error: Option<Error>,
}

impl DesignBuilder {
    fn push_term(&mut self, name: &str, kind: TermKind, cols: Vec<(String, Vec<f64>)>) {
        if self.error.is_some() {
            return;
        }
        if self.terms.iter().any(|t| t.name == name) {
            self.error = Some(Error::InvalidDesign(format!("duplicate term {name:?}")));
            return;
        }
        let start = self.columns.len();
        for (col_name, values) in cols {
            if values.len() != self.y.len() {
                self.error = Some(Error::InvalidDesign(format!(
                    "column {col_name:?} has {} rows, expected {}",
                    values.len(),
                    self.y.len()
                )));
                return;
            }
            self.names.push(col_name);
            self.columns.push(values);
        }
        self.terms.push(Term { name: name.to_string(), kind, columns: (start..self.columns.len()).collect() });
    }

    pub fn intercept(mut self) -> Self {
        let n = self.y.len();
        self.push_term(INTERCEPT, TermKind::Intercept, vec![(INTERCEPT.to_string(), vec![1.0; n])]);
        self
    }

    pub fn numeric(mut self, name: &str, values: &[f64]) -> Self {
        self.push_term(name, TermKind::Numeric, vec![(name.to_string(), values.to_vec())]);
        self
    }

    /// Treatment coding against the first level in order of appearance.
    pub fn categorical<S: AsRef<str>>(mut self, name: &str, values: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        for v in values {
            if !levels.iter().any(|l| l == v.as_ref()) {
                levels.push(v.as_ref().to_string());
            }
        }
        if levels.len() < 2 {
            self.error.get_or_insert(Error::InvalidDesign(format!("categorical term {name:?} needs at least 2 levels")));
            return self;
        }
        let cols = levels[1..]
            .iter()
            .map(|level| {
                let dummy = values.iter().map(|v| if v.as_ref() == level { 1.0 } else { 0.0 }).collect();
                (format!("{name}={level}"), dummy)
            })
            .collect();
        self.push_term(name, TermKind::Categorical { levels }, cols);
        self
    }

    pub fn build(self) -> Result<DesignMatrix> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let n = self.y.len();
        if n == 0 {
            return Err(Error::InsufficientData("design has no rows".into()));
        }
        if self.clusters.len() != n {
            return Err(Error::InvalidDesign(format!("{} cluster ids for {n} rows", self.clusters.len())));
        }
        if self.columns.is_empty() {
            return Err(Error::InvalidDesign("design has no columns".into()));
        }
        if let Some(v) = self.y.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::InvalidDesign(format!("response must be 0 or 1, found {v}")));
        }
        for (name, col) in self.names.iter().zip(&self.columns) {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDesign(format!("column {name:?} has non-finite values")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidDesign(format!("duplicate column name {dup:?}")));
        }
        let x = DMatrix::from_fn(n, self.columns.len(), |i, j| self.columns[j][i]);
        Ok(DesignMatrix { x, column_names: self.names, terms: self.terms, y: self.y, clusters: self.clusters })
    }
}
