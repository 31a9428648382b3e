use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use crate::error::{Error, Result};

/// Per-row labels of an optional categorical predictor (the study inducer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub name: String,
    pub values: Vec<String>,
}

/// Numeric feature columns plus response and cluster ids, before any model is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub clusters: Vec<String>,
    pub grouping: Option<Grouping>,
}

impl SampleTable {
    pub fn new(feature_names: Vec<String>, features: Vec<Vec<f64>>, y: Vec<f64>, clusters: Vec<String>) -> Result<Self> {
        let n = y.len();
        if feature_names.len() != features.len() {
            return Err(Error::InvalidDesign(format!("{} names for {} columns", feature_names.len(), features.len())));
        }
        if clusters.len() != n || features.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidDesign("columns differ in length".into()));
        }
        Ok(Self { feature_names, features, y, clusters, grouping: None })
    }

    pub fn with_grouping(mut self, name: impl Into<String>, values: Vec<String>) -> Result<Self> {
        if values.len() != self.y.len() {
            return Err(Error::InvalidDesign("grouping differs in length".into()));
        }
        self.grouping = Some(Grouping { name: name.into(), values });
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Intercept, the chosen features in the given order, then the grouping term if requested.
    pub fn design(&self, features: &[usize], include_grouping: bool) -> Result<DesignMatrix> {
        let mut b = DesignMatrix::builder(self.y.clone(), self.clusters.clone()).intercept();
        for &j in features {
            b = b.numeric(&self.feature_names[j], &self.features[j]);
        }
        if include_grouping {
            if let Some(g) = &self.grouping {
                b = b.categorical(&g.name, &g.values);
            }
        }
        b.build()
    }
}
