use nalgebra::DMatrix;

use super::dist::t_two_sided_p;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PearsonMatrix {
    pub r: DMatrix<f64>,
    /// Two-sided p-values against Student-t with n − 2 degrees of freedom.
    pub p: DMatrix<f64>,
}

/// Pairwise Pearson correlations of equally long columns.
pub fn pearson_matrix(columns: &[&[f64]], names: &[&str]) -> Result<PearsonMatrix> {
    let k = columns.len();
    let n = columns.first().map_or(0, |c| c.len());
    if n < 3 {
        return Err(Error::InsufficientData(format!("correlation needs at least 3 rows, got {n}")));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidDesign("columns differ in length".into()));
    }
    let centred: Vec<(Vec<f64>, f64)> = columns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mean = c.iter().sum::<f64>() / n as f64;
            let d: Vec<f64> = c.iter().map(|v| v - mean).collect();
            let ss = d.iter().map(|v| v * v).sum::<f64>();
            if !(ss > 0.0) {
                let name = names.get(j).copied().unwrap_or("?");
                return Err(Error::DegenerateColumn(name.to_string()));
            }
            Ok((d, ss.sqrt()))
        })
        .collect::<Result<_>>()?;

    let df = (n - 2) as f64;
    let mut r = DMatrix::identity(k, k);
    let mut p = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let (a, na) = &centred[i];
            let (b, nb) = &centred[j];
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let rij = (dot / (na * nb)).clamp(-1.0, 1.0);
            let pij = if rij.abs() >= 1.0 {
                0.0
            } else {
                t_two_sided_p(rij * (df / (1.0 - rij * rij)).sqrt(), df)
            };
            r[(i, j)] = rij;
            r[(j, i)] = rij;
            p[(i, j)] = pij;
            p[(j, i)] = pij;
        }
    }
    Ok(PearsonMatrix { r, p })
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bounded_and_symmetric(cols in prop::collection::vec(prop::collection::vec(-100f64..100.0, 12), 2..6)) {
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            let names: Vec<String> = (0..cols.len()).map(|i| format!("c{i}")).collect();
            let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let m = pearson_matrix(&refs, &names).unwrap();
            prop_assert_eq!(&m.r, &m.r.transpose());
            prop_assert_eq!(&m.p, &m.p.transpose());
            prop_assert!(m.r.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!(m.p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
