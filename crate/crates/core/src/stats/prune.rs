use std::collections::BTreeMap;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::gee::{gee_fit, GeeOptions};
use super::pearson::pearson_matrix;
use super::table::SampleTable;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneOptions {
    pub r_threshold: f64,
    pub alpha: f64,
    pub gee: GeeOptions,
}

impl Default for PruneOptions {
    fn default() -> Self {
        Self { r_threshold: 0.8, alpha: 0.05, gee: GeeOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum PruneReason {
    Constant,
    /// `qic_*` is `None` when that single-feature model could not be fitted.
    Collinear { partner: String, r: f64, p: f64, qic_dropped: Option<f64>, qic_kept: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub dropped: String,
    #[serde(flatten)]
    pub reason: PruneReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    /// Indices into the table's features, in table order.
    pub retained: Vec<usize>,
    pub log: Vec<PruneDecision>,
}

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|v| *v == col[0])
}

/// Repeatedly takes the most correlated significant pair and discards the
/// member whose single-feature GEE has the larger QIC. A model that cannot
/// be fitted counts as infinitely bad; on a tie the later column goes.
pub fn prune_collinear(table: &SampleTable, opts: &PruneOptions) -> Result<PruneOutcome> {
    let mut log = Vec::new();
    let mut retained: Vec<usize> = Vec::new();
    for (j, col) in table.features.iter().enumerate() {
        if is_constant(col) {
            warn!("dropping constant feature {}", table.feature_names[j]);
            log.push(PruneDecision { dropped: table.feature_names[j].clone(), reason: PruneReason::Constant });
        } else {
            retained.push(j);
        }
    }

    let mut qic_cache: BTreeMap<usize, Option<f64>> = BTreeMap::new();
    let mut single_qic = |j: usize| -> Result<Option<f64>> {
        if let Some(q) = qic_cache.get(&j) {
            return Ok(*q);
        }
        let q = match gee_fit(&table.design(&[j], false)?, &opts.gee) {
            Ok(fit) => Some(fit.qic),
            Err(e) if e.is_numerical() => {
                warn!("single-feature model for {} failed: {e}", table.feature_names[j]);
                None
            }
            Err(e) => return Err(e),
        };
        qic_cache.insert(j, q);
        Ok(q)
    };

    while retained.len() >= 2 {
        let cols: Vec<&[f64]> = retained.iter().map(|&j| table.features[j].as_slice()).collect();
        let names: Vec<&str> = retained.iter().map(|&j| table.feature_names[j].as_str()).collect();
        let m = pearson_matrix(&cols, &names)?;
        let mut worst: Option<(usize, usize)> = None;
        for a in 0..retained.len() {
            for b in (a + 1)..retained.len() {
                let r = m.r[(a, b)].abs();
                if r > opts.r_threshold && m.p[(a, b)] < opts.alpha && worst.is_none_or(|(i, k)| r > m.r[(i, k)].abs()) {
                    worst = Some((a, b));
                }
            }
        }
        let Some((a, b)) = worst else { break };
        let (ja, jb) = (retained[a], retained[b]);
        let (qa, qb) = (single_qic(ja)?, single_qic(jb)?);
        let worse = |q: Option<f64>| q.unwrap_or(f64::INFINITY);
        // Drop `a` only if it is strictly worse; ties and double failures drop the later column.
        let (drop, keep, q_drop, q_keep) =
            if worse(qa) > worse(qb) { (a, b, qa, qb) } else { (b, a, qb, qa) };
        let decision = PruneDecision {
            dropped: table.feature_names[retained[drop]].clone(),
            reason: PruneReason::Collinear {
                partner: table.feature_names[retained[keep]].clone(),
                r: m.r[(a, b)],
                p: m.p[(a, b)],
                qic_dropped: q_drop,
                qic_kept: q_keep,
            },
        };
        info!("pruning {} (r = {:.3} with {})", decision.dropped, m.r[(a, b)], table.feature_names[retained[keep]]);
        log.push(decision);
        retained.remove(drop);
    }
    Ok(PruneOutcome { retained, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn table(cols: Vec<(&str, Vec<f64>)>, y: Vec<f64>, clusters: usize) -> SampleTable {
        let n = y.len();
        let ids = (0..n).map(|i| format!("c{}", i % clusters)).collect();
        let (names, features) = cols.into_iter().map(|(n, c)| (n.to_string(), c)).unzip();
        SampleTable::new(names, features, y, ids).unwrap()
    }

    fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn bernoulli(rng: &mut ChaCha8Rng, eta: impl Iterator<Item = f64>) -> Vec<f64> {
        eta.map(|e| if rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()) { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn duplicate_column_keeps_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = normal(&mut rng, 200);
        let z = normal(&mut rng, 200);
        let y = bernoulli(&mut rng, x.iter().map(|v| 0.8 * v));
        let t = table(vec![("x", x.clone()), ("z", z), ("x copy", x)], y, 20);
        let out = prune_collinear(&t, &PruneOptions::default()).unwrap();
        assert_eq!(out.retained, vec![0, 1]);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].dropped, "x copy");
    }

    #[test]
    fn uncorrelated_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| normal(&mut rng, 150)).collect();
        let y = bernoulli(&mut rng, cols[0].iter().map(|v| 0.5 * v));
        let t = table(vec![("a", cols[0].clone()), ("b", cols[1].clone()), ("c", cols[2].clone()), ("d", cols[3].clone())], y, 15);
        let out = prune_collinear(&t, &PruneOptions::default()).unwrap();
        assert_eq!(out.retained, vec![0, 1, 2, 3]);
        assert!(out.log.is_empty());
    }

    #[test]
    fn constant_column_is_logged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = normal(&mut rng, 100);
        let y = bernoulli(&mut rng, x.iter().map(|v| 0.5 * v));
        let t = table(vec![("flat", vec![2.0; 100]), ("x", x)], y, 10);
        let out = prune_collinear(&t, &PruneOptions::default()).unwrap();
        assert_eq!(out.retained, vec![1]);
        assert_eq!(out.log[0].reason, PruneReason::Constant);
    }

    /// a and b each carry part of the signal; c is the shared component alone.
    fn correlated_triplet(seed: u64) -> SampleTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 400;
        let w = normal(&mut rng, n);
        let sa = normal(&mut rng, n);
        let sb = normal(&mut rng, n);
        let a: Vec<f64> = w.iter().zip(&sa).map(|(w, s)| w + 0.4 * s).collect();
        let b: Vec<f64> = w.iter().zip(&sb).map(|(w, s)| w + 0.4 * s).collect();
        let y = bernoulli(&mut rng, sa.iter().zip(&sb).map(|(a, b)| 1.5 * (a + b)));
        table(vec![("a", a), ("b", b), ("c", w)], y, 20)
    }

    #[test]
    fn noise_member_goes_first() {
        let mut first_is_noise = 0;
        for seed in 0..100 {
            let out = prune_collinear(&correlated_triplet(seed), &PruneOptions::default()).unwrap();
            first_is_noise += (out.log.first().map(|d| d.dropped.as_str()) == Some("c")) as usize;
        }
        assert!(first_is_noise >= 90, "{first_is_noise}/100");
    }

    #[test]
    fn no_significant_pair_survives() {
        for seed in 0..10 {
            let t = correlated_triplet(seed);
            let out = prune_collinear(&t, &PruneOptions::default()).unwrap();
            let cols: Vec<&[f64]> = out.retained.iter().map(|&j| t.features[j].as_slice()).collect();
            let names = vec![""; cols.len()];
            let m = pearson_matrix(&cols, &names).unwrap();
            for a in 0..cols.len() {
                for b in (a + 1)..cols.len() {
                    assert!(!(m.r[(a, b)].abs() > 0.8 && m.p[(a, b)] < 0.05));
                }
            }
        }
    }
}
