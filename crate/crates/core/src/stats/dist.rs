//! Tail probabilities for the Wald and correlation tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Upper tail `P(X > x)` of a χ² distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    ChiSquared::new(df).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}

/// Two-sided p-value of a Student-t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    StudentsT::new(0.0, 1.0, df)
        .map(|d| (2.0 * d.sf(t.abs())).min(1.0))
        .unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_critical_values() {
        // 95th percentiles from standard tables.
        assert!((chi2_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-10);
        assert!((chi2_sf(7.814_727_903_251_178, 3.0) - 0.05).abs() < 1e-10);
        assert!((chi2_sf(6.634_896_601_021_214, 1.0) - 0.01).abs() < 1e-10);
        assert_eq!(chi2_sf(0.0, 1.0), 1.0);
    }

    #[test]
    fn chi2_one_df_matches_normal_tail() {
        // χ²(1) sf at z² equals the two-sided normal tail: 0.0455002638963584 for z = 2.
        assert!((chi2_sf(4.0, 1.0) - 0.045_500_263_896_358_4).abs() < 1e-10);
    }

    #[test]
    fn t_critical_values() {
        assert!((t_two_sided_p(2.228_138_851_986_274, 10.0) - 0.05).abs() < 1e-10);
        assert!((t_two_sided_p(12.706_204_736_174_7, 1.0) - 0.05).abs() < 1e-10);
        // df = 2 has the closed form p = 1 - |t| / sqrt(2 + t²).
        let t = 1.7_f64;
        assert!((t_two_sided_p(t, 2.0) - (1.0 - t / (2.0 + t * t).sqrt())).abs() < 1e-12);
        assert_eq!(t_two_sided_p(0.0, 5.0), 1.0);
    }
}
