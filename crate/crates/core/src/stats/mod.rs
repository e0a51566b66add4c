//! Numerical core: weighted regression, permutation inference,
//! reliability, effect sizes and normal-quantile diagnostics.

pub mod design;
pub mod icc;
pub mod linalg;
pub mod permutation;
pub mod quantile;
pub mod wls;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{design_matrix, Covariate, Design, DesignSpec};
pub use icc::{icc1, icc1_summary, parse_annotations, IccSummary, RatingsMatrix};
pub use linalg::{Matrix, Qr};
pub use permutation::{permutation_test, PermutationConfig, PermutationOutcome, DEFAULT_N_PERM};
pub use quantile::{norm_quantile, qq_data, QqPoint};
pub use wls::{adjusted_r2, wls_fit, wls_fit_named, RegressionResult, Stars};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

pub fn descriptives(values: &[f64]) -> Result<Descriptives> {
    if values.is_empty() {
        return Err(Error::invalid("descriptives of an empty sample"));
    }
    if values.len() < 2 {
        return Err(Error::invalid("sample sd needs at least two values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Descriptives {
        n: values.len(),
        mean,
        sd: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Standardized mean difference.
pub fn cohens_d(group_difference: f64, pooled_sd: f64) -> Result<f64> {
    if !(pooled_sd > 0.0) {
        return Err(Error::invalid(format!(
            "pooled sd must be positive, got {pooled_sd}"
        )));
    }
    Ok(group_difference / pooled_sd)
}

/// `sqrt(((n₁−1)s₁² + (n₂−1)s₂²) / (n₁+n₂−2))`.
pub fn pooled_sd(a: &[f64], b: &[f64]) -> Result<f64> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 || n1 + n2 < 3 {
        return Err(Error::invalid(
            "pooled sd needs both groups non-empty and at least three values",
        ));
    }
    let ss = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    Ok(((ss(a) + ss(b)) / (n1 + n2 - 2) as f64).sqrt())
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Median; even-length samples average the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptives_basic() {
        let d = descriptives(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((d.mean, d.sd, d.min, d.max), (2.0, 1.0, 1.0, 3.0));
        assert_eq!(descriptives(&[4.0; 5]).unwrap().sd, 0.0);
        assert!(descriptives(&[]).is_err());
    }

    #[test]
    fn cohens_d_discussion_values() {
        assert!((cohens_d(5.47, 3.53).unwrap() - 1.55).abs() <= 0.005);
        assert!((cohens_d(2.30, 1.23).unwrap() - 1.87).abs() <= 0.005);
        assert_eq!(cohens_d(0.0, 2.0).unwrap(), 0.0);
        assert!(cohens_d(1.0, 0.0).is_err());
        assert!(cohens_d(1.0, -1.0).is_err());
    }

    #[test]
    fn pooled_sd_hand_value() {
        // ss(a) = 2, ss(b) = 8, df = 4 → sqrt(2.5).
        let s = pooled_sd(&[1.0, 2.0, 3.0], &[2.0, 6.0, 4.0]).unwrap();
        assert!((s - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[0.0, 71.0]), Some(35.5));
        assert_eq!(median(&[9.0, 8.0]), Some(8.5));
        assert_eq!(median(&[5.0]), Some(5.0));
        assert_eq!(median(&[]), None);
    }
}
