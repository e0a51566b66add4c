//! Weighted least squares with parametric t inference.
//!
//! The fit solves `min Σ wᵢ (yᵢ − xᵢβ)²` by factorizing `W^½ X` with
//! Householder QR. The residual variance uses the raw weights, so
//! rescaling all weights by a constant leaves β, standard errors, t
//! statistics and R² unchanged.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::linalg::{Matrix, Qr};
use crate::error::{Error, Result};

/// Significance markers: `*` p<0.1, `**` p<0.05, `***` p<0.01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stars {
    None,
    One,
    Two,
    Three,
}

impl Stars {
    pub fn from_p(p: f64) -> Self {
        if p < 0.01 {
            Stars::Three
        } else if p < 0.05 {
            Stars::Two
        } else if p < 0.1 {
            Stars::One
        } else {
            // NaN lands here too.
            Stars::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    #[serde(with = "crate::util::lossy_f64_vec")]
    pub std_errors: Vec<f64>,
    #[serde(with = "crate::util::lossy_f64_vec")]
    pub t_stats: Vec<f64>,
    #[serde(with = "crate::util::lossy_f64_vec")]
    pub p_values: Vec<f64>,
    pub stars: Vec<Stars>,
    pub r2: f64,
    pub adj_r2: f64,
    pub residual_se: f64,
    pub df_resid: usize,
    pub n: usize,
    /// `yᵢ − xᵢβ`.
    pub residuals: Vec<f64>,
    /// `√wᵢ (yᵢ − xᵢβ)`; divided by `residual_se` these are the Pearson residuals.
    pub weighted_residuals: Vec<f64>,
    pub permutation_p: Option<f64>,
}

impl RegressionResult {
    pub fn n_columns(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }
}

pub(crate) fn check_inputs(x: &Matrix, y: &[f64], w: &[f64]) -> Result<()> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n || w.len() != n {
        return Err(Error::invalid(format!(
            "dimension mismatch: X has {n} rows, y {} values, w {} weights",
            y.len(),
            w.len()
        )));
    }
    if p == 0 {
        return Err(Error::invalid("design matrix has no columns"));
    }
    if n <= p {
        return Err(Error::invalid(format!(
            "need more observations than columns ({n} <= {p})"
        )));
    }
    if let Some(i) = w.iter().position(|&wi| !(wi > 0.0) || !wi.is_finite()) {
        return Err(Error::invalid(format!(
            "weight {i} must be positive and finite, got {}",
            w[i]
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("response contains non-finite values"));
    }
    Ok(())
}

pub(crate) fn weighted_design(x: &Matrix, w: &[f64]) -> Matrix {
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        for j in 0..x.cols() {
            xw.set(i, j, x.get(i, j) * s);
        }
    }
    xw
}

/// Weighted total sum of squares about the weighted mean.
pub(crate) fn weighted_tss(y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    y.iter().zip(w).map(|(yi, wi)| wi * (yi - mean).powi(2)).sum()
}

/// Fit `y ~ X` by weighted least squares. `X` must already contain the
/// intercept column if one is wanted.
pub fn wls_fit(x: &Matrix, y: &[f64], w: &[f64]) -> Result<RegressionResult> {
    wls_fit_named(x, y, w, None)
}

pub fn wls_fit_named(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    names: Option<&[String]>,
) -> Result<RegressionResult> {
    check_inputs(x, y, w)?;
    let (n, p) = (x.rows(), x.cols());
    let names = match names {
        Some(names) if names.len() == p => names.to_vec(),
        Some(names) => {
            return Err(Error::invalid(format!(
                "{} column names for {p} columns",
                names.len()
            )))
        }
        None => (0..p).map(|j| format!("x{j}")).collect(),
    };

    let tss = weighted_tss(y, w);
    if !(tss > 0.0) {
        return Err(Error::Degenerate(
            "weighted total sum of squares is zero; R² undefined".into(),
        ));
    }

    let qr = Qr::new(&weighted_design(x, w))?;
    let yw: Vec<f64> = y.iter().zip(w).map(|(yi, wi)| yi * wi.sqrt()).collect();
    let beta = qr.solve(&yw);

    let fitted = x.mul_vec(&beta);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let weighted_residuals: Vec<f64> = residuals
        .iter()
        .zip(w)
        .map(|(r, wi)| r * wi.sqrt())
        .collect();
    let ssr: f64 = weighted_residuals.iter().map(|r| r * r).sum();

    let df_resid = n - p;
    let sigma2 = ssr / df_resid as f64;
    let cov = qr.gram_inverse();
    let std_errors: Vec<f64> = (0..p).map(|j| (sigma2 * cov.get(j, j)).sqrt()).collect();
    let t_stats: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let t_dist = StudentsT::new(0.0, 1.0, df_resid as f64)
        .map_err(|e| Error::Degenerate(format!("t distribution: {e}")))?;
    let p_values: Vec<f64> = t_stats
        .iter()
        .map(|t| {
            if t.is_nan() {
                f64::NAN
            } else {
                (2.0 * t_dist.cdf(-t.abs())).min(1.0)
            }
        })
        .collect();
    let stars = p_values.iter().map(|&pv| Stars::from_p(pv)).collect();

    let r2 = 1.0 - ssr / tss;
    let adj_r2 = adjusted_r2(r2, n, df_resid);

    Ok(RegressionResult {
        names,
        coefficients: beta,
        std_errors,
        t_stats,
        p_values,
        stars,
        r2,
        adj_r2,
        residual_se: sigma2.sqrt(),
        df_resid,
        n,
        residuals,
        weighted_residuals,
        permutation_p: None,
    })
}

pub fn adjusted_r2(r2: f64, n: usize, df_resid: usize) -> f64 {
    1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_resid as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_design(xs: &[f64]) -> Matrix {
        Matrix::from_rows(&xs.iter().map(|&x| vec![1.0, x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exact_line_fit() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x + 3.0).collect();
        let fit = wls_fit(&line_design(&xs), &y, &[1.0; 5]).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(fit.residual_se < 1e-12);
    }

    #[test]
    fn weighted_four_point_fixture() {
        // Normal equations solved by hand:
        // XᵀWX = [[6, 10], [10, 24]], XᵀWy = [19, 40], det = 44.
        let x = line_design(&[0.0, 1.0, 2.0, 3.0]);
        let fit = wls_fit(&x, &[1.0, 3.0, 2.0, 5.0], &[1.0, 2.0, 1.0, 2.0]).unwrap();
        assert!((fit.coefficients[0] - 14.0 / 11.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 25.0 / 22.0).abs() < 1e-12);
        assert!((fit.r2 - 625.0 / 847.0).abs() < 1e-12);
        let sigma2: f64 = 37.0 / 22.0;
        assert!((fit.residual_se - sigma2.sqrt()).abs() < 1e-12);
        assert!((fit.std_errors[0] - (sigma2 * 24.0 / 44.0).sqrt()).abs() < 1e-12);
        assert!((fit.std_errors[1] - (sigma2 * 6.0 / 44.0).sqrt()).abs() < 1e-12);
        assert_eq!(fit.df_resid, 2);
    }

    #[test]
    fn rejects_bad_weights() {
        let x = line_design(&[0.0, 1.0, 2.0]);
        let err = wls_fit(&x, &[1.0, 2.0, 4.0], &[1.0, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
        let err = wls_fit(&x, &[1.0, 2.0, 4.0], &[1.0, -1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn rejects_constant_response() {
        let x = line_design(&[0.0, 1.0, 2.0]);
        let err = wls_fit(&x, &[1.0, 1.0, 1.0], &[1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn rejects_singular_design() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let err = wls_fit(&x, &[1.0, 2.0, 3.0, 5.0], &[1.0; 4]).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn too_few_rows() {
        let x = line_design(&[0.0, 1.0]);
        assert!(wls_fit(&x, &[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(Stars::from_p(0.099), Stars::One);
        assert_eq!(Stars::from_p(0.049), Stars::Two);
        assert_eq!(Stars::from_p(0.009), Stars::Three);
        assert_eq!(Stars::from_p(0.1), Stars::None);
        assert_eq!(Stars::from_p(0.2), Stars::None);
        assert_eq!(Stars::from_p(0.07), Stars::One);
        assert_eq!(Stars::from_p(f64::NAN), Stars::None);
    }

    #[test]
    fn adjusted_r2_matches_published_rows() {
        // (R², n, df) → adjusted R² as printed in the confounder table.
        let rows = [
            (0.485, 17, 0.364),
            (0.655, 16, 0.547),
            (0.672, 15, 0.541),
            (0.657, 15, 0.520),
            (0.676, 14, 0.514),
        ];
        for (r2, df, want) in rows {
            assert!((adjusted_r2(r2, 22, df) - want).abs() < 0.0015, "{r2} {df}");
        }
    }
}
