//! Inverse standard-normal CDF and QQ-plot coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16), with
/// relative accuracy around 1e-16 across the open unit interval.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
            + 67265.770_927_008_7)
            * r
            + 45921.953_931_549_87)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5226.495_278_852_545_4 * r + 28729.085_735_721_943) * r
            + 39307.895_800_092_71)
            * r
            + 21213.794_301_586_597)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_911)
            * r
            + 1.0;
        return Ok(num / den);
    }

    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -x } else { x })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub observed: f64,
}

/// Normal QQ coordinates: sorted `residual / residual_se` against
/// `Φ⁻¹((i − 0.5) / n)`.
pub fn qq_data(residuals: &[f64], residual_se: f64) -> Result<Vec<QqPoint>> {
    if residuals.len() < 3 {
        return Err(Error::invalid("QQ data needs at least three residuals"));
    }
    if !(residual_se > 0.0) || !residual_se.is_finite() {
        return Err(Error::Degenerate(format!(
            "residual standard error must be positive, got {residual_se}"
        )));
    }
    let mut observed: Vec<f64> = residuals.iter().map(|r| r / residual_se).collect();
    observed.sort_by(f64::total_cmp);
    let n = observed.len() as f64;
    observed
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            Ok(QqPoint {
                theoretical: norm_quantile((i as f64 + 0.5) / n)?,
                observed: o,
            })
        })
        .collect()
}
