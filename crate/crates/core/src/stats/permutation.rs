//! Permutation test for the whole-model R² of a weighted regression.
//!
//! The response vector is shuffled against fixed design rows and weights.
//! Permutation `i` draws from its own ChaCha8 stream (`seed`, stream `i`),
//! so the result does not depend on evaluation order or thread count.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{Matrix, Qr};
use super::wls::{check_inputs, weighted_design, weighted_tss};
use crate::error::{Error, Result};

pub const DEFAULT_N_PERM: usize = 100_000;

/// Permuted R² values within this distance below the observed value count
/// as ties, so the identity permutation always counts as extreme.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub n_perm: usize,
    pub seed: u64,
    /// Enumerate all `n!` orderings instead of sampling when `n` is at most this.
    pub exhaustive_max_n: Option<usize>,
}

impl PermutationConfig {
    pub fn monte_carlo(n_perm: usize, seed: u64) -> Self {
        Self {
            n_perm,
            seed,
            exhaustive_max_n: None,
        }
    }

    pub fn exhaustive(max_n: usize) -> Self {
        Self {
            n_perm: 0,
            seed: 0,
            exhaustive_max_n: Some(max_n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub p_value: f64,
    pub observed_r2: f64,
    /// Permutations whose R² reached the observed value.
    pub n_extreme: u64,
    pub n_evaluated: u64,
    pub exhaustive: bool,
}

/// R² evaluator for a fixed weighted design.
struct R2Kernel {
    qr: Qr,
    sqrt_w: Vec<f64>,
    w: Vec<f64>,
}

impl R2Kernel {
    fn new(x: &Matrix, w: &[f64]) -> Result<Self> {
        Ok(Self {
            qr: Qr::new(&weighted_design(x, w))?,
            sqrt_w: w.iter().map(|v| v.sqrt()).collect(),
            w: w.to_vec(),
        })
    }

    /// R² of `y` regressed on the design; `None` when `y` has zero weighted spread.
    fn r2(&self, y: &[f64], scratch: &mut Vec<f64>) -> Option<f64> {
        let tss = weighted_tss(y, &self.w);
        if !(tss > 0.0) {
            return None;
        }
        scratch.clear();
        scratch.extend(y.iter().zip(&self.sqrt_w).map(|(a, b)| a * b));
        let c = self.qr.qt_mul(scratch);
        let q = self.qr.q();
        let mut ssr = 0.0;
        for (i, yi) in scratch.iter().enumerate() {
            let fitted: f64 = q.row(i).iter().zip(&c).map(|(a, b)| a * b).sum();
            ssr += (yi - fitted).powi(2);
        }
        Some(1.0 - ssr / tss)
    }
}

/// Monte Carlo (or exhaustive) permutation p-value for the model R².
///
/// Monte Carlo: `p = (1 + #{R²ₚ ≥ R²ₒ}) / (n_perm + 1)`.
/// Exhaustive: `p = #{R²ₚ ≥ R²ₒ} / n!` over all orderings, identity included.
/// A response with zero weighted spread gives `p = 1`: every reordering is
/// indistinguishable from the observed one.
pub fn permutation_test(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    config: &PermutationConfig,
) -> Result<PermutationOutcome> {
    check_inputs(x, y, w)?;
    let n = y.len();
    let exhaustive = config.exhaustive_max_n.is_some_and(|max| n <= max);
    if !exhaustive && config.n_perm == 0 {
        return Err(Error::invalid("n_perm must be positive"));
    }

    let kernel = R2Kernel::new(x, w)?;
    let mut scratch = Vec::with_capacity(n);
    let Some(observed) = kernel.r2(y, &mut scratch) else {
        let n_evaluated = if exhaustive {
            factorial(n)?
        } else {
            config.n_perm as u64
        };
        return Ok(PermutationOutcome {
            p_value: 1.0,
            observed_r2: f64::NAN,
            n_extreme: n_evaluated,
            n_evaluated,
            exhaustive,
        });
    };
    let threshold = observed - TIE_TOLERANCE;

    if exhaustive {
        let total = factorial(n)?;
        let n_extreme = count_all_orderings(&kernel, y, threshold);
        return Ok(PermutationOutcome {
            p_value: n_extreme as f64 / total as f64,
            observed_r2: observed,
            n_extreme,
            n_evaluated: total,
            exhaustive: true,
        });
    }

    let n_extreme: u64 = (0..config.n_perm as u64)
        .into_par_iter()
        .map_init(
            || (y.to_vec(), Vec::with_capacity(n)),
            |(buf, scratch), i| {
                buf.copy_from_slice(y);
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(i);
                buf.shuffle(&mut rng);
                // Zero spread cannot occur here: permuting preserves the values.
                let r2 = kernel.r2(buf, scratch).unwrap_or(f64::NEG_INFINITY);
                u64::from(r2 >= threshold)
            },
        )
        .sum();

    Ok(PermutationOutcome {
        p_value: (n_extreme + 1) as f64 / (config.n_perm as f64 + 1.0),
        observed_r2: observed,
        n_extreme,
        n_evaluated: config.n_perm as u64,
        exhaustive: false,
    })
}

fn factorial(n: usize) -> Result<u64> {
    (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k)).ok_or_else(|| {
        Error::invalid(format!("{n}! permutations is too many to enumerate"))
    })
}

/// Heap's algorithm over index orderings.
fn count_all_orderings(kernel: &R2Kernel, y: &[f64], threshold: f64) -> u64 {
    let n = y.len();
    let mut perm = y.to_vec();
    let mut scratch = Vec::with_capacity(n);
    let mut count = 0u64;
    let mut check = |p: &[f64], scratch: &mut Vec<f64>| {
        if kernel.r2(p, scratch).unwrap_or(f64::NEG_INFINITY) >= threshold {
            count += 1;
        }
    };
    check(&perm, &mut scratch);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            check(&perm, &mut scratch);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_groups() -> (Matrix, Vec<f64>, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![1.0, if i < 6 { 0.0 } else { 1.0 }])
            .collect();
        let y = vec![
            10.0, 10.2, 9.9, 10.1, 9.8, 10.05, 20.0, 20.1, 19.9, 20.2, 19.8, 20.05,
        ];
        (Matrix::from_rows(&rows).unwrap(), y, vec![1.0; 12])
    }

    #[test]
    fn constant_response_gives_one() {
        let (x, _, w) = two_groups();
        let out = permutation_test(&x, &[3.0; 12], &w, &PermutationConfig::monte_carlo(200, 1))
            .unwrap();
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn separated_groups_are_significant() {
        let (x, y, w) = two_groups();
        let out = permutation_test(&x, &y, &w, &PermutationConfig::monte_carlo(5000, 3)).unwrap();
        assert!(out.p_value <= 0.01, "p = {}", out.p_value);
        assert!(out.p_value >= 1.0 / 5001.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let (x, mut y, w) = two_groups();
        y[0] = 18.0;
        y[7] = 11.0;
        let cfg = PermutationConfig::monte_carlo(3000, 11);
        let a = permutation_test(&x, &y, &w, &cfg).unwrap();
        let b = permutation_test(&x, &y, &w, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn heap_enumeration_visits_every_ordering() {
        let x = Matrix::from_rows(&(0..4).map(|i| vec![1.0, i as f64]).collect::<Vec<_>>())
            .unwrap();
        let kernel = R2Kernel::new(&x, &[1.0; 4]).unwrap();
        // Threshold below any R² counts every ordering.
        assert_eq!(count_all_orderings(&kernel, &[1.0, 2.0, 4.0, 8.0], -1.0), 24);
    }

    #[test]
    fn exhaustive_rejects_overflow() {
        assert!(factorial(25).is_err());
        assert_eq!(factorial(6).unwrap(), 720);
    }
}
