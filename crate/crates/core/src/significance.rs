//! Pairwise comparison of two systems' α posteriors.

use serde::{Deserialize, Serialize};

use crate::distributions::{normal_quantile, DiscretizedDist};
use crate::error::{Error, Result};
use crate::estimation::AlphaPosterior;
use crate::scalar::{lit, Real};

/// Resolution used when both posteriors are closed-form Betas.
pub const DEFAULT_COMPARE_BINS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult<T> {
    /// P(α₁ > α₂), ties on a bin counted half.
    pub prob_greater: T,
    pub significant: bool,
    pub gamma: T,
    /// Distinguishable difference √(Var₁ + Var₂)·Z_γ.
    pub epsilon_hat: T,
    /// `epsilon_hat` rounded to two decimals, as usually reported.
    pub epsilon_hat_rounded: T,
}

fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// P(α₁ > α₂) for two distributions on the same grid.
pub fn prob_greater_grids<T: Real>(d1: &DiscretizedDist<T>, d2: &DiscretizedDist<T>) -> Result<T> {
    if d1.n_bins() != d2.n_bins() {
        return Err(Error::contract(format!(
            "posteriors live on different grids ({} vs {} bins)",
            d1.n_bins(),
            d2.n_bins()
        )));
    }
    d1.check_normalized()?;
    d2.check_normalized()?;
    let half: T = lit(0.5);
    let (p1, p2) = (d1.masses(), d2.masses());
    // walk j downward, keeping Σ_{i>j} P1[i]
    let mut above = T::zero();
    let mut total = T::zero();
    for j in (0..p1.len()).rev() {
        total = total + p2[j] * (above + half * p1[j]);
        above = above + p1[j];
    }
    Ok(total.max(T::zero()).min(T::one()))
}

/// P(α₁ > α₂). A Beta posterior is discretized at the other side's grid size,
/// or at [`DEFAULT_COMPARE_BINS`] when both are Betas. Two grids of different
/// size are rejected.
pub fn prob_greater<T: Real>(p1: &AlphaPosterior<T>, p2: &AlphaPosterior<T>) -> Result<T> {
    let n = match (p1.grid_bins(), p2.grid_bins()) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::contract(format!("posteriors live on different grids ({a} vs {b} bins)")))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => DEFAULT_COMPARE_BINS,
    };
    prob_greater_grids(&p1.to_grid(n)?, &p2.to_grid(n)?)
}

/// Two-sided test at level γ: significant iff P > 1 - γ/2 or P < γ/2.
pub fn is_significant<T: Real>(prob_greater: T, gamma: T) -> Result<bool> {
    check_gamma(gamma)?;
    let half = gamma * lit(0.5);
    Ok(prob_greater > T::one() - half || prob_greater < half)
}

/// Distinguishable difference ε̂_γ = √(Var₁ + Var₂)·Z_γ.
pub fn epsilon_gamma<T: Real>(p1: &AlphaPosterior<T>, p2: &AlphaPosterior<T>, gamma: T) -> Result<T> {
    check_gamma(gamma)?;
    Ok((p1.variance + p2.variance).sqrt() * normal_quantile(gamma)?)
}

pub fn compare_systems<T: Real>(p1: &AlphaPosterior<T>, p2: &AlphaPosterior<T>, gamma: T) -> Result<ComparisonResult<T>> {
    check_gamma(gamma)?;
    let prob = prob_greater(p1, p2)?;
    let eps = epsilon_gamma(p1, p2, gamma)?;
    let hundred: T = lit(100.0);
    Ok(ComparisonResult {
        prob_greater: prob,
        significant: is_significant(prob, gamma)?,
        gamma,
        epsilon_hat: eps,
        epsilon_hat_rounded: (eps * hundred).round() / hundred,
    })
}
