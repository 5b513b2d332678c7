//! Probability primitives: Beta shapes, binomial log-likelihoods, normal
//! quantiles and the midpoint-Riemann discretization used to represent
//! posteriors on (0, 1).

pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Shape pair of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> BetaParams<T> {
    pub fn new(a: T, b: T) -> Result<Self> {
        if !(a > T::zero() && b > T::zero() && a.is_finite() && b.is_finite()) {
            return Err(Error::domain(format!("Beta shapes must be positive and finite, got ({a}, {b})")));
        }
        Ok(BetaParams { a, b })
    }

    /// Beta(1, 1).
    pub fn uniform() -> Self {
        BetaParams { a: T::one(), b: T::one() }
    }

    /// Posterior after observing `successes` out of `trials` Bernoulli draws.
    pub fn posterior(&self, successes: u64, trials: u64) -> Result<Self> {
        if successes > trials {
            return Err(Error::domain(format!("{successes} successes out of {trials} trials")));
        }
        Self::new(self.a + count(successes), self.b + count(trials - successes))
    }

    pub fn mean(&self) -> T {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> T {
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + T::one()))
    }

    /// Mode of the density. Shapes at or below one put the mode on the
    /// boundary; Beta(a, a) with a ≤ 1 reports 0.5.
    pub fn mode(&self) -> T {
        let one = T::one();
        match (self.a > one, self.b > one) {
            (true, true) => (self.a - one) / (self.a + self.b - lit(2.0)),
            (false, true) => T::zero(),
            (true, false) => one,
            (false, false) => {
                if self.a == self.b {
                    lit(0.5)
                } else if self.a < self.b {
                    T::zero()
                } else {
                    one
                }
            }
        }
    }
}

/// Probability masses on the midpoints of `n_bins` equal slices of (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedDist<T> {
    midpoints: Vec<T>,
    masses: Vec<T>,
}

impl<T: Real> DiscretizedDist<T> {
    /// Builds a distribution from raw non-negative weights, normalizing them.
    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::domain("a discretized distribution needs at least 2 bins"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= T::zero())) {
            return Err(Error::numeric(format!("invalid bin weight {w}")));
        }
        let total: T = weights.iter().copied().sum();
        if total <= T::zero() || !total.is_finite() {
            return Err(Error::numeric("total probability mass is zero or not finite"));
        }
        let masses = weights.into_iter().map(|w| w / total).collect::<Vec<_>>();
        Ok(DiscretizedDist { midpoints: midpoints(masses.len()), masses })
    }

    /// Uniform masses, the discretized Beta(1, 1).
    pub fn uniform(n_bins: usize) -> Result<Self> {
        Self::from_weights(vec![T::one(); n_bins])
    }

    pub fn n_bins(&self) -> usize {
        self.masses.len()
    }

    pub fn midpoints(&self) -> &[T] {
        &self.midpoints
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().copied().sum()
    }

    pub(crate) fn check_normalized(&self) -> Result<()> {
        let total = self.total_mass();
        if (total - T::one()).abs() > T::norm_tolerance() {
            return Err(Error::contract(format!("distribution masses sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Midpoint of the bin with the largest mass (first one on ties).
    pub fn mode(&self) -> T {
        let mut best = 0;
        for (i, m) in self.masses.iter().enumerate() {
            if *m > self.masses[best] {
                best = i;
            }
        }
        self.midpoints[best]
    }
}

fn midpoints<T: Real>(n: usize) -> Vec<T> {
    let nf = lit::<T>(n as f64);
    (0..n).map(|i| (lit::<T>(i as f64) + lit(0.5)) / nf).collect()
}

/// Grid granularities for α, ρ and η.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_alpha: usize,
    pub n_rho: usize,
    pub n_eta: usize,
}

impl GridConfig {
    pub const FULL: GridConfig = GridConfig { n_alpha: 2000, n_rho: 1000, n_eta: 1000 };
    pub const REDUCED: GridConfig = GridConfig { n_alpha: 500, n_rho: 200, n_eta: 200 };

    pub fn new(n_alpha: usize, n_rho: usize, n_eta: usize) -> Result<Self> {
        let grids = GridConfig { n_alpha, n_rho, n_eta };
        grids.validate()?;
        Ok(grids)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_alpha < 2 || self.n_rho < 2 || self.n_eta < 2 {
            return Err(Error::domain(format!("grid sizes must be >= 2, got {self:?}")));
        }
        Ok(())
    }

    /// Every dimension doubled.
    pub fn doubled(&self) -> Self {
        GridConfig { n_alpha: self.n_alpha * 2, n_rho: self.n_rho * 2, n_eta: self.n_eta * 2 }
    }

    /// True when no dimension exceeds `cap`.
    pub fn fits_within(&self, cap: &GridConfig) -> bool {
        self.n_alpha <= cap.n_alpha && self.n_rho <= cap.n_rho && self.n_eta <= cap.n_eta
    }

    /// Component-wise minimum with `cap`.
    pub fn capped(&self, cap: &GridConfig) -> Self {
        GridConfig {
            n_alpha: self.n_alpha.min(cap.n_alpha),
            n_rho: self.n_rho.min(cap.n_rho),
            n_eta: self.n_eta.min(cap.n_eta),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::FULL
    }
}

fn check_probability<T: Real>(name: &str, p: T) -> Result<()> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// ln P(K = k) for K ~ Binomial(n, p), with 0·ln 0 = 0.
///
/// Uses the saddle-point form (Stirling remainders plus deviance terms), so
/// the result keeps its relative accuracy for n in the millions.
pub fn log_binom_pmf<T: Real>(k: u64, n: u64, p: T) -> Result<T> {
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    check_probability("p", p)?;
    let one = T::one();
    let q = one - p;
    let nf = count::<T>(n);
    if k == 0 {
        return Ok(if n == 0 { T::zero() } else { nf * (-p).ln_1p() });
    }
    if k == n {
        return Ok(nf * p.ln());
    }
    if p == T::zero() || q == T::zero() {
        return Ok(T::neg_infinity());
    }
    let kf = count::<T>(k);
    let rest = nf - kf;
    let lc = special::stirling_remainder(nf)
        - special::stirling_remainder(kf)
        - special::stirling_remainder(rest)
        - special::bd0(kf, nf * p)
        - special::bd0(rest, nf * q);
    let lf = (lit::<T>(2.0) * T::PI()).ln() + kf.ln() + (-kf / nf).ln_1p();
    Ok(lc - lit::<T>(0.5) * lf)
}

/// Regularized incomplete beta `I_x(a, b)`: the Beta(a, b) CDF.
pub fn beta_cdf<T: Real>(x: T, params: &BetaParams<T>) -> Result<T> {
    check_probability("x", x)?;
    Ok(special::inc_beta_pair(x, params.a, params.b).0)
}

/// `1 - I_x(a, b)`, evaluated directly rather than by subtraction.
pub fn beta_sf<T: Real>(x: T, params: &BetaParams<T>) -> Result<T> {
    check_probability("x", x)?;
    Ok(special::inc_beta_pair(x, params.a, params.b).1)
}

/// Midpoint-Riemann discretization of a distribution on [0, 1] given its CDF:
/// `masses[i] = cdf((i+1)/N) - cdf(i/N)`.
pub fn discretize<T: Real, F>(cdf: F, n_bins: usize) -> Result<DiscretizedDist<T>>
where
    F: Fn(T) -> T,
{
    if n_bins < 2 {
        return Err(Error::domain("discretization needs at least 2 bins"));
    }
    let nf = lit::<T>(n_bins as f64);
    let edges: Vec<T> = (0..=n_bins).map(|i| cdf(lit::<T>(i as f64) / nf)).collect();
    let slack = lit::<T>(64.0) * T::epsilon();
    let mut weights = Vec::with_capacity(n_bins);
    for (i, w) in edges.windows(2).enumerate() {
        let m = w[1] - w[0];
        if m < -slack || !m.is_finite() {
            return Err(Error::numeric(format!("CDF is not monotone on bin {i}: mass {m}")));
        }
        weights.push(m.max(T::zero()));
    }
    DiscretizedDist::from_weights(weights)
}

/// Discretizes Beta(a, b). Bins above the mean are differenced on the
/// survival function so that upper-tail masses keep relative precision.
pub fn discretize_beta<T: Real>(params: &BetaParams<T>, n_bins: usize) -> Result<DiscretizedDist<T>> {
    if n_bins < 2 {
        return Err(Error::domain("discretization needs at least 2 bins"));
    }
    let nf = lit::<T>(n_bins as f64);
    let center = params.mean();
    let edges: Vec<(T, T)> = (0..=n_bins)
        .map(|i| special::inc_beta_pair(lit::<T>(i as f64) / nf, params.a, params.b))
        .collect();
    let weights = (0..n_bins)
        .map(|i| {
            let lo = lit::<T>(i as f64) / nf;
            let m = if lo >= center { edges[i].1 - edges[i + 1].1 } else { edges[i + 1].0 - edges[i].0 };
            m.max(T::zero())
        })
        .collect();
    DiscretizedDist::from_weights(weights)
}

/// Mean and variance of a normalized discretized distribution.
pub fn moments<T: Real>(dist: &DiscretizedDist<T>) -> Result<(T, T)> {
    dist.check_normalized()?;
    let mean: T = dist.masses.iter().zip(&dist.midpoints).map(|(p, x)| *p * *x).sum();
    let second: T = dist.masses.iter().zip(&dist.midpoints).map(|(p, x)| *p * *x * *x).sum();
    let var = second - mean * mean;
    Ok((mean, var.max(T::zero())))
}

/// Two-sided critical value `Z_γ = Φ⁻¹(1 - γ/2)`.
pub fn normal_quantile<T: Real>(gamma: T) -> Result<T> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::domain(format!("significance level must lie in (0, 1), got {gamma}")));
    }
    Ok(special::normal_upper_quantile(gamma * lit(0.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn log_binom_pmf_examples() {
        assert_abs_diff_eq!(log_binom_pmf(1, 2, 0.5f64).unwrap(), 0.5f64.ln(), epsilon = 1e-14);
        assert_eq!(log_binom_pmf(0, 10, 0.0f64).unwrap(), 0.0);
        // C(10,3)·0.3³·0.7⁷ = 0.266827932
        assert_abs_diff_eq!(log_binom_pmf(3, 10, 0.3f64).unwrap(), 0.266_827_932f64.ln(), epsilon = 1e-12);
        assert_eq!(log_binom_pmf(3, 10, 0.0f64).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_binom_pmf(10, 10, 1.0f64).unwrap(), 0.0);
    }

    #[test]
    fn log_binom_pmf_large_n() {
        // reference values from 30-digit arithmetic
        let v = log_binom_pmf(400_000, 1_000_000, 0.4f64).unwrap();
        assert_abs_diff_eq!(v, -7.113_135_898_255_626, epsilon = 1e-9);
        let v = log_binom_pmf(400_500, 1_000_000, 0.4f64).unwrap();
        assert_abs_diff_eq!(v, -7.634_104_768_251_610_5, epsilon = 1e-9);
    }

    #[test]
    fn log_binom_pmf_rejects_bad_input() {
        assert!(matches!(log_binom_pmf(3, 2, 0.5f64), Err(Error::Domain(_))));
        assert!(matches!(log_binom_pmf(1, 2, 1.5f64), Err(Error::Domain(_))));
        assert!(matches!(log_binom_pmf(1, 2, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn beta_cdf_examples() {
        let u = BetaParams::<f64>::uniform();
        assert_abs_diff_eq!(beta_cdf(0.5, &u).unwrap(), 0.5, epsilon = 1e-15);
        let b22 = BetaParams::new(2.0f64, 2.0).unwrap();
        assert_abs_diff_eq!(beta_cdf(0.5, &b22).unwrap(), 0.5, epsilon = 1e-14);
        // I_0.3(2,5) = P(Binom(6, 0.3) >= 2), exact binomial tail
        let b25 = BetaParams::new(2.0f64, 5.0).unwrap();
        assert_abs_diff_eq!(beta_cdf(0.3, &b25).unwrap(), 0.579_825, epsilon = 1e-12);
        assert_eq!(beta_cdf(0.0, &b25).unwrap(), 0.0);
        assert_eq!(beta_cdf(1.0, &b25).unwrap(), 1.0);
        assert!(matches!(beta_cdf(1.2, &b25), Err(Error::Domain(_))));
    }

    #[test]
    fn beta_cdf_reference_values() {
        let cases = [
            (0.2, 0.5, 3.5, 0.772_547_181_940_236_9),
            (0.7, 200.0, 50.0, 1.507_317_623_892_997e-4),
            (0.6, 3001.0, 2001.0, 0.501_535_384_824_672),
            (0.7, 700_001.0, 300_001.0, 0.500_232_150_134_792_4),
        ];
        for (x, a, b, want) in cases {
            let got = beta_cdf(x, &BetaParams::new(a, b).unwrap()).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn beta_params_validation_and_moments() {
        assert!(BetaParams::new(0.0f64, 1.0).is_err());
        assert!(BetaParams::new(1.0f64, f64::INFINITY).is_err());
        let p = BetaParams::new(61.0f64, 41.0).unwrap();
        assert_abs_diff_eq!(p.variance(), 61.0 * 41.0 / (102.0f64.powi(2) * 103.0), epsilon = 1e-18);
        assert_abs_diff_eq!(p.mode(), 0.6, epsilon = 1e-15);
        assert_eq!(BetaParams::<f64>::uniform().mode(), 0.5);
    }

    #[test]
    fn discretize_examples() {
        let d = discretize(|x: f64| x, 4).unwrap();
        assert_eq!(d.midpoints(), &[0.125, 0.375, 0.625, 0.875]);
        for m in d.masses() {
            assert_abs_diff_eq!(*m, 0.25, epsilon = 1e-15);
        }
        let d = discretize(|x: f64| x * x, 2).unwrap();
        assert_abs_diff_eq!(d.masses()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(d.masses()[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn discretize_rejects_non_monotone_cdf() {
        let err = discretize(|x: f64| if x < 0.5 { x } else { 0.2 }, 10).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(discretize(|x: f64| x, 1).is_err());
    }

    #[test]
    fn moments_examples() {
        let u = DiscretizedDist::<f64>::uniform(2000).unwrap();
        let (mean, var) = moments(&u).unwrap();
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(var, 1.0 / 12.0, epsilon = 1e-4);

        let d = discretize_beta(&BetaParams::new(61.0f64, 41.0).unwrap(), 2000).unwrap();
        let (_, var) = moments(&d).unwrap();
        assert_abs_diff_eq!(var, 0.002_333_7, epsilon = 1e-5);

        // a 2000-bin grid cannot resolve a spread of 3.5e-4, so use a fine one
        let d = discretize_beta(&BetaParams::new(1e6f64, 1e6).unwrap(), 20_000).unwrap();
        let (mean, var) = moments(&d).unwrap();
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(var, 1.25e-7, epsilon = 1e-9);
    }

    #[test]
    fn moments_rejects_unnormalized() {
        let d = DiscretizedDist { midpoints: vec![0.25f64, 0.75], masses: vec![0.5, 0.6] };
        assert!(matches!(moments(&d), Err(Error::Contract(_))));
    }

    #[test]
    fn normal_quantile_examples() {
        assert_abs_diff_eq!(normal_quantile(0.05f64).unwrap(), 1.959_963_984_540_054, epsilon = 1e-9);
        assert_abs_diff_eq!(normal_quantile(1.0f64 - 1e-9).unwrap(), 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(normal_quantile(0.3173f64).unwrap(), 1.000_021_713, epsilon = 1e-6);
        assert!(normal_quantile(0.0f64).is_err());
        assert!(normal_quantile(1.0f64).is_err());
    }

    #[test]
    fn single_precision_instantiation() {
        let p = BetaParams::new(2.0f32, 5.0).unwrap();
        assert!((beta_cdf(0.3f32, &p).unwrap() - 0.579_825).abs() < 1e-5);
        let d = discretize_beta(&p, 400).unwrap();
        let (mean, _) = moments(&d).unwrap();
        assert!((mean - 2.0 / 7.0).abs() < 1e-4);
        assert!((normal_quantile(0.05f32).unwrap() - 1.959_964).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn discretized_beta_is_normalized(a in 0.2f64..500.0, b in 0.2f64..500.0, n in 2usize..600) {
            let d = discretize_beta(&BetaParams::new(a, b).unwrap(), n).unwrap();
            prop_assert!((d.total_mass() - 1.0).abs() < 1e-9);
            prop_assert!(d.masses().iter().all(|m| *m >= 0.0));
            prop_assert!(d.midpoints().windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn discretized_moments_converge(a in 1.0f64..1e4, b in 1.0f64..1e4) {
            let p = BetaParams::new(a, b).unwrap();
            let (mean, var) = moments(&discretize_beta(&p, 2000).unwrap()).unwrap();
            prop_assert!((mean - p.mean()).abs() < 1e-4);
            prop_assert!((var - p.variance()).abs() < 1e-4);
        }

        #[test]
        fn beta_cdf_reflection(x in 0.0f64..=1.0, a in 0.1f64..2000.0, b in 0.1f64..2000.0) {
            let lhs = beta_cdf(x, &BetaParams::new(a, b).unwrap()).unwrap();
            let rhs = beta_cdf(1.0 - x, &BetaParams::new(b, a).unwrap()).unwrap();
            prop_assert!((lhs + rhs - 1.0).abs() < 1e-9);
        }

        #[test]
        fn beta_cdf_monotone(x in 0.0f64..0.999, dx in 0.0f64..0.001, a in 0.1f64..300.0, b in 0.1f64..300.0) {
            let p = BetaParams::new(a, b).unwrap();
            prop_assert!(beta_cdf(x + dx, &p).unwrap() + 1e-15 >= beta_cdf(x, &p).unwrap());
        }

        #[test]
        fn binomial_pmf_sums_to_one(n in 0u64..2000, p in 0.0f64..=1.0) {
            let total: f64 = (0..=n).map(|k| log_binom_pmf(k, n, p).unwrap().exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-8);
        }

        #[test]
        fn normal_quantile_decreasing(g in 1e-6f64..0.99, dg in 1e-4f64..0.009) {
            prop_assert!(normal_quantile(g + dg).unwrap() < normal_quantile(g).unwrap());
        }
    }

    #[test]
    fn binomial_pmf_sums_to_one_at_ten_thousand() {
        for p in [0.001f64, 0.3, 0.5, 0.97] {
            let total: f64 = (0..=10_000u64).map(|k| log_binom_pmf(k, 10_000, p).unwrap().exp()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        }
    }
}
