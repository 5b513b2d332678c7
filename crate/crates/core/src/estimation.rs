//! Posterior inference for a system's success rate α.
//!
//! Three evidence sources are supported: error-free ratings (closed-form
//! Beta posterior), an error-prone metric with known or estimated true
//! positive/negative rates (ρ, η), and their combination, where the
//! error-free posterior becomes the prior for the metric likelihood.
//!
//! The metric likelihood is `Binomial(m₊ | n_M, α(ρ+η-1) + (1-η))`. With
//! uncertain (ρ, η) it is marginalized on a midpoint grid; all products are
//! accumulated in log space and normalized by max-subtraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{discretize_beta, moments, BetaParams, DiscretizedDist, GridConfig};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Bins whose mass is below this fraction of the largest bin are skipped in
/// the (ρ, η) double sum; their contribution is below rounding.
const PRUNE_RELATIVE: f64 = 1e-16;

/// Fewer gold samples than this in either class triggers a warning.
pub const LOW_EVIDENCE_THRESHOLD: u64 = 20;

/// Sufficient statistics for one (system, metric) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountSummary {
    /// Error-free ratings.
    pub n_phi: u64,
    /// Error-free ratings that are positive.
    pub n_plus: u64,
    /// Metric ratings.
    #[serde(rename = "n_M")]
    pub n_m: u64,
    /// Metric ratings that are positive.
    pub m_plus: u64,
    /// Gold-positive pairs rated by both sources.
    pub n_gold_pos: u64,
    /// Gold-positive pairs the metric rated positive.
    pub n_tp: u64,
    /// Gold-negative pairs rated by both sources.
    pub n_gold_neg: u64,
    /// Gold-negative pairs the metric rated negative.
    pub n_tn: u64,
}

impl CountSummary {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.n_plus, self.n_phi, "n_plus", "n_phi"),
            (self.m_plus, self.n_m, "m_plus", "n_M"),
            (self.n_tp, self.n_gold_pos, "n_tp", "n_gold_pos"),
            (self.n_tn, self.n_gold_neg, "n_tn", "n_gold_neg"),
        ];
        for (part, whole, pn, wn) in checks {
            if part > whole {
                return Err(Error::domain(format!("{pn} = {part} exceeds {wn} = {whole}")));
            }
        }
        Ok(())
    }

    /// Number of paired gold ratings, |𝒯_{ρ,η}|.
    pub fn n_gold(&self) -> u64 {
        self.n_gold_pos + self.n_gold_neg
    }
}

/// Belief about a metric rate: an exact value or a Beta posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBelief<T> {
    Exact(T),
    Beta(BetaParams<T>),
}

impl<T: Real> RateBelief<T> {
    fn validate(&self, name: &str) -> Result<()> {
        match self {
            RateBelief::Exact(p) if !(*p >= T::zero() && *p <= T::one()) => {
                Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")))
            }
            RateBelief::Exact(_) => Ok(()),
            RateBelief::Beta(b) => BetaParams::new(b.a, b.b).map(|_| ()),
        }
    }

    /// Point value used by the closed-form estimator: the exact value, or the
    /// posterior mode.
    pub fn point(&self) -> T {
        match self {
            RateBelief::Exact(p) => *p,
            RateBelief::Beta(b) => b.mode(),
        }
    }

    /// Grid support (points, masses) for marginalization.
    fn support(&self, n_bins: usize) -> Result<(Vec<T>, Vec<T>)> {
        match self {
            RateBelief::Exact(p) => Ok((vec![*p], vec![T::one()])),
            RateBelief::Beta(b) => {
                let d = discretize_beta(b, n_bins)?;
                Ok((d.midpoints().to_vec(), d.masses().to_vec()))
            }
        }
    }
}

/// True-positive (ρ) and true-negative (η) rates of a binary metric, keyed by
/// metric and by the generation system whose outputs it rated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPerformance<T> {
    pub rho: RateBelief<T>,
    pub eta: RateBelief<T>,
    #[serde(default)]
    pub metric_id: String,
    #[serde(default)]
    pub system_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl<T: Real> MetricPerformance<T> {
    /// Known rates, e.g. from an earlier campaign.
    pub fn exact(rho: T, eta: T) -> Result<Self> {
        let perf = MetricPerformance {
            rho: RateBelief::Exact(rho),
            eta: RateBelief::Exact(eta),
            metric_id: String::new(),
            system_id: String::new(),
            warnings: Vec::new(),
        };
        perf.validate()?;
        Ok(perf)
    }

    pub fn with_ids(mut self, metric_id: impl Into<String>, system_id: impl Into<String>) -> Self {
        self.metric_id = metric_id.into();
        self.system_id = system_id.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.rho.validate("rho")?;
        self.eta.validate("eta")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorRepr<T> {
    Beta(BetaParams<T>),
    Grid(DiscretizedDist<T>),
}

/// Posterior over α together with its summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPosterior<T> {
    pub representation: PosteriorRepr<T>,
    pub mode: T,
    pub mean: T,
    pub variance: T,
}

/// Compact, serializable description of an [`AlphaPosterior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary<T> {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaParams<T>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
    pub mode: T,
    pub mean: T,
    pub variance: T,
}

impl<T: Real> AlphaPosterior<T> {
    pub fn from_beta(params: BetaParams<T>) -> Self {
        AlphaPosterior {
            mode: params.mode(),
            mean: params.mean(),
            variance: params.variance(),
            representation: PosteriorRepr::Beta(params),
        }
    }

    pub fn from_grid(dist: DiscretizedDist<T>) -> Result<Self> {
        let (mean, variance) = moments(&dist)?;
        Ok(AlphaPosterior { mode: dist.mode(), mean, variance, representation: PosteriorRepr::Grid(dist) })
    }

    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }

    /// Grid resolution if the posterior is held on a grid.
    pub fn grid_bins(&self) -> Option<usize> {
        match &self.representation {
            PosteriorRepr::Grid(d) => Some(d.n_bins()),
            PosteriorRepr::Beta(_) => None,
        }
    }

    /// The posterior as an `n_bins` grid. Grids are only returned at their own
    /// resolution; re-binning is not supported.
    pub fn to_grid(&self, n_bins: usize) -> Result<DiscretizedDist<T>> {
        match &self.representation {
            PosteriorRepr::Beta(b) => discretize_beta(b, n_bins),
            PosteriorRepr::Grid(d) if d.n_bins() == n_bins => Ok(d.clone()),
            PosteriorRepr::Grid(d) => Err(Error::contract(format!(
                "posterior grid has {} bins, {n_bins} requested",
                d.n_bins()
            ))),
        }
    }

    pub fn summary(&self) -> PosteriorSummary<T> {
        let (kind, beta, n_bins) = match &self.representation {
            PosteriorRepr::Beta(b) => ("beta", Some(*b), None),
            PosteriorRepr::Grid(d) => ("grid", None, Some(d.n_bins())),
        };
        PosteriorSummary {
            kind: kind.to_string(),
            beta,
            n_bins,
            mode: self.mode,
            mean: self.mean,
            variance: self.variance,
        }
    }
}

/// Closed-form estimate from a metric with known (ρ, η).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownRateEstimate<T> {
    /// Estimate clamped to [0, 1].
    pub alpha: T,
    /// Unclamped value of the estimator.
    pub raw: T,
    /// `raw` was outside [0, 1].
    pub clamped: bool,
    /// ρ + η < 1, so the metric's ratings were inverted first.
    pub flipped: bool,
}

/// Error-free case: Beta(n₊ + a, n_φ - n₊ + b).
pub fn estimate_error_free<T: Real>(n_plus: u64, n_phi: u64, prior: &BetaParams<T>) -> Result<AlphaPosterior<T>> {
    Ok(AlphaPosterior::from_beta(prior.posterior(n_plus, n_phi)?))
}

/// Mode of the α posterior under a uniform prior when ρ and η are known:
/// `(m₊/n_M + η - 1) / (ρ + η - 1)`. A metric with ρ + η < 1 is flipped
/// (m₊ → n_M - m₊, ρ → 1-ρ, η → 1-η) before evaluation.
pub fn estimate_known_rho_eta<T: Real>(m_plus: u64, n_m: u64, rho: T, eta: T) -> Result<KnownRateEstimate<T>> {
    if m_plus > n_m {
        return Err(Error::domain(format!("m_plus = {m_plus} exceeds n_M = {n_m}")));
    }
    if n_m == 0 {
        return Err(Error::domain("no metric ratings (n_M = 0)"));
    }
    for (name, v) in [("rho", rho), ("eta", eta)] {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    let one = T::one();
    let undefined = || Error::UndefinedEstimator {
        rho: rho.to_f64().unwrap_or(f64::NAN),
        eta: eta.to_f64().unwrap_or(f64::NAN),
    };
    // Snap each rate so that its complement is exact. Then the flipped
    // metric (n-m, 1-ρ, 1-η) sees the same operands as (m, ρ, η), bit for bit.
    let (rho, eta) = (snap_complement(rho), snap_complement(eta));
    let (rho_c, eta_c) = (one - rho, one - eta);
    if rho == eta_c {
        return Err(undefined());
    }
    let flipped = rho < eta_c;
    // (m, ρ, 1-η) of the orientation with ρ + η > 1
    let (m, r, false_pos) = if flipped { (n_m - m_plus, rho_c, eta) } else { (m_plus, rho, eta_c) };
    let raw = (count::<T>(m) / count::<T>(n_m) - false_pos) / (r - false_pos);
    let alpha = raw.max(T::zero()).min(one);
    Ok(KnownRateEstimate { alpha, raw, clamped: alpha != raw, flipped })
}

/// Moves `x` by at most half an ulp of one so that `1 - x` is exact, with
/// `snap_complement(fl(1 - x)) == 1 - snap_complement(x)`.
fn snap_complement<T: Real>(x: T) -> T {
    let half = T::one() / (T::one() + T::one());
    if x >= half { x } else { T::one() - (T::one() - x) }
}

/// Beta posteriors for ρ and η from paired gold/metric ratings under uniform
/// priors: ρ ~ Beta(m^TP + 1, n⁺ - m^TP + 1), η ~ Beta(m^TN + 1, n⁻ - m^TN + 1).
pub fn estimate_rho_eta<T: Real>(counts: &CountSummary, metric_id: &str, system_id: &str) -> Result<MetricPerformance<T>> {
    counts.validate()?;
    let uniform = BetaParams::<T>::uniform();
    let rho = uniform.posterior(counts.n_tp, counts.n_gold_pos)?;
    let eta = uniform.posterior(counts.n_tn, counts.n_gold_neg)?;
    let mut warnings = Vec::new();
    for (n, class) in [(counts.n_gold_pos, "positive"), (counts.n_gold_neg, "negative")] {
        if n < LOW_EVIDENCE_THRESHOLD {
            let msg = format!(
                "only {n} gold-{class} pairs for metric '{metric_id}' on system '{system_id}'; the {} estimate is weak",
                if class == "positive" { "rho" } else { "eta" }
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(MetricPerformance {
        rho: RateBelief::Beta(rho),
        eta: RateBelief::Beta(eta),
        metric_id: metric_id.to_string(),
        system_id: system_id.to_string(),
        warnings,
    })
}

/// Posterior over α after `m_plus` positive metric ratings out of `n_m`,
/// marginalizing ρ and η over their grids.
pub fn posterior_marginal<T: Real>(
    m_plus: u64,
    n_m: u64,
    rho_dist: &DiscretizedDist<T>,
    eta_dist: &DiscretizedDist<T>,
    alpha_prior: &DiscretizedDist<T>,
) -> Result<AlphaPosterior<T>> {
    rho_dist.check_normalized()?;
    eta_dist.check_normalized()?;
    let grid = marginal_grid(
        m_plus,
        n_m,
        (rho_dist.midpoints(), rho_dist.masses()),
        (eta_dist.midpoints(), eta_dist.masses()),
        alpha_prior,
    )?;
    AlphaPosterior::from_grid(grid)
}

/// Like [`posterior_marginal`], taking (ρ, η) beliefs that may be exact.
pub fn posterior_marginal_beliefs<T: Real>(
    m_plus: u64,
    n_m: u64,
    perf: &MetricPerformance<T>,
    alpha_prior: &DiscretizedDist<T>,
    grids: &GridConfig,
) -> Result<AlphaPosterior<T>> {
    perf.validate()?;
    grids.validate()?;
    let (rp, rm) = perf.rho.support(grids.n_rho)?;
    let (ep, em) = perf.eta.support(grids.n_eta)?;
    AlphaPosterior::from_grid(marginal_grid(m_plus, n_m, (&rp, &rm), (&ep, &em), alpha_prior)?)
}

fn log_support<T: Real>(points: &[T], masses: &[T]) -> Vec<(T, T)> {
    let peak = masses.iter().copied().fold(T::zero(), T::max);
    let floor = peak * lit(PRUNE_RELATIVE);
    points
        .iter()
        .zip(masses)
        .filter(|(_, m)| **m > T::zero() && **m >= floor)
        .map(|(x, m)| (*x, m.ln()))
        .collect()
}

fn marginal_grid<T: Real>(
    m_plus: u64,
    n_m: u64,
    rho: (&[T], &[T]),
    eta: (&[T], &[T]),
    alpha_prior: &DiscretizedDist<T>,
) -> Result<DiscretizedDist<T>> {
    alpha_prior.check_normalized()?;
    if m_plus > n_m {
        return Err(Error::domain(format!("m_plus = {m_plus} exceeds n_M = {n_m}")));
    }
    if n_m == 0 {
        return Ok(alpha_prior.clone());
    }
    let rho = log_support(rho.0, rho.1);
    let eta = log_support(eta.0, eta.1);
    let one = T::one();
    let pos = count::<T>(m_plus);
    let neg = count::<T>(n_m - m_plus);
    // log p^m (1-p)^(n-m) with 0·ln 0 = 0; the binomial coefficient cancels on normalization
    let kernel = |p: T| -> T {
        let a = if m_plus == 0 { T::zero() } else { pos * p.ln() };
        let b = if m_plus == n_m { T::zero() } else { neg * (one - p).ln() };
        a + b
    };

    let log_post: Vec<T> = alpha_prior
        .midpoints()
        .par_iter()
        .zip(alpha_prior.masses().par_iter())
        .map_init(
            || Vec::with_capacity(rho.len() * eta.len()),
            |terms, (&alpha, &w)| {
                if w <= T::zero() {
                    return T::neg_infinity();
                }
                terms.clear();
                let mut peak = T::neg_infinity();
                let off = one - alpha;
                for &(r, lr) in &rho {
                    let hit = alpha * r;
                    for &(e, le) in &eta {
                        let p = (hit + off * (one - e)).max(T::zero()).min(one);
                        let v = lr + le + kernel(p);
                        if v > peak {
                            peak = v;
                        }
                        terms.push(v);
                    }
                }
                if peak == T::neg_infinity() {
                    return peak;
                }
                let s: T = terms.iter().map(|v| (*v - peak).exp()).sum();
                w.ln() + peak + s.ln()
            },
        )
        .collect();

    let top = log_post.iter().copied().fold(T::neg_infinity(), T::max);
    if !top.is_finite() {
        return Err(Error::numeric(format!(
            "posterior has zero mass on every α bin (m_plus = {m_plus}, n_M = {n_m}, {} ρ points, {} η points)",
            rho.len(),
            eta.len()
        )));
    }
    DiscretizedDist::from_weights(log_post.into_iter().map(|v| (v - top).exp()).collect())
}

/// Mixed case: the error-free posterior Beta(n₊ + a, n_φ - n₊ + b) is
/// discretized and used as the prior for the metric likelihood.
pub fn posterior_mixed<T: Real>(
    counts: &CountSummary,
    perf: &MetricPerformance<T>,
    alpha_prior: &BetaParams<T>,
    grids: &GridConfig,
) -> Result<AlphaPosterior<T>> {
    counts.validate()?;
    grids.validate()?;
    let step1 = alpha_prior.posterior(counts.n_plus, counts.n_phi)?;
    let prior_grid = discretize_beta(&step1, grids.n_alpha)?;
    if counts.n_m == 0 {
        return AlphaPosterior::from_grid(prior_grid);
    }
    posterior_marginal_beliefs(counts.m_plus, counts.n_m, perf, &prior_grid, grids)
}

/// [`posterior_mixed`] with grid refinement: starting at `start`, grids are
/// doubled (up to `cap`) until the mode moves by less than `mode_tol` and the
/// standard deviation by less than `sd_tol`. Returns the finest posterior
/// computed and its grid.
pub fn posterior_mixed_converged<T: Real>(
    counts: &CountSummary,
    perf: &MetricPerformance<T>,
    alpha_prior: &BetaParams<T>,
    start: &GridConfig,
    cap: &GridConfig,
    mode_tol: T,
    sd_tol: T,
) -> Result<(AlphaPosterior<T>, GridConfig)> {
    let mut grids = start.capped(cap);
    let mut post = posterior_mixed(counts, perf, alpha_prior, &grids)?;
    if counts.n_m == 0 {
        // closed form; no (ρ, η) grid involved
        return Ok((post, grids));
    }
    loop {
        let next = grids.doubled().capped(cap);
        if next == grids {
            return Ok((post, grids));
        }
        let finer = posterior_mixed(counts, perf, alpha_prior, &next)?;
        let settled = (finer.mode - post.mode).abs() < mode_tol && (finer.std_dev() - post.std_dev()).abs() < sd_tol;
        grids = next;
        post = finer;
        if settled {
            return Ok((post, grids));
        }
    }
}

/// Folds several metrics' evidence into `base`, each posterior becoming the
/// prior for the next batch.
pub fn fuse_metrics<T: Real>(
    base: &AlphaPosterior<T>,
    batches: &[(CountSummary, MetricPerformance<T>)],
    grids: &GridConfig,
) -> Result<AlphaPosterior<T>> {
    if batches.is_empty() {
        return Ok(base.clone());
    }
    let n_alpha = base.grid_bins().unwrap_or(grids.n_alpha);
    let mut current = base.to_grid(n_alpha)?;
    let mut post = None;
    for (counts, perf) in batches {
        counts.validate()?;
        let next = posterior_marginal_beliefs(counts.m_plus, counts.n_m, perf, &current, grids)?;
        current = next.to_grid(n_alpha)?;
        post = Some(next);
    }
    Ok(post.expect("non-empty batches"))
}
