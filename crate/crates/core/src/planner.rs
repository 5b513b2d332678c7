//! Campaign design: how small a difference in α can a given mix of human
//! ratings, metric ratings and paired gold ratings resolve?
//!
//! Counts are simulated deterministically by rounding their expected values,
//! the resulting posterior is built exactly as for real data, and ε is read
//! off its variance assuming both compared systems share it.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::SeedableRng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{normal_quantile, BetaParams, GridConfig};
use crate::error::{Error, Result};
use crate::estimation::{posterior_mixed_converged, CountSummary, MetricPerformance, RateBelief};

/// Shown next to simulated ε values.
pub const DISCLAIMER: &str =
    "simulated epsilon values are a planning guideline; how exact they are for a real campaign is not established";

/// Search ceiling for [`min_samples`].
pub const MAX_SAMPLES: u64 = 1_000_000_000;

/// Grid refinement stops once the mode moves less than this...
pub const MODE_TOL: f64 = 1e-3;
/// ...and the posterior standard deviation less than this.
pub const SD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// ρ and η are known exactly.
    Provided,
    /// ρ and η are Beta posteriors from simulated gold counts.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    pub alpha: f64,
    pub rho: f64,
    pub eta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub n_phi: u64,
    #[serde(rename = "n_M")]
    pub n_m: u64,
    #[serde(default)]
    pub n_rho_eta: u64,
    #[serde(default)]
    pub psi: f64,
    pub rho_eta_mode: RateMode,
    /// The gold pairs are the human-rated pairs: n_rho_eta follows n_phi and
    /// psi follows alpha, overriding the stored values.
    #[serde(default)]
    pub shared_gold: bool,
    #[serde(default = "default_grids")]
    pub grids: GridConfig,
    /// When set, grids are doubled from `grids` up to this cap until the
    /// posterior stops moving.
    #[serde(default)]
    pub grid_cap: Option<GridConfig>,
}

fn default_gamma() -> f64 {
    0.05
}

fn default_grids() -> GridConfig {
    GridConfig::REDUCED
}

impl PlanParams {
    /// Estimated rates with the gold pairs shared with the human ratings,
    /// the usual setting when planning a fresh campaign.
    pub fn shared(alpha: f64, rho: f64, eta: f64, gamma: f64, n_phi: u64, n_m: u64) -> Self {
        PlanParams {
            alpha,
            rho,
            eta,
            gamma,
            n_phi,
            n_m,
            n_rho_eta: n_phi,
            psi: alpha,
            rho_eta_mode: RateMode::Estimated,
            shared_gold: true,
            grids: GridConfig::REDUCED,
            grid_cap: Some(GridConfig::FULL),
        }
    }

    /// Known (ρ, η).
    pub fn provided(alpha: f64, rho: f64, eta: f64, gamma: f64, n_phi: u64, n_m: u64) -> Self {
        PlanParams { rho_eta_mode: RateMode::Provided, shared_gold: false, n_rho_eta: 0, ..Self::shared(alpha, rho, eta, gamma, n_phi, n_m) }
    }

    pub fn with_grids(mut self, grids: GridConfig, cap: Option<GridConfig>) -> Self {
        self.grids = grids;
        self.grid_cap = cap;
        self
    }

    /// Gold-set size and positive share after applying `shared_gold`.
    pub fn gold(&self) -> (u64, f64) {
        if self.shared_gold {
            (self.n_phi, self.alpha)
        } else {
            (self.n_rho_eta, self.psi)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (_, psi) = self.gold();
        for (name, v) in [("alpha", self.alpha), ("rho", self.rho), ("eta", self.eta), ("psi", psi)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::domain(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        self.grids.validate()?;
        if let Some(cap) = &self.grid_cap {
            cap.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedCounts {
    pub n_plus_sim: u64,
    pub m_plus_sim: u64,
    pub n_gold_pos_sim: u64,
    pub n_tp_sim: u64,
    pub n_gold_neg_sim: u64,
    pub n_tn_sim: u64,
}

fn round_half_up(x: f64) -> u64 {
    (x + 0.5).floor() as u64
}

/// Expected counts, each rounded as ⌊x + ½⌋.
pub fn simulate_counts(params: &PlanParams) -> Result<SimulatedCounts> {
    params.validate()?;
    let p = params.alpha * (params.rho + params.eta - 1.0) + (1.0 - params.eta);
    let (n_gold, psi) = params.gold();
    let n_pos = round_half_up(psi * n_gold as f64).min(n_gold);
    let n_neg = n_gold - n_pos;
    Ok(SimulatedCounts {
        n_plus_sim: round_half_up(params.alpha * params.n_phi as f64).min(params.n_phi),
        m_plus_sim: round_half_up(p * params.n_m as f64).min(params.n_m),
        n_gold_pos_sim: n_pos,
        n_tp_sim: round_half_up(params.rho * n_pos as f64).min(n_pos),
        n_gold_neg_sim: n_neg,
        n_tn_sim: round_half_up(params.eta * n_neg as f64).min(n_neg),
    })
}

impl SimulatedCounts {
    pub fn to_count_summary(&self, n_phi: u64, n_m: u64) -> CountSummary {
        CountSummary {
            n_phi,
            n_plus: self.n_plus_sim,
            n_m,
            m_plus: self.m_plus_sim,
            n_gold_pos: self.n_gold_pos_sim,
            n_tp: self.n_tp_sim,
            n_gold_neg: self.n_gold_neg_sim,
            n_tn: self.n_tn_sim,
        }
    }
}

fn epsilon_for_counts(params: &PlanParams, counts: &CountSummary) -> Result<f64> {
    if counts.n_phi == 0 && counts.n_m == 0 {
        // a flat posterior distinguishes nothing
        return Ok(1.0);
    }
    let z: f64 = normal_quantile(params.gamma)?;
    let uniform = BetaParams::<f64>::uniform();
    if counts.n_m == 0 {
        let var = uniform.posterior(counts.n_plus, counts.n_phi)?.variance();
        return Ok((2.0 * var).sqrt() * z);
    }
    let perf = match params.rho_eta_mode {
        RateMode::Provided => MetricPerformance::exact(params.rho, params.eta)?,
        RateMode::Estimated => MetricPerformance {
            rho: RateBelief::Beta(uniform.posterior(counts.n_tp, counts.n_gold_pos)?),
            eta: RateBelief::Beta(uniform.posterior(counts.n_tn, counts.n_gold_neg)?),
            metric_id: String::new(),
            system_id: String::new(),
            warnings: Vec::new(),
        },
    };
    let cap = params.grid_cap.unwrap_or(params.grids);
    let (post, _) = posterior_mixed_converged(counts, &perf, &uniform, &params.grids, &cap, MODE_TOL, SD_TOL)?;
    Ok((2.0 * post.variance).sqrt() * z)
}

/// ε_γ^sim = √(2σ²)·Z_γ for the simulated posterior. The n_φ = n_M = 0
/// case is 1 by convention; with n_M = 0 the Beta variance is used directly.
pub fn epsilon_sim(params: &PlanParams) -> Result<f64> {
    let sim = simulate_counts(params)?;
    epsilon_for_counts(params, &sim.to_count_summary(params.n_phi, params.n_m))
}

/// Mean ε over `campaigns` random campaigns with binomially drawn counts.
/// A validation aid for [`epsilon_sim`]; not used for planning.
pub fn epsilon_monte_carlo(params: &PlanParams, campaigns: usize, seed: u64) -> Result<f64> {
    params.validate()?;
    if campaigns == 0 {
        return Err(Error::domain("need at least one simulated campaign"));
    }
    let p = params.alpha * (params.rho + params.eta - 1.0) + (1.0 - params.eta);
    let (n_gold, psi) = params.gold();
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut draw = |n: u64, q: f64| -> Result<u64> {
        Binomial::new(n, q).map(|b| b.sample(&mut rng)).map_err(|e| Error::domain(e.to_string()))
    };
    let mut total = 0.0;
    for _ in 0..campaigns {
        let n_pos = draw(n_gold, psi)?;
        let n_neg = n_gold - n_pos;
        let counts = CountSummary {
            n_phi: params.n_phi,
            n_plus: draw(params.n_phi, params.alpha)?,
            n_m: params.n_m,
            m_plus: draw(params.n_m, p)?,
            n_gold_pos: n_pos,
            n_tp: draw(n_pos, params.rho)?,
            n_gold_neg: n_neg,
            n_tn: draw(n_neg, params.eta)?,
        };
        total += epsilon_for_counts(params, &counts)?;
    }
    Ok(total / campaigns as f64)
}

/// ε over a grid of (n_φ, n_M) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTable {
    pub params: PlanParams,
    pub phi_values: Vec<u64>,
    pub m_values: Vec<u64>,
    /// `epsilon[i][j]` is for `phi_values[i]`, `m_values[j]`.
    pub epsilon: Vec<Vec<f64>>,
    pub disclaimer: String,
}

pub fn plan_table(base: &PlanParams, phi_values: &[u64], m_values: &[u64]) -> Result<PlanTable> {
    plan_table_cancellable(base, phi_values, m_values, &AtomicBool::new(false))
}

/// [`plan_table`] that stops with [`Error::Cancelled`] once `cancel` is set.
/// Cells already started run to completion.
pub fn plan_table_cancellable(base: &PlanParams, phi_values: &[u64], m_values: &[u64], cancel: &AtomicBool) -> Result<PlanTable> {
    if phi_values.is_empty() || m_values.is_empty() {
        return Err(Error::domain("table axes must be non-empty"));
    }
    base.validate()?;
    let cells: Vec<(u64, u64)> =
        phi_values.iter().flat_map(|&phi| m_values.iter().map(move |&m| (phi, m))).collect();
    let flat = cells
        .par_iter()
        .map(|&(n_phi, n_m)| {
            if cancel.load(Ordering::Relaxed) {
                return Err(Error::Cancelled);
            }
            epsilon_sim(&PlanParams { n_phi, n_m, ..*base })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PlanTable {
        params: *base,
        phi_values: phi_values.to_vec(),
        m_values: m_values.to_vec(),
        epsilon: flat.chunks(m_values.len()).map(<[f64]>::to_vec).collect(),
        disclaimer: DISCLAIMER.to_string(),
    })
}

impl PlanTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_phi");
        for m in &self.m_values {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        for (phi, row) in self.phi_values.iter().zip(&self.epsilon) {
            let _ = write!(out, "{phi}");
            for e in row {
                let _ = write!(out, ",{e:.3}");
            }
            out.push('\n');
        }
        out
    }

    /// Rows are n_φ, columns n_M, values to three decimals.
    pub fn to_text(&self) -> String {
        let width = self
            .m_values
            .iter()
            .map(|m| m.to_string().len())
            .chain(self.phi_values.iter().map(|p| p.to_string().len()))
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = String::new();
        let _ = write!(out, "{:>width$} |", "phi\\M");
        for m in &self.m_values {
            let _ = write!(out, " {m:>width$}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(width + 2 + (width + 1) * self.m_values.len()));
        out.push('\n');
        for (phi, row) in self.phi_values.iter().zip(&self.epsilon) {
            let _ = write!(out, "{phi:>width$} |");
            for e in row {
                let _ = write!(out, " {e:>width$.3}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "note: {}", self.disclaimer);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeVariable {
    NPhi,
    #[serde(rename = "n_M")]
    NM,
    NRhoEta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MinSamples {
    Reached { count: u64, epsilon: f64 },
    /// Even [`MAX_SAMPLES`] does not reach the target; `epsilon` is the value there.
    Unreachable { epsilon: f64 },
}

fn with_free(params: &PlanParams, free: FreeVariable, n: u64) -> PlanParams {
    let mut p = *params;
    match free {
        FreeVariable::NPhi => p.n_phi = n,
        FreeVariable::NM => p.n_m = n,
        FreeVariable::NRhoEta => p.n_rho_eta = n,
    }
    p
}

/// Smallest value of `free` (others fixed) with ε ≤ `target`, assuming ε is
/// non-increasing in it. Doubling search, then bisection.
pub fn min_samples(target: f64, params: &PlanParams, free: FreeVariable) -> Result<MinSamples> {
    if target.is_nan() || target <= 0.0 {
        return Err(Error::domain(format!("target epsilon must be positive, got {target}")));
    }
    if free == FreeVariable::NRhoEta && params.shared_gold {
        return Err(Error::domain("n_rho_eta is tied to n_phi when the gold set is shared"));
    }
    params.validate()?;
    let eps = |n: u64| epsilon_sim(&with_free(params, free, n));

    let e0 = eps(0)?;
    if e0 <= target {
        return Ok(MinSamples::Reached { count: 0, epsilon: e0 });
    }
    let (mut lo, mut hi) = (0u64, 1u64);
    let mut e_hi = eps(hi)?;
    while e_hi > target {
        if hi == MAX_SAMPLES {
            return Ok(MinSamples::Unreachable { epsilon: e_hi });
        }
        lo = hi;
        hi = (hi * 2).min(MAX_SAMPLES);
        e_hi = eps(hi)?;
    }
    // invariant: eps(lo) > target >= eps(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let e = eps(mid)?;
        if e <= target {
            hi = mid;
            e_hi = e;
        } else {
            lo = mid;
        }
    }
    Ok(MinSamples::Reached { count: hi, epsilon: e_hi })
}

/// ε against metric accuracy (ρ = η = accuracy) with known rates.
pub fn epsilon_curve(params: &PlanParams, accuracies: &[f64]) -> Result<Vec<(f64, f64)>> {
    accuracies
        .iter()
        .map(|&acc| {
            if !(acc > 0.5 && acc <= 1.0) {
                return Err(Error::domain(format!("accuracy must lie in (0.5, 1], got {acc}")));
            }
            let p = PlanParams { rho: acc, eta: acc, rho_eta_mode: RateMode::Provided, ..*params };
            Ok((acc, epsilon_sim(&p)?))
        })
        .collect()
}
