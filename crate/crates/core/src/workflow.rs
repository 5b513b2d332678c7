//! Request/report types shared by the command line and the HTTP service.
//! Each `run_*` function is the single library call behind one endpoint or
//! subcommand, so both front ends serialize exactly the same payload.

use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};

use crate::binarize::{auc, roc_points, select_thresholds, Pooling, RocPoint, ScoredSample, ThresholdChoice, POOLED_KEY};
use crate::distributions::{BetaParams, GridConfig};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_error_free, estimate_known_rho_eta, estimate_rho_eta, posterior_marginal_beliefs, posterior_mixed,
    AlphaPosterior, CountSummary, KnownRateEstimate, MetricPerformance, PosteriorSummary,
};
use crate::planner::{epsilon_sim, min_samples, plan_table, plan_table_cancellable, simulate_counts, FreeVariable, MinSamples, PlanParams, PlanTable, SimulatedCounts, DISCLAIMER};
use crate::significance::{compare_systems, ComparisonResult};

pub const DEFAULT_GAMMA: f64 = 0.05;

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    /// Human ratings only.
    Free,
    /// Metric ratings with known ρ, η.
    Known,
    /// Metric ratings with ρ, η estimated from the gold counts.
    Estimated,
    /// Human ratings as prior plus metric ratings; ρ, η known if given,
    /// otherwise estimated.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub mode: EstimateMode,
    #[serde(flatten)]
    pub counts: CountSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub metric_id: String,
    #[serde(default)]
    pub system_id: String,
}

impl EstimateRequest {
    pub fn new(mode: EstimateMode, counts: CountSummary) -> Self {
        EstimateRequest { mode, counts, rho: None, eta: None, grid: None, metric_id: String::new(), system_id: String::new() }
    }

    pub fn grid(&self) -> GridConfig {
        self.grid.unwrap_or(GridConfig::REDUCED)
    }

    fn known_rates(&self) -> Result<Option<(f64, f64)>> {
        match (self.rho, self.eta) {
            (Some(r), Some(e)) => Ok(Some((r, e))),
            (None, None) => Ok(None),
            _ => Err(Error::domain("rho and eta must be given together")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimateMode,
    /// Posterior mode; for `known` this is the closed-form estimate.
    pub mode: f64,
    pub mean: f64,
    pub variance: f64,
    pub posterior: PosteriorSummary<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub known: Option<KnownRateEstimate<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub performance: Option<MetricPerformance<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Dispatches to the estimator for `req.mode`. Returns the report and the
/// posterior itself (for comparisons).
pub fn run_estimate(req: &EstimateRequest) -> Result<(EstimateReport, AlphaPosterior<f64>)> {
    let c = &req.counts;
    c.validate()?;
    let uniform = BetaParams::uniform();
    let grid = req.grid();
    let mut warnings = Vec::new();
    let mut known = None;
    let mut performance = None;
    let mut used_grid = None;
    let ignored = |what: &str| format!("{what} are ignored in mode {:?}", req.mode).to_lowercase();

    let post = match req.mode {
        EstimateMode::Free => {
            if c.n_m > 0 {
                warnings.push(ignored("metric ratings"));
            }
            estimate_error_free(c.n_plus, c.n_phi, &uniform)?
        }
        EstimateMode::Known => {
            let (rho, eta) = req.known_rates()?.ok_or_else(|| Error::domain("mode known needs rho and eta"))?;
            if c.n_phi > 0 {
                warnings.push(ignored("human ratings"));
            }
            let k = estimate_known_rho_eta(c.m_plus, c.n_m, rho, eta)?;
            let perf = MetricPerformance::exact(rho, eta)?.with_ids(&req.metric_id, &req.system_id);
            let prior = crate::distributions::DiscretizedDist::uniform(grid.n_alpha)?;
            let mut post = posterior_marginal_beliefs(c.m_plus, c.n_m, &perf, &prior, &grid)?;
            post.mode = k.alpha;
            known = Some(k);
            performance = Some(perf);
            used_grid = Some(grid);
            post
        }
        EstimateMode::Estimated => {
            if c.n_phi > 0 {
                warnings.push(ignored("human ratings"));
            }
            let perf = estimate_rho_eta(c, &req.metric_id, &req.system_id)?;
            warnings.extend(perf.warnings.iter().cloned());
            let metric_only = CountSummary { n_phi: 0, n_plus: 0, ..*c };
            let post = posterior_mixed(&metric_only, &perf, &uniform, &grid)?;
            performance = Some(perf);
            used_grid = Some(grid);
            post
        }
        EstimateMode::Mixed => {
            let perf = match req.known_rates()? {
                Some((rho, eta)) => MetricPerformance::exact(rho, eta)?.with_ids(&req.metric_id, &req.system_id),
                None => {
                    let perf = estimate_rho_eta(c, &req.metric_id, &req.system_id)?;
                    warnings.extend(perf.warnings.iter().cloned());
                    perf
                }
            };
            let post = posterior_mixed(c, &perf, &uniform, &grid)?;
            performance = Some(perf);
            used_grid = Some(grid);
            post
        }
    };
    let report = EstimateReport {
        estimator: req.mode,
        mode: post.mode,
        mean: post.mean,
        variance: post.variance,
        posterior: post.summary(),
        known,
        performance,
        grid: used_grid,
        warnings,
    };
    Ok((report, post))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub a: EstimateRequest,
    pub b: EstimateRequest,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub a: EstimateReport,
    pub b: EstimateReport,
    #[serde(flatten)]
    pub comparison: ComparisonResult<f64>,
}

pub fn run_compare(req: &CompareRequest) -> Result<CompareReport> {
    if !(req.gamma > 0.0 && req.gamma < 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1), got {}", req.gamma)));
    }
    let (ra, pa) = run_estimate(&req.a)?;
    let (rb, pb) = run_estimate(&req.b)?;
    let comparison = compare_systems(&pa, &pb, req.gamma)?;
    Ok(CompareReport { a: ra, b: rb, comparison })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    #[serde(flatten)]
    pub params: PlanParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free: Option<FreeVariable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub params: PlanParams,
    pub counts: SimulatedCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_samples: Option<MinSamples>,
    pub disclaimer: String,
}

pub fn run_plan(req: &PlanRequest) -> Result<PlanReport> {
    let counts = simulate_counts(&req.params)?;
    let (epsilon, min) = match (req.target_epsilon, req.free) {
        (None, None) => (Some(epsilon_sim(&req.params)?), None),
        (Some(target), Some(free)) => (None, Some(min_samples(target, &req.params, free)?)),
        _ => return Err(Error::domain("target_epsilon and free must be given together")),
    };
    Ok(PlanReport { params: req.params, counts, epsilon, min_samples: min, disclaimer: DISCLAIMER.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTableRequest {
    #[serde(flatten)]
    pub params: PlanParams,
    pub phi_values: Vec<u64>,
    pub m_values: Vec<u64>,
}

pub fn run_plan_table(req: &PlanTableRequest) -> Result<PlanTable> {
    plan_table(&req.params, &req.phi_values, &req.m_values)
}

/// [`run_plan_table`] that gives up once `cancel` is set.
pub fn run_plan_table_cancellable(req: &PlanTableRequest, cancel: &AtomicBool) -> Result<PlanTable> {
    plan_table_cancellable(&req.params, &req.phi_values, &req.m_values, cancel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizeRequest {
    pub samples: Vec<ScoredSample>,
    #[serde(default)]
    pub pooling: Pooling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizeReport {
    pub thresholds: BTreeMap<String, ThresholdChoice>,
    pub roc: BTreeMap<String, Vec<RocPoint>>,
    pub auc: BTreeMap<String, f64>,
}

pub fn run_binarize(req: &BinarizeRequest) -> Result<BinarizeReport> {
    let thresholds = select_thresholds(&req.samples, req.pooling)?;
    let mut roc = BTreeMap::new();
    let mut areas = BTreeMap::new();
    for key in thresholds.keys() {
        let group: Vec<ScoredSample> = if key == POOLED_KEY && req.pooling == Pooling::Pooled {
            req.samples.clone()
        } else {
            req.samples.iter().filter(|s| &s.system_id == key).cloned().collect()
        };
        let points = roc_points(&group)?;
        areas.insert(key.clone(), auc(&points));
        roc.insert(key.clone(), points);
    }
    Ok(BinarizeReport { thresholds, roc, auc: areas })
}
