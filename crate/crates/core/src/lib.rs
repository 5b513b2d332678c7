//! Success-rate estimation for text-generation systems rated by error-free
//! (human) and error-prone (automated) binary metrics, pairwise significance,
//! and sample-size planning for evaluation campaigns.
//!
//! The numeric core ([`distributions`], [`estimation`], [`significance`]) is
//! generic over [`Real`]; the aliases below fix it to `f64`.

pub mod binarize;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod ingest;
pub mod planner;
pub mod scalar;
pub mod significance;
pub mod workflow;

pub use error::{Error, Result};
pub use scalar::Real;

pub use distributions::GridConfig;

pub type BetaParams = distributions::BetaParams<f64>;
pub type DiscretizedDist = distributions::DiscretizedDist<f64>;
pub type AlphaPosterior = estimation::AlphaPosterior<f64>;
pub type MetricPerformance = estimation::MetricPerformance<f64>;
pub type RateBelief = estimation::RateBelief<f64>;
pub type KnownRateEstimate = estimation::KnownRateEstimate<f64>;
pub use estimation::CountSummary;
pub type ComparisonResult = significance::ComparisonResult<f64>;

pub use binarize::{RocPoint, ScoredSample, ThresholdChoice};
pub use ingest::{RatingKind, RatingRecord};
pub use planner::{PlanParams, RateMode, SimulatedCounts};
