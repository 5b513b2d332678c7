//! Turning a scalar metric into a binary one by thresholding.
//!
//! `M_b(i, o) = 1` iff `score > τ`. Candidate thresholds are the distinct
//! observed scores plus a `-∞` sentinel; the selected τ makes the resulting
//! true-positive and true-negative rates as equal as possible.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimation::CountSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub input_id: String,
    pub output_id: String,
    pub system_id: String,
    pub score: f64,
    /// Error-free label.
    pub gold: bool,
}

/// Serializes `-∞` as `null`, which JSON can represent.
mod tau_serde {
    use super::*;

    pub fn serialize<S: Serializer>(tau: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if tau.is_finite() {
            s.serialize_f64(*tau)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "tau_serde")]
    pub tau: f64,
    /// ρ at this threshold.
    pub tpr: f64,
    /// 1 - η at this threshold.
    pub fpr: f64,
    pub n_pos: u64,
    pub n_neg: u64,
    /// Gold positives scoring above τ.
    pub tp: u64,
    /// Gold negatives scoring at or below τ.
    pub tn: u64,
}

impl RocPoint {
    fn new(tau: f64, tp: u64, tn: u64, n_pos: u64, n_neg: u64) -> Self {
        let rate = |k: u64, n: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        RocPoint { tau, tpr: rate(tp, n_pos), fpr: rate(n_neg - tn, n_neg), n_pos, n_neg, tp, tn }
    }

    pub fn rho(&self) -> f64 {
        self.tpr
    }

    pub fn eta(&self) -> f64 {
        1.0 - self.fpr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    #[serde(with = "tau_serde")]
    pub tau: f64,
    pub rho_hat: f64,
    pub eta_hat: f64,
    pub point: RocPoint,
}

pub fn binarize_scores(samples: &[ScoredSample], tau: f64) -> Vec<bool> {
    samples.iter().map(|s| s.score > tau).collect()
}

fn check_scores(samples: &[ScoredSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::domain("no scored samples"));
    }
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::domain(format!("score for ({}, {}) is not finite", s.input_id, s.output_id)));
    }
    Ok(())
}

/// One point per distinct score, ascending in τ, after the `-∞` sentinel.
pub fn roc_points(samples: &[ScoredSample]) -> Result<Vec<RocPoint>> {
    check_scores(samples)?;
    let mut sorted: Vec<(f64, bool)> = samples.iter().map(|s| (s.score, s.gold)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = sorted.iter().filter(|s| s.1).count() as u64;
    let n_neg = sorted.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        log::warn!("only one gold class among {} scored samples; rates for the other are reported as 0", sorted.len());
    }

    let mut points = vec![RocPoint::new(f64::NEG_INFINITY, n_pos, 0, n_pos, n_neg)];
    // positives and negatives with score <= the current τ
    let (mut pos_at_or_below, mut neg_at_or_below) = (0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let tau = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == tau {
            if sorted[i].1 {
                pos_at_or_below += 1;
            } else {
                neg_at_or_below += 1;
            }
            i += 1;
        }
        points.push(RocPoint::new(tau, n_pos - pos_at_or_below, neg_at_or_below, n_pos, n_neg));
    }
    Ok(points)
}

/// The candidate with the smallest |ρ̂ - η̂|; ties go to the larger ρ̂ + η̂,
/// then the smaller τ. Rates are compared as exact fractions.
pub fn select_threshold(samples: &[ScoredSample]) -> Result<ThresholdChoice> {
    let points = roc_points(samples)?;
    let (n_pos, n_neg) = (points[0].n_pos, points[0].n_neg);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::domain(format!(
            "threshold selection needs both gold classes (got {n_pos} positive, {n_neg} negative)"
        )));
    }
    // ρ - η and ρ + η scaled by n_pos·n_neg
    let key = |p: &RocPoint| {
        let r = p.tp as i128 * n_neg as i128;
        let e = p.tn as i128 * n_pos as i128;
        ((r - e).abs(), -(r + e))
    };
    // points are already in ascending τ, so min_by_key keeps the smallest τ on ties
    let best = points.iter().min_by_key(|p| key(p)).expect("sentinel point always present");
    Ok(ThresholdChoice { tau: best.tau, rho_hat: best.rho(), eta_hat: best.eta(), point: *best })
}

/// Key used for the pooled selection in [`select_thresholds`].
pub const POOLED_KEY: &str = "*";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One threshold per system_id.
    #[default]
    PerSystem,
    /// One threshold over all systems, stored under [`POOLED_KEY`].
    Pooled,
}

pub fn select_thresholds(samples: &[ScoredSample], pooling: Pooling) -> Result<BTreeMap<String, ThresholdChoice>> {
    check_scores(samples)?;
    let mut out = BTreeMap::new();
    match pooling {
        Pooling::Pooled => {
            out.insert(POOLED_KEY.to_string(), select_threshold(samples)?);
        }
        Pooling::PerSystem => {
            let mut groups: BTreeMap<&str, Vec<ScoredSample>> = BTreeMap::new();
            for s in samples {
                groups.entry(&s.system_id).or_default().push(s.clone());
            }
            for (system, group) in groups {
                let choice = select_threshold(&group).map_err(|e| Error::domain(format!("system '{system}': {e}")))?;
                out.insert(system.to_string(), choice);
            }
        }
    }
    Ok(out)
}

/// Gold-pair counts (n_gold_pos, n_tp, n_gold_neg, n_tn) of the binarized
/// metric at `tau`; the other fields are zero.
pub fn gold_counts(samples: &[ScoredSample], tau: f64) -> CountSummary {
    let mut c = CountSummary::default();
    for s in samples {
        let rated = s.score > tau;
        if s.gold {
            c.n_gold_pos += 1;
            c.n_tp += rated as u64;
        } else {
            c.n_gold_neg += 1;
            c.n_tn += !rated as u64;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSelection {
    pub choice: ThresholdChoice,
    /// Counts on the held-out estimation set at the chosen τ.
    pub estimation_counts: CountSummary,
}

/// Chooses τ on one sample set and counts on another, avoiding the optimism
/// of estimating (ρ, η) on the data that picked τ.
pub fn select_split(selection: &[ScoredSample], estimation: &[ScoredSample]) -> Result<SplitSelection> {
    let choice = select_threshold(selection)?;
    check_scores(estimation)?;
    Ok(SplitSelection { choice, estimation_counts: gold_counts(estimation, choice.tau) })
}

/// Trapezoidal area under the ROC polyline.
pub fn auc(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[0].fpr - w[1].fpr) * (w[0].tpr + w[1].tpr) / 2.0).sum()
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("tau,tpr,fpr,n_pos,n_neg\n");
    for p in points {
        let tau = if p.tau.is_finite() { p.tau.to_string() } else { "-inf".to_string() };
        out.push_str(&format!("{tau},{},{},{},{}\n", p.tpr, p.fpr, p.n_pos, p.n_neg));
    }
    out
}
