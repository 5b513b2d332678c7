//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test -p binmetric-core --test acceptance`.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use binmetric::binarize::{binarize_scores, roc_points};
use binmetric::distributions::{discretize_beta, DiscretizedDist};
use binmetric::estimation::{estimate_error_free, estimate_known_rho_eta, posterior_marginal, posterior_marginal_beliefs};
use binmetric::ingest::{summarize_dataset, RatingKind, RatingRecord};
use binmetric::planner::{epsilon_sim, plan_table};
use binmetric::significance::{compare_systems, prob_greater};
use binmetric::{AlphaPosterior, BetaParams, GridConfig, MetricPerformance, PlanParams, ScoredSample};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use statrs::distribution::{ContinuousCDF, Normal};

type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    // printed values are rounded to 3 decimals, so allow for float noise at the edge
    (got - want).abs() <= tol + 1e-12
}

const GRID_PHI: [u64; 3] = [100, 1000, 5000];
const GRID_M: [u64; 4] = [0, 1000, 10_000, 50_000];
/// Reference values for the rows/columns above (α = .6, ρ = η = .7).
const GRID_REFERENCE: [[f64; 4]; 3] = [[0.134, 0.124, 0.123, 0.123], [0.043, 0.041, 0.040, 0.040], [0.019, 0.019, 0.018, 0.018]];

fn shared_gold_grid() -> Outcome {
    let start = Instant::now();
    let base = PlanParams::shared(0.6, 0.7, 0.7, 0.05, 0, 0);
    let t = match plan_table(&base, &GRID_PHI, &GRID_M) {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    let mut misses = Vec::new();
    for (i, row) in t.epsilon.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            let want = GRID_REFERENCE[i][j];
            worst = worst.max((e - want).abs());
            if !within(e, want, 0.002) {
                misses.push(format!("({}, {}) {e:.4} vs {want}", GRID_PHI[i], GRID_M[j]));
            }
        }
    }
    let fast = elapsed <= Duration::from_secs(600);
    outcome(
        misses.is_empty() && fast,
        format!("12 cells, max |diff| {worst:.4} (tol 0.002), {:.1}s (limit 600s){}", elapsed.as_secs_f64(), if misses.is_empty() { String::new() } else { format!("; misses: {}", misses.join(", ")) }),
    )
}

fn known_rate_cells() -> Outcome {
    let cells = [(0u64, 1000u64, 0.109), (5000, 0, 0.019), (2500, 10_000, 0.020), (0, 50_000, 0.015), (5000, 50_000, 0.012)];
    let mut parts = Vec::new();
    let mut pass = true;
    for (phi, m, want) in cells {
        let e = match epsilon_sim(&PlanParams::provided(0.6, 0.7, 0.7, 0.05, phi, m)) {
            Ok(e) => e,
            Err(e) => return outcome(false, e.to_string()),
        };
        pass &= within(e, want, 0.002);
        parts.push(format!("({phi},{m}) {e:.4}/{want}"));
    }
    outcome(pass, parts.join(", "))
}

fn null_metric() -> Outcome {
    let phis = [100u64, 250, 500, 1000, 2500, 5000, 10_000];
    let ms = [0u64, 1000, 2500, 5000, 10_000, 50_000, 100_000];
    let base = PlanParams::shared(0.6, 0.51, 0.51, 0.05, 0, 0);
    let t = match plan_table(&base, &phis, &ms) {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let spreads: Vec<f64> = t
        .epsilon
        .iter()
        .map(|row| row.iter().copied().fold(f64::MIN, f64::max) - row.iter().copied().fold(f64::MAX, f64::min))
        .collect();
    let worst = spreads.iter().copied().fold(0.0, f64::max);
    outcome(worst < 0.001, format!("{} rows x {} n_M values, max spread {worst:.5} (limit 0.001)", phis.len(), ms.len()))
}

fn accuracy_curve_anchors() -> Outcome {
    // known (ρ, η) with the gold set equal to the human set
    let anchors = [(527u64, 0.6, 0.053, 0.059), (100, 0.6, 0.107, 0.117), (100, 0.52, 0.125, 0.135)];
    let mut parts = Vec::new();
    let mut pass = true;
    for (phi, acc, lo, hi) in anchors {
        let p = PlanParams { n_rho_eta: phi, psi: 0.65, ..PlanParams::provided(0.65, acc, acc, 0.05, phi, 1000) };
        let e = match epsilon_sim(&p) {
            Ok(e) => e,
            Err(e) => return outcome(false, e.to_string()),
        };
        pass &= (lo..=hi).contains(&e);
        parts.push(format!("(n_phi={phi}, acc={acc}) {e:.4} in [{lo}, {hi}]"));
    }
    outcome(pass, parts.join(", "))
}

fn gold_size_anchors() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (n_gold, want) in [(600u64, 0.11), (5000, 0.08)] {
        let p = PlanParams { n_rho_eta: n_gold, psi: 0.3, shared_gold: false, ..PlanParams::shared(0.3, 0.6, 0.6, 0.05, 100, 10_000) };
        let e = match epsilon_sim(&p) {
            Ok(e) => e,
            Err(e) => return outcome(false, e.to_string()),
        };
        pass &= within(e, want, 0.01);
        parts.push(format!("n_rho_eta={n_gold}: {e:.4} vs {want}±0.01"));
    }
    outcome(pass, format!("{} (alpha=0.3, n_phi=100)", parts.join(", ")))
}

fn beta_post(a: f64, b: f64) -> AlphaPosterior {
    AlphaPosterior::from_beta(BetaParams::new(a, b).unwrap())
}

fn oracle_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975);
    let mut notes = Vec::new();

    // error-free ε against the analytic Beta variance
    let mut worst_free: f64 = 0.0;
    for _ in 0..50 {
        let alpha: f64 = rng.random_range(0.01..0.99);
        let n: u64 = rng.random_range(1..20_000);
        let e = epsilon_sim(&PlanParams::shared(alpha, 0.7, 0.7, 0.05, n, 0)).unwrap();
        let k = (alpha * n as f64 + 0.5).floor();
        let (a, b) = (k + 1.0, n as f64 - k + 1.0);
        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        worst_free = worst_free.max((e - (2.0 * var).sqrt() * z).abs());
    }
    let free_ok = worst_free <= 1e-6;
    notes.push(format!("error-free max |diff| {worst_free:.2e}"));

    // closed-form mode against the grid argmax
    let n_alpha = GridConfig::FULL.n_alpha;
    let prior = DiscretizedDist::uniform(n_alpha).unwrap();
    let grids = GridConfig::FULL;
    let mut worst_mode: f64 = 0.0;
    for _ in 0..50 {
        let rho: f64 = rng.random_range(0.55..1.0);
        let eta: f64 = rng.random_range(0.55..1.0);
        let alpha: f64 = rng.random_range(0.02..0.98);
        let n: u64 = rng.random_range(200..20_000);
        let m = ((alpha * (rho + eta - 1.0) + 1.0 - eta) * n as f64).round() as u64;
        let closed = estimate_known_rho_eta(m, n, rho, eta).unwrap().alpha;
        let perf = MetricPerformance::exact(rho, eta).unwrap();
        let grid = posterior_marginal_beliefs(m, n, &perf, &prior, &grids).unwrap().mode;
        worst_mode = worst_mode.max((closed - grid).abs());
    }
    let mode_ok = worst_mode <= 2.0 / n_alpha as f64;
    notes.push(format!("closed-form mode max |diff| {worst_mode:.2e} (limit {:.0e})", 2.0 / n_alpha as f64));

    // P(α₁ > α₂) against Monte Carlo
    let draws = 1_000_000;
    let mut worst_se: f64 = 0.0;
    for _ in 0..20 {
        let (a1, b1, a2, b2) = (
            rng.random_range(2.0..400.0),
            rng.random_range(2.0..400.0),
            rng.random_range(2.0..400.0),
            rng.random_range(2.0..400.0),
        );
        let p = prob_greater(&beta_post(a1, b1), &beta_post(a2, b2)).unwrap();
        let (x, y) = (Beta::new(a1, b1).unwrap(), Beta::new(a2, b2).unwrap());
        let wins = (0..draws).filter(|_| x.sample(&mut rng) > y.sample(&mut rng)).count();
        let mc = wins as f64 / draws as f64;
        let se = (mc * (1.0 - mc) / draws as f64).sqrt().max(1.0 / draws as f64);
        worst_se = worst_se.max((p - mc).abs() / se);
    }
    let mc_ok = worst_se <= 3.0;
    notes.push(format!("prob_greater max {worst_se:.2} SE (limit 3)"));

    // verdicts at the counts implied by the showcase's rounded α̃
    let verdicts = |n: f64, alphas: [f64; 3]| -> Vec<bool> {
        let posts: Vec<_> = alphas
            .iter()
            .map(|a| {
                let k = (a * n).round() as u64;
                estimate_error_free(k, n as u64, &BetaParams::uniform()).unwrap()
            })
            .collect();
        [(0, 1), (0, 2), (1, 2)].iter().map(|&(i, j)| compare_systems(&posts[i], &posts[j], 0.05).unwrap().significant).collect()
    };
    let v600 = verdicts(600.0, [0.38, 0.30, 0.24]);
    let v100 = verdicts(100.0, [0.38, 0.30, 0.25]);
    let verdict_ok = v600 == [true, true, true] && v100 == [false, true, false];
    notes.push(format!("showcase verdicts n=600 {v600:?}, n=100 {v100:?}"));

    outcome(free_ok && mode_ok && mc_ok && verdict_ok, notes.join("; "))
}

fn naive_roc(samples: &[ScoredSample]) -> Vec<(f64, u64, u64)> {
    let mut taus: Vec<f64> = samples.iter().map(|s| s.score).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.insert(0, f64::NEG_INFINITY);
    taus.into_iter()
        .map(|t| {
            let tp = samples.iter().filter(|s| s.gold && s.score > t).count() as u64;
            let tn = samples.iter().filter(|s| !s.gold && s.score <= t).count() as u64;
            (t, tp, tn)
        })
        .collect()
}

fn invariant_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failed = Vec::new();

    // normalization
    for _ in 0..20 {
        let rho = discretize_beta(&BetaParams::new(rng.random_range(2.0..200.0), rng.random_range(2.0..100.0)).unwrap(), 200).unwrap();
        let eta = discretize_beta(&BetaParams::new(rng.random_range(2.0..200.0), rng.random_range(2.0..100.0)).unwrap(), 200).unwrap();
        let prior = discretize_beta(&BetaParams::new(rng.random_range(1.0..50.0), rng.random_range(1.0..50.0)).unwrap(), 500).unwrap();
        let n = rng.random_range(0..50_000u64);
        let m = rng.random_range(0..=n);
        let post = posterior_marginal(m, n, &rho, &eta, &prior).unwrap();
        if (post.to_grid(500).unwrap().total_mass() - 1.0).abs() > 1e-9 {
            failed.push("normalization");
            break;
        }
    }

    // antisymmetry
    for _ in 0..50 {
        let x = beta_post(rng.random_range(1.0..500.0), rng.random_range(1.0..500.0));
        let y = beta_post(rng.random_range(1.0..500.0), rng.random_range(1.0..500.0));
        if (prob_greater(&x, &y).unwrap() + prob_greater(&y, &x).unwrap() - 1.0).abs() > 1e-9 {
            failed.push("antisymmetry");
            break;
        }
    }

    // monotonicity lattice: 4 n_φ × 4 n_M × 3 accuracies
    let phis = [50u64, 200, 800, 2000];
    let ms = [0u64, 500, 2000, 8000];
    let accs = [0.6, 0.75, 0.9];
    let eps = |phi, m, acc| epsilon_sim(&PlanParams::shared(0.6, acc, acc, 0.05, phi, m).with_grids(GridConfig::REDUCED, None)).unwrap();
    let mut cube = [[[0.0f64; 3]; 4]; 4];
    for (i, &phi) in phis.iter().enumerate() {
        for (j, &m) in ms.iter().enumerate() {
            for (k, &acc) in accs.iter().enumerate() {
                cube[i][j][k] = eps(phi, m, acc);
            }
        }
    }
    let mut mono = true;
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..3 {
                let e = cube[i][j][k];
                mono &= i == 3 || cube[i + 1][j][k] <= e;
                mono &= j == 3 || cube[i][j + 1][k] <= e;
                mono &= k == 2 || cube[i][j][k + 1] <= e;
            }
        }
    }
    let mut last = f64::INFINITY;
    for n in [0u64, 100, 600, 5000] {
        let p = PlanParams { n_rho_eta: n, psi: 0.3, shared_gold: false, ..PlanParams::shared(0.3, 0.6, 0.6, 0.05, 100, 10_000) };
        let e = epsilon_sim(&p.with_grids(GridConfig::REDUCED, None)).unwrap();
        mono &= e <= last;
        last = e;
    }
    if !mono {
        failed.push("monotonicity");
    }

    // flip invariance
    for _ in 0..500 {
        let n = rng.random_range(1..10_000u64);
        let m = rng.random_range(0..=n);
        let (rho, eta): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        if (rho + eta - 1.0).abs() < 1e-6 {
            continue;
        }
        let a = estimate_known_rho_eta(m, n, rho, eta).unwrap().alpha;
        let b = estimate_known_rho_eta(n - m, n, 1.0 - rho, 1.0 - eta).unwrap().alpha;
        if a != b {
            failed.push("flip invariance");
            break;
        }
    }

    // ROC fast path against naive recount, and against binarized counts
    'roc: for _ in 0..300 {
        let n = rng.random_range(1..=200);
        let samples: Vec<ScoredSample> = (0..n)
            .map(|i| ScoredSample {
                input_id: format!("q{i}"),
                output_id: format!("o{i}"),
                system_id: "s".into(),
                score: rng.random_range(0..40) as f64 / 8.0,
                gold: rng.random_bool(0.5),
            })
            .collect();
        let fast = roc_points(&samples).unwrap();
        let slow = naive_roc(&samples);
        if fast.len() != slow.len() {
            failed.push("roc fast path");
            break;
        }
        for (p, (t, tp, tn)) in fast.iter().zip(slow) {
            let rated = binarize_scores(&samples, p.tau);
            let tp_b = samples.iter().zip(&rated).filter(|(s, r)| s.gold && **r).count() as u64;
            if p.tau != t || p.tp != tp || p.tn != tn || tp_b != tp {
                failed.push("roc fast path");
                break 'roc;
            }
        }
    }

    // ingest determinism under shuffling
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..400 {
        let (i, s, src) = (rng.random_range(0..60), rng.random_range(0..3), rng.random_range(0..3));
        if seen.insert((i, s, src)) {
            records.push(RatingRecord {
                input_id: format!("q{i}"),
                output_id: format!("q{i}-{s}"),
                system_id: format!("sys{s}"),
                source: ["human", "m1", "m2"][src].into(),
                kind: RatingKind::Binary,
                value: f64::from(u8::from(rng.random_bool(0.55))),
            });
        }
    }
    let reference = summarize_dataset(&records, "human").unwrap();
    for _ in 0..20 {
        records.shuffle(&mut rng);
        if summarize_dataset(&records, "human").unwrap() != reference {
            failed.push("ingest determinism");
            break;
        }
    }

    let checked = "normalization, antisymmetry, monotonicity lattice, flip invariance, roc fast path, ingest determinism";
    if failed.is_empty() {
        outcome(true, format!("all green: {checked}"))
    } else {
        outcome(false, format!("failed: {}", failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 7] = [
        ("epsilon grid, estimated rates, shared gold (alpha=.6, rho=eta=.7)", shared_gold_grid),
        ("epsilon cells, known rates (alpha=.6, rho=eta=.7)", known_rate_cells),
        ("near-chance metric adds nothing (rho=eta=.51)", null_metric),
        ("epsilon vs metric accuracy anchors", accuracy_curve_anchors),
        ("epsilon vs gold-set size anchors", gold_size_anchors),
        ("closed-form oracle suite", oracle_suite),
        ("invariant suite", invariant_suite),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!("{} | {name} | {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
