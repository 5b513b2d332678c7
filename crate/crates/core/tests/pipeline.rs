use std::fmt::Write as _;

use binmetric::binarize::{gold_counts, select_threshold};
use binmetric::estimation::{estimate_error_free, estimate_rho_eta, posterior_mixed};
use binmetric::ingest::{load_count_summary, load_ratings, save_report, scored_samples, summarize, Format, HUMAN_SOURCE};
use binmetric::significance::compare_systems;
use binmetric::{BetaParams, ComparisonResult, CountSummary, GridConfig};

/// `n` human ratings for `system`, the first `pos` positive.
fn human_rows(out: &mut String, system: &str, n: u32, pos: u32) {
    for i in 0..n {
        let _ = writeln!(out, "q{i},{system}-a{i},{system},human,binary,{}", u8::from(i < pos));
    }
}

#[test]
fn saved_counts_reproduce_the_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.json");
    save_report(&CountSummary { n_phi: 527, n_plus: 353, ..Default::default() }, &path).unwrap();
    let c = load_count_summary(&path).unwrap();
    let post = estimate_error_free(c.n_plus, c.n_phi, &BetaParams::uniform()).unwrap();
    assert_eq!(post.summary().beta, Some(BetaParams::new(354.0, 175.0).unwrap()));
}

#[test]
fn comparison_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cmp.json");
    let a = estimate_error_free(228, 600, &BetaParams::uniform()).unwrap();
    let b = estimate_error_free(144, 600, &BetaParams::uniform()).unwrap();
    let r = compare_systems(&a, &b, 0.05).unwrap();
    save_report(&r, &path).unwrap();
    assert_eq!(binmetric::ingest::load_report::<ComparisonResult>(&path).unwrap(), r);
}

#[test]
fn file_to_verdict() {
    let mut text = String::from("input_id,output_id,system_id,source,kind,value\n");
    human_rows(&mut text, "bl", 600, 228);
    human_rows(&mut text, "kv", 600, 144);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(&path, text).unwrap();

    let records = load_ratings(&path, Format::from_path(&path)).unwrap();
    let post = |system: &str| {
        let c = summarize(&records, HUMAN_SOURCE, "usr", system).unwrap().counts;
        estimate_error_free(c.n_plus, c.n_phi, &BetaParams::uniform()).unwrap()
    };
    let r = compare_systems(&post("bl"), &post("kv"), 0.05).unwrap();
    assert!(r.significant && r.prob_greater >= 0.999);
}

#[test]
fn scalar_metric_to_mixed_posterior() {
    // a scalar metric that is right about 80% of the time on a 60% system
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut text = String::new();
    for i in 0..400u32 {
        let gold = i % 5 < 3;
        let agrees = rng.random_bool(0.8);
        let score = if gold == agrees { 0.6 + (i % 7) as f64 / 20.0 } else { 0.1 + (i % 7) as f64 / 20.0 };
        let _ = writeln!(text, r#"{{"input_id":"q{i}","output_id":"a{i}","system_id":"s","source":"human","value":{}}}"#, u8::from(gold));
        let _ = writeln!(text, r#"{{"input_id":"q{i}","output_id":"a{i}","system_id":"s","source":"score","kind":"scalar","value":{score}}}"#);
    }
    let records = binmetric::ingest::parse_ratings(text.as_bytes(), Format::Jsonl).unwrap();
    let samples = scored_samples(&records, HUMAN_SOURCE, "score").unwrap();
    let choice = select_threshold(&samples).unwrap();
    assert!(choice.rho_hat > 0.7 && choice.eta_hat > 0.7, "{choice:?}");

    let gold = gold_counts(&samples, choice.tau);
    let perf = estimate_rho_eta::<f64>(&gold, "score", "s").unwrap();
    let counts = CountSummary { n_phi: 400, n_plus: 240, n_m: 5000, m_plus: 2700, ..gold };
    let post = posterior_mixed(&counts, &perf, &BetaParams::uniform(), &GridConfig::REDUCED).unwrap();
    let human_only = estimate_error_free(240, 400, &BetaParams::uniform()).unwrap();
    assert!(post.variance < human_only.variance);
    assert!((post.mode - 0.6).abs() < 0.05, "{}", post.mode);
}
