//! Rating files, count summaries and persisted reports.
//!
//! A rating is keyed by (input_id, output_id, system_id, source). Human
//! ratings come from the source `"human"` and are always binary; any other
//! source is a metric, binary or scalar. CSV columns are fixed as
//! `input_id,output_id,system_id,source,kind,value` (header optional);
//! JSONL uses the same field names.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::binarize::ScoredSample;
use crate::error::{Error, Result};
use crate::estimation::CountSummary;

pub const HUMAN_SOURCE: &str = "human";
pub const SCHEMA_VERSION: u32 = 1;

const CSV_COLUMNS: [&str; 6] = ["input_id", "output_id", "system_id", "source", "kind", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingKind {
    Binary,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub input_id: String,
    pub output_id: String,
    pub system_id: String,
    pub source: String,
    pub kind: RatingKind,
    pub value: f64,
}

impl RatingRecord {
    pub fn is_human(&self) -> bool {
        self.source == HUMAN_SOURCE
    }

    /// Binary value as a bool; only meaningful for binary records.
    pub fn positive(&self) -> bool {
        self.value == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guessed from the file extension: `.csv` is CSV, anything else JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    input_id: String,
    output_id: String,
    system_id: String,
    source: String,
    #[serde(default)]
    kind: Option<RatingKind>,
    value: f64,
}

fn parse_kind(s: &str, line: u64) -> Result<Option<RatingKind>> {
    match s.trim() {
        "" => Ok(None),
        "binary" => Ok(Some(RatingKind::Binary)),
        "scalar" => Ok(Some(RatingKind::Scalar)),
        other => Err(Error::Parse { line, message: format!("unknown kind '{other}' (expected binary or scalar)") }),
    }
}

fn finish(raw: RawRecord, line: u64) -> Result<RatingRecord> {
    let kind = raw.kind.unwrap_or(RatingKind::Binary);
    let value_error = |msg: String| Error::domain(format!("line {line}: {msg}"));
    if !raw.value.is_finite() {
        return Err(value_error(format!("value {} is not finite", raw.value)));
    }
    if raw.source == HUMAN_SOURCE && kind != RatingKind::Binary {
        return Err(value_error("human ratings must be binary".into()));
    }
    if kind == RatingKind::Binary && raw.value != 0.0 && raw.value != 1.0 {
        return Err(value_error(format!("binary rating must be 0 or 1, got {}", raw.value)));
    }
    for (name, v) in [("input_id", &raw.input_id), ("output_id", &raw.output_id), ("system_id", &raw.system_id), ("source", &raw.source)] {
        if v.is_empty() {
            return Err(Error::Parse { line, message: format!("{name} is empty") });
        }
    }
    Ok(RatingRecord {
        input_id: raw.input_id,
        output_id: raw.output_id,
        system_id: raw.system_id,
        source: raw.source,
        kind,
        value: raw.value,
    })
}

fn parse_jsonl<R: Read>(reader: R) -> Result<Vec<(RatingRecord, u64)>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        out.push((finish(raw, line_no)?, line_no));
    }
    Ok(out)
}

fn parse_csv<R: Read>(reader: R) -> Result<Vec<(RatingRecord, u64)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(idx as u64 + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(idx as u64 + 1, |p| p.line());
        if idx == 0 && rec.get(0) == Some(CSV_COLUMNS[0]) {
            if rec.iter().ne(CSV_COLUMNS) {
                return Err(Error::Parse { line, message: format!("header must be {}", CSV_COLUMNS.join(",")) });
            }
            continue;
        }
        if rec.len() != CSV_COLUMNS.len() {
            return Err(Error::Parse { line, message: format!("expected {} columns, found {}", CSV_COLUMNS.len(), rec.len()) });
        }
        let value = rec[5]
            .parse::<f64>()
            .map_err(|e| Error::Parse { line, message: format!("value '{}': {e}", &rec[5]) })?;
        let raw = RawRecord {
            input_id: rec[0].to_string(),
            output_id: rec[1].to_string(),
            system_id: rec[2].to_string(),
            source: rec[3].to_string(),
            kind: parse_kind(&rec[4], line)?,
            value,
        };
        out.push((finish(raw, line)?, line));
    }
    Ok(out)
}

/// Parses and validates ratings; duplicate keys are rejected.
pub fn parse_ratings<R: Read>(reader: R, format: Format) -> Result<Vec<RatingRecord>> {
    let rows = match format {
        Format::Jsonl => parse_jsonl(reader)?,
        Format::Csv => parse_csv(reader)?,
    };
    let mut seen = HashSet::with_capacity(rows.len());
    let mut out = Vec::with_capacity(rows.len());
    for (r, line) in rows {
        if !seen.insert((r.input_id.clone(), r.output_id.clone(), r.system_id.clone(), r.source.clone())) {
            return Err(Error::DuplicateKey {
                input_id: r.input_id,
                output_id: r.output_id,
                system_id: r.system_id,
                rater: r.source,
                line,
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_ratings(path: &Path, format: Format) -> Result<Vec<RatingRecord>> {
    parse_ratings(File::open(path)?, format)
}

/// Counts for one system and one metric, with the pairing diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub system_id: String,
    pub metric_id: Option<String>,
    pub counts: CountSummary,
    /// Pairs rated by both the humans and the metric.
    pub overlap: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Folds the ratings of `system` into counts. Human/metric pairs are matched
/// on (input_id, output_id); matched pairs give the TP/TN counts.
pub fn summarize(records: &[RatingRecord], human_source: &str, metric_source: &str, system: &str) -> Result<PairSummary> {
    if !records.iter().any(|r| r.system_id == system) {
        return Err(Error::NotFound(format!("system '{system}' has no ratings")));
    }
    let mut human: HashMap<(&str, &str), bool> = HashMap::new();
    let mut metric: HashMap<(&str, &str), bool> = HashMap::new();
    for r in records.iter().filter(|r| r.system_id == system) {
        let key = (r.input_id.as_str(), r.output_id.as_str());
        if r.source == human_source {
            human.insert(key, r.positive());
        } else if r.source == metric_source {
            if r.kind != RatingKind::Binary {
                return Err(Error::domain(format!(
                    "metric '{metric_source}' has scalar ratings for system '{system}'; binarize it first"
                )));
            }
            metric.insert(key, r.positive());
        }
    }
    let mut c = CountSummary {
        n_phi: human.len() as u64,
        n_plus: human.values().filter(|v| **v).count() as u64,
        n_m: metric.len() as u64,
        m_plus: metric.values().filter(|v| **v).count() as u64,
        ..Default::default()
    };
    let mut overlap = 0;
    for (key, &gold) in &human {
        if let Some(&rated) = metric.get(key) {
            overlap += 1;
            if gold {
                c.n_gold_pos += 1;
                c.n_tp += rated as u64;
            } else {
                c.n_gold_neg += 1;
                c.n_tn += !rated as u64;
            }
        }
    }
    let mut warnings = Vec::new();
    if overlap == 0 && !metric.is_empty() {
        let msg = format!("no pairs of system '{system}' are rated by both '{human_source}' and '{metric_source}'; rho and eta have no evidence");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(PairSummary {
        system_id: system.to_string(),
        metric_id: Some(metric_source.to_string()),
        counts: c,
        overlap,
        warnings,
    })
}

/// Scalar scores of `metric_source` paired with the human label of the same
/// (input, output, system).
pub fn scored_samples(records: &[RatingRecord], human_source: &str, metric_source: &str) -> Result<Vec<ScoredSample>> {
    let gold: HashMap<(&str, &str, &str), bool> = records
        .iter()
        .filter(|r| r.source == human_source)
        .map(|r| ((r.input_id.as_str(), r.output_id.as_str(), r.system_id.as_str()), r.positive()))
        .collect();
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.source == metric_source) {
        if let Some(&g) = gold.get(&(r.input_id.as_str(), r.output_id.as_str(), r.system_id.as_str())) {
            out.push(ScoredSample {
                input_id: r.input_id.clone(),
                output_id: r.output_id.clone(),
                system_id: r.system_id.clone(),
                score: r.value,
                gold: g,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::NotFound(format!("no '{metric_source}' scores paired with '{human_source}' ratings")));
    }
    out.sort_by(|a, b| (&a.system_id, &a.input_id, &a.output_id).cmp(&(&b.system_id, &b.input_id, &b.output_id)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub schema_version: u32,
    /// Sorted by (system_id, metric_id).
    pub entries: Vec<PairSummary>,
}

/// One entry per (system, binary metric); systems without a binary metric
/// get a human-only entry.
pub fn summarize_dataset(records: &[RatingRecord], human_source: &str) -> Result<DatasetSummary> {
    let mut metrics: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        let set = metrics.entry(&r.system_id).or_default();
        if r.source != human_source && r.kind == RatingKind::Binary {
            set.insert(&r.source);
        }
    }
    let mut entries = Vec::new();
    for (system, sources) in metrics {
        if sources.is_empty() {
            let mut s = summarize(records, human_source, "", system)?;
            s.metric_id = None;
            s.warnings.clear();
            entries.push(s);
        }
        for source in sources {
            entries.push(summarize(records, human_source, source, system)?);
        }
    }
    Ok(DatasetSummary { schema_version: SCHEMA_VERSION, entries })
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    result: T,
}

fn schema_err(e: serde_json::Error) -> Error {
    Error::Schema(e.to_string())
}

/// Writes `result` wrapped as `{"schema_version": 1, "result": ...}`.
pub fn save_report<T: Serialize>(result: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&Envelope { schema_version: SCHEMA_VERSION, result }).map_err(schema_err)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_report<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(schema_err)?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(Error::Schema(format!("unsupported schema_version {v}"))),
        None => return Err(Error::Schema("missing schema_version".into())),
    }
    let env: Envelope<T> = serde_json::from_value(value).map_err(schema_err)?;
    Ok(env.result)
}

/// Loads a count summary, either bare or inside a report envelope, and checks
/// its invariants.
pub fn load_count_summary(path: &Path) -> Result<CountSummary> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(schema_err)?;
    let counts: CountSummary = if value.get("schema_version").is_some() {
        load_report(path)?
    } else {
        serde_json::from_value(value).map_err(schema_err)?
    };
    counts.validate().map_err(|e| Error::Schema(e.to_string()))?;
    Ok(counts)
}
