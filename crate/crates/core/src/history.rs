//! Benchmark-run CSV histories and the profile stores derived from them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ChemError, Result};
use crate::model::{ModelId, ModelProfile, ModelSet};

/// Column names in canonical order.
pub const COLUMNS: [&str; 14] = [
    "trial",
    "model",
    "task",
    "latency",
    "temperature",
    "id",
    "result",
    "quality",
    "gen_accuracy",
    "variance",
    "review_accuracy",
    "accuracy",
    "elapsed",
    "created",
];

pub const STORE_SCHEMA_VERSION: u32 = 1;

/// One row of a benchmark-run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub trial: String,
    pub model: String,
    pub task: String,
    pub latency: f64,
    pub temperature: f64,
    pub id: String,
    pub result: String,
    pub quality: f64,
    pub gen_accuracy: f64,
    pub variance: f64,
    pub review_accuracy: f64,
    pub accuracy: f64,
    pub elapsed: String,
    pub created: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFile {
    pub path: String,
    pub records: Vec<HistoryRecord>,
}

fn parse_err(path: &str, row: usize, field: &str, message: impl Into<String>) -> ChemError {
    ChemError::Parse { path: path.to_string(), row, field: field.to_string(), message: message.into() }
}

fn parse_num(path: &str, row: usize, field: &str, raw: &str, lo: f64, hi: f64) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| parse_err(path, row, field, format!("not a number: {raw:?}")))?;
    if !v.is_finite() || v < lo || v > hi {
        return Err(parse_err(path, row, field, format!("{v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

/// Parses a history CSV from memory. `path` is only used in error locations;
/// row numbers count the header as row 1.
pub fn parse_history_str(path: &str, text: &str) -> Result<Vec<HistoryRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, "header", e.to_string()))?.clone();
    let mut pos = [usize::MAX; 14];
    for (i, h) in headers.iter().enumerate() {
        if let Some(c) = COLUMNS.iter().position(|c| *c == h) {
            if pos[c] != usize::MAX {
                return Err(parse_err(path, 1, h, "duplicate column"));
            }
            pos[c] = i;
        }
    }
    if let Some(c) = pos.iter().position(|&p| p == usize::MAX) {
        return Err(parse_err(path, 1, COLUMNS[c], "missing column"));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| parse_err(path, row, "row", e.to_string()))?;
        let get = |c: usize| rec.get(pos[c]).unwrap_or("");
        let text_field = |c: usize| -> Result<String> {
            let v = get(c);
            if matches!(c, 0 | 1 | 5) && v.is_empty() {
                return Err(parse_err(path, row, COLUMNS[c], "empty"));
            }
            Ok(v.to_string())
        };
        let r = HistoryRecord {
            trial: text_field(0)?,
            model: text_field(1)?,
            task: text_field(2)?,
            latency: parse_num(path, row, "latency", get(3), 0.0, f64::MAX)?,
            temperature: parse_num(path, row, "temperature", get(4), 0.0, f64::MAX)?,
            id: text_field(5)?,
            result: text_field(6)?,
            quality: parse_num(path, row, "quality", get(7), 0.0, 10.0)?,
            gen_accuracy: parse_num(path, row, "gen_accuracy", get(8), 0.0, 1.0)?,
            variance: parse_num(path, row, "variance", get(9), 0.0, f64::MAX)?,
            review_accuracy: parse_num(path, row, "review_accuracy", get(10), 0.0, 1.0)?,
            accuracy: parse_num(path, row, "accuracy", get(11), 0.0, 1.0)?,
            elapsed: text_field(12)?,
            created: text_field(13)?,
        };
        if !seen.insert((r.trial.clone(), r.model.clone(), r.id.clone())) {
            return Err(parse_err(
                path,
                row,
                "id",
                format!("duplicate (trial, model, id) = ({}, {}, {})", r.trial, r.model, r.id),
            ));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn parse_history_csv(path: impl AsRef<Path>) -> Result<HistoryFile> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| parse_err(&name, 0, "file", format!("not UTF-8: {e}")))?;
    Ok(HistoryFile { records: parse_history_str(&name, &text)?, path: name })
}

/// Canonical CSV: fixed column order, shortest round-trip float formatting.
pub fn write_history_string(records: &[HistoryRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record([
            r.trial.clone(),
            r.model.clone(),
            r.task.clone(),
            format!("{:?}", r.latency),
            format!("{:?}", r.temperature),
            r.id.clone(),
            r.result.clone(),
            format!("{:?}", r.quality),
            format!("{:?}", r.gen_accuracy),
            format!("{:?}", r.variance),
            format!("{:?}", r.review_accuracy),
            format!("{:?}", r.accuracy),
            r.elapsed.clone(),
            r.created.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ChemError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Trial,
    Task,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Median,
}

fn aggregate(values: &mut [f64], how: Aggregation) -> f64 {
    // Sorting first makes the result independent of record order.
    values.sort_by(f64::total_cmp);
    match how {
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Median => {
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                (values[n / 2 - 1] + values[n / 2]) / 2.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<SourceFile>,
    pub record_counts: BTreeMap<ModelId, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileStore {
    pub context_key: String,
    pub grouping: Grouping,
    pub aggregation: Aggregation,
    pub profiles: BTreeMap<ModelId, ModelProfile>,
    pub provenance: Provenance,
}

impl ProfileStore {
    pub fn model_set(&self) -> Result<ModelSet> {
        ModelSet::new(self.profiles.values().cloned())
    }
}

/// One store per group key, sorted by key.
pub fn build_profiles(files: &[HistoryFile], grouping: Grouping, how: Aggregation) -> Result<Vec<ProfileStore>> {
    type Acc = BTreeMap<String, (Vec<f64>, Vec<f64>)>;
    let mut groups: BTreeMap<String, (Acc, BTreeMap<String, usize>)> = BTreeMap::new();
    for f in files {
        for r in &f.records {
            let key = match grouping {
                Grouping::Trial => r.trial.clone(),
                Grouping::Task => r.task.clone(),
                Grouping::All => "all".to_string(),
            };
            let (acc, sources) = groups.entry(key).or_default();
            let (q, a) = acc.entry(r.model.clone()).or_default();
            q.push(r.quality);
            a.push(r.accuracy);
            *sources.entry(f.path.clone()).or_default() += 1;
        }
    }
    groups
        .into_iter()
        .map(|(context_key, (acc, sources))| {
            let mut profiles = BTreeMap::new();
            let mut record_counts = BTreeMap::new();
            for (model, (mut q, mut a)) in acc {
                let id = ModelId::new(model)?;
                record_counts.insert(id.clone(), q.len());
                let p = ModelProfile::new(id.clone(), aggregate(&mut q, how), aggregate(&mut a, how))?;
                profiles.insert(id, p);
            }
            let sources = sources.into_iter().map(|(path, rows)| SourceFile { path, rows }).collect();
            Ok(ProfileStore {
                context_key,
                grouping,
                aggregation: how,
                profiles,
                provenance: Provenance { sources, record_counts },
            })
        })
        .collect()
}

#[derive(Serialize)]
struct StoreFileOut<'a> {
    schema_version: u32,
    stores: &'a [ProfileStore],
}

#[derive(Deserialize)]
struct StoreFileIn {
    schema_version: u32,
    stores: Vec<ProfileStore>,
}

pub fn profiles_to_json(stores: &[ProfileStore]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&StoreFileOut { schema_version: STORE_SCHEMA_VERSION, stores })?;
    s.push('\n');
    Ok(s)
}

pub fn write_profiles(stores: &[ProfileStore], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, profiles_to_json(stores)?)?;
    Ok(())
}

fn warn_unknown(value: &serde_json::Value, known: &[&str], at: &str) {
    if let Some(obj) = value.as_object() {
        for k in obj.keys().filter(|k| !known.contains(&k.as_str())) {
            log::warn!("ignoring unknown key {k:?} in {at}");
        }
    }
}

pub fn profiles_from_json(text: &str) -> Result<Vec<ProfileStore>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    match version {
        Some(v) if v == STORE_SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(ChemError::Migration { found: v as u32, expected: STORE_SCHEMA_VERSION }),
        None => return Err(ChemError::Mismatch("profile store has no schema_version".into())),
    }
    warn_unknown(&value, &["schema_version", "stores"], "profile store");
    if let Some(stores) = value.get("stores").and_then(|s| s.as_array()) {
        for s in stores {
            warn_unknown(s, &["context_key", "grouping", "aggregation", "profiles", "provenance"], "store");
        }
    }
    let file: StoreFileIn = serde_json::from_value(value)?;
    debug_assert_eq!(file.schema_version, STORE_SCHEMA_VERSION);
    let mut keys = BTreeSet::new();
    for s in &file.stores {
        if !keys.insert(&s.context_key) {
            return Err(ChemError::Mismatch(format!("context {:?} appears twice", s.context_key)));
        }
        for (id, p) in &s.profiles {
            if id != &p.model {
                return Err(ChemError::Mismatch(format!("profile keyed {id} names model {}", p.model)));
            }
            ModelProfile::new(p.model.clone(), p.quality, p.accuracy)?;
        }
    }
    Ok(file.stores)
}

pub fn read_profiles(path: impl AsRef<Path>) -> Result<Vec<ProfileStore>> {
    profiles_from_json(&fs::read_to_string(path)?)
}

/// Picks the store for `context`, or the only store when `context` is `None`.
pub fn select_store<'a>(stores: &'a [ProfileStore], context: Option<&str>) -> Result<&'a ProfileStore> {
    match context {
        Some(c) => stores
            .iter()
            .find(|s| s.context_key == c)
            .ok_or_else(|| ChemError::InvalidConfiguration(format!("no store for context {c:?}"))),
        None if stores.len() == 1 => Ok(&stores[0]),
        None => {
            let keys: Vec<&str> = stores.iter().map(|s| s.context_key.as_str()).collect();
            Err(ChemError::InvalidConfiguration(format!(
                "{} stores present ({}); pick one with a context key",
                stores.len(),
                keys.join(", ")
            )))
        }
    }
}
