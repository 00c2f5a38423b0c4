//! Crowd annotation cleaning, worker gating and label aggregation.

mod alpha;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alpha::{krippendorff_alpha, AlphaError};
pub use split::{split_dataset, Split, SplitAssignment, SplitError, SplitRatio};

/// One worker's judgment of one comment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub comment_id: String,
    pub worker_id: String,
    pub is_attack: bool,
    pub not_english: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueLevel {
    Error,
    Warning,
}

/// A problem found in one row of an annotation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestIssue {
    pub line: u64,
    pub level: IssueLevel,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad header, expected {expected}")]
    Header { path: String, expected: String },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

const ANNOTATION_HEADER: [&str; 4] = ["comment_id", "worker_id", "is_attack", "not_english"];

fn parse_flag(field: &str) -> Option<bool> {
    match field.trim() {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Parse `comment_id,worker_id,is_attack,not_english` rows.
///
/// Malformed rows are reported with their line number. Rows repeating an
/// earlier `(comment, worker, is_attack)` triple are dropped with a warning.
pub fn ingest_annotations(path: &Path) -> Result<(Vec<AnnotationRecord>, Vec<IngestIssue>), IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_annotations_from(file, &path.display().to_string())
}

pub fn ingest_annotations_from<R: Read>(
    reader: R,
    name: &str,
) -> Result<(Vec<AnnotationRecord>, Vec<IngestIssue>), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|source| IngestError::Csv {
        path: name.to_string(),
        source,
    })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != ANNOTATION_HEADER {
        return Err(IngestError::Header {
            path: name.to_string(),
            expected: ANNOTATION_HEADER.join(","),
        });
    }
    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut seen: HashSet<(String, String, bool)> = HashSet::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                issues.push(IngestIssue {
                    line,
                    level: IssueLevel::Error,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let mut error = |msg: String| {
            issues.push(IngestIssue {
                line,
                level: IssueLevel::Error,
                message: msg,
            })
        };
        if row.len() != 4 {
            error(format!("expected 4 fields, found {}", row.len()));
            continue;
        }
        let comment_id = row[0].trim();
        let worker_id = row[1].trim();
        if comment_id.is_empty() || worker_id.is_empty() {
            error("empty comment_id or worker_id".to_string());
            continue;
        }
        let (Some(is_attack), Some(not_english)) = (parse_flag(&row[2]), parse_flag(&row[3])) else {
            error(format!(
                "is_attack/not_english must be 0 or 1, found {:?}/{:?}",
                &row[2], &row[3]
            ));
            continue;
        };
        if !seen.insert((comment_id.to_string(), worker_id.to_string(), is_attack)) {
            issues.push(IngestIssue {
                line,
                level: IssueLevel::Warning,
                message: format!("duplicate annotation of {comment_id} by {worker_id} dropped"),
            });
            continue;
        }
        records.push(AnnotationRecord {
            comment_id: comment_id.to_string(),
            worker_id: worker_id.to_string(),
            is_attack,
            not_english,
        });
    }
    Ok((records, issues))
}

/// Drop contradictory worker judgments, then comments that a strict majority
/// of their remaining workers flagged as not English.
pub fn clean_annotations(records: Vec<AnnotationRecord>) -> Vec<AnnotationRecord> {
    let mut values: HashMap<(&str, &str), (bool, bool)> = HashMap::new();
    for r in &records {
        let e = values
            .entry((r.comment_id.as_str(), r.worker_id.as_str()))
            .or_insert((false, false));
        if r.is_attack {
            e.1 = true;
        } else {
            e.0 = true;
        }
    }
    let contradictory: HashSet<(String, String)> = values
        .into_iter()
        .filter(|(_, (no, yes))| *no && *yes)
        .map(|((c, w), _)| (c.to_string(), w.to_string()))
        .collect();

    let consistent: Vec<AnnotationRecord> = records
        .into_iter()
        .filter(|r| !contradictory.contains(&(r.comment_id.clone(), r.worker_id.clone())))
        .collect();

    // worker -> not_english, per comment
    let mut flags: HashMap<&str, HashMap<&str, bool>> = HashMap::new();
    for r in &consistent {
        let w = flags.entry(r.comment_id.as_str()).or_default();
        let f = w.entry(r.worker_id.as_str()).or_insert(false);
        *f |= r.not_english;
    }
    let non_english: HashSet<String> = flags
        .into_iter()
        .filter(|(_, workers)| {
            let flagged = workers.values().filter(|&&f| f).count();
            2 * flagged > workers.len()
        })
        .map(|(c, _)| c.to_string())
        .collect();

    consistent
        .into_iter()
        .filter(|r| !non_english.contains(&r.comment_id))
        .collect()
}

/// Gold answers for test questions.
pub type GoldSet = BTreeMap<String, bool>;

pub fn read_gold(path: &Path) -> Result<GoldSet, IngestError> {
    let name = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|source| IngestError::Csv {
        path: name.clone(),
        source,
    })?;
    let mut gold = GoldSet::new();
    for row in rdr.records() {
        let row = row.map_err(|source| IngestError::Csv {
            path: name.clone(),
            source,
        })?;
        let Some(v) = row.get(1).and_then(parse_flag) else {
            return Err(IngestError::Header {
                path: name,
                expected: "comment_id,is_attack with is_attack in {0,1}".to_string(),
            });
        };
        gold.insert(row[0].trim().to_string(), v);
    }
    Ok(gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerAccuracy {
    pub worker_id: String,
    pub n_gold: usize,
    pub n_correct: usize,
    /// None when the worker answered no gold question.
    pub accuracy: Option<f64>,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub min_accuracy: f64,
    pub workers: Vec<WorkerAccuracy>,
}

impl GateReport {
    pub fn retained(&self) -> BTreeSet<String> {
        self.workers
            .iter()
            .filter(|w| w.retained)
            .map(|w| w.worker_id.clone())
            .collect()
    }

    /// Keep only records from retained workers.
    pub fn apply(&self, records: Vec<AnnotationRecord>) -> Vec<AnnotationRecord> {
        let keep = self.retained();
        records.into_iter().filter(|r| keep.contains(&r.worker_id)).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GateError {
    #[error("worker gating requested with an empty gold set")]
    EmptyGold,
}

/// Retain workers whose accuracy on gold comments is at least `min_accuracy`.
/// Workers who answered no gold question are retained.
pub fn gate_workers(
    records: &[AnnotationRecord],
    gold: &GoldSet,
    min_accuracy: f64,
) -> Result<GateReport, GateError> {
    if gold.is_empty() {
        return Err(GateError::EmptyGold);
    }
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let t = tally.entry(r.worker_id.as_str()).or_default();
        if let Some(&truth) = gold.get(&r.comment_id) {
            t.0 += 1;
            if truth == r.is_attack {
                t.1 += 1;
            }
        }
    }
    let workers = tally
        .into_iter()
        .map(|(w, (n_gold, n_correct))| {
            let accuracy = (n_gold > 0).then(|| n_correct as f64 / n_gold as f64);
            WorkerAccuracy {
                worker_id: w.to_string(),
                n_gold,
                n_correct,
                accuracy,
                retained: accuracy.is_none_or(|a| a >= min_accuracy),
            }
        })
        .collect();
    Ok(GateReport { min_accuracy, workers })
}

/// Which aggregate a model trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelType {
    /// One-hot majority label.
    #[serde(rename = "OH")]
    OneHot,
    /// Empirical distribution of annotator judgments.
    #[serde(rename = "ED")]
    Empirical,
}

/// Per-comment aggregate of annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub comment_id: String,
    pub n: u32,
    pub n_attack: u32,
}

impl LabelDistribution {
    pub fn new(comment_id: impl Into<String>, n: u32, n_attack: u32) -> Self {
        assert!(n >= 1 && n_attack <= n);
        LabelDistribution {
            comment_id: comment_id.into(),
            n,
            n_attack,
        }
    }

    pub fn attack_fraction(&self) -> f64 {
        f64::from(self.n_attack) / f64::from(self.n)
    }

    /// Strict majority: a 5 / 10 split is not an attack.
    pub fn oh_label(&self) -> bool {
        2 * self.n_attack > self.n
    }

    /// Training target `(p_not_attack, p_attack)`.
    pub fn target(&self, label_type: LabelType) -> [f64; 2] {
        match label_type {
            LabelType::OneHot => {
                if self.oh_label() {
                    [0.0, 1.0]
                } else {
                    [1.0, 0.0]
                }
            }
            LabelType::Empirical => {
                let f = self.attack_fraction();
                [f64::from(self.n - self.n_attack) / f64::from(self.n), f]
            }
        }
    }
}

/// The on-disk form of a label row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub comment_id: String,
    pub n: u32,
    pub attack_fraction: f64,
    pub oh_label: u8,
}

impl From<&LabelDistribution> for LabelRow {
    fn from(d: &LabelDistribution) -> Self {
        LabelRow {
            comment_id: d.comment_id.clone(),
            n: d.n,
            attack_fraction: d.attack_fraction(),
            oh_label: u8::from(d.oh_label()),
        }
    }
}

impl TryFrom<LabelRow> for LabelDistribution {
    type Error = String;

    fn try_from(r: LabelRow) -> Result<Self, String> {
        let k = r.attack_fraction * f64::from(r.n);
        let n_attack = k.round();
        if r.n == 0 || (k - n_attack).abs() > 1e-6 || n_attack < 0.0 || n_attack > f64::from(r.n) {
            return Err(format!(
                "{}: attack_fraction {} is not a multiple of 1/{}",
                r.comment_id, r.attack_fraction, r.n
            ));
        }
        let d = LabelDistribution::new(r.comment_id, r.n, n_attack as u32);
        if u8::from(d.oh_label()) != r.oh_label {
            return Err(format!("{}: oh_label inconsistent with attack_fraction", d.comment_id));
        }
        Ok(d)
    }
}

/// Aggregate cleaned records per comment, sorted by comment id.
pub fn aggregate_labels(records: &[AnnotationRecord]) -> Vec<LabelDistribution> {
    let mut counts: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for r in records {
        let c = counts.entry(r.comment_id.as_str()).or_default();
        c.0 += 1;
        c.1 += u32::from(r.is_attack);
    }
    counts
        .into_iter()
        .map(|(id, (n, k))| LabelDistribution::new(id, n, k))
        .collect()
}

/// Votes per comment, ordered by worker id. Comments sorted by id.
pub fn votes_by_comment(records: &[AnnotationRecord]) -> BTreeMap<String, Vec<bool>> {
    let mut grouped: BTreeMap<String, Vec<(&str, bool)>> = BTreeMap::new();
    for r in records {
        grouped
            .entry(r.comment_id.clone())
            .or_default()
            .push((r.worker_id.as_str(), r.is_attack));
    }
    grouped
        .into_iter()
        .map(|(c, mut v)| {
            v.sort();
            (c, v.into_iter().map(|(_, a)| a).collect())
        })
        .collect()
}
