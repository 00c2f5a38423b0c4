//! Corpus scoring and prevalence analyses over machine-labelled comments.

mod moderation;
mod naf;
mod stats;
mod users;

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::time::Instant;

use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use moderation::{
    moderation_conditional_curves, moderation_followup, ConditionalCurves, CurvePoint, ModerationError,
    ModerationReport,
};
pub use naf::{naf_values, neighboring_attack_fraction, NafClass, NafReport, NafValue};
pub use stats::{
    bootstrap_ci, diff_of_means_test, quantile_sorted, resample_mean, welch_t, BootstrapConfig, StatError, WelchTest,
};
pub use users::{
    activity_histogram, toxicity_concentration, user_year_stats, ActivityHistogram, ActivityRow, CountBucket,
    ToxicityBucketRow, ToxicityLevelRow, ToxicityReport, UserYearStats,
};

use crate::corpus::Comment;
use crate::features::{word_tokens, Vocabulary};
use crate::model::{AttackModel, ModelError};
use crate::seed;

/// A comment with its attack score and thresholded label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredComment {
    #[serde(flatten)]
    pub comment: Comment,
    pub attack_score: f64,
    pub is_attack: bool,
    /// Threshold used for `is_attack`.
    pub threshold: f64,
}

impl ScoredComment {
    pub fn new(comment: Comment, attack_score: f64, threshold: f64) -> Self {
        ScoredComment {
            comment,
            attack_score,
            is_attack: attack_score > threshold,
            threshold,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Scorer bound to a model and its vocabulary.
pub struct Scorer<'a> {
    model: &'a AttackModel,
    vocab: &'a Vocabulary,
    threshold: f64,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a AttackModel, vocab: &'a Vocabulary, threshold: f64) -> Result<Self, ScoreError> {
        model.check_vocabulary(vocab)?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ScoreError::Threshold(threshold));
        }
        Ok(Scorer { model, vocab, threshold })
    }

    pub fn score_text(&self, text: &str) -> f64 {
        self.model
            .score(&self.vocab.vectorize(text))
            .expect("dimension checked at construction")
    }

    pub fn score(&self, comment: Comment) -> ScoredComment {
        let s = self.score_text(&comment.clean_text);
        ScoredComment::new(comment, s, self.threshold)
    }

    /// Score in input order, in parallel when `parallel` is set.
    pub fn score_all(&self, comments: Vec<Comment>, parallel: bool) -> Vec<ScoredComment> {
        if parallel {
            comments.into_par_iter().map(|c| self.score(c)).collect()
        } else {
            comments.into_iter().map(|c| self.score(c)).collect()
        }
    }

    /// Stream `comments.jsonl` lines to `scored.jsonl` lines.
    ///
    /// Lines that do not parse as a comment are counted and skipped.
    pub fn score_jsonl<R: BufRead, W: Write>(
        &self,
        reader: R,
        mut writer: W,
        options: &StreamOptions,
    ) -> Result<ScoreStats, ScoreError> {
        let start = Instant::now();
        let mut stats = ScoreStats::default();
        let mut chunk: Vec<(usize, String)> = Vec::with_capacity(options.chunk_size);
        let flush = |chunk: &mut Vec<(usize, String)>, stats: &mut ScoreStats, writer: &mut W| -> io::Result<()> {
            let work = |(line, text): &(usize, String)| match serde_json::from_str::<Comment>(text) {
                Ok(c) => Ok(serde_json::to_string(&self.score(c)).expect("scored comment serializes")),
                Err(e) => Err((*line, e.to_string())),
            };
            let results: Vec<Result<String, (usize, String)>> = if options.parallel {
                chunk.par_iter().map(work).collect()
            } else {
                chunk.iter().map(work).collect()
            };
            for r in results {
                match r {
                    Ok(json) => {
                        writer.write_all(json.as_bytes())?;
                        writer.write_all(b"\n")?;
                        stats.scored += 1;
                    }
                    Err((line, msg)) => {
                        stats.malformed += 1;
                        if stats.malformed_examples.len() < 20 {
                            stats.malformed_examples.push(format!("line {line}: {msg}"));
                        }
                    }
                }
            }
            chunk.clear();
            Ok(())
        };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            stats.read += 1;
            chunk.push((i + 1, line));
            if chunk.len() >= options.chunk_size.max(1) {
                flush(&mut chunk, &mut stats, &mut writer)?;
            }
        }
        flush(&mut chunk, &mut stats, &mut writer)?;
        writer.flush()?;
        stats.seconds = start.elapsed().as_secs_f64();
        stats.comments_per_second = if stats.seconds > 0.0 {
            stats.scored as f64 / stats.seconds
        } else {
            0.0
        };
        Ok(stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamOptions {
    pub chunk_size: usize,
    pub parallel: bool,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            chunk_size: 4096,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub read: u64,
    pub scored: u64,
    pub malformed: u64,
    pub malformed_examples: Vec<String>,
    pub seconds: f64,
    pub comments_per_second: f64,
}

/// How comments are grouped for prevalence estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// "anonymous" or "registered".
    Anonymity,
    Namespace,
    Year,
    /// Bucket of the author's comment count in the comment's year.
    ActivityBucket(Vec<CountBucket>),
    /// Whether the lowercased word tokens contain the given n-gram.
    ContainsNgram(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPrevalence {
    pub group: String,
    pub n_comments: u64,
    pub n_attacks: u64,
    pub prevalence: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn contains_ngram(text: &str, gram: &[String]) -> bool {
    if gram.is_empty() {
        return false;
    }
    let tokens: Vec<String> = word_tokens(text).map(str::to_lowercase).collect();
    tokens.windows(gram.len()).any(|w| w == gram)
}

/// Group key of every comment, in input order.
pub fn group_keys(scored: &[ScoredComment], grouping: &Grouping) -> Vec<String> {
    match grouping {
        Grouping::Anonymity => scored
            .iter()
            .map(|s| if s.comment.author_registered { "registered" } else { "anonymous" }.to_string())
            .collect(),
        Grouping::Namespace => scored.iter().map(|s| s.comment.namespace.to_string()).collect(),
        Grouping::Year => scored.iter().map(|s| s.comment.timestamp.year().to_string()).collect(),
        Grouping::ActivityBucket(buckets) => {
            let mut activity: BTreeMap<(&str, bool, i32), u64> = BTreeMap::new();
            for s in scored {
                let c = &s.comment;
                *activity.entry((&c.author_id, c.author_registered, c.timestamp.year())).or_default() += 1;
            }
            scored
                .iter()
                .map(|s| {
                    let c = &s.comment;
                    let n = activity[&(c.author_id.as_str(), c.author_registered, c.timestamp.year())];
                    buckets
                        .iter()
                        .find(|b| b.contains(n))
                        .map(CountBucket::label)
                        .unwrap_or_else(|| "other".to_string())
                })
                .collect()
        }
        Grouping::ContainsNgram(g) => {
            let gram: Vec<String> = word_tokens(g).map(str::to_lowercase).collect();
            scored
                .par_iter()
                .map(|s| {
                    if contains_ngram(&s.comment.clean_text, &gram) {
                        format!("contains {g}")
                    } else {
                        format!("lacks {g}")
                    }
                })
                .collect()
        }
    }
}

/// Per-group prevalence with a percentile bootstrap interval.
///
/// The interval of group `key` uses seed `derive_named(config.seed, key)` and
/// is widened if needed so that it contains the point estimate.
pub fn prevalence_by_group(
    scored: &[ScoredComment],
    grouping: &Grouping,
    config: &BootstrapConfig,
) -> Result<Vec<GroupPrevalence>, StatError> {
    let keys = group_keys(scored, grouping);
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (k, s) in keys.iter().zip(scored) {
        groups.entry(k).or_default().push(if s.is_attack { 1.0 } else { 0.0 });
    }
    groups
        .into_iter()
        .map(|(key, flags)| {
            let n_attacks = flags.iter().filter(|f| **f == 1.0).count() as u64;
            let n_comments = flags.len() as u64;
            let prevalence = n_attacks as f64 / n_comments as f64;
            let (lo, hi) = bootstrap_ci(&flags, config.resamples, config.level, seed::derive_named(config.seed, key))?;
            Ok(GroupPrevalence {
                group: key.to_string(),
                n_comments,
                n_attacks,
                prevalence,
                ci_low: lo.min(prevalence),
                ci_high: hi.max(prevalence),
            })
        })
        .collect()
}
