//! Talk-page comment extraction from revision histories.
//!
//! A comment is the text added by one edit of a talk page: the diff between
//! successive revisions, concatenated, plus a markup-stripped plain version.

mod diff;
mod filter;
mod markup;
mod sample;

use std::cmp::Ordering;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{diff_added_text, diff_added_text_with, tokenize, DiffOptions, TokenUnit};
pub use filter::{filter_comments, CommentFilter, FilterRules, FilterStats, RuleError, StageCounts};
pub use markup::strip_markup;
pub use sample::sample_around_blocks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    UserTalk,
    ArticleTalk,
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Namespace::UserTalk => "user_talk",
            Namespace::ArticleTalk => "article_talk",
        })
    }
}

/// Full page text after one edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub page_id: String,
    pub namespace: Namespace,
    pub rev_id: String,
    pub timestamp: DateTime<Utc>,
    pub author_id: String,
    pub author_registered: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub page_id: String,
    pub namespace: Namespace,
    pub timestamp: DateTime<Utc>,
    pub author_id: String,
    pub author_registered: bool,
    pub raw_markup: String,
    pub clean_text: String,
}

impl Comment {
    /// The revision id part of `comment_id`.
    pub fn rev_id(&self) -> &str {
        self.comment_id
            .strip_prefix(self.page_id.as_str())
            .and_then(|rest| rest.strip_prefix(':'))
            .unwrap_or(&self.comment_id)
    }
}

pub fn comment_id(page_id: &str, rev_id: &str) -> String {
    format!("{page_id}:{rev_id}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModerationKind {
    Warn,
    Block,
}

/// A warning or block issued to a user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEvent {
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub kind: ModerationKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("page {page_id}: revision {rev_id} is out of order")]
    OutOfOrder { page_id: String, rev_id: String },
    #[error("page {expected}: revision {rev_id} belongs to page {found}")]
    MixedPages {
        expected: String,
        found: String,
        rev_id: String,
    },
}

/// Order of revision ids: numeric when both parse as integers, otherwise
/// lexicographic.
pub fn compare_rev_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// Chronological order of comments on a page, rev id breaking timestamp ties.
pub fn compare_page_order(a: &Comment, b: &Comment) -> Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then_with(|| compare_rev_ids(a.rev_id(), b.rev_id()))
}

/// Extract one comment per revision that adds text.
///
/// `revisions` must all belong to one page and arrive in page order; the
/// state before the first revision is the empty page.
pub fn extract_comments<I>(revisions: I, options: &DiffOptions) -> Result<Vec<Comment>, ExtractError>
where
    I: IntoIterator<Item = Revision>,
{
    let mut out = Vec::new();
    let mut prev: Option<Revision> = None;
    for rev in revisions {
        let prev_text = match &prev {
            Some(p) => {
                if p.page_id != rev.page_id {
                    return Err(ExtractError::MixedPages {
                        expected: p.page_id.clone(),
                        found: rev.page_id.clone(),
                        rev_id: rev.rev_id.clone(),
                    });
                }
                let order = p
                    .timestamp
                    .cmp(&rev.timestamp)
                    .then_with(|| compare_rev_ids(&p.rev_id, &rev.rev_id));
                if order != Ordering::Less {
                    return Err(ExtractError::OutOfOrder {
                        page_id: rev.page_id.clone(),
                        rev_id: rev.rev_id.clone(),
                    });
                }
                p.text.as_str()
            }
            None => "",
        };
        let added = diff_added_text_with(prev_text, &rev.text, options);
        if !added.is_empty() {
            let raw_markup = added.concat();
            let clean_text = strip_markup(&raw_markup);
            out.push(Comment {
                comment_id: comment_id(&rev.page_id, &rev.rev_id),
                page_id: rev.page_id.clone(),
                namespace: rev.namespace,
                timestamp: rev.timestamp,
                author_id: rev.author_id.clone(),
                author_registered: rev.author_registered,
                raw_markup,
                clean_text,
            });
        }
        prev = Some(rev);
    }
    Ok(out)
}
