use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use regex::RegexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Comment, Namespace};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("{source_name}: pattern {index} ({pattern:?}) does not compile: {message}")]
    Invalid {
        source_name: String,
        index: usize,
        pattern: String,
        message: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Bot-author and admin-template regular expressions.
#[derive(Debug, Clone)]
pub struct FilterRules {
    bot: RegexSet,
    admin: RegexSet,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            bot: RegexSet::empty(),
            admin: RegexSet::empty(),
        }
    }
}

fn compile(name: &str, patterns: &[String]) -> Result<RegexSet, RuleError> {
    // compile one at a time so the offending pattern can be named
    for (index, p) in patterns.iter().enumerate() {
        if let Err(e) = regex::Regex::new(p) {
            return Err(RuleError::Invalid {
                source_name: name.to_string(),
                index,
                pattern: p.clone(),
                message: e.to_string(),
            });
        }
    }
    RegexSet::new(patterns).map_err(|e| RuleError::Invalid {
        source_name: name.to_string(),
        index: 0,
        pattern: String::new(),
        message: e.to_string(),
    })
}

impl FilterRules {
    pub fn new(bot_author_patterns: &[String], admin_template_patterns: &[String]) -> Result<Self, RuleError> {
        Ok(FilterRules {
            bot: compile("bot patterns", bot_author_patterns)?,
            admin: compile("admin patterns", admin_template_patterns)?,
        })
    }

    /// Read two rule files holding one pattern per line. Blank lines are skipped.
    pub fn from_files(bot: Option<&Path>, admin: Option<&Path>) -> Result<Self, RuleError> {
        let read = |p: Option<&Path>| -> Result<Vec<String>, RuleError> {
            let Some(p) = p else { return Ok(Vec::new()) };
            let text = fs::read_to_string(p).map_err(|source| RuleError::Io {
                path: p.display().to_string(),
                source,
            })?;
            Ok(text
                .lines()
                .map(|l| l.trim_end_matches('\r'))
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect())
        };
        Self::new(&read(bot)?, &read(admin)?)
    }

    pub fn is_bot(&self, author_id: &str) -> bool {
        self.bot.is_match(author_id)
    }

    pub fn is_admin(&self, raw_markup: &str) -> bool {
        self.admin.is_match(raw_markup)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub all: u64,
    pub no_bot: u64,
    pub no_bot_admin: u64,
}

/// Comment counts per namespace after each filtering stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub namespaces: BTreeMap<Namespace, StageCounts>,
}

impl FilterStats {
    pub fn total(&self) -> StageCounts {
        self.namespaces.values().fold(StageCounts::default(), |acc, c| StageCounts {
            all: acc.all + c.all,
            no_bot: acc.no_bot + c.no_bot,
            no_bot_admin: acc.no_bot_admin + c.no_bot_admin,
        })
    }

    /// Plain-text table with one row per namespace and a totals row.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14}{:>12}{:>12}{:>16}\n", "Namespace", "All", "No Bot", "No Bot/Admin");
        let row = |name: &str, c: &StageCounts| format!("{:<14}{:>12}{:>12}{:>16}\n", name, c.all, c.no_bot, c.no_bot_admin);
        for (ns, c) in &self.namespaces {
            out.push_str(&row(&ns.to_string(), c));
        }
        out.push_str(&row("totals", &self.total()));
        out
    }
}

/// Streaming filter: bot authors are removed first, then admin templates.
#[derive(Debug)]
pub struct CommentFilter<'r> {
    rules: &'r FilterRules,
    stats: FilterStats,
}

impl<'r> CommentFilter<'r> {
    pub fn new(rules: &'r FilterRules) -> Self {
        CommentFilter {
            rules,
            stats: FilterStats::default(),
        }
    }

    /// Returns true when the comment survives both stages.
    pub fn admit(&mut self, c: &Comment) -> bool {
        let counts = self.stats.namespaces.entry(c.namespace).or_default();
        counts.all += 1;
        if self.rules.is_bot(&c.author_id) {
            return false;
        }
        counts.no_bot += 1;
        if self.rules.is_admin(&c.raw_markup) {
            return false;
        }
        counts.no_bot_admin += 1;
        true
    }

    pub fn stats(&self) -> &FilterStats {
        &self.stats
    }

    pub fn into_stats(self) -> FilterStats {
        self.stats
    }
}

pub fn filter_comments<I>(comments: I, rules: &FilterRules) -> (Vec<Comment>, FilterStats)
where
    I: IntoIterator<Item = Comment>,
{
    let mut filter = CommentFilter::new(rules);
    let kept = comments.into_iter().filter(|c| filter.admit(c)).collect();
    (kept, filter.into_stats())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn comment(i: usize, ns: Namespace, author: &str, text: &str) -> Comment {
        Comment {
            comment_id: format!("p:{i}"),
            page_id: "p".into(),
            namespace: ns,
            timestamp: Utc.timestamp_opt(1_000_000 + i as i64, 0).unwrap(),
            author_id: author.into(),
            author_registered: true,
            raw_markup: text.into(),
            clean_text: text.into(),
        }
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn bot_authors_are_removed() {
        let rules = FilterRules::new(&s(&["Bot$"]), &[]).unwrap();
        let cs = vec![
            comment(0, Namespace::UserTalk, "Alice", "hi"),
            comment(1, Namespace::UserTalk, "ExampleBot", "auto"),
            comment(2, Namespace::UserTalk, "Bob", "yo"),
        ];
        let (kept, stats) = filter_comments(cs, &rules);
        assert_eq!(kept.len(), 2);
        assert_eq!(stats.total(), StageCounts { all: 3, no_bot: 2, no_bot_admin: 2 });
    }

    #[test]
    fn empty_rules_keep_everything() {
        let cs: Vec<_> = (0..4).map(|i| comment(i, Namespace::ArticleTalk, "A", "x")).collect();
        let (kept, stats) = filter_comments(cs, &FilterRules::default());
        assert_eq!(kept.len(), 4);
        assert_eq!(stats.total(), StageCounts { all: 4, no_bot: 4, no_bot_admin: 4 });
    }

    #[test]
    fn mixed_corpus_counts_per_stage() {
        let rules = FilterRules::new(&s(&["(?i)bot$"]), &s(&[r"\{\{welcome", r"\{\{uw-"])).unwrap();
        let mut cs = vec![
            comment(0, Namespace::UserTalk, "CleanupBot", "tagged"),
            comment(1, Namespace::ArticleTalk, "archivebot", "{{welcome}}"),
            comment(2, Namespace::UserTalk, "Ann", "{{welcome}} to the wiki"),
            comment(3, Namespace::UserTalk, "Ann", "{{uw-vandalism1}}"),
            comment(4, Namespace::UserTalk, "Cy", "{{uw-spam2}} stop"),
        ];
        for i in 5..10 {
            cs.push(comment(i, Namespace::ArticleTalk, "Dee", "a real reply"));
        }
        let (kept, stats) = filter_comments(cs, &rules);
        assert_eq!(kept.len(), 5);
        assert_eq!(stats.total(), StageCounts { all: 10, no_bot: 8, no_bot_admin: 5 });
        assert_eq!(
            stats.namespaces[&Namespace::UserTalk],
            StageCounts { all: 4, no_bot: 3, no_bot_admin: 0 }
        );
        assert_eq!(
            stats.namespaces[&Namespace::ArticleTalk],
            StageCounts { all: 6, no_bot: 5, no_bot_admin: 5 }
        );
        assert!(stats.to_table().contains("totals"));
    }

    #[test]
    fn bad_pattern_is_named() {
        let err = FilterRules::new(&s(&["ok", "(unclosed"]), &[]).unwrap_err();
        match err {
            RuleError::Invalid { index, pattern, .. } => {
                assert_eq!(index, 1);
                assert_eq!(pattern, "(unclosed");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rule_files_skip_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let bot = dir.path().join("bot.txt");
        fs::write(&bot, "Bot$\n\n^Mediation\n").unwrap();
        let rules = FilterRules::from_files(Some(&bot), None).unwrap();
        assert!(rules.is_bot("SpamBot"));
        assert!(rules.is_bot("MediationCabal"));
        assert!(!rules.is_bot("Robert"));
        assert!(!rules.is_admin("anything"));
    }
}
