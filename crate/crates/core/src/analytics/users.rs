//! Per-user activity and toxicity within one year.

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::ScoredComment;

/// Inclusive range of counts; `max = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountBucket {
    pub min: u64,
    pub max: Option<u64>,
}

impl CountBucket {
    pub const fn new(min: u64, max: Option<u64>) -> Self {
        CountBucket { min, max }
    }

    pub fn contains(&self, n: u64) -> bool {
        n >= self.min && self.max.is_none_or(|m| n <= m)
    }

    pub fn label(&self) -> String {
        match self.max {
            None => format!(">{}", self.min.saturating_sub(1)),
            Some(m) if m == self.min => m.to_string(),
            Some(m) => format!("{}-{}", self.min, m),
        }
    }

    /// 1-5, 6-20, 21-100, >100.
    pub fn default_activity() -> Vec<CountBucket> {
        vec![
            CountBucket::new(1, Some(5)),
            CountBucket::new(6, Some(20)),
            CountBucket::new(21, Some(100)),
            CountBucket::new(101, None),
        ]
    }

    /// 1, 2-4, 5-20, >20.
    pub fn default_toxicity() -> Vec<CountBucket> {
        vec![
            CountBucket::new(1, Some(1)),
            CountBucket::new(2, Some(4)),
            CountBucket::new(5, Some(20)),
            CountBucket::new(21, None),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserYearStats {
    pub author_id: String,
    pub registered: bool,
    pub activity_level: u64,
    pub toxicity_level: u64,
}

/// Comment and attack counts per (author, registered) in `year`, sorted by key.
pub fn user_year_stats(scored: &[ScoredComment], year: i32) -> Vec<UserYearStats> {
    let mut users: BTreeMap<(&str, bool), (u64, u64)> = BTreeMap::new();
    for s in scored.iter().filter(|s| s.comment.timestamp.year() == year) {
        let e = users
            .entry((s.comment.author_id.as_str(), s.comment.author_registered))
            .or_default();
        e.0 += 1;
        e.1 += u64::from(s.is_attack);
    }
    users
        .into_iter()
        .map(|((id, registered), (activity, toxicity))| UserYearStats {
            author_id: id.to_string(),
            registered,
            activity_level: activity,
            toxicity_level: toxicity,
        })
        .collect()
}

fn pct(part: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * part as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRow {
    pub bucket: String,
    pub n_users: u64,
    pub n_comments: u64,
    pub n_attacks: u64,
    pub comment_pct: f64,
    pub attack_pct: f64,
    /// Share of registered users' attacks made by registered users in this bucket.
    pub registered_attack_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityHistogram {
    pub year: i32,
    pub total_comments: u64,
    pub total_attacks: u64,
    pub rows: Vec<ActivityRow>,
}

/// Share of comments and attacks by author activity level in `year`.
/// Users whose activity falls in no bucket are left out of every row.
pub fn activity_histogram(scored: &[ScoredComment], year: i32, buckets: &[CountBucket]) -> ActivityHistogram {
    let users = user_year_stats(scored, year);
    let total_comments: u64 = users.iter().map(|u| u.activity_level).sum();
    let total_attacks: u64 = users.iter().map(|u| u.toxicity_level).sum();
    let registered_attacks: u64 = users.iter().filter(|u| u.registered).map(|u| u.toxicity_level).sum();
    let rows = buckets
        .iter()
        .map(|b| {
            let inside: Vec<&UserYearStats> = users.iter().filter(|u| b.contains(u.activity_level)).collect();
            let n_comments = inside.iter().map(|u| u.activity_level).sum();
            let n_attacks = inside.iter().map(|u| u.toxicity_level).sum();
            let reg_attacks = inside.iter().filter(|u| u.registered).map(|u| u.toxicity_level).sum();
            ActivityRow {
                bucket: b.label(),
                n_users: inside.len() as u64,
                n_comments,
                n_attacks,
                comment_pct: pct(n_comments, total_comments),
                attack_pct: pct(n_attacks, total_attacks),
                registered_attack_pct: pct(reg_attacks, registered_attacks),
            }
        })
        .collect();
    ActivityHistogram {
        year,
        total_comments,
        total_attacks,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityLevelRow {
    pub toxicity_level: u64,
    pub n_users: u64,
    pub n_attacks: u64,
    pub attack_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityBucketRow {
    pub bucket: String,
    pub n_users: u64,
    pub n_attacks: u64,
    pub attack_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityReport {
    pub year: i32,
    pub total_attacks: u64,
    /// One row per distinct toxicity level of at least 1.
    pub levels: Vec<ToxicityLevelRow>,
    pub buckets: Vec<ToxicityBucketRow>,
}

/// How attacks in `year` are spread over users by their attack count.
pub fn toxicity_concentration(scored: &[ScoredComment], year: i32, buckets: &[CountBucket]) -> ToxicityReport {
    let users = user_year_stats(scored, year);
    let total_attacks: u64 = users.iter().map(|u| u.toxicity_level).sum();
    let mut by_level: BTreeMap<u64, u64> = BTreeMap::new();
    for u in users.iter().filter(|u| u.toxicity_level > 0) {
        *by_level.entry(u.toxicity_level).or_default() += 1;
    }
    let levels = by_level
        .iter()
        .map(|(&level, &n_users)| ToxicityLevelRow {
            toxicity_level: level,
            n_users,
            n_attacks: level * n_users,
            attack_pct: pct(level * n_users, total_attacks),
        })
        .collect();
    let buckets = buckets
        .iter()
        .map(|b| {
            let (n_users, n_attacks) = by_level
                .iter()
                .filter(|(l, _)| b.contains(**l))
                .fold((0, 0), |(u, a), (l, n)| (u + n, a + l * n));
            ToxicityBucketRow {
                bucket: b.label(),
                n_users,
                n_attacks,
                attack_pct: pct(n_attacks, total_attacks),
            }
        })
        .collect();
    ToxicityReport {
        year,
        total_attacks,
        levels,
        buckets,
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::sc;
    use super::*;

    #[test]
    fn bucket_labels() {
        let a = CountBucket::default_activity();
        assert_eq!(a.iter().map(CountBucket::label).collect::<Vec<_>>(), ["1-5", "6-20", "21-100", ">100"]);
        let t = CountBucket::default_toxicity();
        assert_eq!(t.iter().map(CountBucket::label).collect::<Vec<_>>(), ["1", "2-4", "5-20", ">20"]);
        assert!(a[0].contains(5) && !a[0].contains(6) && a[3].contains(10_000));
    }

    #[test]
    fn single_comment_users_fill_lowest_bucket() {
        let scored: Vec<_> = (0..6).map(|i| sc("p", i, &format!("u{i}"), true, i as i64, i < 2)).collect();
        let h = activity_histogram(&scored, 2015, &CountBucket::default_activity());
        assert_eq!(h.rows[0].comment_pct, 100.0);
        assert_eq!(h.rows[0].attack_pct, 100.0);
        assert!(h.rows[1..].iter().all(|r| r.comment_pct == 0.0));
    }

    #[test]
    fn five_user_hand_counts() {
        // activity: a=1, b=3, c=6, d=7, e=25 (total 42); attacks a=1, c=2, e=3 (total 6)
        let mut scored = Vec::new();
        let mut rev = 0;
        for (user, n, attacks, reg) in [("a", 1, 1, false), ("b", 3, 0, true), ("c", 6, 2, true), ("d", 7, 0, true), ("e", 25, 3, true)] {
            for k in 0..n {
                rev += 1;
                scored.push(sc("p", rev, user, reg, rev as i64, k < attacks));
            }
        }
        let h = activity_histogram(&scored, 2015, &CountBucket::default_activity());
        assert_eq!((h.total_comments, h.total_attacks), (42, 6));
        let got: Vec<(u64, f64, f64, f64)> = h
            .rows
            .iter()
            .map(|r| (r.n_users, r.comment_pct, r.attack_pct, r.registered_attack_pct))
            .collect();
        assert_eq!(
            got,
            vec![
                (2, 100.0 * 4.0 / 42.0, 100.0 / 6.0, 0.0),
                (2, 100.0 * 13.0 / 42.0, 100.0 * 2.0 / 6.0, 100.0 * 2.0 / 5.0),
                (1, 100.0 * 25.0 / 42.0, 100.0 * 3.0 / 6.0, 100.0 * 3.0 / 5.0),
                (0, 0.0, 0.0, 0.0),
            ]
        );
        let sum: f64 = h.rows.iter().map(|r| r.comment_pct).sum();
        assert!((sum - 100.0).abs() < 1e-9);
        assert!(user_year_stats(&scored, 2015).iter().all(|u| u.toxicity_level <= u.activity_level));
    }

    #[test]
    fn one_user_makes_every_attack() {
        let mut scored: Vec<_> = (0..4).map(|i| sc("p", i, "villain", true, i as i64, true)).collect();
        scored.extend((4..9).map(|i| sc("p", i, &format!("n{i}"), true, i as i64, false)));
        let r = toxicity_concentration(&scored, 2015, &CountBucket::default_toxicity());
        assert_eq!(r.levels, vec![ToxicityLevelRow { toxicity_level: 4, n_users: 1, n_attacks: 4, attack_pct: 100.0 }]);
        assert_eq!(r.buckets[1].attack_pct, 100.0);
        assert_eq!(r.buckets[1].n_users, 1);
    }

    #[test]
    fn other_years_are_ignored() {
        let scored = vec![sc("p", 1, "u", true, 0, true)];
        assert!(user_year_stats(&scored, 2016).is_empty());
        assert_eq!(toxicity_concentration(&scored, 2016, &CountBucket::default_toxicity()).total_attacks, 0);
    }
}
