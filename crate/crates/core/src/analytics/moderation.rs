//! Moderation follow-up of attacks.
//!
//! An attack is followed by an event when the same user receives an event of
//! that kind in `(attack_time, attack_time + window]`.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Datelike, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ScoredComment;
use crate::corpus::{BlockEvent, ModerationKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModerationError {
    #[error("precision {0} outside (0, 1]")]
    Precision(f64),
    #[error("window must be positive")]
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationReport {
    pub n_attacks: u64,
    pub window_days: f64,
    pub precision: f64,
    pub warned: f64,
    pub blocked: f64,
    pub either: f64,
    pub warned_normalized: f64,
    pub blocked_normalized: f64,
    pub either_normalized: f64,
}

fn slot(kind: ModerationKind) -> usize {
    match kind {
        ModerationKind::Warn => 0,
        ModerationKind::Block => 1,
    }
}

/// Event times per user and kind, ascending.
struct Timelines<'a> {
    map: HashMap<&'a str, [Vec<DateTime<Utc>>; 2]>,
}

impl<'a> Timelines<'a> {
    fn new(events: &'a [BlockEvent]) -> Self {
        let mut map: HashMap<&str, [Vec<DateTime<Utc>>; 2]> = HashMap::new();
        for e in events {
            map.entry(e.user_id.as_str()).or_default()[slot(e.kind)].push(e.timestamp);
        }
        for v in map.values_mut().flat_map(|v| v.iter_mut()) {
            v.sort();
        }
        Timelines { map }
    }

    fn times(&self, user: &str, kind: ModerationKind) -> &[DateTime<Utc>] {
        self.map.get(user).map_or(&[], |v| v[slot(kind)].as_slice())
    }

    /// Any event in `(t, t + window]`.
    fn followed(&self, user: &str, kind: ModerationKind, t: DateTime<Utc>, window: Duration) -> bool {
        let times = self.times(user, kind);
        let i = times.partition_point(|e| *e <= t);
        times.get(i).is_some_and(|e| *e <= t + window)
    }

    /// Number of events strictly before `t`.
    fn before(&self, user: &str, kind: ModerationKind, t: DateTime<Utc>) -> usize {
        self.times(user, kind).partition_point(|e| *e < t)
    }

    fn any_after(&self, user: &str, kind: ModerationKind, t: DateTime<Utc>, until: Option<DateTime<Utc>>) -> bool {
        let times = self.times(user, kind);
        let i = times.partition_point(|e| *e <= t);
        times.get(i).is_some_and(|e| until.is_none_or(|u| *e < u))
    }
}

pub fn moderation_followup(
    scored: &[ScoredComment],
    events: &[BlockEvent],
    window: Duration,
    precision: f64,
) -> Result<ModerationReport, ModerationError> {
    if !(precision > 0.0 && precision <= 1.0) {
        return Err(ModerationError::Precision(precision));
    }
    if window <= Duration::zero() {
        return Err(ModerationError::Window);
    }
    let timelines = Timelines::new(events);
    let (mut n, mut w, mut b, mut e) = (0u64, 0u64, 0u64, 0u64);
    for s in scored.iter().filter(|s| s.is_attack) {
        let (user, t) = (s.comment.author_id.as_str(), s.comment.timestamp);
        let warned = timelines.followed(user, ModerationKind::Warn, t, window);
        let blocked = timelines.followed(user, ModerationKind::Block, t, window);
        n += 1;
        w += u64::from(warned);
        b += u64::from(blocked);
        e += u64::from(warned || blocked);
    }
    let rate = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let (warned, blocked, either) = (rate(w), rate(b), rate(e));
    Ok(ModerationReport {
        n_attacks: n,
        window_days: window.num_seconds() as f64 / 86_400.0,
        precision,
        warned,
        blocked,
        either,
        warned_normalized: warned / precision,
        blocked_normalized: blocked / precision,
        either_normalized: either / precision,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: u64,
    pub n: u64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCurves {
    /// P(warned | k attacks), over users with k >= 1 attacks.
    pub warn_given_attacks: Vec<CurvePoint>,
    /// P(blocked | k attacks).
    pub block_given_attacks: Vec<CurvePoint>,
    /// P(block within the window after an attack | j earlier blocks), over attacks.
    pub block_given_prior_blocks: Vec<CurvePoint>,
}

fn curve(counts: BTreeMap<u64, (u64, u64)>) -> Vec<CurvePoint> {
    counts
        .into_iter()
        .map(|(x, (n, hits))| CurvePoint {
            x,
            n,
            probability: hits as f64 / n as f64,
        })
        .collect()
}

/// Conditional moderation probabilities.
///
/// With `year` set only attacks in that year count, and a user is warned
/// (blocked) when a warning (block) falls after their first attack and
/// before the end of the year. Without `year` every attack counts and any
/// later event qualifies.
pub fn moderation_conditional_curves(
    scored: &[ScoredComment],
    events: &[BlockEvent],
    year: Option<i32>,
    window: Duration,
) -> ConditionalCurves {
    let timelines = Timelines::new(events);
    let in_year = |t: &DateTime<Utc>| year.is_none_or(|y| t.year() == y);
    let year_end = year.and_then(|y| {
        chrono::NaiveDate::from_ymd_opt(y + 1, 1, 1).map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
    });

    let mut per_user: BTreeMap<&str, (u64, DateTime<Utc>)> = BTreeMap::new();
    let mut prior: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for s in scored.iter().filter(|s| s.is_attack && in_year(&s.comment.timestamp)) {
        let (user, t) = (s.comment.author_id.as_str(), s.comment.timestamp);
        let e = per_user.entry(user).or_insert((0, t));
        e.0 += 1;
        e.1 = e.1.min(t);
        let j = timelines.before(user, ModerationKind::Block, t) as u64;
        let p = prior.entry(j).or_default();
        p.0 += 1;
        p.1 += u64::from(timelines.followed(user, ModerationKind::Block, t, window));
    }
    let mut warn: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    let mut block: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for (user, (k, first)) in per_user {
        let w = warn.entry(k).or_default();
        w.0 += 1;
        w.1 += u64::from(timelines.any_after(user, ModerationKind::Warn, first, year_end));
        let b = block.entry(k).or_default();
        b.0 += 1;
        b.1 += u64::from(timelines.any_after(user, ModerationKind::Block, first, year_end));
    }
    ConditionalCurves {
        warn_given_attacks: curve(warn),
        block_given_attacks: curve(block),
        block_given_prior_blocks: curve(prior),
    }
}
