//! Synthetic talk-page corpora with planted attacks.
//!
//! A corpus carries everything the pipeline consumes: page revisions,
//! crowd annotations, gold answers, moderation events and filter rules,
//! together with the ground truth used to plant them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{comment_id, strip_markup, BlockEvent, Comment, ModerationKind, Namespace, Revision};
use crate::labels::{AnnotationRecord, GoldSet};
use crate::seed;

/// Words planted in attacking comments.
pub const ATTACK_WORDS: &[&str] = &[
    "idiot", "moron", "stupid", "loser", "pathetic", "dumb", "jerk", "imbecile", "clown", "scum", "cretin",
    "dimwit", "halfwit", "buffoon", "nitwit", "dunce",
];

const ATTACK_FRAMES: &[&str] = &[
    "you are a {}",
    "what a {}",
    "only a {} would write this",
    "you {} get lost",
    "shut up you {}",
    "stop being such a {}",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "si", "pe", "da", "gri", "bel", "mon", "tor", "fen", "qua", "zel",
    "ari", "ost", "ule", "bra", "cor", "dil", "esk", "fro", "gan", "hul", "ist", "jor", "kel",
];

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "of", "to", "and", "in", "is", "that", "for", "it", "this", "on", "with", "as", "was", "be",
    "article", "source", "edit", "page", "please", "thanks", "section", "talk", "discussion", "reference",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_comments: usize,
    /// Exact fraction of comments planted as attacks (rounded to a count).
    pub attack_prevalence: f64,
    pub n_pages: usize,
    pub n_users: usize,
    pub anonymous_fraction: f64,
    pub words_min: usize,
    pub words_max: usize,
    /// Comments that receive annotations; `None` labels all of them.
    pub n_labeled: Option<usize>,
    /// Distinct non-function words.
    pub lexicon_size: usize,
    pub annotators_per_comment: usize,
    /// Labeled comments that receive `baseline_annotators` annotations instead.
    pub n_baseline: usize,
    pub baseline_annotators: usize,
    pub annotator_noise: f64,
    pub n_workers: usize,
    /// Workers answering at random; gold gating should remove them.
    pub n_bad_workers: usize,
    pub n_gold: usize,
    pub n_contradictions: usize,
    pub n_non_english: usize,
    pub n_bot_comments: usize,
    pub n_admin_comments: usize,
    pub warn_probability: f64,
    pub block_probability: f64,
    pub year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_comments: 200,
            attack_prevalence: 0.1,
            n_pages: 20,
            n_users: 40,
            anonymous_fraction: 0.3,
            words_min: 8,
            words_max: 40,
            n_labeled: None,
            lexicon_size: 1500,
            annotators_per_comment: 10,
            n_baseline: 0,
            baseline_annotators: 20,
            annotator_noise: 0.1,
            n_workers: 40,
            n_bad_workers: 0,
            n_gold: 0,
            n_contradictions: 0,
            n_non_english: 0,
            n_bot_comments: 0,
            n_admin_comments: 0,
            warn_probability: 0.3,
            block_probability: 0.2,
            year: 2015,
        }
    }
}

impl SynthConfig {
    /// The small corpus bundled as a pipeline fixture.
    pub fn fixture() -> Self {
        SynthConfig {
            seed: 20_170_101,
            n_comments: 200,
            attack_prevalence: 0.15,
            n_pages: 12,
            n_users: 30,
            n_baseline: 30,
            n_workers: 45,
            n_bad_workers: 2,
            n_gold: 20,
            n_contradictions: 2,
            n_non_english: 1,
            n_bot_comments: 3,
            n_admin_comments: 2,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub revisions: Vec<Revision>,
    /// The comments extraction should produce, bot and admin edits included.
    pub comments: Vec<Comment>,
    /// Planted attack flag of every regular comment.
    pub truth: BTreeMap<String, bool>,
    /// Ids of injected bot and admin comments.
    pub filtered_ids: BTreeSet<String>,
    pub annotations: Vec<AnnotationRecord>,
    pub gold: GoldSet,
    pub bad_workers: BTreeSet<String>,
    pub events: Vec<BlockEvent>,
    pub bot_patterns: Vec<String>,
    pub admin_patterns: Vec<String>,
}

struct Vocab {
    words: Vec<String>,
    weights: WeightedIndex<f64>,
}

impl Vocab {
    fn new(rng: &mut impl Rng, size: usize) -> Self {
        let mut set = BTreeSet::new();
        while set.len() < size {
            let k = rng.gen_range(2..=4);
            let w: String = (0..k).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            if !ATTACK_WORDS.iter().any(|a| w.contains(a)) {
                set.insert(w);
            }
        }
        let mut words: Vec<String> = FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
        let mut rest: Vec<String> = set.into_iter().collect();
        rest.shuffle(rng);
        words.extend(rest);
        let weights = WeightedIndex::new((0..words.len()).map(|r| 1.0 / (r as f64 + 2.0))).unwrap();
        Vocab { words, weights }
    }

    fn sentence(&self, rng: &mut impl Rng, n: usize) -> String {
        let mut out = String::new();
        for i in 0..n {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&self.words[self.weights.sample(rng)]);
        }
        out
    }
}

fn user_name(i: usize, anonymous: bool) -> String {
    if anonymous {
        format!("198.51.{}.{}", 100 + i / 250, i % 250 + 1)
    } else {
        format!("Editor{i:04}")
    }
}

/// Decorate plain text with talk-page markup.
fn decorate(rng: &mut impl Rng, text: &str) -> String {
    let mut s = String::new();
    match rng.gen_range(0..4) {
        0 => s.push(':'),
        1 => s.push_str("::"),
        _ => {}
    }
    let words: Vec<&str> = text.split(' ').collect();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        match rng.gen_range(0..40) {
            0 => s.push_str(&format!("[[{w}]]")),
            1 => s.push_str(&format!("[[Article {w}|{w}]]")),
            2 => s.push_str(&format!("''{w}''")),
            _ => s.push_str(w),
        }
    }
    s.push_str(" ~~~~");
    s
}

/// Generate a corpus; identical configs give identical corpora.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let mut rng = seed::rng(seed::derive_named(config.seed, "synth"));
    let vocab = Vocab::new(&mut rng, config.lexicon_size);
    let n = config.n_comments;
    let n_attacks = (config.attack_prevalence * n as f64).round() as usize;

    // Users: activity follows a power law; anonymous users and a few trolls
    // attack more often.
    let users: Vec<(String, bool, bool)> = (0..config.n_users.max(1))
        .map(|i| {
            let anon = rng.gen_bool(config.anonymous_fraction);
            let troll = rng.gen_bool(0.1);
            (user_name(i, anon), !anon, troll)
        })
        .collect();
    let activity = WeightedIndex::new((0..users.len()).map(|r| 1.0 / (r as f64 + 1.0).powf(1.1))).unwrap();
    let attacker = WeightedIndex::new(
        users
            .iter()
            .enumerate()
            .map(|(r, (_, reg, troll))| {
                (1.0 / (r as f64 + 1.0).powf(0.5)) * if *reg { 1.0 } else { 4.0 } * if *troll { 10.0 } else { 1.0 }
            }),
    )
    .unwrap();

    let mut is_attack = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, n_attacks.min(n)) {
        is_attack[i] = true;
    }

    let year_start = Utc.with_ymd_and_hms(config.year, 1, 1, 0, 0, 0).unwrap();
    let year_secs = 365 * 86_400;
    let n_pages = config.n_pages.max(1);
    let page_ns: Vec<Namespace> = (0..n_pages)
        .map(|p| if p % 3 == 0 { Namespace::ArticleTalk } else { Namespace::UserTalk })
        .collect();

    struct Draft {
        page: usize,
        time: DateTime<Utc>,
        author: String,
        registered: bool,
        markup: String,
        kind: Kind,
    }
    #[derive(PartialEq)]
    enum Kind {
        Regular(bool),
        Bot,
        Admin,
    }

    let mut drafts: Vec<Draft> = Vec::with_capacity(n + config.n_bot_comments + config.n_admin_comments);
    for &attack in &is_attack {
        let u = if attack { attacker.sample(&mut rng) } else { activity.sample(&mut rng) };
        let words = rng.gen_range(config.words_min..=config.words_max.max(config.words_min));
        let mut text = vocab.sentence(&mut rng, words);
        if attack {
            for _ in 0..rng.gen_range(1..=2) {
                let frame = ATTACK_FRAMES.choose(&mut rng).unwrap();
                let word = ATTACK_WORDS.choose(&mut rng).unwrap();
                let phrase = frame.replace("{}", word);
                let mut parts: Vec<&str> = text.split(' ').collect();
                let at = rng.gen_range(0..=parts.len());
                parts.insert(at, &phrase);
                text = parts.join(" ");
            }
        }
        drafts.push(Draft {
            page: rng.gen_range(0..n_pages),
            time: year_start + Duration::seconds(rng.gen_range(0..year_secs)),
            author: users[u].0.clone(),
            registered: users[u].1,
            markup: decorate(&mut rng, &text),
            kind: Kind::Regular(attack),
        });
    }
    for _ in 0..config.n_bot_comments {
        drafts.push(Draft {
            page: rng.gen_range(0..n_pages),
            time: year_start + Duration::seconds(rng.gen_range(0..year_secs)),
            author: "ArchiveBot".into(),
            registered: true,
            markup: format!("Archiving {} old threads", rng.gen_range(2..9)),
            kind: Kind::Bot,
        });
    }
    for _ in 0..config.n_admin_comments {
        let u = activity.sample(&mut rng);
        drafts.push(Draft {
            page: rng.gen_range(0..n_pages),
            time: year_start + Duration::seconds(rng.gen_range(0..year_secs)),
            author: users[u].0.clone(),
            registered: users[u].1,
            markup: "{{uw-npa2}} Please keep discussions civil. ~~~~".into(),
            kind: Kind::Admin,
        });
    }

    // Revision ids increase with time across the whole corpus.
    let mut order: Vec<usize> = (0..drafts.len()).collect();
    order.sort_by_key(|&i| (drafts[i].time, i));
    let mut rev_of = vec![0u64; drafts.len()];
    for (k, &i) in order.iter().enumerate() {
        rev_of[i] = 100_000 + k as u64;
    }

    let mut page_text: Vec<String> = vec![String::new(); n_pages];
    let mut revisions = Vec::with_capacity(drafts.len());
    let mut comments = Vec::with_capacity(drafts.len());
    let mut truth = BTreeMap::new();
    let mut filtered_ids = BTreeSet::new();
    // Revisions are emitted grouped by page, each page in time order.
    let mut by_page: Vec<Vec<usize>> = vec![Vec::new(); n_pages];
    for &i in &order {
        by_page[drafts[i].page].push(i);
    }
    for (p, idxs) in by_page.iter().enumerate() {
        let page_id = format!("page{p:04}");
        for &i in idxs {
            let d = &drafts[i];
            let added = format!("{}\n", d.markup);
            page_text[p].push_str(&added);
            let rev_id = rev_of[i].to_string();
            revisions.push(Revision {
                page_id: page_id.clone(),
                namespace: page_ns[p],
                rev_id: rev_id.clone(),
                timestamp: d.time,
                author_id: d.author.clone(),
                author_registered: d.registered,
                text: page_text[p].clone(),
            });
            let id = comment_id(&page_id, &rev_id);
            match d.kind {
                Kind::Regular(a) => {
                    truth.insert(id.clone(), a);
                }
                Kind::Bot | Kind::Admin => {
                    filtered_ids.insert(id.clone());
                }
            }
            comments.push(Comment {
                comment_id: id,
                page_id: page_id.clone(),
                namespace: page_ns[p],
                timestamp: d.time,
                author_id: d.author.clone(),
                author_registered: d.registered,
                clean_text: strip_markup(&added),
                raw_markup: added,
            });
        }
    }

    let events = moderation_events(&mut rng, config, &comments, &truth);
    let (annotations, gold, bad_workers) = annotate(&mut rng, config, &truth);

    SynthCorpus {
        config: config.clone(),
        revisions,
        comments,
        truth,
        filtered_ids,
        annotations,
        gold,
        bad_workers,
        events,
        bot_patterns: vec!["Bot$".into()],
        admin_patterns: vec![r"\{\{uw-".into()],
    }
}

fn moderation_events(
    rng: &mut impl Rng,
    config: &SynthConfig,
    comments: &[Comment],
    truth: &BTreeMap<String, bool>,
) -> Vec<BlockEvent> {
    let mut events = Vec::new();
    for c in comments {
        if truth.get(&c.comment_id) != Some(&true) {
            continue;
        }
        for (kind, p) in [
            (ModerationKind::Warn, config.warn_probability),
            (ModerationKind::Block, config.block_probability),
        ] {
            if rng.gen_bool(p) {
                events.push(BlockEvent {
                    user_id: c.author_id.clone(),
                    timestamp: c.timestamp + Duration::seconds(rng.gen_range(3_600..10 * 86_400)),
                    kind,
                });
            }
        }
    }
    events.sort_by(|a, b| (a.timestamp, &a.user_id).cmp(&(b.timestamp, &b.user_id)));
    events
}

fn annotate(
    rng: &mut impl Rng,
    config: &SynthConfig,
    truth: &BTreeMap<String, bool>,
) -> (Vec<AnnotationRecord>, GoldSet, BTreeSet<String>) {
    let ids: Vec<&String> = truth.keys().collect();
    let n_labeled = config.n_labeled.unwrap_or(ids.len()).min(ids.len());
    let mut labeled: Vec<&String> = rand::seq::index::sample(rng, ids.len(), n_labeled)
        .into_iter()
        .map(|i| ids[i])
        .collect();
    labeled.sort();

    let n_workers = config
        .n_workers
        .max(config.baseline_annotators + config.n_bad_workers)
        .max(config.annotators_per_comment);
    let workers: Vec<String> = (0..n_workers).map(|w| format!("w{w:03}")).collect();
    let bad: BTreeSet<String> = workers.iter().take(config.n_bad_workers).cloned().collect();

    let mut shuffled = labeled.clone();
    shuffled.shuffle(rng);
    let baseline: BTreeSet<&String> = shuffled.iter().take(config.n_baseline).copied().collect();
    let gold_ids: BTreeSet<&String> = shuffled
        .iter()
        .skip(config.n_baseline)
        .take(config.n_gold)
        .copied()
        .collect();
    let non_english: BTreeSet<&String> = shuffled
        .iter()
        .skip(config.n_baseline + config.n_gold)
        .take(config.n_non_english)
        .copied()
        .collect();

    let mut records = Vec::new();
    for id in &labeled {
        let k = if baseline.contains(id) {
            config.baseline_annotators
        } else {
            config.annotators_per_comment
        };
        // Baseline comments are annotated by good workers only, so gating
        // leaves them with their full annotation count.
        let pool = if baseline.contains(id) { config.n_bad_workers.min(n_workers) } else { 0 };
        let mut chosen: Vec<usize> = rand::seq::index::sample(rng, n_workers - pool, k.min(n_workers - pool))
            .into_iter()
            .map(|w| w + pool)
            .collect();
        chosen.sort_unstable();
        // Gold questions are shown to every bad worker.
        if gold_ids.contains(id) {
            for b in 0..config.n_bad_workers {
                if !chosen.contains(&b) {
                    chosen.push(b);
                }
            }
            chosen.sort_unstable();
        }
        let t = truth[*id];
        for w in chosen {
            let worker = &workers[w];
            let label = if bad.contains(worker) {
                rng.gen_bool(0.5)
            } else if rng.gen_bool(config.annotator_noise) {
                !t
            } else {
                t
            };
            records.push(AnnotationRecord {
                comment_id: (*id).clone(),
                worker_id: worker.clone(),
                is_attack: label,
                not_english: non_english.contains(id) && rng.gen_bool(0.9),
            });
        }
    }
    // A few workers label the same comment both ways.
    let eligible: Vec<usize> = (0..records.len())
        .filter(|&i| !baseline.contains(&&records[i].comment_id))
        .collect();
    for _ in 0..config.n_contradictions {
        if eligible.is_empty() {
            break;
        }
        let r = records[eligible[rng.gen_range(0..eligible.len())]].clone();
        records.push(AnnotationRecord {
            is_attack: !r.is_attack,
            ..r
        });
    }
    let gold = gold_ids.iter().map(|id| ((*id).clone(), truth[*id])).collect();
    (records, gold, bad)
}

impl SynthCorpus {
    /// Write the pipeline inputs into `dir`:
    /// `revisions.jsonl`, `annotations.csv`, `gold.csv`, `moderation.jsonl`,
    /// `rules/bot.txt` and `rules/admin.txt`.
    pub fn write_inputs(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir.join("rules"))?;
        write_jsonl(&dir.join("revisions.jsonl"), &self.revisions)?;
        write_jsonl(&dir.join("moderation.jsonl"), &self.events)?;

        let mut w = BufWriter::new(fs::File::create(dir.join("annotations.csv"))?);
        writeln!(w, "comment_id,worker_id,is_attack,not_english")?;
        for r in &self.annotations {
            writeln!(
                w,
                "{},{},{},{}",
                r.comment_id,
                r.worker_id,
                u8::from(r.is_attack),
                u8::from(r.not_english)
            )?;
        }
        w.flush()?;

        let mut w = BufWriter::new(fs::File::create(dir.join("gold.csv"))?);
        writeln!(w, "comment_id,is_attack")?;
        for (id, a) in &self.gold {
            writeln!(w, "{id},{}", u8::from(*a))?;
        }
        w.flush()?;

        fs::write(dir.join("rules/bot.txt"), self.bot_patterns.join("\n") + "\n")?;
        fs::write(dir.join("rules/admin.txt"), self.admin_patterns.join("\n") + "\n")?;
        Ok(())
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{extract_comments, filter_comments, DiffOptions, FilterRules};
    use crate::labels::{aggregate_labels, clean_annotations, gate_workers};

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&SynthConfig::fixture());
        let b = generate(&SynthConfig::fixture());
        assert_eq!(a.revisions, b.revisions);
        assert_eq!(a.annotations, b.annotations);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn planted_counts() {
        let c = generate(&SynthConfig {
            n_comments: 1000,
            attack_prevalence: 0.01,
            ..SynthConfig::default()
        });
        assert_eq!(c.truth.len(), 1000);
        assert_eq!(c.truth.values().filter(|a| **a).count(), 10);
        assert_eq!(c.annotations.len(), 10_000);
    }

    #[test]
    fn extraction_recovers_planted_comments() {
        let c = generate(&SynthConfig::fixture());
        let mut pages: BTreeMap<String, Vec<Revision>> = BTreeMap::new();
        for r in &c.revisions {
            pages.entry(r.page_id.clone()).or_default().push(r.clone());
        }
        let mut extracted = Vec::new();
        for revs in pages.into_values() {
            extracted.extend(extract_comments(revs, &DiffOptions::default()).unwrap());
        }
        assert_eq!(extracted, c.comments);

        let rules = FilterRules::new(&c.bot_patterns, &c.admin_patterns).unwrap();
        let (kept, stats) = filter_comments(extracted, &rules);
        assert_eq!(kept.len(), c.truth.len());
        assert_eq!(stats.total().all as usize, c.truth.len() + c.filtered_ids.len());
    }

    #[test]
    fn gating_removes_bad_workers() {
        let c = generate(&SynthConfig::fixture());
        let cleaned = clean_annotations(c.annotations.clone());
        let report = gate_workers(&cleaned, &c.gold, 0.7).unwrap();
        let retained = report.retained();
        assert!(c.bad_workers.iter().all(|w| !retained.contains(w)));
        let labels = aggregate_labels(&report.apply(cleaned));
        let agree = labels.iter().filter(|l| l.oh_label() == c.truth[&l.comment_id]).count();
        assert!(agree as f64 > 0.97 * labels.len() as f64);
    }
}
