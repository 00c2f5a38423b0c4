//! Pipeline stages. Each reads documented artifacts, writes its own
//! directory under the output root and finishes with a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wikitox::analytics::{
    activity_histogram, diff_of_means_test, moderation_conditional_curves, moderation_followup,
    neighboring_attack_fraction, prevalence_by_group, toxicity_concentration, BootstrapConfig, GroupPrevalence,
    Grouping, ScoredComment, Scorer, StreamOptions,
};
use wikitox::corpus::{extract_comments, BlockEvent, CommentFilter, FilterRules};
use wikitox::eval::{
    baseline_table, ensemble_baseline, equal_error_threshold, evaluate, model_table, score_texts, ModelRow,
    ThresholdReport,
};
use wikitox::features::{build_vocab, NgramKind};
use wikitox::labels::{
    aggregate_labels, clean_annotations, gate_workers, ingest_annotations, krippendorff_alpha, read_gold,
    split_dataset, votes_by_comment, AnnotationRecord, IssueLevel, LabelRow, Split,
};
use wikitox::model::{random_search, train, LabeledText, TrainingExample};
use wikitox::synth::{generate, write_jsonl};
use wikitox::{AttackModel, Comment, LabelDistribution, Revision, Vocabulary};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::{read_json, read_jsonl, StageRun};

pub const STAGES: &[&str] = &[
    "extract", "filter", "ingest", "aggregate", "split", "train", "tune", "evaluate", "baseline", "calibrate", "score",
    "analyze",
];

pub struct Context<'a> {
    pub config: &'a PipelineConfig,
    pub out: &'a Path,
}

impl Context<'_> {
    fn start(&self, name: &'static str, section: Value) -> Result<StageRun, CliError> {
        StageRun::start(name, self.out, self.config.seed, section)
    }
}

fn section<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config section serializes")
}

pub fn run_stage(name: &str, ctx: &Context) -> Result<(), CliError> {
    match name {
        "extract" => extract(ctx),
        "filter" => filter(ctx),
        "ingest" => ingest(ctx),
        "aggregate" => aggregate(ctx),
        "split" => split(ctx),
        "train" => train_stage(ctx),
        "tune" => tune(ctx),
        "evaluate" => evaluate_stage(ctx),
        "baseline" => baseline(ctx),
        "calibrate" => calibrate(ctx),
        "score" => score(ctx),
        "analyze" => analyze(ctx),
        "synth" => synth(ctx),
        other => Err(CliError::Config {
            key: None,
            message: format!("unknown stage {other}"),
        }),
    }
}

// ---------------------------------------------------------------- corpus

const PAGE_BATCH: usize = 256;

fn extract(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let path = cfg.require("paths.revisions")?.to_path_buf();
    let mut run = ctx.start("extract", section(&cfg.corpus))?;
    let path = run.external("paths.revisions", &path)?;
    let out_path = run.output("comments_raw.jsonl");

    let reader = BufReader::new(File::open(&path).map_err(|e| CliError::io(&path, e))?);
    let mut writer = BufWriter::new(File::create(&out_path).map_err(|e| CliError::io(&out_path, e))?);
    let mut seen_pages: BTreeSet<String> = BTreeSet::new();
    let mut batch: Vec<Vec<Revision>> = Vec::new();
    let (mut n_revisions, mut n_comments) = (0u64, 0u64);

    let options = cfg.corpus;
    let flush = |batch: &mut Vec<Vec<Revision>>, writer: &mut BufWriter<File>| -> Result<u64, CliError> {
        let results: Vec<_> = std::mem::take(batch)
            .into_par_iter()
            .map(|revs| extract_comments(revs, &options))
            .collect();
        let mut n = 0;
        for r in results {
            for c in r.map_err(|e| CliError::invalid("extract", e))? {
                serde_json::to_writer(&mut *writer, &c).map_err(|e| CliError::io(&out_path, e))?;
                writer.write_all(b"\n").map_err(|e| CliError::io(&out_path, e))?;
                n += 1;
            }
        }
        Ok(n)
    };

    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rev: Revision = serde_json::from_str(&line)
            .map_err(|e| CliError::invalid("extract", format!("{}:{}: {e}", path.display(), i + 1)))?;
        n_revisions += 1;
        let same_page = batch.last().and_then(|p| p.last()).is_some_and(|r| r.page_id == rev.page_id);
        if same_page {
            batch.last_mut().unwrap().push(rev);
            continue;
        }
        if !seen_pages.insert(rev.page_id.clone()) {
            return Err(CliError::invalid(
                "extract",
                format!("revisions of page {} are not contiguous (line {})", rev.page_id, i + 1),
            ));
        }
        if batch.len() >= PAGE_BATCH {
            n_comments += flush(&mut batch, &mut writer)?;
        }
        batch.push(vec![rev]);
    }
    n_comments += flush(&mut batch, &mut writer)?;
    writer.flush().map_err(|e| CliError::io(&out_path, e))?;
    run.write_json(
        "extract_report.json",
        &json!({"pages": seen_pages.len(), "revisions": n_revisions, "comments": n_comments}),
    )?;
    run.finish()?;
    Ok(())
}

fn filter(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mut run = ctx.start("filter", json!({}))?;
    let input = run.dependency("extract", "comments_raw.jsonl")?;
    let bot = match cfg.paths.bot_rules.as_deref() {
        Some(p) => Some(run.external("paths.bot_rules", p)?),
        None => None,
    };
    let admin = match cfg.paths.admin_rules.as_deref() {
        Some(p) => Some(run.external("paths.admin_rules", p)?),
        None => None,
    };
    let rules = FilterRules::from_files(bot.as_deref(), admin.as_deref()).map_err(|e| CliError::invalid("filter", e))?;
    let out_path = run.output("comments.jsonl");
    let reader = BufReader::new(File::open(&input).map_err(|e| CliError::io(&input, e))?);
    let mut writer = BufWriter::new(File::create(&out_path).map_err(|e| CliError::io(&out_path, e))?);
    let mut f = CommentFilter::new(&rules);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Comment = serde_json::from_str(&line)
            .map_err(|e| CliError::invalid("filter", format!("{}:{}: {e}", input.display(), i + 1)))?;
        if f.admit(&c) {
            writer.write_all(line.as_bytes()).map_err(|e| CliError::io(&out_path, e))?;
            writer.write_all(b"\n").map_err(|e| CliError::io(&out_path, e))?;
        }
    }
    writer.flush().map_err(|e| CliError::io(&out_path, e))?;
    let stats = f.into_stats();
    run.write_json("filter_stats.json", &stats)?;
    run.write_text("filter_stats.txt", &stats.to_table())?;
    run.finish()?;
    Ok(())
}

// ---------------------------------------------------------------- labels

fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    let mut text = String::from("comment_id,worker_id,is_attack,not_english\n");
    for r in records {
        text.push_str(&format!(
            "{},{},{},{}\n",
            r.comment_id,
            r.worker_id,
            u8::from(r.is_attack),
            u8::from(r.not_english)
        ));
    }
    w.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn ingest(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let annotations = cfg.require("paths.annotations")?.to_path_buf();
    let mut run = ctx.start("ingest", section(&cfg.labels))?;
    let annotations = run.external("paths.annotations", &annotations)?;
    let gold = match cfg.paths.gold.as_deref() {
        Some(p) => Some(run.external("paths.gold", p)?),
        None => None,
    };

    let (records, issues) = ingest_annotations(&annotations).map_err(|e| CliError::invalid("ingest", e))?;
    let n_ingested = records.len();
    let alpha_pre = krippendorff_alpha(&records).map_err(|e| e.to_string());
    let cleaned = clean_annotations(records);
    let n_cleaned = cleaned.len();
    let (kept, gate) = match &gold {
        Some(path) => {
            let gold = read_gold(path).map_err(|e| CliError::invalid("ingest", e))?;
            let report =
                gate_workers(&cleaned, &gold, cfg.labels.gold_min_accuracy).map_err(|e| CliError::Config {
                    key: Some("paths.gold"),
                    message: e.to_string(),
                })?;
            (report.apply(cleaned), Some(report))
        }
        None => (cleaned, None),
    };
    let alpha = if cfg.labels.alpha_before_cleaning {
        alpha_pre
    } else {
        krippendorff_alpha(&kept).map_err(|e| e.to_string())
    };

    let path = run.output("annotations.csv");
    write_annotations(&path, &kept)?;
    let errors = issues.iter().filter(|i| i.level == IssueLevel::Error).count();
    run.write_json(
        "ingest_report.json",
        &json!({
            "ingested": n_ingested,
            "after_cleaning": n_cleaned,
            "after_gating": kept.len(),
            "row_errors": errors,
            "issues": issues,
            "gating": gate,
        }),
    )?;
    run.write_json(
        "agreement.json",
        &json!({
            "computed_on": if cfg.labels.alpha_before_cleaning { "ingested" } else { "cleaned" },
            "krippendorff_alpha": alpha.as_ref().ok(),
            "error": alpha.as_ref().err(),
        }),
    )?;
    run.finish()?;
    Ok(())
}

fn load_annotations(stage: &'static str, path: &Path) -> Result<Vec<AnnotationRecord>, CliError> {
    let (records, issues) = ingest_annotations(path).map_err(|e| CliError::invalid(stage, e))?;
    if let Some(i) = issues.iter().find(|i| i.level == IssueLevel::Error) {
        return Err(CliError::invalid(stage, format!("{}:{}: {}", path.display(), i.line, i.message)));
    }
    Ok(records)
}

fn aggregate(ctx: &Context) -> Result<(), CliError> {
    let mut run = ctx.start("aggregate", json!({}))?;
    let input = run.dependency("ingest", "annotations.csv")?;
    let records = load_annotations("aggregate", &input)?;
    let labels = aggregate_labels(&records);
    let rows: Vec<LabelRow> = labels.iter().map(LabelRow::from).collect();
    run.write_jsonl("labels.jsonl", &rows)?;
    let n = labels.len().max(1) as f64;
    run.write_json(
        "label_summary.json",
        &json!({
            "comments": labels.len(),
            "annotations": records.len(),
            "oh_attack_rate": labels.iter().filter(|l| l.oh_label()).count() as f64 / n,
            "mean_attack_fraction": labels.iter().map(LabelDistribution::attack_fraction).sum::<f64>() / n,
        }),
    )?;
    run.finish()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitRow {
    comment_id: String,
    /// `train`, `dev`, `test` or `baseline`.
    split: String,
}

fn read_labels(path: &Path) -> Result<Vec<LabelDistribution>, CliError> {
    read_jsonl::<LabelRow>("labels", path)?
        .into_iter()
        .map(|r| LabelDistribution::try_from(r).map_err(|e| CliError::invalid("labels", e)))
        .collect()
}

fn split(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mut run = ctx.start("split", section(&cfg.labels))?;
    let input = run.dependency("aggregate", "labels.jsonl")?;
    let labels = read_labels(&input)?;
    let min = cfg.labels.baseline_min_annotations;
    let (baseline, rest): (Vec<_>, Vec<_>) = labels.iter().partition(|l| min > 0 && l.n >= min);
    let ids: Vec<String> = rest.iter().map(|l| l.comment_id.clone()).collect();
    let assignment = split_dataset(&ids, cfg.labels.split, run.seed, None::<fn(&str) -> String>)
        .map_err(|e| CliError::invalid("split", e))?;
    let mut rows: Vec<SplitRow> = assignment
        .assignment
        .iter()
        .map(|(id, s)| SplitRow {
            comment_id: id.clone(),
            split: s.to_string(),
        })
        .collect();
    rows.extend(baseline.iter().map(|l| SplitRow {
        comment_id: l.comment_id.clone(),
        split: "baseline".into(),
    }));
    rows.sort_by(|a, b| a.comment_id.cmp(&b.comment_id));
    run.write_jsonl("split.jsonl", &rows)?;
    run.write_json(
        "split_summary.json",
        &json!({
            "seed": run.seed,
            "train": assignment.count(Split::Train),
            "dev": assignment.count(Split::Dev),
            "test": assignment.count(Split::Test),
            "baseline": baseline.len(),
        }),
    )?;
    run.finish()?;
    Ok(())
}

// ---------------------------------------------------------------- model

/// Clean text of the comments in `ids`.
fn texts_for(path: &Path, ids: &BTreeSet<&str>) -> Result<BTreeMap<String, String>, CliError> {
    let reader = BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?);
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Comment = serde_json::from_str(&line)
            .map_err(|e| CliError::invalid("comments", format!("{}:{}: {e}", path.display(), i + 1)))?;
        if ids.contains(c.comment_id.as_str()) {
            out.insert(c.comment_id, c.clean_text);
        }
    }
    Ok(out)
}

/// Labelled texts per split name, each sorted by comment id.
struct LabeledSets {
    sets: BTreeMap<String, Vec<LabeledText>>,
    missing_text: usize,
}

impl LabeledSets {
    fn load(run: &mut StageRun) -> Result<Self, CliError> {
        let comments = run.dependency("filter", "comments.jsonl")?;
        let labels = read_labels(&run.dependency("aggregate", "labels.jsonl")?)?;
        let split: Vec<SplitRow> = read_jsonl(run.name, &run.dependency("split", "split.jsonl")?)?;
        let split: BTreeMap<String, String> = split.into_iter().map(|r| (r.comment_id, r.split)).collect();
        let ids: BTreeSet<&str> = labels.iter().map(|l| l.comment_id.as_str()).collect();
        let texts = texts_for(&comments, &ids)?;
        let mut sets: BTreeMap<String, Vec<LabeledText>> = BTreeMap::new();
        let mut missing_text = 0;
        for l in labels {
            let Some(s) = split.get(&l.comment_id) else { continue };
            match texts.get(&l.comment_id) {
                Some(t) => sets.entry(s.clone()).or_default().push(LabeledText::new(t.clone(), l)),
                None => missing_text += 1,
            }
        }
        Ok(LabeledSets { sets, missing_text })
    }

    fn get(&self, stage: &'static str, name: &str) -> Result<&[LabeledText], CliError> {
        match self.sets.get(name) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(CliError::invalid(stage, format!("split {name} is empty"))),
        }
    }

    fn counts(&self) -> Value {
        json!({
            "sizes": self.sets.iter().map(|(k, v)| (k.clone(), v.len())).collect::<BTreeMap<_, _>>(),
            "labeled_without_text": self.missing_text,
        })
    }
}

fn train_stage(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mut run = ctx.start("train", json!({"features": cfg.features, "model": cfg.model}))?;
    let data = LabeledSets::load(&mut run)?;
    let train_set = data.get("train", "train")?;
    let texts: Vec<&str> = train_set.iter().map(|t| t.text.as_str()).collect();
    let vocab = build_vocab(&texts, &cfg.features).map_err(|e| CliError::invalid("train", e))?;
    let examples: Vec<TrainingExample> = train_set
        .par_iter()
        .map(|t| TrainingExample {
            x: vocab.vectorize(&t.text),
            y: t.label.target(cfg.model.label_type),
        })
        .collect();
    let model = train(&examples, cfg.model.kind, cfg.model.label_type, &cfg.model.hyperparameters, run.seed)
        .map_err(|e| CliError::invalid("train", e))?
        .with_vocabulary(&vocab);
    save_model(&mut run, &model, &vocab)?;
    run.write_json(
        "training.json",
        &json!({"data": data.counts(), "vocab_size": vocab.len(), "final_loss": model.final_loss}),
    )?;
    run.finish()?;
    Ok(())
}

fn save_model(run: &mut StageRun, model: &AttackModel, vocab: &Vocabulary) -> Result<(), CliError> {
    let p = run.output("model.json");
    model.save(&p).map_err(|e| CliError::io(&p, e))?;
    let p = run.output("vocab.json");
    vocab.save(&p).map_err(|e| CliError::io(&p, e))
}

fn tune(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mut run = ctx.start("tune", json!({"features": cfg.features, "model": cfg.model, "search": cfg.search}))?;
    let data = LabeledSets::load(&mut run)?;
    let mut space = cfg.search.space.clone();
    space.seed = run.seed;
    let outcome = random_search(
        &space,
        &cfg.features,
        cfg.model.kind,
        cfg.model.label_type,
        data.get("tune", "train")?,
        data.get("tune", "dev")?,
        cfg.search.objective,
    )
    .map_err(|e| CliError::invalid("tune", e))?;
    save_model(&mut run, &outcome.model, &outcome.vocabulary)?;
    run.write_json(
        "search.json",
        &json!({
            "data": data.counts(),
            "seed": space.seed,
            "objective": cfg.search.objective,
            "best_trial": outcome.best_trial,
            "trials": outcome.trials,
        }),
    )?;
    run.finish()?;
    Ok(())
}

fn load_tuned(run: &mut StageRun) -> Result<(AttackModel, Vocabulary), CliError> {
    let mp = run.dependency("tune", "model.json")?;
    let vp = run.dependency("tune", "vocab.json")?;
    let model = AttackModel::load(&mp).map_err(|e| CliError::invalid(run.name, format!("{}: {e}", mp.display())))?;
    let vocab = Vocabulary::load(&vp).map_err(|e| CliError::invalid(run.name, format!("{}: {e}", vp.display())))?;
    model.check_vocabulary(&vocab).map_err(|e| CliError::invalid(run.name, e))?;
    Ok((model, vocab))
}

// ---------------------------------------------------------------- eval

fn ngram_name(kind: NgramKind) -> &'static str {
    match kind {
        NgramKind::Word => "word",
        NgramKind::Char => "char",
    }
}

fn evaluate_stage(ctx: &Context) -> Result<(), CliError> {
    let mut run = ctx.start("evaluate", json!({}))?;
    let (model, vocab) = load_tuned(&mut run)?;
    let data = LabeledSets::load(&mut run)?;
    let mut rows = Vec::new();
    for split in ["dev", "test"] {
        let report = evaluate(&model, &vocab, data.get("evaluate", split)?, split)
            .map_err(|e| CliError::invalid("evaluate", e))?;
        rows.push(ModelRow {
            model: serde_json::to_value(model.kind).unwrap().as_str().unwrap_or_default().to_string(),
            label_type: serde_json::to_value(model.label_type).unwrap().as_str().unwrap_or_default().to_string(),
            ngram: ngram_name(vocab.spec().ngram_kind).to_string(),
            report,
        });
    }
    run.write_json("eval.json", &rows)?;
    run.write_text("eval.txt", &model_table(&rows))?;
    run.finish()?;
    Ok(())
}

fn baseline(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mut run = ctx.start("baseline", section(&cfg.baseline))?;
    let (model, vocab) = load_tuned(&mut run)?;
    let records = load_annotations("baseline", &run.dependency("ingest", "annotations.csv")?)?;
    let split: Vec<SplitRow> = read_jsonl("baseline", &run.dependency("split", "split.jsonl")?)?;
    let ids: BTreeSet<&str> = split
        .iter()
        .filter(|r| r.split == "baseline")
        .map(|r| r.comment_id.as_str())
        .collect();
    if ids.is_empty() {
        return Err(CliError::invalid(
            "baseline",
            format!("no comment has {} or more annotations", cfg.labels.baseline_min_annotations),
        ));
    }
    let comments = run.dependency("filter", "comments.jsonl")?;
    let texts = texts_for(&comments, &ids)?;
    let records: Vec<AnnotationRecord> = records
        .into_iter()
        .filter(|r| texts.contains_key(&r.comment_id))
        .collect();
    let votes = votes_by_comment(&records);
    let items: Vec<LabeledText> = texts
        .iter()
        .map(|(id, t)| LabeledText::new(t.clone(), LabelDistribution::new(id.clone(), 1, 0)))
        .collect();
    let scores = score_texts(&model, &vocab, &items).map_err(|e| CliError::invalid("baseline", e))?;
    let scores: BTreeMap<String, f64> = texts.keys().cloned().zip(scores).collect();
    let mut bc = cfg.baseline.clone();
    bc.seed = run.seed;
    let report = ensemble_baseline(&votes, Some(&scores), &bc).map_err(|e| CliError::invalid("baseline", e))?;
    run.write_json("baseline.json", &report)?;
    run.write_text("baseline.txt", &baseline_table(&report))?;
    run.finish()?;
    Ok(())
}

fn calibrate(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mut run = ctx.start("calibrate", section(&cfg.calibrate))?;
    let (model, vocab) = load_tuned(&mut run)?;
    let data = LabeledSets::load(&mut run)?;
    let mut items: Vec<LabeledText> = Vec::new();
    for s in &cfg.calibrate.splits {
        items.extend_from_slice(data.get("calibrate", s)?);
    }
    let scores = score_texts(&model, &vocab, &items).map_err(|e| CliError::invalid("calibrate", e))?;
    let labels: Vec<bool> = items.iter().map(|t| t.label.oh_label()).collect();
    let mut report = equal_error_threshold(&scores, &labels).map_err(|e| CliError::invalid("calibrate", e))?;
    report.calibration_split = cfg.calibrate.splits.join("+");
    run.write_json("threshold.json", &report)?;
    run.finish()?;
    Ok(())
}

// ---------------------------------------------------------------- analytics

fn score(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mut run = ctx.start("score", section(&cfg.score))?;
    let (model, vocab) = load_tuned(&mut run)?;
    let threshold: ThresholdReport = read_json("score", &run.dependency("calibrate", "threshold.json")?)?;
    let input = run.dependency("filter", "comments.jsonl")?;
    let scorer = Scorer::new(&model, &vocab, threshold.t).map_err(|e| CliError::invalid("score", e))?;
    let out = run.output("scored.jsonl");
    let reader = BufReader::new(File::open(&input).map_err(|e| CliError::io(&input, e))?);
    let writer = BufWriter::new(File::create(&out).map_err(|e| CliError::io(&out, e))?);
    let options = StreamOptions {
        chunk_size: cfg.score.chunk_size,
        parallel: cfg.score.parallel,
    };
    let stats = scorer
        .score_jsonl(reader, writer, &options)
        .map_err(|e| CliError::invalid("score", e))?;
    run.write_json(
        "score_report.json",
        &json!({
            "threshold": threshold.t,
            "read": stats.read,
            "scored": stats.scored,
            "malformed": stats.malformed,
            "malformed_examples": stats.malformed_examples,
        }),
    )?;
    run.run = json!({"seconds": stats.seconds, "comments_per_second": stats.comments_per_second});
    run.finish()?;
    Ok(())
}

fn csv_line(fields: &[String]) -> String {
    let quoted: Vec<String> = fields
        .iter()
        .map(|f| {
            if f.contains([',', '"', '\n']) {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f.clone()
            }
        })
        .collect();
    quoted.join(",") + "\n"
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn analyze(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let a = &cfg.analytics;
    let mut run = ctx.start("analyze", section(a))?;
    let scored: Vec<ScoredComment> = read_jsonl("analyze", &run.dependency("score", "scored.jsonl")?)?;
    let threshold: ThresholdReport = read_json("analyze", &run.dependency("calibrate", "threshold.json")?)?;
    let events: Vec<BlockEvent> = match cfg.paths.moderation.as_deref() {
        Some(p) => {
            let p = run.external("paths.moderation", p)?;
            read_jsonl("analyze", &p)?
        }
        None => Vec::new(),
    };
    let boot = BootstrapConfig {
        resamples: a.bootstrap.resamples,
        level: a.bootstrap.level,
        seed: run.seed,
    };

    // Prevalence by group.
    let mut groupings: Vec<(String, Grouping)> = vec![
        ("anonymity".into(), Grouping::Anonymity),
        ("namespace".into(), Grouping::Namespace),
        ("year".into(), Grouping::Year),
        ("activity".into(), Grouping::ActivityBucket(a.activity_buckets.clone())),
    ];
    groupings.extend(a.ngrams.iter().map(|g| (format!("ngram:{g}"), Grouping::ContainsNgram(g.clone()))));
    let mut prevalence: BTreeMap<String, Vec<GroupPrevalence>> = BTreeMap::new();
    let mut csv = csv_line(&["grouping", "group", "n_comments", "n_attacks", "prevalence", "ci_low", "ci_high"].map(String::from));
    if !scored.is_empty() {
        for (name, g) in &groupings {
            let rows = prevalence_by_group(&scored, g, &boot).map_err(|e| CliError::invalid("analyze", e))?;
            for r in &rows {
                csv.push_str(&csv_line(&[
                    name.clone(),
                    r.group.clone(),
                    r.n_comments.to_string(),
                    r.n_attacks.to_string(),
                    r.prevalence.to_string(),
                    r.ci_low.to_string(),
                    r.ci_high.to_string(),
                ]));
            }
            prevalence.insert(name.clone(), rows);
        }
    }
    run.write_json("prevalence.json", &prevalence)?;
    run.write_text("prevalence.csv", &csv)?;

    let flags = |registered: bool| -> Vec<bool> {
        scored
            .iter()
            .filter(|s| s.comment.author_registered == registered)
            .map(|s| s.is_attack)
            .collect()
    };
    let test = diff_of_means_test(&flags(false), &flags(true));
    run.write_json(
        "anonymity_test.json",
        &json!({
            "a": "anonymous",
            "b": "registered",
            "result": test.as_ref().ok(),
            "error": test.as_ref().err().map(ToString::to_string),
        }),
    )?;

    // Activity and toxicity.
    let activity = activity_histogram(&scored, a.year, &a.activity_buckets);
    let mut csv = csv_line(&["bucket", "n_users", "n_comments", "n_attacks", "comment_pct", "attack_pct", "registered_attack_pct"].map(String::from));
    for r in &activity.rows {
        csv.push_str(&csv_line(&[
            r.bucket.clone(),
            r.n_users.to_string(),
            r.n_comments.to_string(),
            r.n_attacks.to_string(),
            r.comment_pct.to_string(),
            r.attack_pct.to_string(),
            r.registered_attack_pct.to_string(),
        ]));
    }
    run.write_json("activity.json", &activity)?;
    run.write_text("activity.csv", &csv)?;

    let toxicity = toxicity_concentration(&scored, a.year, &a.toxicity_buckets);
    let mut csv = csv_line(&["kind", "key", "n_users", "n_attacks", "attack_pct"].map(String::from));
    for r in &toxicity.levels {
        csv.push_str(&csv_line(&[
            "level".into(),
            r.toxicity_level.to_string(),
            r.n_users.to_string(),
            r.n_attacks.to_string(),
            r.attack_pct.to_string(),
        ]));
    }
    for r in &toxicity.buckets {
        csv.push_str(&csv_line(&[
            "bucket".into(),
            r.bucket.clone(),
            r.n_users.to_string(),
            r.n_attacks.to_string(),
            r.attack_pct.to_string(),
        ]));
    }
    run.write_json("toxicity.json", &toxicity)?;
    run.write_text("toxicity.csv", &csv)?;

    // Moderation.
    let window = chrono::Duration::days(i64::from(a.window_days));
    let precision = threshold.metrics.precision;
    let followup = match precision {
        Some(p) => moderation_followup(&scored, &events, window, p).map_err(|e| e.to_string()),
        None => Err("calibrated precision is undefined".to_string()),
    };
    run.write_json(
        "moderation.json",
        &json!({"events": events.len(), "report": followup.as_ref().ok(), "error": followup.as_ref().err()}),
    )?;
    let curves = moderation_conditional_curves(&scored, &events, Some(a.year), window);
    let mut csv = csv_line(&["curve", "x", "n", "probability"].map(String::from));
    for (name, pts) in [
        ("warn_given_attacks", &curves.warn_given_attacks),
        ("block_given_attacks", &curves.block_given_attacks),
        ("block_given_prior_blocks", &curves.block_given_prior_blocks),
    ] {
        for p in pts {
            csv.push_str(&csv_line(&[name.into(), p.x.to_string(), p.n.to_string(), p.probability.to_string()]));
        }
    }
    run.write_json("curves.json", &curves)?;
    run.write_text("curves.csv", &csv)?;

    // Neighbouring attack fraction.
    let naf: Vec<_> = a
        .naf_n
        .iter()
        .filter(|n| **n >= 1)
        .map(|&n| neighboring_attack_fraction(&scored, n))
        .collect();
    let mut csv = csv_line(&["n", "attack_centers", "attack_mean_naf", "non_attack_centers", "non_attack_mean_naf", "t_statistic"].map(String::from));
    for r in &naf {
        csv.push_str(&csv_line(&[
            r.n.to_string(),
            r.attack_centers.n_comments.to_string(),
            r.attack_centers.mean_naf.to_string(),
            r.non_attack_centers.n_comments.to_string(),
            r.non_attack_centers.mean_naf.to_string(),
            opt(r.t_statistic),
        ]));
    }
    run.write_json("naf.json", &naf)?;
    run.write_text("naf.csv", &csv)?;
    run.finish()?;
    Ok(())
}

// ---------------------------------------------------------------- synth

fn synth(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mut run = ctx.start("synth", section(&cfg.synth))?;
    let corpus = generate(&cfg.synth);
    corpus.write_inputs(&run.dir).map_err(|e| CliError::io(&run.dir, e))?;
    for f in [
        "revisions.jsonl",
        "annotations.csv",
        "gold.csv",
        "moderation.jsonl",
        "rules/bot.txt",
        "rules/admin.txt",
    ] {
        run.output(f);
    }
    let truth: Vec<Value> = corpus
        .truth
        .iter()
        .map(|(id, a)| json!({"comment_id": id, "is_attack": a}))
        .collect();
    let p = run.output("truth.jsonl");
    write_jsonl(&p, &truth).map_err(|e| CliError::io(&p, e))?;
    run.finish()?;
    Ok(())
}
