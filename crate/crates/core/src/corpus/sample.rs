use std::collections::{BTreeSet, HashMap};

use super::{BlockEvent, Comment, ModerationKind};

/// For every block event, the `k` comments by the blocked user nearest to the
/// event time. Ties go to the earlier comment. The union is returned in input
/// order without duplicates. Warning events are ignored.
pub fn sample_around_blocks(comments: &[Comment], events: &[BlockEvent], k: usize) -> Vec<Comment> {
    assert!(k >= 1, "k must be positive");
    let mut by_user: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, c) in comments.iter().enumerate() {
        by_user.entry(c.author_id.as_str()).or_default().push(i);
    }
    let mut selected: BTreeSet<usize> = BTreeSet::new();
    for ev in events.iter().filter(|e| e.kind == ModerationKind::Block) {
        let Some(idx) = by_user.get(ev.user_id.as_str()) else {
            continue;
        };
        let mut ranked: Vec<usize> = idx.clone();
        ranked.sort_by_key(|&i| {
            let c = &comments[i];
            let dist = (c.timestamp - ev.timestamp).num_seconds().unsigned_abs();
            (dist, c.timestamp, i)
        });
        selected.extend(ranked.into_iter().take(k));
    }
    let mut seen = BTreeSet::new();
    selected
        .into_iter()
        .filter(|&i| seen.insert(comments[i].comment_id.clone()))
        .map(|i| comments[i].clone())
        .collect()
}
