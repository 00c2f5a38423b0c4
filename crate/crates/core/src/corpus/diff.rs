//! Recursive longest-common-substring diff.
//!
//! The longest common run of tokens between the two texts is aligned, then
//! the regions to its left and right are aligned the same way until no run
//! of at least `min_match` tokens remains. Tokens of the new text left
//! unaligned form the added segments.
//!
//! Longest runs are located with a suffix automaton built over the old
//! text, so each alignment step is linear in the size of the two regions.
//! Ties prefer the run that starts earliest in the new text, then earliest
//! in the old text.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenUnit {
    /// Whitespace-delimited words, each carrying its trailing whitespace.
    #[default]
    Word,
    /// Unicode scalar values.
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffOptions {
    pub unit: TokenUnit,
    /// Shortest run of tokens accepted as a match.
    pub min_match: usize,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            unit: TokenUnit::Word,
            min_match: 2,
        }
    }
}

/// Split `text` into tokens whose concatenation is `text`.
pub fn tokenize(text: &str, unit: TokenUnit) -> Vec<&str> {
    let mut out = Vec::new();
    match unit {
        TokenUnit::Char => {
            for (i, c) in text.char_indices() {
                out.push(&text[i..i + c.len_utf8()]);
            }
        }
        TokenUnit::Word => {
            let mut start = 0;
            let mut prev_ws = false;
            for (i, c) in text.char_indices() {
                let ws = c.is_whitespace();
                if !ws && prev_ws && i > start {
                    out.push(&text[start..i]);
                    start = i;
                }
                prev_ws = ws;
            }
            if start < text.len() {
                out.push(&text[start..]);
            }
        }
    }
    out
}

/// Added segments under the default options (word tokens, 2-token minimum).
pub fn diff_added_text(prev: &str, next: &str) -> Vec<String> {
    diff_added_text_with(prev, next, &DiffOptions::default())
}

pub fn diff_added_text_with(prev: &str, next: &str, options: &DiffOptions) -> Vec<String> {
    if next.is_empty() {
        return Vec::new();
    }
    if prev.is_empty() {
        return vec![next.to_string()];
    }
    let prev_tokens = tokenize(prev, options.unit);
    let next_tokens = tokenize(next, options.unit);

    let mut ids: FxHashMap<&str, u32> = FxHashMap::default();
    let mut a = Vec::with_capacity(prev_tokens.len());
    let mut b = Vec::with_capacity(next_tokens.len());
    for (tokens, out) in [(&prev_tokens, &mut a), (&next_tokens, &mut b)] {
        for t in tokens.iter() {
            let n = ids.len() as u32;
            out.push(*ids.entry(*t).or_insert(n));
        }
    }

    let blocks = matching_blocks(&a, &b, options.min_match.max(1));

    let mut segments = Vec::new();
    let mut cursor = 0;
    for block in blocks.iter().chain(std::iter::once(&Block {
        a_start: a.len(),
        b_start: b.len(),
        len: 0,
    })) {
        if block.b_start > cursor {
            segments.push(next_tokens[cursor..block.b_start].concat());
        }
        cursor = block.b_start + block.len;
    }
    segments
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Block {
    pub a_start: usize,
    pub b_start: usize,
    pub len: usize,
}

/// Aligned runs, sorted by position in `b`.
///
/// Runs shorter than `min_match` are accepted only when they span the whole
/// remaining region of `a` or of `b`.
pub(crate) fn matching_blocks(a: &[u32], b: &[u32], min_match: usize) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut work = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = work.pop() {
        if ahi == alo || bhi == blo {
            continue;
        }
        let Some(m) = longest_match(&a[alo..ahi], &b[blo..bhi]) else {
            continue;
        };
        // A short run is still aligned when it is all that remains on one side.
        if m.len < min_match && m.len != ahi - alo && m.len != bhi - blo {
            continue;
        }
        let block = Block {
            a_start: alo + m.a_start,
            b_start: blo + m.b_start,
            len: m.len,
        };
        work.push((alo, block.a_start, blo, block.b_start));
        work.push((block.a_start + m.len, ahi, block.b_start + m.len, bhi));
        blocks.push(block);
    }
    blocks.sort_by_key(|b| b.b_start);
    blocks
}

struct State {
    len: usize,
    link: Option<usize>,
    first_end: usize,
    next: FxHashMap<u32, usize>,
}

/// Suffix automaton of a token sequence.
struct SuffixAutomaton {
    states: Vec<State>,
}

impl SuffixAutomaton {
    fn build(seq: &[u32]) -> Self {
        let mut states = Vec::with_capacity(2 * seq.len() + 1);
        states.push(State {
            len: 0,
            link: None,
            first_end: 0,
            next: FxHashMap::default(),
        });
        let mut last = 0;
        for (pos, &c) in seq.iter().enumerate() {
            let cur = states.len();
            states.push(State {
                len: states[last].len + 1,
                link: None,
                first_end: pos,
                next: FxHashMap::default(),
            });
            let mut p = Some(last);
            while let Some(pi) = p {
                if states[pi].next.contains_key(&c) {
                    break;
                }
                states[pi].next.insert(c, cur);
                p = states[pi].link;
            }
            match p {
                None => states[cur].link = Some(0),
                Some(pi) => {
                    let q = states[pi].next[&c];
                    if states[pi].len + 1 == states[q].len {
                        states[cur].link = Some(q);
                    } else {
                        let clone = states.len();
                        let cloned = State {
                            len: states[pi].len + 1,
                            link: states[q].link,
                            first_end: states[q].first_end,
                            next: states[q].next.clone(),
                        };
                        states.push(cloned);
                        let mut p = Some(pi);
                        while let Some(pj) = p {
                            if states[pj].next.get(&c) != Some(&q) {
                                break;
                            }
                            states[pj].next.insert(c, clone);
                            p = states[pj].link;
                        }
                        states[q].link = Some(clone);
                        states[cur].link = Some(clone);
                    }
                }
            }
            last = cur;
        }
        SuffixAutomaton { states }
    }
}

fn longest_match(a: &[u32], b: &[u32]) -> Option<Block> {
    let sam = SuffixAutomaton::build(a);
    let mut state = 0usize;
    let mut len = 0usize;
    let mut best: Option<(usize, usize, usize)> = None; // (len, b_end, state)
    for (j, c) in b.iter().enumerate() {
        loop {
            if let Some(&to) = sam.states[state].next.get(c) {
                state = to;
                len += 1;
                break;
            }
            match sam.states[state].link {
                Some(link) => {
                    state = link;
                    len = sam.states[state].len;
                }
                None => {
                    len = 0;
                    break;
                }
            }
        }
        if len > 0 && best.is_none_or(|(l, _, _)| len > l) {
            best = Some((len, j, state));
        }
    }
    best.map(|(len, b_end, state)| Block {
        a_start: sam.states[state].first_end + 1 - len,
        b_start: b_end + 1 - len,
        len,
    })
}
